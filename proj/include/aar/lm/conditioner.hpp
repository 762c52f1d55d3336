#pragma once

#include "aar/dsp/audio.hpp"
#include "aar/nn/tensor.hpp"

#include <cstdint>

namespace aar::lm {

// Deterministic stand-in for a pretrained audio embedder: log-mel band
// statistics, spectral centroid and flatness, mapped through a fixed random
// projection and L2-normalised.
class StubConditioner {
public:
    explicit StubConditioner(int cond_dim, std::uint64_t seed = 0x5eed);

    int dim() const { return cond_dim_; }
    int feature_dim() const { return projection_.dim(0); }

    nn::Tensor features(const dsp::AudioClip & clip) const;
    nn::Tensor embed(const dsp::AudioClip & clip) const; // (cond_dim)

private:
    int cond_dim_;
    nn::Tensor projection_; // (features, cond_dim)
};

} // namespace aar::lm
