#pragma once

#include "aar/nn/layers.hpp"

#include <vector>

namespace aar::loss {

struct DiscriminatorConfig {
    std::vector<int> windows{2048, 1024, 512};
    int channels = 16;
    int layers = 3; // frequency-strided convolutions per tower
};

// Multi-resolution STFT discriminator. Each tower sees the (re, im) STFT as a
// 2-channel (frames, bins) image and emits a 1-channel logit map.
class StftDiscriminator {
public:
    StftDiscriminator(const DiscriminatorConfig & cfg, std::uint64_t seed);

    // audio (1, T) with T >= the largest window.
    std::vector<nn::Var> forward(const nn::Var & audio) const;

    // Logit map shapes predicted from framing and conv arithmetic.
    std::vector<std::pair<int, int>> output_shapes(int samples) const;

    nn::ParamStore & params() { return params_; }
    const nn::ParamStore & params() const { return params_; }
    std::size_t parameter_count() const { return params_.count(); }
    const DiscriminatorConfig & config() const { return cfg_; }

private:
    struct Tower {
        int window = 0;
        std::vector<nn::Conv2d> convs;
    };
    DiscriminatorConfig cfg_;
    nn::ParamStore params_;
    std::vector<Tower> towers_;
};

} // namespace aar::loss
