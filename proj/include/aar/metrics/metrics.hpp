#pragma once

#include "aar/codec/sat_model.hpp"
#include "aar/dsp/spectral.hpp"

#include <string>
#include <vector>

namespace aar::metrics {

// Sum over scales of the mean |log-mel difference| (the L1 part of the frequency loss).
double mel_distance(const dsp::AudioClip & a, const dsp::AudioClip & b, const dsp::SpectralConfig & cfg);

// Sum over windows of the mean |log1p|STFT(a)| - log1p|STFT(b)||, hop = window / 4.
double stft_distance(const dsp::AudioClip & a, const dsp::AudioClip & b, const dsp::SpectralConfig & cfg);

struct EmbeddingSet {
    nn::Tensor vectors; // (n, e)
    std::string source;
};

struct FrechetResult {
    double value = 0.0;
    bool degenerate = false; // a covariance was singular and both were jittered
};

// ||mu_p - mu_q||^2 + tr(C_p + C_q - 2 (C_p^{1/2} C_q C_p^{1/2})^{1/2}).
FrechetResult frechet_distance(const EmbeddingSet & p, const EmbeddingSet & q, double jitter = 1e-6);

struct ClipReconstruction {
    std::size_t samples = 0;
    int windows = 0;
    int tokens = 0;
    double mel = 0.0;
    double stft = 0.0;
};

struct ReconstructionReport {
    std::vector<ClipReconstruction> clips;
    std::vector<codec::TokenPyramid> pyramids; // one per window, in clip order
    std::vector<double> utilization;           // per scale
    double mean_mel = 0.0;
    double mean_stft = 0.0;
    long long total_tokens = 0;
};

// Window -> encode -> decode -> reassemble for every clip, with distances to the original.
dsp::AudioClip reconstruct_clip(const codec::SatModel & model, const dsp::AudioClip & clip,
                                std::vector<codec::TokenPyramid> * pyramids = nullptr);
ReconstructionReport eval_reconstruction(const codec::SatModel & model, const std::vector<dsp::AudioClip> & clips,
                                         const dsp::SpectralConfig & cfg);

} // namespace aar::metrics
