#pragma once

#include "aar/nn/layers.hpp"

#include <span>
#include <vector>

namespace aar::gen {

struct SamplerConfig {
    double cfg_scale = 2.0;
    int top_k = 200;     // 0 disables
    double top_p = 0.95; // 1 disables
    double temperature = 1.0; // 0 selects the argmax
    std::uint64_t seed = 0;
};

void validate(const SamplerConfig & cfg);

// (1 - s) * uncond + s * cond, elementwise.
nn::Tensor cfg_mix(const nn::Tensor & cond_logits, const nn::Tensor & uncond_logits, double s);

// Keeps the k largest logits (lower index wins ties) and sets the rest to -inf.
void filter_top_k(std::span<double> logits, int k);

// Keeps the smallest descending-probability prefix whose mass reaches p, then renormalises.
void filter_top_p(std::span<double> probs, double p);

// Softmax of logits / temperature.
std::vector<double> softmax(std::span<const double> logits, double temperature = 1.0);

// temperature -> top-k -> top-p -> categorical draw.
int sample_token(std::span<const double> logits, const SamplerConfig & cfg, nn::Rng & rng);

} // namespace aar::gen
