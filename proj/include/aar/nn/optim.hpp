#pragma once

#include "aar/nn/layers.hpp"

#include <vector>

namespace aar::nn {

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0; // decoupled (AdamW) when > 0
};

class Adam {
public:
    Adam(const ParamStore & params, AdamConfig cfg);

    // Applies one update with learning rate lr to every parameter that has a gradient.
    void step(double lr);

    long long steps() const { return t_; }
    const AdamConfig & config() const { return cfg_; }

    // Moment buffers in parameter order, for checkpointing.
    std::vector<Tensor> & first_moments() { return m_; }
    std::vector<Tensor> & second_moments() { return v_; }
    void set_steps(long long t) { t_ = t; }

private:
    std::vector<Var> params_;
    AdamConfig cfg_;
    std::vector<Tensor> m_;
    std::vector<Tensor> v_;
    long long t_ = 0;
};

// Scales all gradients so their global L2 norm is at most max_norm. Returns the norm before clipping.
double clip_grad_norm(const ParamStore & params, double max_norm);

// Half-cosine decay from peak to 0 over total steps.
double cosine_lr(long long step, long long total, double peak);

// Linear warmup from 0.005 * peak to peak over the first warmup_frac of
// training, then linear decay to 0.01 * peak at the last step.
double warmup_linear_lr(long long step, long long total, double peak, double warmup_frac);

} // namespace aar::nn
