#pragma once

#include "aar/dsp/spectral.hpp"
#include "aar/nn/autograd.hpp"

#include <vector>

namespace aar::loss {

struct LossWeights {
    double lambda_t = 0.1;
    double lambda_f = 3.0;
    double lambda_g = 3.0;
    double lambda_com = 1.0;
};

// Mean absolute error between waveforms of equal length.
nn::Var loss_time(const nn::Var & a, const nn::Var & a_hat);

struct FreqTerms {
    nn::Var l1; // sum over scales of mean |S(a) - S(a_hat)|
    nn::Var l2; // sum over scales of mean (S(a) - S(a_hat))^2
    nn::Var total() const { return nn::add(l1, l2); }
};

// Terms from precomputed per-scale features (one matrix per scale).
FreqTerms spectral_terms(const std::vector<nn::Var> & features_a, const std::vector<nn::Var> & features_b);
FreqTerms loss_freq_terms(const nn::Var & a, const nn::Var & a_hat, const dsp::SpectralConfig & cfg);
nn::Var loss_freq(const nn::Var & a, const nn::Var & a_hat, const dsp::SpectralConfig & cfg);

struct VqCommit {
    nn::Var l_vq;  // sum_k mean_rows ||sg(x_k) - z_k||^2
    nn::Var l_com; // sum_k mean_rows ||x_k - sg(z_k)||^2
};

VqCommit loss_vq_commit(const std::vector<nn::Var> & inputs, const std::vector<nn::Var> & selected);

struct Adversarial {
    nn::Var l_d;
    nn::Var l_g;
};

// Hinge losses averaged over resolutions.
nn::Var hinge_discriminator(const std::vector<nn::Var> & real_logits, const std::vector<nn::Var> & fake_logits);
nn::Var hinge_generator(const std::vector<nn::Var> & fake_logits);
Adversarial loss_adversarial(const std::vector<nn::Var> & real_logits, const std::vector<nn::Var> & fake_logits);

struct Stage1Parts {
    nn::Var l_t;
    nn::Var l_f;
    nn::Var l_g;
    nn::Var l_vq;
    nn::Var l_com;
};

// lambda_t L_t + lambda_f L_f + lambda_G L_G + L_vq + lambda_com L_com.
// Throws DivergenceError naming the offending part when any part is non-finite.
nn::Var total_stage1_loss(const Stage1Parts & parts, const LossWeights & w);

} // namespace aar::loss
