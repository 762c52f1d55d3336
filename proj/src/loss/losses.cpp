#include "aar/loss/losses.hpp"

#include "aar/error.hpp"

#include <cmath>
#include <string>

namespace aar::loss {

nn::Var loss_time(const nn::Var & a, const nn::Var & a_hat) {
    require(a.value().size() == a_hat.value().size(), "loss_time: length mismatch");
    return nn::mean(nn::abs(nn::sub(nn::reshape(a, a_hat.shape()), a_hat)));
}

FreqTerms spectral_terms(const std::vector<nn::Var> & features_a, const std::vector<nn::Var> & features_b) {
    require(!features_a.empty() && features_a.size() == features_b.size(), "spectral_terms: scale count mismatch");
    FreqTerms out;
    for (std::size_t i = 0; i < features_a.size(); ++i) {
        auto diff = nn::sub(features_a[i], features_b[i]);
        auto l1 = nn::mean(nn::abs(diff));
        auto l2 = nn::mean(nn::square(diff));
        out.l1 = out.l1.defined() ? nn::add(out.l1, l1) : l1;
        out.l2 = out.l2.defined() ? nn::add(out.l2, l2) : l2;
    }
    return out;
}

FreqTerms loss_freq_terms(const nn::Var & a, const nn::Var & a_hat, const dsp::SpectralConfig & cfg) {
    require(a.value().size() == a_hat.value().size(), "loss_freq: length mismatch");
    std::vector<nn::Var> fa;
    std::vector<nn::Var> fb;
    for (int i = 0; i < cfg.n_scales(); ++i) {
        fa.push_back(dsp::log_mel(a, cfg, i));
        fb.push_back(dsp::log_mel(a_hat, cfg, i));
    }
    return spectral_terms(fa, fb);
}

nn::Var loss_freq(const nn::Var & a, const nn::Var & a_hat, const dsp::SpectralConfig & cfg) {
    return loss_freq_terms(a, a_hat, cfg).total();
}

VqCommit loss_vq_commit(const std::vector<nn::Var> & inputs, const std::vector<nn::Var> & selected) {
    require(!inputs.empty() && inputs.size() == selected.size(), "loss_vq_commit: mismatched scale lists");
    VqCommit out;
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        const auto & x = inputs[k];
        const auto & z = selected[k];
        require(x.shape() == z.shape(), "loss_vq_commit: shape mismatch at scale " + std::to_string(k + 1));
        const double rows = x.value().rank() == 2 ? x.dim(0) : 1.0;
        auto vq = nn::scale(nn::sum(nn::square(nn::sub(nn::detach(x), z))), 1.0 / rows);
        auto com = nn::scale(nn::sum(nn::square(nn::sub(x, nn::detach(z)))), 1.0 / rows);
        out.l_vq = out.l_vq.defined() ? nn::add(out.l_vq, vq) : vq;
        out.l_com = out.l_com.defined() ? nn::add(out.l_com, com) : com;
    }
    return out;
}

nn::Var hinge_discriminator(const std::vector<nn::Var> & real_logits, const std::vector<nn::Var> & fake_logits) {
    require(!real_logits.empty() && real_logits.size() == fake_logits.size(), "hinge: mismatched resolutions");
    nn::Var total;
    for (std::size_t r = 0; r < real_logits.size(); ++r) {
        auto real = nn::mean(nn::relu(nn::add_scalar(nn::scale(real_logits[r], -1.0), 1.0)));
        auto fake = nn::mean(nn::relu(nn::add_scalar(fake_logits[r], 1.0)));
        auto term = nn::add(real, fake);
        total = total.defined() ? nn::add(total, term) : term;
    }
    return nn::scale(total, 1.0 / static_cast<double>(real_logits.size()));
}

nn::Var hinge_generator(const std::vector<nn::Var> & fake_logits) {
    require(!fake_logits.empty(), "hinge: no resolutions");
    nn::Var total;
    for (const auto & f : fake_logits) {
        auto term = nn::scale(nn::mean(f), -1.0);
        total = total.defined() ? nn::add(total, term) : term;
    }
    return nn::scale(total, 1.0 / static_cast<double>(fake_logits.size()));
}

Adversarial loss_adversarial(const std::vector<nn::Var> & real_logits, const std::vector<nn::Var> & fake_logits) {
    return {hinge_discriminator(real_logits, fake_logits), hinge_generator(fake_logits)};
}

nn::Var total_stage1_loss(const Stage1Parts & parts, const LossWeights & w) {
    const std::pair<const char *, const nn::Var *> named[] = {
        {"L_t", &parts.l_t}, {"L_f", &parts.l_f}, {"L_G", &parts.l_g}, {"L_vq", &parts.l_vq}, {"L_com", &parts.l_com}};
    for (const auto & [name, v] : named) {
        require(v->defined(), std::string("missing loss part ") + name);
        if (!std::isfinite(v->item())) {
            throw DivergenceError(std::string("non-finite ") + name + " = " + std::to_string(v->item()));
        }
    }
    auto total = nn::add(nn::scale(parts.l_t, w.lambda_t), nn::scale(parts.l_f, w.lambda_f));
    total = nn::add(total, nn::scale(parts.l_g, w.lambda_g));
    total = nn::add(total, parts.l_vq);
    return nn::add(total, nn::scale(parts.l_com, w.lambda_com));
}

} // namespace aar::loss
