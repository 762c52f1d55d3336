#include "aar/nn/optim.hpp"

#include "aar/error.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace aar::nn {

Adam::Adam(const ParamStore & params, AdamConfig cfg) : cfg_(cfg) {
    for (const auto & e : params.entries()) {
        params_.push_back(e.second);
        m_.emplace_back(e.second.value().shape());
        v_.emplace_back(e.second.value().shape());
    }
}

void Adam::step(double lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t p = 0; p < params_.size(); ++p) {
        Var & param = params_[p];
        if (param.grad().empty()) {
            continue;
        }
        Tensor & w = param.mutable_value();
        const Tensor & g = param.grad();
        Tensor & m = m_[p];
        Tensor & v = v_[p];
        for (std::size_t i = 0; i < w.size(); ++i) {
            m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
            v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            if (cfg_.weight_decay > 0.0) {
                w[i] -= lr * cfg_.weight_decay * w[i];
            }
            w[i] -= lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
    }
}

double clip_grad_norm(const ParamStore & params, double max_norm) {
    double sq = 0.0;
    for (const auto & e : params.entries()) {
        for (double g : e.second.grad().values()) {
            sq += g * g;
        }
    }
    const double norm = std::sqrt(sq);
    if (norm > max_norm && norm > 0.0) {
        const double s = max_norm / norm;
        for (const auto & e : params.entries()) {
            Var v = e.second;
            if (!v.grad().empty()) {
                for (double & g : v.grad_buffer().values()) {
                    g *= s;
                }
            }
        }
    }
    return norm;
}

double cosine_lr(long long step, long long total, double peak) {
    if (total <= 0) {
        return peak;
    }
    const double x = std::clamp(static_cast<double>(step) / static_cast<double>(total), 0.0, 1.0);
    return peak * 0.5 * (1.0 + std::cos(std::numbers::pi * x));
}

double warmup_linear_lr(long long step, long long total, double peak, double warmup_frac) {
    require(warmup_frac >= 0.0 && warmup_frac < 1.0, "warmup fraction must be in [0, 1)");
    const double start = 0.005;
    const double end = 0.01;
    const auto warm = static_cast<long long>(std::ceil(warmup_frac * static_cast<double>(total)));
    if (step < warm) {
        return peak * (start + (1.0 - start) * static_cast<double>(step) / static_cast<double>(warm));
    }
    const long long span = std::max<long long>(1, total - 1 - warm);
    const double x = std::clamp(static_cast<double>(step - warm) / static_cast<double>(span), 0.0, 1.0);
    return peak * (1.0 - (1.0 - end) * x);
}

} // namespace aar::nn
