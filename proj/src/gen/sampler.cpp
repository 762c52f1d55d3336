#include "aar/gen/sampler.hpp"

#include "aar/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace aar::gen {

namespace {

// Strict order: larger value first, lower index first among equal values.
bool ranks_before(std::span<const double> v, int a, int b) {
    const double va = v[static_cast<std::size_t>(a)];
    const double vb = v[static_cast<std::size_t>(b)];
    return va > vb || (va == vb && a < b);
}

int argmax(std::span<const double> v) {
    return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
}

} // namespace

void validate(const SamplerConfig & cfg) {
    require(std::isfinite(cfg.cfg_scale) && cfg.cfg_scale >= 0.0, "cfg_scale must be >= 0");
    require(cfg.top_k >= 0, "top_k must be >= 0 (0 disables)");
    require(cfg.top_p > 0.0 && cfg.top_p <= 1.0, "top_p must lie in (0, 1]");
    require(std::isfinite(cfg.temperature) && cfg.temperature >= 0.0, "temperature must be >= 0");
}

nn::Tensor cfg_mix(const nn::Tensor & cond_logits, const nn::Tensor & uncond_logits, double s) {
    require(cond_logits.shape() == uncond_logits.shape(), "cfg_mix shape mismatch");
    nn::Tensor out = uncond_logits;
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = (1.0 - s) * uncond_logits[i] + s * cond_logits[i];
    }
    return out;
}

void filter_top_k(std::span<double> logits, int k) {
    require(k >= 1, "top-k needs k >= 1");
    if (k >= static_cast<int>(logits.size())) {
        return;
    }
    std::vector<int> idx(logits.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::nth_element(idx.begin(), idx.begin() + (k - 1), idx.end(), [&](int a, int b) { return ranks_before(logits, a, b); });
    const int pivot = idx[static_cast<std::size_t>(k - 1)];
    for (int i = 0; i < static_cast<int>(logits.size()); ++i) {
        if (ranks_before(logits, pivot, i)) {
            logits[static_cast<std::size_t>(i)] = -INFINITY;
        }
    }
}

void filter_top_p(std::span<double> probs, double p) {
    require(p > 0.0 && p <= 1.0, "top-p needs p in (0, 1]");
    if (p >= 1.0) {
        return;
    }
    std::vector<int> idx;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        if (probs[i] > 0.0) {
            idx.push_back(static_cast<int>(i));
        }
    }
    std::sort(idx.begin(), idx.end(), [&](int a, int b) { return ranks_before(probs, a, b); });
    double cum = 0.0;
    std::size_t keep = idx.size();
    for (std::size_t i = 0; i < idx.size(); ++i) {
        cum += probs[static_cast<std::size_t>(idx[i])];
        if (cum >= p) {
            keep = i + 1;
            break;
        }
    }
    double mass = 0.0;
    for (std::size_t i = 0; i < idx.size(); ++i) {
        if (i < keep) {
            mass += probs[static_cast<std::size_t>(idx[i])];
        } else {
            probs[static_cast<std::size_t>(idx[i])] = 0.0;
        }
    }
    for (auto & v : probs) {
        v /= mass;
    }
}

std::vector<double> softmax(std::span<const double> logits, double temperature) {
    require(temperature > 0.0, "softmax temperature must be positive");
    const double mx = *std::max_element(logits.begin(), logits.end());
    require(std::isfinite(mx), "logits have no finite maximum");
    std::vector<double> p(logits.size());
    double z = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        p[i] = std::exp((logits[i] - mx) / temperature);
        z += p[i];
    }
    for (auto & v : p) {
        v /= z;
    }
    return p;
}

int sample_token(std::span<const double> logits, const SamplerConfig & cfg, nn::Rng & rng) {
    require(!logits.empty(), "cannot sample from empty logits");
    for (double v : logits) {
        if (std::isnan(v) || v == INFINITY) {
            throw DivergenceError("non-finite logits during sampling");
        }
    }
    if (cfg.temperature == 0.0) {
        return argmax(logits);
    }
    std::vector<double> work(logits.begin(), logits.end());
    for (auto & v : work) {
        v /= cfg.temperature;
    }
    if (cfg.top_k > 0) {
        filter_top_k(work, cfg.top_k);
    }
    auto probs = softmax(work);
    filter_top_p(probs, cfg.top_p);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double r = u(rng);
    double cum = 0.0;
    int last = 0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        if (probs[i] > 0.0) {
            cum += probs[i];
            last = static_cast<int>(i);
            if (r < cum) {
                return last;
            }
        }
    }
    return last;
}

} // namespace aar::gen
