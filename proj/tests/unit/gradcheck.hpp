#pragma once

#include "aar/nn/autograd.hpp"
#include "aar/nn/layers.hpp"

#include <cmath>
#include <functional>
#include <vector>

namespace testutil {

using aar::nn::Tensor;
using aar::nn::Var;

inline Tensor random_tensor(std::vector<int> shape, unsigned seed, double scale = 1.0) {
    aar::nn::Rng rng(seed);
    return aar::nn::normal_tensor(std::move(shape), scale, rng);
}

// Contracts the output with a fixed random tensor so every output element
// contributes to the checked scalar.
inline double contract(const Tensor & y, const Tensor & r) {
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        s += y[i] * r[i];
    }
    return s;
}

// Compares reverse-mode gradients of <f(inputs), R> with central differences.
// Returns the largest relative error over all input elements.
inline double gradcheck(const std::function<Var(const std::vector<Var> &)> & f, std::vector<Tensor> inputs,
                        double h = 1e-6) {
    std::vector<Var> vars;
    for (auto & t : inputs) {
        vars.emplace_back(t, true);
    }
    Var y = f(vars);
    Tensor r = random_tensor(y.shape(), 1234);
    Var loss = aar::nn::sum(aar::nn::mul(y, aar::nn::constant(r)));
    aar::nn::backward(loss);

    double worst = 0.0;
    for (std::size_t p = 0; p < inputs.size(); ++p) {
        const Tensor analytic = vars[p].grad().empty() ? Tensor(inputs[p].shape()) : vars[p].grad();
        for (std::size_t i = 0; i < inputs[p].size(); ++i) {
            auto eval = [&](double delta) {
                std::vector<Var> pv;
                for (std::size_t q = 0; q < inputs.size(); ++q) {
                    Tensor t = inputs[q];
                    if (q == p) {
                        t[i] += delta;
                    }
                    pv.emplace_back(t, false);
                }
                aar::nn::NoGradGuard ng;
                return contract(f(pv).value(), r);
            };
            const double numeric = (eval(h) - eval(-h)) / (2 * h);
            const double err = std::fabs(numeric - analytic[i]) / std::max(1.0, std::fabs(numeric));
            worst = std::max(worst, err);
        }
    }
    return worst;
}

} // namespace testutil
