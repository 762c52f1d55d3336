#include "aar/nn/layers.hpp"

#include "aar/error.hpp"

#include <cmath>

namespace aar::nn {

Var ParamStore::add(const std::string & name, Tensor init) {
    require(!contains(name), "duplicate parameter " + name);
    Var v(std::move(init), true);
    entries_.emplace_back(name, v);
    return v;
}

Var ParamStore::get(const std::string & name) const {
    for (const auto & [n, v] : entries_) {
        if (n == name) {
            return v;
        }
    }
    throw ValidationError("unknown parameter " + name);
}

bool ParamStore::contains(const std::string & name) const {
    for (const auto & e : entries_) {
        if (e.first == name) {
            return true;
        }
    }
    return false;
}

std::size_t ParamStore::count() const {
    std::size_t n = 0;
    for (const auto & e : entries_) {
        n += e.second.value().size();
    }
    return n;
}

void ParamStore::zero_grad() {
    for (auto & e : entries_) {
        e.second.zero_grad();
    }
}

Tensor uniform_tensor(std::vector<int> shape, double bound, Rng & rng) {
    Tensor t(std::move(shape));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (auto & v : t.values()) {
        v = dist(rng);
    }
    return t;
}

Tensor normal_tensor(std::vector<int> shape, double stddev, Rng & rng) {
    Tensor t(std::move(shape));
    std::normal_distribution<double> dist(0.0, stddev);
    for (auto & v : t.values()) {
        v = dist(rng);
    }
    return t;
}

Linear::Linear(ParamStore & store, const std::string & name, int in, int out, Rng & rng, bool with_bias) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    weight = store.add(name + ".weight", uniform_tensor({in, out}, bound, rng));
    if (with_bias) {
        bias = store.add(name + ".bias", uniform_tensor({out}, bound, rng));
    }
}

Conv1d::Conv1d(ParamStore & store, const std::string & name, int in, int out, int kernel, Rng & rng, int stride_,
               int dilation_)
    : stride(stride_), dilation(dilation_) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in * kernel));
    weight = store.add(name + ".weight", uniform_tensor({out, in, kernel}, bound, rng));
    bias = store.add(name + ".bias", uniform_tensor({out}, bound, rng));
    const int total = dilation * (kernel - 1);
    pad_left = total / 2;
    pad_right = total - pad_left;
}

Conv1d & Conv1d::with_padding(int left, int right) {
    pad_left = left;
    pad_right = right;
    return *this;
}

ConvTranspose1d::ConvTranspose1d(ParamStore & store, const std::string & name, int in, int out, int kernel,
                                 int stride_, int crop_left_, int crop_right_, Rng & rng)
    : stride(stride_), crop_left(crop_left_), crop_right(crop_right_) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(out * kernel));
    weight = store.add(name + ".weight", uniform_tensor({in, out, kernel}, bound, rng));
    bias = store.add(name + ".bias", uniform_tensor({out}, bound, rng));
}

Conv2d::Conv2d(ParamStore & store, const std::string & name, int in, int out, int kh, int kw, int stride_h_,
               int stride_w_, Rng & rng)
    : stride_h(stride_h_), stride_w(stride_w_), pad_h(kh / 2), pad_w(kw / 2) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in * kh * kw));
    weight = store.add(name + ".weight", uniform_tensor({out, in, kh, kw}, bound, rng));
    bias = store.add(name + ".bias", uniform_tensor({out}, bound, rng));
}

} // namespace aar::nn
