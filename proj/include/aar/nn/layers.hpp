#pragma once

#include "aar/nn/autograd.hpp"

#include <random>
#include <string>
#include <utility>
#include <vector>

namespace aar::nn {

using Rng = std::mt19937_64;

// Ordered collection of named trainable parameters.
class ParamStore {
public:
    Var add(const std::string & name, Tensor init);

    const std::vector<std::pair<std::string, Var>> & entries() const { return entries_; }
    Var get(const std::string & name) const;
    bool contains(const std::string & name) const;
    std::size_t count() const;
    void zero_grad();

private:
    std::vector<std::pair<std::string, Var>> entries_;
};

Tensor uniform_tensor(std::vector<int> shape, double bound, Rng & rng);
Tensor normal_tensor(std::vector<int> shape, double stddev, Rng & rng);

struct Linear {
    Var weight; // (in, out)
    Var bias;   // (out) or undefined

    Linear() = default;
    Linear(ParamStore & store, const std::string & name, int in, int out, Rng & rng, bool with_bias = true);
    Var operator()(const Var & x) const { return linear(x, weight, bias); }
};

struct Conv1d {
    Var weight; // (out, in, k)
    Var bias;
    int stride = 1;
    int dilation = 1;
    int pad_left = 0;
    int pad_right = 0;

    Conv1d() = default;
    Conv1d(ParamStore & store, const std::string & name, int in, int out, int kernel, Rng & rng, int stride = 1,
           int dilation = 1);
    // Explicit padding; the default constructor pads "same" for stride 1.
    Conv1d & with_padding(int left, int right);
    Var operator()(const Var & x) const { return conv1d(x, weight, bias, stride, dilation, pad_left, pad_right); }
};

struct ConvTranspose1d {
    Var weight; // (in, out, k)
    Var bias;
    int stride = 1;
    int crop_left = 0;
    int crop_right = 0;

    ConvTranspose1d() = default;
    ConvTranspose1d(ParamStore & store, const std::string & name, int in, int out, int kernel, int stride,
                    int crop_left, int crop_right, Rng & rng);
    Var operator()(const Var & x) const { return conv_transpose1d(x, weight, bias, stride, crop_left, crop_right); }
};

struct Conv2d {
    Var weight; // (out, in, kh, kw)
    Var bias;
    int stride_h = 1;
    int stride_w = 1;
    int pad_h = 0;
    int pad_w = 0;

    Conv2d() = default;
    Conv2d(ParamStore & store, const std::string & name, int in, int out, int kh, int kw, int stride_h,
           int stride_w, Rng & rng);
    Var operator()(const Var & x) const { return conv2d(x, weight, bias, stride_h, stride_w, pad_h, pad_w); }
};

} // namespace aar::nn
