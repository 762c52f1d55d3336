#pragma once

// Minimal reverse-mode autodiff. Every op returns a Var whose node
// keeps its parents and a backward closure while gradient recording is on;
// backward() walks the graph in reverse topological order.

#include "aar/nn/tensor.hpp"

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace aar::nn {

struct Node {
    Tensor value;
    Tensor grad; // allocated on first accumulation
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node &)> backward_fn;

    Tensor & grad_buffer();
    void accumulate(const Tensor & g);
};

class Var {
public:
    Var() = default;
    explicit Var(Tensor value, bool requires_grad = false);
    explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

    const Tensor & value() const { return node_->value; }
    Tensor & mutable_value() { return node_->value; }
    const Tensor & grad() const { return node_->grad; }
    Tensor & grad_buffer() { return node_->grad_buffer(); }
    bool has_grad() const { return !node_->grad.empty() || node_->value.empty(); }
    bool requires_grad() const { return node_ && node_->requires_grad; }
    void zero_grad();

    const std::vector<int> & shape() const { return node_->value.shape(); }
    int dim(int i) const { return node_->value.dim(i); }
    double item() const { return node_->value.item(); }
    bool defined() const { return static_cast<bool>(node_); }

    const std::shared_ptr<Node> & node() const { return node_; }

private:
    std::shared_ptr<Node> node_;
};

// Seeds d(loss)/d(loss) = 1 (loss must be a scalar) and propagates.
void backward(const Var & loss);

bool grad_enabled();

class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard &) = delete;
    NoGradGuard & operator=(const NoGradGuard &) = delete;

private:
    bool prev_;
};

// Builds a result node. `fn` receives the result node (its grad is set) and
// must accumulate into the parents that require grad.
Var make_result(Tensor value, std::vector<Var> parents, std::function<void(Node &)> fn);

Var constant(Tensor t);
Var detach(const Var & a);

// Elementwise
Var add(const Var & a, const Var & b);
Var sub(const Var & a, const Var & b);
Var mul(const Var & a, const Var & b);
Var scale(const Var & a, double s);
Var add_scalar(const Var & a, double s);
Var elu(const Var & a, double alpha = 1.0);
Var leaky_relu(const Var & a, double slope);
Var relu(const Var & a);
Var gelu(const Var & a);
Var silu(const Var & a);
Var tanh(const Var & a);
Var abs(const Var & a);
Var square(const Var & a);
Var log1p(const Var & a);

// Reductions to scalars
Var sum(const Var & a);
Var mean(const Var & a);

// Rank-2 helpers
Var matmul(const Var & a, const Var & b);
Var linear(const Var & x, const Var & weight, const Var & bias); // x (n,in) W (in,out) b (out)
Var transpose(const Var & a);
Var reshape(const Var & a, std::vector<int> shape);
Var add_rowvec(const Var & x, const Var & v); // x (n,m) + v (m)
Var mul_rowvec(const Var & x, const Var & v); // x (n,m) * v (m)
Var slice_rows(const Var & a, int begin, int end);
Var concat_rows(const std::vector<Var> & parts);
Var repeat_rows(const Var & row, int n);
Var gather_rows(const Var & table, std::span<const int> indices);
Var layer_norm_rows(const Var & x, double eps = 1e-6);
Var interpolate_rows(const Var & x, int target_len);

// Convolutions. x is (C_in, T); weight (C_out, C_in, K); bias (C_out) or undefined.
Var conv1d(const Var & x, const Var & weight, const Var & bias, int stride, int dilation, int pad_left,
           int pad_right);
// x (C_in, T); weight (C_in, C_out, K). Output length (T-1)*stride + K - crop_left - crop_right.
Var conv_transpose1d(const Var & x, const Var & weight, const Var & bias, int stride, int crop_left,
                     int crop_right);
// x (C_in, H, W); weight (C_out, C_in, KH, KW).
Var conv2d(const Var & x, const Var & weight, const Var & bias, int stride_h, int stride_w, int pad_h, int pad_w);

// Hann-windowed STFT of x (1, T) without centering: output (2, frames, window/2+1) holding (re, im).
Var stft(const Var & x, int window, int hop);
// (2, F, B) -> (F, B) complex magnitude.
Var magnitude(const Var & spec);

// Mean cross-entropy of logits (n, V) against integer targets.
Var cross_entropy(const Var & logits, std::span<const int> targets);

// Multi-head attention over q, k, v of shape (n, width). Query i may attend key
// j iff key_group[j] <= query_group[i]. With qk_norm, q and k rows are
// L2-normalised per head and scaled by exp(log_temperature[h]); otherwise the
// usual 1/sqrt(head_dim) scaling is used and log_temperature is ignored.
struct AttentionSpec {
    int heads = 1;
    bool qk_norm = true;
    double max_log_temperature = 4.605170185988091; // log(100)
};
Var attention(const Var & q, const Var & k, const Var & v, const Var & log_temperature,
              std::span<const int> query_group, std::span<const int> key_group, const AttentionSpec & spec,
              Tensor * weights_out = nullptr);

} // namespace aar::nn
