#include "aar/nn/autograd.hpp"

#include "aar/error.hpp"
#include "aar/nn/fft.hpp"
#include "aar/nn/interp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <unordered_set>

namespace aar::nn {

namespace {

thread_local bool g_grad_enabled = true;

Tensor * parent_grad(Node & self, std::size_t i) {
    auto & p = self.parents[i];
    return p->requires_grad ? &p->grad_buffer() : nullptr;
}

const Tensor & parent_value(Node & self, std::size_t i) { return self.parents[i]->value; }

template <class F, class D>
Var unary(const Var & a, F f, D dfdx_from_xy) {
    const Tensor & x = a.value();
    Tensor y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) {
        y[i] = f(x[i]);
    }
    return make_result(std::move(y), {a}, [dfdx_from_xy](Node & self) {
        Tensor * gx = parent_grad(self, 0);
        if (!gx) {
            return;
        }
        const Tensor & xv = parent_value(self, 0);
        for (std::size_t i = 0; i < xv.size(); ++i) {
            (*gx)[i] += self.grad[i] * dfdx_from_xy(xv[i], self.value[i]);
        }
    });
}

void require_same_shape(const Tensor & a, const Tensor & b, const char * op) {
    if (a.shape() != b.shape()) {
        throw ValidationError(std::string(op) + ": shape mismatch " + a.shape_string() + " vs " + b.shape_string());
    }
}

} // namespace

Tensor & Node::grad_buffer() {
    if (grad.size() != value.size() || grad.shape() != value.shape()) {
        grad = Tensor(value.shape());
    }
    return grad;
}

void Node::accumulate(const Tensor & g) {
    Tensor & buf = grad_buffer();
    for (std::size_t i = 0; i < buf.size(); ++i) {
        buf[i] += g[i];
    }
}

Var::Var(Tensor value, bool requires_grad) : node_(std::make_shared<Node>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
}

void Var::zero_grad() {
    if (node_ && !node_->grad.empty()) {
        node_->grad.fill(0.0);
    }
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

Var make_result(Tensor value, std::vector<Var> parents, std::function<void(Node &)> fn) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    if (g_grad_enabled) {
        bool any = std::any_of(parents.begin(), parents.end(), [](const Var & p) { return p.requires_grad(); });
        if (any) {
            node->requires_grad = true;
            node->parents.reserve(parents.size());
            for (auto & p : parents) {
                node->parents.push_back(p.node());
            }
            node->backward_fn = std::move(fn);
        }
    }
    return Var(std::move(node));
}

void backward(const Var & loss) {
    require(loss.value().size() == 1, "backward() needs a scalar loss");
    Node * root = loss.node().get();
    if (!root->requires_grad) {
        return;
    }
    std::vector<Node *> order;
    std::unordered_set<Node *> visited{root};
    std::vector<std::pair<Node *, std::size_t>> stack{{root, 0}};
    while (!stack.empty()) {
        Node * n = stack.back().first;
        std::size_t & i = stack.back().second;
        if (i < n->parents.size()) {
            Node * p = n->parents[i++].get();
            if (p->requires_grad && visited.insert(p).second) {
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }
    root->grad_buffer()[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node * n = *it;
        if (n->backward_fn && !n->grad.empty()) {
            n->backward_fn(*n);
            n->grad = Tensor(); // interior gradients are not needed afterwards
        }
    }
}

Var constant(Tensor t) { return Var(std::move(t), false); }

Var detach(const Var & a) { return Var(a.value(), false); }

// ---------------------------------------------------------------- elementwise

Var add(const Var & a, const Var & b) {
    require_same_shape(a.value(), b.value(), "add");
    Tensor y = a.value();
    for (std::size_t i = 0; i < y.size(); ++i) {
        y[i] += b.value()[i];
    }
    return make_result(std::move(y), {a, b}, [](Node & self) {
        for (std::size_t p = 0; p < 2; ++p) {
            if (Tensor * g = parent_grad(self, p)) {
                for (std::size_t i = 0; i < g->size(); ++i) {
                    (*g)[i] += self.grad[i];
                }
            }
        }
    });
}

Var sub(const Var & a, const Var & b) {
    require_same_shape(a.value(), b.value(), "sub");
    Tensor y = a.value();
    for (std::size_t i = 0; i < y.size(); ++i) {
        y[i] -= b.value()[i];
    }
    return make_result(std::move(y), {a, b}, [](Node & self) {
        if (Tensor * g = parent_grad(self, 0)) {
            for (std::size_t i = 0; i < g->size(); ++i) {
                (*g)[i] += self.grad[i];
            }
        }
        if (Tensor * g = parent_grad(self, 1)) {
            for (std::size_t i = 0; i < g->size(); ++i) {
                (*g)[i] -= self.grad[i];
            }
        }
    });
}

Var mul(const Var & a, const Var & b) {
    require_same_shape(a.value(), b.value(), "mul");
    Tensor y = a.value();
    for (std::size_t i = 0; i < y.size(); ++i) {
        y[i] *= b.value()[i];
    }
    return make_result(std::move(y), {a, b}, [](Node & self) {
        const Tensor & av = parent_value(self, 0);
        const Tensor & bv = parent_value(self, 1);
        if (Tensor * g = parent_grad(self, 0)) {
            for (std::size_t i = 0; i < g->size(); ++i) {
                (*g)[i] += self.grad[i] * bv[i];
            }
        }
        if (Tensor * g = parent_grad(self, 1)) {
            for (std::size_t i = 0; i < g->size(); ++i) {
                (*g)[i] += self.grad[i] * av[i];
            }
        }
    });
}

Var scale(const Var & a, double s) {
    return unary(a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Var add_scalar(const Var & a, double s) {
    return unary(a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Var elu(const Var & a, double alpha) {
    return unary(
        a, [alpha](double x) { return x > 0 ? x : alpha * std::expm1(x); },
        [alpha](double x, double y) { return x > 0 ? 1.0 : y + alpha; });
}

Var leaky_relu(const Var & a, double slope) {
    return unary(
        a, [slope](double x) { return x > 0 ? x : slope * x; }, [slope](double x, double) { return x > 0 ? 1.0 : slope; });
}

Var relu(const Var & a) {
    return unary(a, [](double x) { return x > 0 ? x : 0.0; }, [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

Var gelu(const Var & a) {
    constexpr double c = 0.7978845608028654; // sqrt(2/pi)
    return unary(
        a,
        [](double x) { return 0.5 * x * (1.0 + std::tanh(c * (x + 0.044715 * x * x * x))); },
        [](double x, double) {
            const double u = c * (x + 0.044715 * x * x * x);
            const double t = std::tanh(u);
            const double du = c * (1.0 + 3.0 * 0.044715 * x * x);
            return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
        });
}

Var silu(const Var & a) {
    return unary(
        a, [](double x) { return x / (1.0 + std::exp(-x)); },
        [](double x, double) {
            const double s = 1.0 / (1.0 + std::exp(-x));
            return s * (1.0 + x * (1.0 - s));
        });
}

Var tanh(const Var & a) {
    return unary(a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var abs(const Var & a) {
    return unary(
        a, [](double x) { return std::fabs(x); }, [](double x, double) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); });
}

Var square(const Var & a) {
    return unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var log1p(const Var & a) {
    return unary(a, [](double x) { return std::log1p(x); }, [](double x, double) { return 1.0 / (1.0 + x); });
}

// ---------------------------------------------------------------- reductions

Var sum(const Var & a) {
    double s = 0.0;
    for (double v : a.value().values()) {
        s += v;
    }
    return make_result(Tensor::scalar(s), {a}, [](Node & self) {
        if (Tensor * g = parent_grad(self, 0)) {
            const double go = self.grad[0];
            for (auto & v : g->values()) {
                v += go;
            }
        }
    });
}

Var mean(const Var & a) {
    const auto n = static_cast<double>(a.value().size());
    require(n > 0, "mean of empty tensor");
    double s = 0.0;
    for (double v : a.value().values()) {
        s += v;
    }
    return make_result(Tensor::scalar(s / n), {a}, [n](Node & self) {
        if (Tensor * g = parent_grad(self, 0)) {
            const double go = self.grad[0] / n;
            for (auto & v : g->values()) {
                v += go;
            }
        }
    });
}

// ---------------------------------------------------------------- rank-2

Var matmul(const Var & a, const Var & b) {
    require(a.value().rank() == 2 && b.value().rank() == 2 && a.dim(1) == b.dim(0),
            "matmul shape mismatch " + a.value().shape_string() + " x " + b.value().shape_string());
    Tensor y({a.dim(0), b.dim(1)});
    y.matrix().noalias() = a.value().matrix() * b.value().matrix();
    return make_result(std::move(y), {a, b}, [](Node & self) {
        auto G = self.grad.matrix();
        if (Tensor * ga = parent_grad(self, 0)) {
            ga->matrix().noalias() += G * parent_value(self, 1).matrix().transpose();
        }
        if (Tensor * gb = parent_grad(self, 1)) {
            gb->matrix().noalias() += parent_value(self, 0).matrix().transpose() * G;
        }
    });
}

Var linear(const Var & x, const Var & weight, const Var & bias) {
    require(x.value().rank() == 2 && weight.value().rank() == 2 && x.dim(1) == weight.dim(0),
            "linear shape mismatch " + x.value().shape_string() + " x " + weight.value().shape_string());
    const int out = weight.dim(1);
    Tensor y({x.dim(0), out});
    auto Y = y.matrix();
    Y.noalias() = x.value().matrix() * weight.value().matrix();
    const bool has_bias = bias.defined();
    if (has_bias) {
        require(static_cast<int>(bias.value().size()) == out, "linear bias size mismatch");
        Y.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(bias.value().data(), out);
    }
    std::vector<Var> parents{x, weight};
    if (has_bias) {
        parents.push_back(bias);
    }
    return make_result(std::move(y), std::move(parents), [has_bias](Node & self) {
        auto G = self.grad.matrix();
        if (Tensor * gx = parent_grad(self, 0)) {
            gx->matrix().noalias() += G * parent_value(self, 1).matrix().transpose();
        }
        if (Tensor * gw = parent_grad(self, 1)) {
            gw->matrix().noalias() += parent_value(self, 0).matrix().transpose() * G;
        }
        if (has_bias) {
            if (Tensor * gb = parent_grad(self, 2)) {
                Eigen::Map<Eigen::RowVectorXd>(gb->data(), static_cast<Eigen::Index>(gb->size())) += G.colwise().sum();
            }
        }
    });
}

Var transpose(const Var & a) {
    require(a.value().rank() == 2, "transpose needs rank 2");
    Tensor y({a.dim(1), a.dim(0)});
    y.matrix() = a.value().matrix().transpose();
    return make_result(std::move(y), {a}, [](Node & self) {
        if (Tensor * g = parent_grad(self, 0)) {
            g->matrix() += self.grad.matrix().transpose();
        }
    });
}

Var reshape(const Var & a, std::vector<int> shape) {
    Tensor y = a.value().reshaped(std::move(shape));
    return make_result(std::move(y), {a}, [](Node & self) {
        if (Tensor * g = parent_grad(self, 0)) {
            for (std::size_t i = 0; i < g->size(); ++i) {
                (*g)[i] += self.grad[i];
            }
        }
    });
}

Var add_rowvec(const Var & x, const Var & v) {
    require(x.value().rank() == 2 && static_cast<int>(v.value().size()) == x.dim(1), "add_rowvec shape mismatch");
    Tensor y = x.value();
    y.matrix().rowwise() += Eigen::Map<const Eigen::RowVectorXd>(v.value().data(), x.dim(1));
    return make_result(std::move(y), {x, v}, [](Node & self) {
        if (Tensor * g = parent_grad(self, 0)) {
            g->matrix() += self.grad.matrix();
        }
        if (Tensor * g = parent_grad(self, 1)) {
            Eigen::Map<Eigen::RowVectorXd>(g->data(), static_cast<Eigen::Index>(g->size())) +=
                self.grad.matrix().colwise().sum();
        }
    });
}

Var mul_rowvec(const Var & x, const Var & v) {
    require(x.value().rank() == 2 && static_cast<int>(v.value().size()) == x.dim(1), "mul_rowvec shape mismatch");
    Tensor y = x.value();
    const auto vm = Eigen::Map<const Eigen::RowVectorXd>(v.value().data(), x.dim(1));
    y.matrix().array().rowwise() *= vm.array();
    return make_result(std::move(y), {x, v}, [](Node & self) {
        const Tensor & xv = parent_value(self, 0);
        const Tensor & vv = parent_value(self, 1);
        const int m = xv.dim(1);
        if (Tensor * g = parent_grad(self, 0)) {
            g->matrix().array() +=
                self.grad.matrix().array().rowwise() * Eigen::Map<const Eigen::RowVectorXd>(vv.data(), m).array();
        }
        if (Tensor * g = parent_grad(self, 1)) {
            Eigen::Map<Eigen::RowVectorXd>(g->data(), m) +=
                (self.grad.matrix().array() * xv.matrix().array()).colwise().sum().matrix();
        }
    });
}

Var slice_rows(const Var & a, int begin, int end) {
    require(a.value().rank() == 2 && 0 <= begin && begin <= end && end <= a.dim(0), "slice_rows out of range");
    const int m = a.dim(1);
    Tensor y({end - begin, m});
    std::copy_n(a.value().data() + static_cast<std::size_t>(begin) * m, y.size(), y.data());
    return make_result(std::move(y), {a}, [begin, m](Node & self) {
        if (Tensor * g = parent_grad(self, 0)) {
            double * dst = g->data() + static_cast<std::size_t>(begin) * m;
            for (std::size_t i = 0; i < self.grad.size(); ++i) {
                dst[i] += self.grad[i];
            }
        }
    });
}

Var concat_rows(const std::vector<Var> & parts) {
    require(!parts.empty(), "concat_rows of nothing");
    const int m = parts.front().dim(1);
    int rows = 0;
    for (const auto & p : parts) {
        require(p.value().rank() == 2 && p.dim(1) == m, "concat_rows width mismatch");
        rows += p.dim(0);
    }
    Tensor y({rows, m});
    std::size_t off = 0;
    for (const auto & p : parts) {
        std::copy_n(p.value().data(), p.value().size(), y.data() + off);
        off += p.value().size();
    }
    return make_result(std::move(y), parts, [](Node & self) {
        std::size_t off = 0;
        for (std::size_t p = 0; p < self.parents.size(); ++p) {
            const std::size_t n = self.parents[p]->value.size();
            if (Tensor * g = parent_grad(self, p)) {
                for (std::size_t i = 0; i < n; ++i) {
                    (*g)[i] += self.grad[off + i];
                }
            }
            off += n;
        }
    });
}

Var repeat_rows(const Var & row, int n) {
    const int m = static_cast<int>(row.value().size());
    Tensor y({n, m});
    for (int r = 0; r < n; ++r) {
        std::copy_n(row.value().data(), m, y.data() + static_cast<std::size_t>(r) * m);
    }
    return make_result(std::move(y), {row}, [n, m](Node & self) {
        if (Tensor * g = parent_grad(self, 0)) {
            for (int r = 0; r < n; ++r) {
                for (int c = 0; c < m; ++c) {
                    (*g)[c] += self.grad.at(r, c);
                }
            }
        }
    });
}

Var gather_rows(const Var & table, std::span<const int> indices) {
    require(table.value().rank() == 2, "gather_rows needs a rank-2 table");
    const int rows = table.dim(0);
    const int m = table.dim(1);
    std::vector<int> idx(indices.begin(), indices.end());
    Tensor y({static_cast<int>(idx.size()), m});
    for (std::size_t r = 0; r < idx.size(); ++r) {
        require(idx[r] >= 0 && idx[r] < rows, "gather_rows index out of range");
        std::copy_n(table.value().data() + static_cast<std::size_t>(idx[r]) * m, m, y.data() + r * m);
    }
    return make_result(std::move(y), {table}, [idx = std::move(idx), m](Node & self) {
        if (Tensor * g = parent_grad(self, 0)) {
            for (std::size_t r = 0; r < idx.size(); ++r) {
                double * dst = g->data() + static_cast<std::size_t>(idx[r]) * m;
                for (int c = 0; c < m; ++c) {
                    dst[c] += self.grad[r * m + c];
                }
            }
        }
    });
}

Var layer_norm_rows(const Var & x, double eps) {
    require(x.value().rank() == 2, "layer_norm_rows needs rank 2");
    const int n = x.dim(0);
    const int m = x.dim(1);
    Tensor y({n, m});
    std::vector<double> inv_std(static_cast<std::size_t>(n));
    for (int r = 0; r < n; ++r) {
        const double * xr = x.value().data() + static_cast<std::size_t>(r) * m;
        double mu = 0.0;
        for (int c = 0; c < m; ++c) {
            mu += xr[c];
        }
        mu /= m;
        double var = 0.0;
        for (int c = 0; c < m; ++c) {
            var += (xr[c] - mu) * (xr[c] - mu);
        }
        var /= m;
        const double is = 1.0 / std::sqrt(var + eps);
        inv_std[static_cast<std::size_t>(r)] = is;
        for (int c = 0; c < m; ++c) {
            y.at(r, c) = (xr[c] - mu) * is;
        }
    }
    return make_result(std::move(y), {x}, [inv_std = std::move(inv_std), n, m](Node & self) {
        Tensor * g = parent_grad(self, 0);
        if (!g) {
            return;
        }
        for (int r = 0; r < n; ++r) {
            double gm = 0.0;
            double gy = 0.0;
            for (int c = 0; c < m; ++c) {
                gm += self.grad.at(r, c);
                gy += self.grad.at(r, c) * self.value.at(r, c);
            }
            gm /= m;
            gy /= m;
            const double is = inv_std[static_cast<std::size_t>(r)];
            for (int c = 0; c < m; ++c) {
                g->at(r, c) += is * (self.grad.at(r, c) - gm - self.value.at(r, c) * gy);
            }
        }
    });
}

Var interpolate_rows(const Var & x, int target_len) {
    require(x.value().rank() == 2, "interpolate_rows needs rank 2");
    const int l = x.dim(0);
    if (target_len == l) {
        return reshape(x, x.shape()); // identity, keeps the graph link
    }
    const int d = x.dim(1);
    auto taps = linear_interp_taps(l, target_len);
    Tensor y = interpolate_rows(x.value(), target_len);
    return make_result(std::move(y), {x}, [taps = std::move(taps), d](Node & self) {
        Tensor * g = parent_grad(self, 0);
        if (!g) {
            return;
        }
        for (std::size_t i = 0; i < taps.size(); ++i) {
            const auto & t = taps[i];
            const double * go = self.grad.data() + i * d;
            double * g0 = g->data() + static_cast<std::size_t>(t.i0) * d;
            double * g1 = g->data() + static_cast<std::size_t>(t.i1) * d;
            for (int c = 0; c < d; ++c) {
                g0[c] += t.w0 * go[c];
                g1[c] += t.w1 * go[c];
            }
        }
    });
}

// ---------------------------------------------------------------- convolutions

Var conv1d(const Var & x, const Var & weight, const Var & bias, int stride, int dilation, int pad_left,
           int pad_right) {
    const Tensor & xv = x.value();
    const Tensor & wv = weight.value();
    require(xv.rank() == 2 && wv.rank() == 3 && wv.dim(1) == xv.dim(0),
            "conv1d shape mismatch x" + xv.shape_string() + " w" + wv.shape_string());
    const int cin = xv.dim(0);
    const int t_in = xv.dim(1);
    const int cout = wv.dim(0);
    const int k = wv.dim(2);
    const int span = dilation * (k - 1) + 1;
    const int t_pad = t_in + pad_left + pad_right;
    require(t_pad >= span, "conv1d input shorter than kernel span");
    const int t_out = (t_pad - span) / stride + 1;

    RowMatrix cols = RowMatrix::Zero(static_cast<Eigen::Index>(cin) * k, t_out);
    for (int c = 0; c < cin; ++c) {
        const double * xr = xv.data() + static_cast<std::size_t>(c) * t_in;
        for (int j = 0; j < k; ++j) {
            double * cr = cols.data() + (static_cast<std::size_t>(c) * k + j) * t_out;
            const int off = j * dilation - pad_left;
            for (int t = 0; t < t_out; ++t) {
                const int src = t * stride + off;
                if (src >= 0 && src < t_in) {
                    cr[t] = xr[src];
                }
            }
        }
    }
    const ConstMatrixMap W(wv.data(), cout, static_cast<Eigen::Index>(cin) * k);
    Tensor y({cout, t_out});
    y.matrix().noalias() = W * cols;
    const bool has_bias = bias.defined();
    if (has_bias) {
        y.matrix().colwise() += Eigen::Map<const Eigen::VectorXd>(bias.value().data(), cout);
    }
    std::vector<Var> parents{x, weight};
    if (has_bias) {
        parents.push_back(bias);
    }
    return make_result(std::move(y), std::move(parents),
                       [cols = std::move(cols), cin, t_in, cout, k, t_out, stride, dilation, pad_left,
                        has_bias](Node & self) {
                           auto G = self.grad.matrix();
                           const Tensor & wv = parent_value(self, 1);
                           if (Tensor * gw = parent_grad(self, 1)) {
                               MatrixMap(gw->data(), cout, static_cast<Eigen::Index>(cin) * k).noalias() +=
                                   G * cols.transpose();
                           }
                           if (has_bias) {
                               if (Tensor * gb = parent_grad(self, 2)) {
                                   Eigen::Map<Eigen::VectorXd>(gb->data(), cout) += G.rowwise().sum();
                               }
                           }
                           if (Tensor * gx = parent_grad(self, 0)) {
                               const ConstMatrixMap W(wv.data(), cout, static_cast<Eigen::Index>(cin) * k);
                               RowMatrix dcols = W.transpose() * G;
                               for (int c = 0; c < cin; ++c) {
                                   double * gr = gx->data() + static_cast<std::size_t>(c) * t_in;
                                   for (int j = 0; j < k; ++j) {
                                       const double * dr = dcols.data() + (static_cast<std::size_t>(c) * k + j) * t_out;
                                       const int off = j * dilation - pad_left;
                                       for (int t = 0; t < t_out; ++t) {
                                           const int src = t * stride + off;
                                           if (src >= 0 && src < t_in) {
                                               gr[src] += dr[t];
                                           }
                                       }
                                   }
                               }
                           }
                       });
}

Var conv_transpose1d(const Var & x, const Var & weight, const Var & bias, int stride, int crop_left,
                     int crop_right) {
    const Tensor & xv = x.value();
    const Tensor & wv = weight.value();
    require(xv.rank() == 2 && wv.rank() == 3 && wv.dim(0) == xv.dim(0),
            "conv_transpose1d shape mismatch x" + xv.shape_string() + " w" + wv.shape_string());
    const int cin = xv.dim(0);
    const int t_in = xv.dim(1);
    const int cout = wv.dim(1);
    const int k = wv.dim(2);
    const int full = (t_in - 1) * stride + k;
    const int t_out = full - crop_left - crop_right;
    require(t_out > 0, "conv_transpose1d output empty");

    const ConstMatrixMap W2(wv.data(), cin, static_cast<Eigen::Index>(cout) * k);
    RowMatrix cols = W2.transpose() * xv.matrix();
    Tensor y({cout, t_out});
    for (int o = 0; o < cout; ++o) {
        double * yr = y.data() + static_cast<std::size_t>(o) * t_out;
        for (int j = 0; j < k; ++j) {
            const double * cr = cols.data() + (static_cast<std::size_t>(o) * k + j) * t_in;
            for (int t = 0; t < t_in; ++t) {
                const int dst = t * stride + j - crop_left;
                if (dst >= 0 && dst < t_out) {
                    yr[dst] += cr[t];
                }
            }
        }
    }
    const bool has_bias = bias.defined();
    if (has_bias) {
        y.matrix().colwise() += Eigen::Map<const Eigen::VectorXd>(bias.value().data(), cout);
    }
    std::vector<Var> parents{x, weight};
    if (has_bias) {
        parents.push_back(bias);
    }
    return make_result(
        std::move(y), std::move(parents), [cin, t_in, cout, k, t_out, stride, crop_left, has_bias](Node & self) {
            RowMatrix dcols = RowMatrix::Zero(static_cast<Eigen::Index>(cout) * k, t_in);
            for (int o = 0; o < cout; ++o) {
                const double * gr = self.grad.data() + static_cast<std::size_t>(o) * t_out;
                for (int j = 0; j < k; ++j) {
                    double * dr = dcols.data() + (static_cast<std::size_t>(o) * k + j) * t_in;
                    for (int t = 0; t < t_in; ++t) {
                        const int dst = t * stride + j - crop_left;
                        if (dst >= 0 && dst < t_out) {
                            dr[t] = gr[dst];
                        }
                    }
                }
            }
            const Tensor & xv = parent_value(self, 0);
            const Tensor & wv = parent_value(self, 1);
            if (Tensor * gw = parent_grad(self, 1)) {
                MatrixMap(gw->data(), cin, static_cast<Eigen::Index>(cout) * k).noalias() +=
                    xv.matrix() * dcols.transpose();
            }
            if (Tensor * gx = parent_grad(self, 0)) {
                const ConstMatrixMap W2(wv.data(), cin, static_cast<Eigen::Index>(cout) * k);
                gx->matrix().noalias() += W2 * dcols;
            }
            if (has_bias) {
                if (Tensor * gb = parent_grad(self, 2)) {
                    Eigen::Map<Eigen::VectorXd>(gb->data(), cout) += self.grad.matrix().rowwise().sum();
                }
            }
        });
}

Var conv2d(const Var & x, const Var & weight, const Var & bias, int stride_h, int stride_w, int pad_h,
           int pad_w) {
    const Tensor & xv = x.value();
    const Tensor & wv = weight.value();
    require(xv.rank() == 3 && wv.rank() == 4 && wv.dim(1) == xv.dim(0),
            "conv2d shape mismatch x" + xv.shape_string() + " w" + wv.shape_string());
    const int cin = xv.dim(0);
    const int h = xv.dim(1);
    const int w = xv.dim(2);
    const int cout = wv.dim(0);
    const int kh = wv.dim(2);
    const int kw = wv.dim(3);
    require(h + 2 * pad_h >= kh && w + 2 * pad_w >= kw, "conv2d input smaller than kernel");
    const int h_out = (h + 2 * pad_h - kh) / stride_h + 1;
    const int w_out = (w + 2 * pad_w - kw) / stride_w + 1;
    const std::size_t plane = static_cast<std::size_t>(h_out) * w_out;
    const Eigen::Index patch = static_cast<Eigen::Index>(cin) * kh * kw;

    RowMatrix cols = RowMatrix::Zero(patch, static_cast<Eigen::Index>(plane));
    for (int c = 0; c < cin; ++c) {
        for (int a = 0; a < kh; ++a) {
            for (int b = 0; b < kw; ++b) {
                double * cr = cols.data() + ((static_cast<std::size_t>(c) * kh + a) * kw + b) * plane;
                for (int i = 0; i < h_out; ++i) {
                    const int si = i * stride_h + a - pad_h;
                    if (si < 0 || si >= h) {
                        continue;
                    }
                    const double * xr = xv.data() + (static_cast<std::size_t>(c) * h + si) * w;
                    for (int j = 0; j < w_out; ++j) {
                        const int sj = j * stride_w + b - pad_w;
                        if (sj >= 0 && sj < w) {
                            cr[static_cast<std::size_t>(i) * w_out + j] = xr[sj];
                        }
                    }
                }
            }
        }
    }
    const ConstMatrixMap W(wv.data(), cout, patch);
    Tensor y({cout, h_out, w_out});
    MatrixMap Y(y.data(), cout, static_cast<Eigen::Index>(plane));
    Y.noalias() = W * cols;
    const bool has_bias = bias.defined();
    if (has_bias) {
        Y.colwise() += Eigen::Map<const Eigen::VectorXd>(bias.value().data(), cout);
    }
    std::vector<Var> parents{x, weight};
    if (has_bias) {
        parents.push_back(bias);
    }
    return make_result(std::move(y), std::move(parents),
                       [cols = std::move(cols), cin, h, w, cout, kh, kw, h_out, w_out, stride_h, stride_w, pad_h,
                        pad_w, plane, patch, has_bias](Node & self) {
                           const ConstMatrixMap G(self.grad.data(), cout, static_cast<Eigen::Index>(plane));
                           const Tensor & wv = parent_value(self, 1);
                           if (Tensor * gw = parent_grad(self, 1)) {
                               MatrixMap(gw->data(), cout, patch).noalias() += G * cols.transpose();
                           }
                           if (has_bias) {
                               if (Tensor * gb = parent_grad(self, 2)) {
                                   Eigen::Map<Eigen::VectorXd>(gb->data(), cout) += G.rowwise().sum();
                               }
                           }
                           if (Tensor * gx = parent_grad(self, 0)) {
                               const ConstMatrixMap W(wv.data(), cout, patch);
                               RowMatrix dcols = W.transpose() * G;
                               for (int c = 0; c < cin; ++c) {
                                   for (int a = 0; a < kh; ++a) {
                                       for (int b = 0; b < kw; ++b) {
                                           const double * dr =
                                               dcols.data() + ((static_cast<std::size_t>(c) * kh + a) * kw + b) * plane;
                                           for (int i = 0; i < h_out; ++i) {
                                               const int si = i * stride_h + a - pad_h;
                                               if (si < 0 || si >= h) {
                                                   continue;
                                               }
                                               double * gr = gx->data() + (static_cast<std::size_t>(c) * h + si) * w;
                                               for (int j = 0; j < w_out; ++j) {
                                                   const int sj = j * stride_w + b - pad_w;
                                                   if (sj >= 0 && sj < w) {
                                                       gr[sj] += dr[static_cast<std::size_t>(i) * w_out + j];
                                                   }
                                               }
                                           }
                                       }
                                   }
                               }
                           }
                       });
}

// ---------------------------------------------------------------- spectral

namespace {
std::vector<double> periodic_hann(int n) {
    std::vector<double> w(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        w[static_cast<std::size_t>(i)] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / n);
    }
    return w;
}
} // namespace

Var stft(const Var & x, int window, int hop) {
    const Tensor & xv = x.value();
    const int t = static_cast<int>(xv.size());
    require(xv.rank() <= 1 || xv.dim(0) == 1, "stft expects a single channel");
    require(window >= 2 && window % 2 == 0 && hop >= 1, "stft window must be even and hop positive");
    require(t >= window, "stft input shorter than window");
    const int frames = 1 + (t - window) / hop;
    RealFft & fft = real_fft(window);
    const int bins = fft.bins();
    const auto win = periodic_hann(window);

    Tensor y({2, frames, bins});
    std::vector<double> buf(static_cast<std::size_t>(window));
    std::vector<std::complex<double>> spec(static_cast<std::size_t>(bins));
    const std::size_t plane = static_cast<std::size_t>(frames) * bins;
    for (int f = 0; f < frames; ++f) {
        const double * src = xv.data() + static_cast<std::size_t>(f) * hop;
        for (int n = 0; n < window; ++n) {
            buf[static_cast<std::size_t>(n)] = src[n] * win[static_cast<std::size_t>(n)];
        }
        fft.forward(buf, spec);
        for (int b = 0; b < bins; ++b) {
            y[static_cast<std::size_t>(f) * bins + b] = spec[static_cast<std::size_t>(b)].real();
            y[plane + static_cast<std::size_t>(f) * bins + b] = spec[static_cast<std::size_t>(b)].imag();
        }
    }
    return make_result(std::move(y), {x}, [window, hop, frames, bins, plane, win](Node & self) {
        Tensor * gx = parent_grad(self, 0);
        if (!gx) {
            return;
        }
        RealFft & fft = real_fft(window);
        std::vector<std::complex<double>> g(static_cast<std::size_t>(bins));
        std::vector<double> out(static_cast<std::size_t>(window));
        for (int f = 0; f < frames; ++f) {
            for (int b = 0; b < bins; ++b) {
                const double w = (b == 0 || b == bins - 1) ? 1.0 : 0.5;
                g[static_cast<std::size_t>(b)] = {w * self.grad[static_cast<std::size_t>(f) * bins + b],
                                                  w * self.grad[plane + static_cast<std::size_t>(f) * bins + b]};
            }
            fft.inverse(g, out);
            double * dst = gx->data() + static_cast<std::size_t>(f) * hop;
            for (int n = 0; n < window; ++n) {
                dst[n] += out[static_cast<std::size_t>(n)] * win[static_cast<std::size_t>(n)];
            }
        }
    });
}

Var magnitude(const Var & spec) {
    const Tensor & s = spec.value();
    require(s.rank() == 3 && s.dim(0) == 2, "magnitude expects (2, F, B)");
    const int f = s.dim(1);
    const int b = s.dim(2);
    const std::size_t plane = static_cast<std::size_t>(f) * b;
    Tensor y({f, b});
    for (std::size_t i = 0; i < plane; ++i) {
        y[i] = std::hypot(s[i], s[plane + i]);
    }
    return make_result(std::move(y), {spec}, [plane](Node & self) {
        Tensor * g = parent_grad(self, 0);
        if (!g) {
            return;
        }
        const Tensor & s = parent_value(self, 0);
        for (std::size_t i = 0; i < plane; ++i) {
            const double m = self.value[i];
            if (m > 0.0) {
                (*g)[i] += self.grad[i] * s[i] / m;
                (*g)[plane + i] += self.grad[i] * s[plane + i] / m;
            }
        }
    });
}

// ---------------------------------------------------------------- losses

Var cross_entropy(const Var & logits, std::span<const int> targets) {
    const Tensor & z = logits.value();
    require(z.rank() == 2 && static_cast<int>(targets.size()) == z.dim(0), "cross_entropy shape mismatch");
    const int n = z.dim(0);
    const int v = z.dim(1);
    std::vector<int> tgt(targets.begin(), targets.end());
    double total = 0.0;
    for (int r = 0; r < n; ++r) {
        require(tgt[static_cast<std::size_t>(r)] >= 0 && tgt[static_cast<std::size_t>(r)] < v,
                "cross_entropy target out of range");
        const double * zr = z.data() + static_cast<std::size_t>(r) * v;
        const double mx = *std::max_element(zr, zr + v);
        double s = 0.0;
        for (int c = 0; c < v; ++c) {
            s += std::exp(zr[c] - mx);
        }
        total += mx + std::log(s) - zr[tgt[static_cast<std::size_t>(r)]];
    }
    return make_result(Tensor::scalar(total / n), {logits}, [tgt = std::move(tgt), n, v](Node & self) {
        Tensor * g = parent_grad(self, 0);
        if (!g) {
            return;
        }
        const Tensor & z = parent_value(self, 0);
        const double go = self.grad[0] / n;
        for (int r = 0; r < n; ++r) {
            const double * zr = z.data() + static_cast<std::size_t>(r) * v;
            double * gr = g->data() + static_cast<std::size_t>(r) * v;
            const double mx = *std::max_element(zr, zr + v);
            double s = 0.0;
            for (int c = 0; c < v; ++c) {
                s += std::exp(zr[c] - mx);
            }
            for (int c = 0; c < v; ++c) {
                gr[c] += go * std::exp(zr[c] - mx) / s;
            }
            gr[tgt[static_cast<std::size_t>(r)]] -= go;
        }
    });
}

// ---------------------------------------------------------------- attention

Var attention(const Var & q, const Var & k, const Var & v, const Var & log_temperature,
              std::span<const int> query_group, std::span<const int> key_group, const AttentionSpec & spec,
              Tensor * weights_out) {
    const int nq = q.dim(0);
    const int nk = k.dim(0);
    const int width = q.dim(1);
    require(k.dim(1) == width && v.dim(1) == width && v.dim(0) == nk, "attention shape mismatch");
    require(width % spec.heads == 0, "attention width not divisible by heads");
    require(static_cast<int>(query_group.size()) == nq && static_cast<int>(key_group.size()) == nk,
            "attention group size mismatch");
    const int hd = width / spec.heads;
    const bool qk_norm = spec.qk_norm;
    if (qk_norm) {
        require(log_temperature.defined() && static_cast<int>(log_temperature.value().size()) == spec.heads,
                "attention needs one log-temperature per head");
    }

    struct HeadCache {
        RowMatrix p;  // softmax weights (nq, nk)
        RowMatrix qn; // normalised (or raw) queries (nq, hd)
        RowMatrix kn;
        Eigen::VectorXd q_norm;
        Eigen::VectorXd k_norm;
        double temp = 1.0;
        bool temp_clamped = false;
    };
    auto caches = std::make_shared<std::vector<HeadCache>>(static_cast<std::size_t>(spec.heads));

    Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> allowed(nq, nk);
    for (int i = 0; i < nq; ++i) {
        for (int j = 0; j < nk; ++j) {
            allowed(i, j) = key_group[static_cast<std::size_t>(j)] <= query_group[static_cast<std::size_t>(i)];
        }
    }
    if (weights_out) {
        *weights_out = Tensor({spec.heads, nq, nk});
    }

    const auto Q = q.value().matrix();
    const auto K = k.value().matrix();
    const auto V = v.value().matrix();
    Tensor out({nq, width});
    auto O = out.matrix();
    for (int h = 0; h < spec.heads; ++h) {
        HeadCache & c = (*caches)[static_cast<std::size_t>(h)];
        c.qn = Q.middleCols(h * hd, hd);
        c.kn = K.middleCols(h * hd, hd);
        double s = 1.0 / std::sqrt(static_cast<double>(hd));
        if (qk_norm) {
            c.q_norm = c.qn.rowwise().norm().cwiseMax(1e-12);
            c.k_norm = c.kn.rowwise().norm().cwiseMax(1e-12);
            c.qn.array().colwise() /= c.q_norm.array();
            c.kn.array().colwise() /= c.k_norm.array();
            const double lt = log_temperature.value()[static_cast<std::size_t>(h)];
            c.temp_clamped = lt > spec.max_log_temperature;
            c.temp = std::exp(std::min(lt, spec.max_log_temperature));
            s = c.temp;
        }
        c.p = s * (c.qn * c.kn.transpose());
        for (int i = 0; i < nq; ++i) {
            double mx = -std::numeric_limits<double>::infinity();
            for (int j = 0; j < nk; ++j) {
                if (allowed(i, j)) {
                    mx = std::max(mx, c.p(i, j));
                }
            }
            require(std::isfinite(mx), "attention row with no visible keys");
            double z = 0.0;
            for (int j = 0; j < nk; ++j) {
                const double e = allowed(i, j) ? std::exp(c.p(i, j) - mx) : 0.0;
                c.p(i, j) = e;
                z += e;
            }
            c.p.row(i) /= z;
        }
        O.middleCols(h * hd, hd).noalias() = c.p * V.middleCols(h * hd, hd);
        if (weights_out) {
            std::copy_n(c.p.data(), static_cast<std::size_t>(nq) * nk,
                        weights_out->data() + static_cast<std::size_t>(h) * nq * nk);
        }
    }

    std::vector<Var> parents{q, k, v};
    if (qk_norm) {
        parents.push_back(log_temperature);
    }
    return make_result(std::move(out), std::move(parents), [caches, hd, qk_norm](Node & self) {
        const auto G = self.grad.matrix();
        const auto V = self.parents[2]->value.matrix();
        Tensor * gq = parent_grad(self, 0);
        Tensor * gk = parent_grad(self, 1);
        Tensor * gv = parent_grad(self, 2);
        Tensor * gt = qk_norm ? parent_grad(self, 3) : nullptr;
        const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(hd));
        for (std::size_t h = 0; h < caches->size(); ++h) {
            const HeadCache & c = (*caches)[h];
            const auto Gh = G.middleCols(static_cast<Eigen::Index>(h) * hd, hd);
            if (gv) {
                gv->matrix().middleCols(static_cast<Eigen::Index>(h) * hd, hd).noalias() += c.p.transpose() * Gh;
            }
            RowMatrix dp = Gh * V.middleCols(static_cast<Eigen::Index>(h) * hd, hd).transpose();
            const Eigen::VectorXd rowdot = (dp.array() * c.p.array()).rowwise().sum();
            RowMatrix ds = c.p.array() * (dp.array().colwise() - rowdot.array());
            if (qk_norm) {
                RowMatrix dqn = c.temp * (ds * c.kn);
                RowMatrix dkn = c.temp * (ds.transpose() * c.qn);
                if (gt && !c.temp_clamped) {
                    const double dtemp = (ds.array() * (c.qn * c.kn.transpose()).array()).sum();
                    (*gt)[h] += dtemp * c.temp;
                }
                if (gq) {
                    const Eigen::VectorXd proj = (dqn.array() * c.qn.array()).rowwise().sum();
                    RowMatrix dq = dqn - (c.qn.array().colwise() * proj.array()).matrix();
                    dq.array().colwise() /= c.q_norm.array();
                    gq->matrix().middleCols(static_cast<Eigen::Index>(h) * hd, hd) += dq;
                }
                if (gk) {
                    const Eigen::VectorXd proj = (dkn.array() * c.kn.array()).rowwise().sum();
                    RowMatrix dk = dkn - (c.kn.array().colwise() * proj.array()).matrix();
                    dk.array().colwise() /= c.k_norm.array();
                    gk->matrix().middleCols(static_cast<Eigen::Index>(h) * hd, hd) += dk;
                }
            } else {
                if (gq) {
                    gq->matrix().middleCols(static_cast<Eigen::Index>(h) * hd, hd).noalias() +=
                        inv_sqrt * (ds * c.kn);
                }
                if (gk) {
                    gk->matrix().middleCols(static_cast<Eigen::Index>(h) * hd, hd).noalias() +=
                        inv_sqrt * (ds.transpose() * c.qn);
                }
            }
        }
    });
}

} // namespace aar::nn
