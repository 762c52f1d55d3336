#pragma once

#include "aar/nn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace testutil {

// Independent residual VQ: quantize the running residual with each codebook in turn.
struct PlainRvq {
    std::vector<std::vector<int>> indices;
    std::vector<double> f_hat;
};

inline PlainRvq plain_rvq(const aar::nn::Tensor & f, const std::vector<aar::nn::Tensor> & books) {
    const int l = f.dim(0);
    const int d = f.dim(1);
    PlainRvq out;
    std::vector<double> res(f.values().begin(), f.values().end());
    out.f_hat.assign(res.size(), 0.0);
    for (const auto & book : books) {
        std::vector<int> idx(static_cast<std::size_t>(l));
        for (int i = 0; i < l; ++i) {
            double best = INFINITY;
            for (int c = 0; c < book.dim(0); ++c) {
                double dist = 0.0;
                for (int j = 0; j < d; ++j) {
                    const double diff = res[static_cast<std::size_t>(i * d + j)] - book.at(c, j);
                    dist += diff * diff;
                }
                if (dist < best) {
                    best = dist;
                    idx[static_cast<std::size_t>(i)] = c;
                }
            }
            for (int j = 0; j < d; ++j) {
                const double z = book.at(idx[static_cast<std::size_t>(i)], j);
                res[static_cast<std::size_t>(i * d + j)] -= z;
                out.f_hat[static_cast<std::size_t>(i * d + j)] += z;
            }
        }
        out.indices.push_back(idx);
    }
    return out;
}

using LMat = std::vector<std::vector<long double>>;

// Cyclic Jacobi eigendecomposition of a symmetric matrix: returns eigenvalues, fills vectors (columns).
inline std::vector<long double> jacobi(LMat a, LMat & v) {
    const std::size_t n = a.size();
    v.assign(n, std::vector<long double>(n, 0.0L));
    for (std::size_t i = 0; i < n; ++i) {
        v[i][i] = 1.0L;
    }
    for (int sweep = 0; sweep < 100; ++sweep) {
        long double off = 0.0L;
        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                off += a[p][q] * a[p][q];
            }
        }
        if (off < 1e-36L) {
            break;
        }
        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                if (std::fabs(a[p][q]) < 1e-300L) {
                    continue;
                }
                const long double theta = (a[q][q] - a[p][p]) / (2.0L * a[p][q]);
                const long double t = (theta >= 0 ? 1.0L : -1.0L) / (std::fabs(theta) + std::sqrt(theta * theta + 1.0L));
                const long double c = 1.0L / std::sqrt(t * t + 1.0L);
                const long double s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const long double akp = a[k][p];
                    const long double akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const long double apk = a[p][k];
                    const long double aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const long double vkp = v[k][p];
                    const long double vkq = v[k][q];
                    v[k][p] = c * vkp - s * vkq;
                    v[k][q] = s * vkp + c * vkq;
                }
            }
        }
    }
    std::vector<long double> ev(n);
    for (std::size_t i = 0; i < n; ++i) {
        ev[i] = a[i][i];
    }
    return ev;
}

inline LMat matmul(const LMat & a, const LMat & b) {
    const std::size_t n = a.size();
    LMat c(n, std::vector<long double>(n, 0.0L));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = 0; k < n; ++k) {
            for (std::size_t j = 0; j < n; ++j) {
                c[i][j] += a[i][k] * b[k][j];
            }
        }
    }
    return c;
}

inline long double oracle_frechet(const aar::nn::Tensor & p, const aar::nn::Tensor & q) {
    const std::size_t e = static_cast<std::size_t>(p.dim(1));
    auto stats = [&](const aar::nn::Tensor & x, std::vector<long double> & mu, LMat & cov) {
        const int n = x.dim(0);
        mu.assign(e, 0.0L);
        cov.assign(e, std::vector<long double>(e, 0.0L));
        for (int r = 0; r < n; ++r) {
            for (std::size_t i = 0; i < e; ++i) {
                mu[i] += x.at(r, static_cast<int>(i));
            }
        }
        for (auto & m : mu) {
            m /= n;
        }
        for (int r = 0; r < n; ++r) {
            for (std::size_t i = 0; i < e; ++i) {
                for (std::size_t j = 0; j < e; ++j) {
                    cov[i][j] += (x.at(r, static_cast<int>(i)) - mu[i]) * (x.at(r, static_cast<int>(j)) - mu[j]);
                }
            }
        }
        for (auto & row : cov) {
            for (auto & c : row) {
                c /= (n - 1);
            }
        }
    };
    std::vector<long double> mp, mq;
    LMat cp, cq;
    stats(p, mp, cp);
    stats(q, mq, cq);
    LMat v;
    const auto ev = jacobi(cp, v);
    LMat sp(e, std::vector<long double>(e, 0.0L));
    for (std::size_t i = 0; i < e; ++i) {
        for (std::size_t j = 0; j < e; ++j) {
            for (std::size_t k = 0; k < e; ++k) {
                sp[i][j] += v[i][k] * std::sqrt(std::max(ev[k], 0.0L)) * v[j][k];
            }
        }
    }
    LMat w;
    const auto inner = jacobi(matmul(matmul(sp, cq), sp), w);
    long double d = 0.0L;
    for (std::size_t i = 0; i < e; ++i) {
        d += (mp[i] - mq[i]) * (mp[i] - mq[i]) + cp[i][i] + cq[i][i] - 2.0L * std::sqrt(std::max(inner[i], 0.0L));
    }
    return d;
}

} // namespace testutil
