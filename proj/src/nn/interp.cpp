#include "aar/nn/interp.hpp"

#include "aar/error.hpp"

#include <algorithm>
#include <cmath>

namespace aar::nn {

std::vector<InterpTap> linear_interp_taps(int input_len, int output_len) {
    require(input_len >= 1 && output_len >= 1, "interpolation lengths must be positive");
    std::vector<InterpTap> taps(static_cast<std::size_t>(output_len));
    for (int i = 0; i < output_len; ++i) {
        InterpTap & t = taps[static_cast<std::size_t>(i)];
        if (input_len == output_len) {
            t.i0 = t.i1 = i;
            continue;
        }
        double pos = 0.0;
        if (output_len == 1) {
            pos = 0.5 * (input_len - 1);
        } else {
            pos = static_cast<double>(i) * (input_len - 1) / (output_len - 1);
        }
        const int i0 = std::min(static_cast<int>(std::floor(pos)), input_len - 1);
        const double frac = pos - i0;
        t.i0 = i0;
        t.i1 = std::min(i0 + 1, input_len - 1);
        t.w1 = t.i1 == i0 ? 0.0 : frac;
        t.w0 = 1.0 - t.w1;
    }
    return taps;
}

Tensor interpolate_rows(const Tensor & x, int target_len) {
    require(x.rank() == 2, "interpolate_rows needs rank 2");
    const int l = x.dim(0);
    const int d = x.dim(1);
    if (target_len == l) {
        return x;
    }
    const auto taps = linear_interp_taps(l, target_len);
    Tensor y({target_len, d});
    for (int i = 0; i < target_len; ++i) {
        const auto & t = taps[static_cast<std::size_t>(i)];
        const double * a = x.data() + static_cast<std::size_t>(t.i0) * d;
        const double * b = x.data() + static_cast<std::size_t>(t.i1) * d;
        double * o = y.data() + static_cast<std::size_t>(i) * d;
        if (t.w1 == 0.0) {
            std::copy_n(a, d, o);
            continue;
        }
        for (int c = 0; c < d; ++c) {
            o[c] = t.w0 * a[c] + t.w1 * b[c];
        }
    }
    return y;
}

} // namespace aar::nn
