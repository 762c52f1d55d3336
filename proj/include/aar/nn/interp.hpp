#pragma once

#include "aar/nn/tensor.hpp"

#include <vector>

namespace aar::nn {

// Output row i of a length-m linear resampling of l rows is
// w0 * x[i0] + w1 * x[i1].
struct InterpTap {
    int i0 = 0;
    int i1 = 0;
    double w0 = 1.0;
    double w1 = 0.0;
};

// Corner-aligned linear taps. A single output row samples the centre of the
// input; equal lengths give the identity.
std::vector<InterpTap> linear_interp_taps(int input_len, int output_len);

// Resamples the rows of x (l, d) to (target_len, d).
Tensor interpolate_rows(const Tensor & x, int target_len);

} // namespace aar::nn
