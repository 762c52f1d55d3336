#pragma once

#include "aar/nn/tensor.hpp"

#include <filesystem>
#include <vector>

namespace aar::codec {

struct LookupResult {
    std::vector<int> indices;
    nn::Tensor z; // (l, d) selected rows
};

// Nearest codebook row by squared Euclidean distance, lowest index on ties.
LookupResult vq_lookup(const nn::Tensor & x, const nn::Tensor & codebook);

// Rows of codebook (V, d) at the given indices.
nn::Tensor gather(const nn::Tensor & codebook, const std::vector<int> & indices);

// Linear interpolation of the rows of f (l, d) to target_len rows, corners aligned.
nn::Tensor interpolate_tokens(const nn::Tensor & f, int target_len);

struct TokenPyramid {
    std::vector<std::vector<int>> scales;

    int depth() const { return static_cast<int>(scales.size()); }
    std::vector<int> lengths() const;
    int total() const;
    bool operator==(const TokenPyramid &) const = default;
};

// Binary pyramid file: "SATP", u16 version, u16 K, u32 V, u32 lengths, u16 indices (little endian).
void write_pyramid(const std::filesystem::path & path, const TokenPyramid & pyramid, int vocab);
TokenPyramid read_pyramid(const std::filesystem::path & path, int * vocab = nullptr);

// Per scale, the fraction of the vocab observed at least once.
std::vector<double> codebook_utilization(const std::vector<TokenPyramid> & pyramids, int vocab);

} // namespace aar::codec
