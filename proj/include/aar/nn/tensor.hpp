#pragma once

#include <Eigen/Core>
#include <Eigen/StdVector>

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace aar::nn {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

// Aligned storage keeps vectorised reductions bit-reproducible across allocations.
using Storage = std::vector<double, Eigen::aligned_allocator<double>>;

// Dense row-major array of doubles with rank 0..3. Rank-2 tensors are
// (rows, cols); convolution activations are (channels, time) or
// (channels, height, width).
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<int> shape, double fill = 0.0);
    Tensor(std::vector<int> shape, const std::vector<double> & data);
    Tensor(std::vector<int> shape, Storage data);

    static Tensor scalar(double v) { return Tensor({}, std::vector<double>{v}); }
    static Tensor zeros_like(const Tensor & t) { return Tensor(t.shape_); }

    const std::vector<int> & shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    int dim(int i) const { return shape_.at(static_cast<std::size_t>(i)); }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double * data() { return data_.data(); }
    const double * data() const { return data_.data(); }
    std::span<double> values() { return data_; }
    std::span<const double> values() const { return data_; }
    Storage & storage() { return data_; }
    const Storage & storage() const { return data_; }

    double & operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    double & at(int r, int c) { return data_[static_cast<std::size_t>(r) * shape_[1] + c]; }
    double at(int r, int c) const { return data_[static_cast<std::size_t>(r) * shape_[1] + c]; }

    double item() const;

    // Rank-2 views (rank-1 tensors are treated as a single row).
    MatrixMap matrix();
    ConstMatrixMap matrix() const;

    Tensor reshaped(std::vector<int> shape) const;
    void fill(double v);
    bool all_finite() const;

    std::string shape_string() const;

private:
    std::vector<int> shape_;
    Storage data_;
};

std::size_t shape_numel(const std::vector<int> & shape);

} // namespace aar::nn
