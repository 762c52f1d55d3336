#include "aar/nn/tensor.hpp"

#include "aar/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace aar::nn {

std::size_t shape_numel(const std::vector<int> & shape) {
    std::size_t n = 1;
    for (int d : shape) {
        require(d >= 0, "negative tensor dimension");
        n *= static_cast<std::size_t>(d);
    }
    return n;
}

Tensor::Tensor(std::vector<int> shape, double fill)
    : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

Tensor::Tensor(std::vector<int> shape, const std::vector<double> & data)
    : shape_(std::move(shape)), data_(data.begin(), data.end()) {
    require(data_.size() == shape_numel(shape_), "tensor data does not match shape " + shape_string());
}

Tensor::Tensor(std::vector<int> shape, Storage data) : shape_(std::move(shape)), data_(std::move(data)) {
    require(data_.size() == shape_numel(shape_), "tensor data does not match shape " + shape_string());
}

double Tensor::item() const {
    require(data_.size() == 1, "item() on tensor of shape " + shape_string());
    return data_[0];
}

MatrixMap Tensor::matrix() {
    if (rank() == 1) {
        return MatrixMap(data_.data(), 1, shape_[0]);
    }
    require(rank() == 2, "matrix() needs rank 2, got " + shape_string());
    return MatrixMap(data_.data(), shape_[0], shape_[1]);
}

ConstMatrixMap Tensor::matrix() const {
    if (rank() == 1) {
        return ConstMatrixMap(data_.data(), 1, shape_[0]);
    }
    require(rank() == 2, "matrix() needs rank 2, got " + shape_string());
    return ConstMatrixMap(data_.data(), shape_[0], shape_[1]);
}

Tensor Tensor::reshaped(std::vector<int> shape) const {
    require(shape_numel(shape) == data_.size(), "reshape size mismatch");
    return Tensor(std::move(shape), data_);
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

std::string Tensor::shape_string() const {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < shape_.size(); ++i) {
        os << (i ? "," : "") << shape_[i];
    }
    os << ')';
    return os.str();
}

} // namespace aar::nn
