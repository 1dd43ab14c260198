#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "vrd/error.hpp"
#include "vrd/random.hpp"

namespace vrd {

/// Fully connected layer y = W x + b, W stored row-major (rows = outputs).
class LinearLayer {
 public:
  LinearLayer() = default;
  LinearLayer(std::size_t outputs, std::size_t inputs)
      : rows_(outputs), cols_(inputs), weights_(outputs * inputs, 0.0), bias_(outputs, 0.0) {}

  LinearLayer(std::size_t outputs, std::size_t inputs, std::vector<double> weights,
              std::vector<double> bias)
      : rows_(outputs), cols_(inputs), weights_(std::move(weights)), bias_(std::move(bias)) {
    if (weights_.size() != rows_ * cols_ || bias_.size() != rows_) {
      throw InvalidArgument("linear layer parameter sizes do not match " +
                            std::to_string(rows_) + "x" + std::to_string(cols_));
    }
    for (double w : weights_) {
      if (!std::isfinite(w)) throw InvalidArgument("linear layer weight is not finite");
    }
    for (double b : bias_) {
      if (!std::isfinite(b)) throw InvalidArgument("linear layer bias is not finite");
    }
  }

  /// Weights and bias uniform in [-1/sqrt(inputs), 1/sqrt(inputs)].
  static LinearLayer random(std::size_t outputs, std::size_t inputs, std::uint64_t seed) {
    LinearLayer layer(outputs, inputs);
    Rng rng(seed);
    const double bound = inputs > 0 ? 1.0 / std::sqrt(static_cast<double>(inputs)) : 0.0;
    for (auto& w : layer.weights_) w = rng.uniform(-bound, bound);
    for (auto& b : layer.bias_) b = rng.uniform(-bound, bound);
    return layer;
  }

  std::size_t outputs() const noexcept { return rows_; }
  std::size_t inputs() const noexcept { return cols_; }

  std::span<const double> weights() const noexcept { return weights_; }
  std::span<double> weights() noexcept { return weights_; }
  std::span<const double> bias() const noexcept { return bias_; }
  std::span<double> bias() noexcept { return bias_; }

  double& weight(std::size_t r, std::size_t c) { return weights_[r * cols_ + c]; }
  double weight(std::size_t r, std::size_t c) const { return weights_[r * cols_ + c]; }

  std::vector<double> forward(std::span<const double> x) const {
    if (x.size() != cols_) {
      throw InvalidArgument("input length " + std::to_string(x.size()) +
                            " does not match layer input " + std::to_string(cols_));
    }
    std::vector<double> y(bias_);
    for (std::size_t r = 0; r < rows_; ++r) {
      const double* row = weights_.data() + r * cols_;
      double acc = 0.0;
      for (std::size_t c = 0; c < cols_; ++c) acc += row[c] * x[c];
      y[r] += acc;
    }
    return y;
  }

  /// FNV-1a over the shape and parameter bit patterns.
  std::uint64_t checksum() const noexcept {
    Fnv1a64 h;
    h.u64(rows_).u64(cols_);
    for (double w : weights_) h.f64(w);
    for (double b : bias_) h.f64(b);
    return h.digest();
  }

  friend bool operator==(const LinearLayer&, const LinearLayer&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> weights_;
  std::vector<double> bias_;
};

}  // namespace vrd
