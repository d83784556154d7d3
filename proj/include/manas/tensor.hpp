#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "manas/rng.hpp"

namespace manas {

// Dense double tensor, rank 1 or 2. Row-major for matrices.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;

  static Tensor vector(std::size_t n, double fill = 0.0) {
    Tensor t;
    t.shape = {n};
    t.data.assign(n, fill);
    return t;
  }
  static Tensor matrix(std::size_t r, std::size_t c, double fill = 0.0) {
    Tensor t;
    t.shape = {r, c};
    t.data.assign(r * c, fill);
    return t;
  }
  static Tensor scalar(double v) {
    Tensor t = vector(1);
    t.data[0] = v;
    return t;
  }
  static Tensor gaussian(std::vector<std::size_t> shape, double mean,
                         double stddev, Rng& rng);

  std::size_t numel() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  std::size_t rows() const { return shape.empty() ? 0 : shape[0]; }
  std::size_t cols() const { return shape.size() < 2 ? 1 : shape[1]; }

  double& operator[](std::size_t i) { return data[i]; }
  double operator[](std::size_t i) const { return data[i]; }
  double& at(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }

  std::span<double> row(std::size_t r) {
    return {data.data() + r * cols(), cols()};
  }
  std::span<const double> row(std::size_t r) const {
    return {data.data() + r * cols(), cols()};
  }
  std::span<const double> span() const { return {data.data(), data.size()}; }
  std::span<double> span() { return {data.data(), data.size()}; }

  void fill(double v) { data.assign(data.size(), v); }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }
  bool all_finite() const;
};

bool operator==(const Tensor& a, const Tensor& b);

// ||a - b||_inf
double max_abs_diff(std::span<const double> a, std::span<const double> b);

double l2_norm(std::span<const double> v);

// Cosine similarity with the zero-vector convention: if either norm is zero
// the similarity is defined as 0 (warned once per process on stderr).
double cosine_similarity(std::span<const double> a, std::span<const double> b);

}  // namespace manas
