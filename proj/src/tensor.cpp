#include "manas/tensor.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>

#include "manas/error.hpp"

namespace manas {

Tensor Tensor::gaussian(std::vector<std::size_t> shape, double mean,
                        double stddev, Rng& rng) {
  Tensor t;
  t.shape = std::move(shape);
  std::size_t n = 1;
  for (auto s : t.shape) n *= s;
  t.data.resize(n);
  for (auto& x : t.data) x = rand_normal(rng, mean, stddev);
  return t;
}

bool Tensor::all_finite() const {
  for (double x : data)
    if (!std::isfinite(x)) return false;
  return true;
}

bool operator==(const Tensor& a, const Tensor& b) {
  return a.shape == b.shape && a.data == b.data;
}

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error::dimension("max_abs_diff: size mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::fabs(a[i] - b[i]));
  return m;
}

double l2_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size())
    throw Error::dimension("cosine_similarity: dimension mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double denom = std::sqrt(na) * std::sqrt(nb);
  if (denom == 0.0) {
    static std::atomic<bool> warned{false};
    if (!warned.exchange(true))
      std::fprintf(stderr, "warning: cosine_similarity on zero vector, returning 0\n");
    return 0.0;
  }
  double s = dot / denom;
  if (s > 1.0) s = 1.0;
  if (s < -1.0) s = -1.0;
  return s;
}

}  // namespace manas
