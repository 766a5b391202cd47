#include "nvcs/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace nvcs {

Tensor::Tensor(std::vector<int> d) : dims(std::move(d)) {
  std::size_t total = 1;
  for (int dim : dims) {
    if (dim <= 0) throw ConfigError("tensor dimensions must be positive");
    total *= static_cast<std::size_t>(dim);
  }
  data.assign(total, 0.0);
}

bool Tensor::finite() const {
  for (double v : data) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

void Tensor::expect_finite(const std::string& what) const {
  if (!finite()) throw NumericError("non-finite values in " + what);
}

void Tensor::fill(double v) { std::fill(data.begin(), data.end(), v); }

Tensor affine(const Tensor& w, const Tensor& x, const Tensor& b) {
  if (w.rank() != 2 || x.rank() != 1 || b.rank() != 1)
    throw ConfigError("affine expects matrix, vector, vector");
  if (w.cols() != x.dims[0] || w.rows() != b.dims[0])
    throw ConfigError("affine dimension mismatch");
  Tensor out = Tensor::vec(w.rows());
  for (int i = 0; i < w.rows(); ++i) {
    double acc = b.at(i);
    const double* row = &w.data[static_cast<std::size_t>(i) * w.cols()];
    for (int j = 0; j < w.cols(); ++j) acc += row[j] * x.at(j);
    out.at(i) = acc;
  }
  out.expect_finite("affine output");
  return out;
}

double scaled_tanh(double u) { return kScaledTanhA * std::tanh(kScaledTanhS * u); }

Tensor scaled_tanh(const Tensor& x) {
  Tensor out = x;
  for (double& v : out.data) v = scaled_tanh(v);
  out.expect_finite("scaled_tanh output");
  return out;
}

double scaled_tanh_deriv(double fx) {
  double t = fx / kScaledTanhA;
  return kScaledTanhA * kScaledTanhS * (1.0 - t * t);
}

Tensor softmax(const Tensor& z) {
  if (z.rank() != 1 || z.size() == 0) throw ConfigError("softmax expects a nonempty vector");
  z.expect_finite("softmax input");
  double zmax = *std::max_element(z.data.begin(), z.data.end());
  Tensor out = z;
  double sum = 0.0;
  for (double& v : out.data) {
    v = std::exp(v - zmax);
    sum += v;
  }
  for (double& v : out.data) v /= sum;
  return out;
}

std::uint64_t Rng::next_u64() {
  state_ += 0x9E3779B97F4A7C15ull;
  std::uint64_t z = state_;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

double Rng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double Rng::gaussian() {
  double u1 = uniform();
  if (u1 <= 0.0) u1 = 0x1.0p-53;
  double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t Rng::below(std::uint64_t n) { return n == 0 ? 0 : next_u64() % n; }

const GradCheckEntry& GradCheckReport::entry(const std::string& name) const {
  for (const auto& e : entries) {
    if (e.name == name) return e;
  }
  throw ConfigError("no gradient check entry named " + name);
}

GradCheckReport finite_diff_check(
    const std::function<double()>& loss,
    const std::vector<std::pair<std::string, Tensor*>>& params,
    const std::vector<std::pair<std::string, const Tensor*>>& analytic,
    double epsilon, double tol, std::size_t max_coords_per_tensor, Rng* sampler) {
  if (epsilon <= 0.0) throw ConfigError("finite_diff_check epsilon must be positive");
  GradCheckReport report;
  for (const auto& [name, tensor] : params) {
    const Tensor* grad = nullptr;
    for (const auto& [gname, gt] : analytic) {
      if (gname == name) {
        grad = gt;
        break;
      }
    }
    if (grad == nullptr) throw ConfigError("no analytic gradient for tensor " + name);
    if (!grad->same_shape(*tensor)) throw ConfigError("gradient shape mismatch for " + name);

    std::vector<std::size_t> coords;
    if (max_coords_per_tensor == 0 || max_coords_per_tensor >= tensor->size()) {
      coords.resize(tensor->size());
      for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = i;
    } else {
      if (sampler == nullptr) throw ConfigError("coordinate sampling requires an Rng");
      for (std::size_t i = 0; i < max_coords_per_tensor; ++i)
        coords.push_back(static_cast<std::size_t>(sampler->below(tensor->size())));
    }

    GradCheckEntry entry;
    entry.name = name;
    for (std::size_t c : coords) {
      double saved = tensor->data[c];
      tensor->data[c] = saved + epsilon;
      double lp = loss();
      tensor->data[c] = saved - epsilon;
      double lm = loss();
      tensor->data[c] = saved;
      if (!std::isfinite(lp) || !std::isfinite(lm))
        throw NumericError("loss non-finite at perturbed point of " + name);
      double numeric = (lp - lm) / (2.0 * epsilon);
      double a = grad->data[c];
      double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
      entry.max_rel_err = std::max(entry.max_rel_err, rel);
      ++entry.coords_checked;
    }
    entry.pass = entry.max_rel_err < tol;
    report.worst = std::max(report.worst, entry.max_rel_err);
    report.all_pass = report.all_pass && entry.pass;
    report.entries.push_back(std::move(entry));
  }
  return report;
}

}  // namespace nvcs
