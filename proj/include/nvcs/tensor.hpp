#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "nvcs/errors.hpp"

namespace nvcs {

// Scaled hyperbolic tangent f(u) = A * tanh(S * u), the nonlinearity used by
// the embedding, multimodal and decoder-intermediate layers.
inline constexpr double kScaledTanhA = 1.7159;
inline constexpr double kScaledTanhS = 2.0 / 3.0;

// Dense row-major tensor of doubles. Rank 1 (vectors) and rank 2 (matrices)
// cover everything in this project.
struct Tensor {
  std::vector<int> dims;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> d);

  static Tensor vec(int n) { return Tensor({n}); }
  static Tensor matrix(int rows, int cols) { return Tensor({rows, cols}); }

  int rank() const { return static_cast<int>(dims.size()); }
  std::size_t size() const { return data.size(); }

  int rows() const { return dims.at(0); }
  int cols() const { return dims.at(1); }

  double& at(int i) { return data[static_cast<std::size_t>(i)]; }
  double at(int i) const { return data[static_cast<std::size_t>(i)]; }
  double& at(int i, int j) { return data[static_cast<std::size_t>(i) * cols() + j]; }
  double at(int i, int j) const { return data[static_cast<std::size_t>(i) * cols() + j]; }

  bool same_shape(const Tensor& other) const { return dims == other.dims; }
  bool finite() const;
  // Throws NumericError naming `what` if any entry is NaN or Inf.
  void expect_finite(const std::string& what) const;

  void fill(double v);
};

// result[i] = sum_j w[i][j] * x[j] + b[i]
Tensor affine(const Tensor& w, const Tensor& x, const Tensor& b);

double scaled_tanh(double u);
Tensor scaled_tanh(const Tensor& x);
// Derivative of scaled_tanh expressed through the activation value fx = f(u):
// f'(u) = A*S*(1 - (fx/A)^2).
double scaled_tanh_deriv(double fx);

// Max-subtracted softmax; entries in (0,1], sum 1.
Tensor softmax(const Tensor& z);

// Deterministic counter-style generator (splitmix64). The uint64 stream is
// identical across platforms for a given seed; uniform/gaussian deriving uses
// libm and is identical across runs of the same build.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64();
  // [0, 1)
  double uniform();
  double uniform(double lo, double hi);
  // Standard normal via Box-Muller (two uniforms per draw).
  double gaussian();
  // [0, n)
  std::uint64_t below(std::uint64_t n);

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::uint64_t state_;
};

struct GradCheckEntry {
  std::string name;
  double max_rel_err = 0.0;
  std::size_t coords_checked = 0;
  bool pass = true;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double worst = 0.0;
  bool all_pass = true;

  const GradCheckEntry& entry(const std::string& name) const;
};

// Central-difference check of analytic gradients. `loss` must be a
// deterministic function of the tensors reachable through `params`; each
// coordinate is perturbed by +-epsilon in place and restored. Relative error
// is |a - n| / max(|a|, |n|, 1e-8). With max_coords_per_tensor == 0 every
// coordinate is checked, otherwise that many are sampled via `sampler`.
GradCheckReport finite_diff_check(
    const std::function<double()>& loss,
    const std::vector<std::pair<std::string, Tensor*>>& params,
    const std::vector<std::pair<std::string, const Tensor*>>& analytic,
    double epsilon = 1e-5, double tol = 1e-4,
    std::size_t max_coords_per_tensor = 0, Rng* sampler = nullptr);

}  // namespace nvcs
