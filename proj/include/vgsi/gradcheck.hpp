#pragma once

// Central-difference verification of analytic gradients, in double.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "vgsi/error.hpp"
#include "vgsi/models.hpp"
#include "vgsi/rng.hpp"

namespace vgsi {

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t worst_coordinate = 0;
  std::size_t probes = 0;
};

// Relative error |a - n| / max(|a|, |n|, floor). The floor keeps
// coordinates with near-zero gradient from turning round-off into a failure.
inline constexpr double kGradCheckFloor = 1e-6;

/// Compares `analytic` against central differences of `loss` at `point` on
/// `probes` coordinates drawn without replacement (all when probes >= size).
inline GradCheckResult finite_diff_check(const std::function<double(std::span<const double>)>& loss,
                                         std::span<const double> point, std::span<const double> analytic,
                                         double eps, std::size_t probes, std::uint64_t seed = 0) {
  if (!(eps > 0.0)) throw Error("finite_diff_check needs eps > 0");
  if (point.size() != analytic.size()) throw Error("finite_diff_check: gradient size mismatch");
  Rng rng(derive_seed(seed, "finite-diff-probes"));
  auto coords = rng.sample_without_replacement(point.size(), std::min(probes, point.size()));
  std::vector<double> x(point.begin(), point.end());
  GradCheckResult out;
  out.probes = coords.size();
  for (auto i : coords) {
    const double orig = x[i];
    x[i] = orig + eps;
    const double up = loss(x);
    x[i] = orig - eps;
    const double down = loss(x);
    x[i] = orig;
    const double numeric = (up - down) / (2.0 * eps);
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), kGradCheckFloor});
    const double err = std::abs(analytic[i] - numeric) / denom;
    if (err > out.max_relative_error) {
      out.max_relative_error = err;
      out.worst_coordinate = i;
    }
  }
  return out;
}

/// Gradient check of a model's batch loss at `params` (double precision).
template <template <typename> class P>
GradCheckResult check_model_gradient(const P<double>& params, std::span<const TrainExample<double>> batch,
                                     const LossOptions& opt, double eps, std::size_t probes, std::uint64_t seed) {
  const auto analytic = flatten(loss_grad(params, batch, opt).grad);
  const auto point = flatten(params);
  P<double> scratch = params;
  auto loss = [&](std::span<const double> x) {
    unflatten(scratch, x);
    return loss_grad(scratch, batch, opt).loss;
  };
  return finite_diff_check(loss, point, analytic, eps, probes, seed);
}

}  // namespace vgsi
