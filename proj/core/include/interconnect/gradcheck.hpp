#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "interconnect/tensor.hpp"

namespace interconnect {

struct GradCheckParam {
  std::string name;
  Tensor<double> tensor;  // must have requires_grad set
};

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  // 0 checks every coordinate; otherwise a seeded sample of this many.
  std::size_t max_coords_per_tensor = 0;
  std::uint64_t seed = 0;
  // A coordinate whose central differences at h and h/2 disagree by more than
  // the tolerance sits on a non-smooth point (e.g. a ReLU kink) and is skipped.
  bool skip_nonsmooth = true;
  // Smallest denominator of the relative error. Central differences carry
  // rounding noise near eps * |loss| / h, so gradients below this magnitude
  // are in effect compared absolutely, to tolerance * floor.
  double denominator_floor = 1e-6;
};

struct GradCheckEntry {
  std::string name;
  std::size_t checked = 0;
  std::size_t nonsmooth = 0;
  double max_rel_error = 0.0;
  double worst_analytic = 0.0;  // the pair behind max_rel_error
  double worst_numeric = 0.0;
  bool passed = true;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_rel_error = 0.0;

  bool passed() const;
};

// |a - b| / max(|a|, |b|, floor)
double relative_error(double a, double b, double floor = 1e-8) noexcept;

// Compares backward() gradients of `loss_fn` against central differences
// (f(x+h) - f(x-h)) / 2h. `loss_fn` must be deterministic and return a scalar.
GradCheckReport finite_diff_check(const std::function<Tensor<double>()>& loss_fn,
                                  std::span<const GradCheckParam> params,
                                  const GradCheckOptions& options = {});

}  // namespace interconnect
