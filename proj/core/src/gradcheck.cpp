#include "interconnect/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "interconnect/rng.hpp"

namespace interconnect {

bool GradCheckReport::passed() const {
  return std::all_of(entries.begin(), entries.end(), [](const auto& e) { return e.passed; });
}

double relative_error(double a, double b, double floor) noexcept {
  const double denom = std::max({std::abs(a), std::abs(b), floor});
  return std::abs(a - b) / denom;
}

namespace {

std::vector<std::size_t> pick_coordinates(std::size_t n, std::size_t limit, std::uint64_t key) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (limit == 0 || limit >= n) return idx;
  // Partial Fisher-Yates driven by the counter RNG.
  for (std::size_t i = 0; i < limit; ++i) {
    const auto j = i + static_cast<std::size_t>(uniform01(key, i) * static_cast<double>(n - i));
    std::swap(idx[i], idx[std::min(j, n - 1)]);
  }
  idx.resize(limit);
  std::sort(idx.begin(), idx.end());
  return idx;
}

double evaluate(const std::function<Tensor<double>()>& loss_fn) {
  NoGradGuard<double> no_grad;
  return loss_fn().item();
}

double central_difference(const std::function<Tensor<double>()>& loss_fn, double& slot, double h) {
  const double original = slot;
  slot = original + h;
  const double plus = evaluate(loss_fn);
  slot = original - h;
  const double minus = evaluate(loss_fn);
  slot = original;
  return (plus - minus) / (2.0 * h);
}

}  // namespace

GradCheckReport finite_diff_check(const std::function<Tensor<double>()>& loss_fn,
                                  std::span<const GradCheckParam> params,
                                  const GradCheckOptions& options) {
  std::vector<Tensor<double>> tensors;
  for (const auto& p : params) {
    if (!p.tensor.requires_grad()) {
      throw ContractError("finite_diff_check: parameter '" + p.name + "' does not require grad");
    }
    tensors.push_back(p.tensor);
    tensors.back().clear_grad();
  }

  std::vector<std::vector<double>> analytic;
  {
    Tape<double> tape;
    TapeGuard<double> guard(tape);
    Tensor<double> loss = loss_fn();
    if (tape.empty()) {
      // Loss does not depend on any parameter: all gradients are zero.
      for (auto& t : tensors) analytic.emplace_back(t.numel(), 0.0);
    } else {
      tape.backward(loss);
      for (auto& t : tensors) {
        if (t.has_grad()) {
          analytic.emplace_back(t.grad().begin(), t.grad().end());
        } else {
          analytic.emplace_back(t.numel(), 0.0);
        }
        t.clear_grad();
      }
    }
  }

  GradCheckReport report;
  for (std::size_t p = 0; p < tensors.size(); ++p) {
    GradCheckEntry entry;
    entry.name = params[p].name;
    auto& tensor = tensors[p];
    const auto coords = pick_coordinates(tensor.numel(), options.max_coords_per_tensor,
                                         mix_keys(options.seed, hash_name(entry.name)));
    for (std::size_t i : coords) {
      double& slot = tensor.data()[i];
      const double numeric = central_difference(loss_fn, slot, options.step);
      const double err = relative_error(analytic[p][i], numeric, options.denominator_floor);
      if (err >= options.tolerance && options.skip_nonsmooth) {
        const double refined = central_difference(loss_fn, slot, options.step / 2.0);
        if (relative_error(numeric, refined, options.denominator_floor) >= options.tolerance) {
          ++entry.nonsmooth;
          continue;
        }
      }
      ++entry.checked;
      if (err >= entry.max_rel_error) {
        entry.max_rel_error = err;
        entry.worst_analytic = analytic[p][i];
        entry.worst_numeric = numeric;
      }
    }
    entry.passed = entry.max_rel_error < options.tolerance && (entry.checked > 0 || coords.empty());
    report.max_rel_error = std::max(report.max_rel_error, entry.max_rel_error);
    report.entries.push_back(std::move(entry));
  }
  return report;
}

}  // namespace interconnect
