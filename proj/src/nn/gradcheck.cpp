#include "uwloc/nn/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

namespace uwloc::nn {

std::string GradCheckReport::summary() const {
  std::ostringstream out;
  out << "gradient check: max relative error " << max_rel_error << "\n";
  for (const auto& item : items)
    out << "  " << item.name << ": " << item.max_rel_error << " over "
        << item.coords_checked << " coordinates\n";
  return out.str();
}

namespace {

std::vector<std::size_t> sample_coords(std::size_t numel, std::size_t max_coords,
                                       std::mt19937_64& rng) {
  std::vector<std::size_t> coords(numel);
  std::iota(coords.begin(), coords.end(), 0);
  if (max_coords == 0 || max_coords >= numel) return coords;
  // partial Fisher-Yates
  for (std::size_t i = 0; i < max_coords; ++i) {
    std::uniform_int_distribution<std::size_t> dist(i, numel - 1);
    std::swap(coords[i], coords[dist(rng)]);
  }
  coords.resize(max_coords);
  return coords;
}

}  // namespace

GradCheckReport check_gradients(const std::function<double()>& loss_fn,
                                const std::function<void()>& grad_fn,
                                const std::vector<GradCheckTarget>& targets,
                                double h, std::size_t max_coords_per_item,
                                uint64_t sample_seed) {
  grad_fn();
  // analytic gradients must be copied out before perturbation reruns
  std::vector<std::vector<double>> analytic;
  analytic.reserve(targets.size());
  for (const auto& t : targets) analytic.push_back(t.analytic_grad->data);

  GradCheckReport report;
  std::mt19937_64 rng(sample_seed);
  for (std::size_t ti = 0; ti < targets.size(); ++ti) {
    const auto& target = targets[ti];
    GradCheckItem item;
    item.name = target.name;
    const auto coords =
        sample_coords(target.value->numel(), max_coords_per_item, rng);
    for (std::size_t c : coords) {
      const double saved = target.value->data[c];
      target.value->data[c] = saved + h;
      const double loss_plus = loss_fn();
      target.value->data[c] = saved - h;
      const double loss_minus = loss_fn();
      target.value->data[c] = saved;
      const double numeric = (loss_plus - loss_minus) / (2.0 * h);
      const double a = analytic[ti][c];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-3});
      item.max_rel_error =
          std::max(item.max_rel_error, std::abs(a - numeric) / denom);
    }
    item.coords_checked = coords.size();
    report.max_rel_error = std::max(report.max_rel_error, item.max_rel_error);
    report.items.push_back(std::move(item));
  }
  return report;
}

std::vector<GradCheckTarget> parameter_targets(ParameterStore& store) {
  std::vector<GradCheckTarget> targets;
  for (const auto& p : store.entries())
    if (p->trainable)
      targets.push_back({p->name, &p->value, &p->grad});
  return targets;
}

}  // namespace uwloc::nn
