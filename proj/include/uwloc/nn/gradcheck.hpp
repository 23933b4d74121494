#ifndef UWLOC_NN_GRADCHECK_HPP
#define UWLOC_NN_GRADCHECK_HPP

#include <functional>
#include <string>
#include <vector>

#include "uwloc/nn/params.hpp"
#include "uwloc/nn/tensor.hpp"

namespace uwloc::nn {

// One array whose analytic gradient is compared against central differences.
// `value` is perturbed in place; `analytic_grad` must be populated by grad_fn.
struct GradCheckTarget {
  std::string name;
  Tensor* value = nullptr;
  const Tensor* analytic_grad = nullptr;
};

struct GradCheckItem {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t coords_checked = 0;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::vector<GradCheckItem> items;
  std::string summary() const;
};

// Central differences with step h. Relative error per coordinate is
// |analytic - numeric| / max(|analytic|, |numeric|, 1e-3); the floor keeps
// near-zero gradients from being judged on meaningless ratios.
//
// loss_fn evaluates the loss without touching gradients; grad_fn recomputes
// the analytic gradients that the targets point at. When max_coords_per_item
// is nonzero, coordinates are subsampled deterministically from sample_seed.
GradCheckReport check_gradients(const std::function<double()>& loss_fn,
                                const std::function<void()>& grad_fn,
                                const std::vector<GradCheckTarget>& targets,
                                double h = 1e-5,
                                std::size_t max_coords_per_item = 0,
                                uint64_t sample_seed = 0);

// Targets for every trainable parameter in the store.
std::vector<GradCheckTarget> parameter_targets(ParameterStore& store);

}  // namespace uwloc::nn

#endif  // UWLOC_NN_GRADCHECK_HPP
