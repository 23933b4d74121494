#ifndef UWLOC_NN_PARAMS_HPP
#define UWLOC_NN_PARAMS_HPP

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "uwloc/nn/tensor.hpp"

namespace uwloc::nn {

struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  Tensor adam_m;
  Tensor adam_v;
  bool frozen = false;     // excluded from optimizer updates
  bool trainable = true;   // false for running statistics
};

// Named trainable arrays with paired gradient buffers and Adam state. Layers
// register their parameters here; checkpoints and the optimizer work on the
// store, never on layers directly.
class ParameterStore {
 public:
  Parameter& create(const std::string& name, std::vector<std::size_t> shape,
                    bool trainable = true);
  Parameter* find(const std::string& name);
  const Parameter* find(const std::string& name) const;

  const std::vector<std::unique_ptr<Parameter>>& entries() const { return params_; }

  void zero_grads();
  void freeze_prefix(const std::string& prefix);
  bool any_unfrozen_trainable_with_prefix(const std::string& prefix) const;

  std::size_t total_parameter_count(bool trainable_only = true) const;

  uint64_t adam_steps = 0;

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
};

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Bias-corrected Adam over all unfrozen trainable parameters; gradients are
// zeroed afterwards (frozen ones included) and the shared step count advances.
void adam_step(ParameterStore& store, const AdamConfig& cfg);

enum class StorageType : uint8_t { F64 = 0, F32 = 1 };

// Checkpoint layout: "UWNN", version u16, flags u16 (bit0: Adam state
// appended), count u64; per array: name length u32 + bytes, dtype u8,
// rank u8, dims u64 each, raw little-endian data. The optional Adam section
// repeats the same array framing for first/second moments plus the step
// counter. F64 round-trips bitwise.
void save_checkpoint(const ParameterStore& store, const std::string& path,
                     bool include_adam = false,
                     StorageType storage = StorageType::F64);

struct CheckpointLoadReport {
  std::vector<std::string> loaded;   // store parameters assigned from the file
  std::vector<std::string> skipped;  // file arrays with no matching parameter
};

// Assigns arrays from the file into same-named store parameters (shape checked).
CheckpointLoadReport load_checkpoint(ParameterStore& store,
                                     const std::string& path);

}  // namespace uwloc::nn

#endif  // UWLOC_NN_PARAMS_HPP
