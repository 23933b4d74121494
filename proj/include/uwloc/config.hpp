#ifndef UWLOC_CONFIG_HPP
#define UWLOC_CONFIG_HPP

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "uwloc/common.hpp"

namespace uwloc::config {

// Every default matches the published values where the paper states one
// (A=3, epsilon=0.02, learning rates 1e-4 / 5e-5, 100 epochs).
struct ExperimentConfig {
  // paths
  std::string signal;
  std::string signal_meta;
  std::string labels;
  std::string workdir = "uwloc-workdir";
  // preprocess
  double frame_seconds = 1.0;
  // selection
  std::size_t components = 3;
  double epsilon = 0.02;
  std::size_t loading_pc_a = 1;  // 1-based PC pair for the loading plot
  std::size_t loading_pc_b = 3;
  // model
  std::string variant = "original";
  bool with_fs = true;
  std::vector<std::size_t> mlp_widths = {256, 64, 16};
  double dropout_p = 0.2;
  double leaky_slope = 0.01;
  // train
  double lr_step_one = 1e-4;
  double lr_step_two = 5e-5;
  std::size_t epochs = 100;
  std::size_t batch_size = 64;
  uint64_t seed = 1;
  std::string precision = "f64";
  int threads = 1;
  // split
  unsigned modulus = 2;
  // report
  bool emit_svg = true;
  bool emit_feature_csv = false;
};

const std::vector<std::string>& known_keys();

// UnknownKey (with the nearest valid key named) or TypeError on bad values.
void apply_key(ExperimentConfig& cfg, const std::string& key,
               const std::string& value);

ExperimentConfig parse_config_text(const std::string& text);

// Precedence: flag overrides > file values > defaults.
ExperimentConfig resolve_config(
    const std::string& file_path,
    const std::vector<std::pair<std::string, std::string>>& overrides);

std::string serialize(const ExperimentConfig& cfg);

// FNV-1a 64 over the serialized form; identifies a resolved configuration.
uint64_t config_hash(const ExperimentConfig& cfg);
uint64_t fnv1a64(const void* data, std::size_t size, uint64_t seed = 0xcbf29ce484222325ull);

}  // namespace uwloc::config

#endif  // UWLOC_CONFIG_HPP
