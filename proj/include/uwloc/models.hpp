#ifndef UWLOC_MODELS_HPP
#define UWLOC_MODELS_HPP

#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "uwloc/linalg.hpp"
#include "uwloc/nn/layers.hpp"

namespace uwloc::models {

using nn::Mode;
using nn::Tensor;

enum class Variant { Original, Structure1, Structure2 };

Variant variant_from_string(const std::string& s);
std::string to_string(Variant v);

// Geometry of the encoder. The 1D convolution always produces as many
// channels as output positions, so the result reshapes into one square
// image; that is the only reading that reproduces both published flatten
// sizes (3*91*91 and 3*13*13).
struct EncoderPlan {
  std::size_t input_width = 0;
  bool with_fs = false;
  Variant variant = Variant::Original;
  std::size_t conv1d_channels = 0;            // output channels == output length
  std::size_t conv1d_kernel = 0;
  std::vector<std::size_t> conv2d_channels;   // valid 3x3 stride-2 stages
  std::vector<std::size_t> sides;             // conv1d_channels, then per stage
  std::size_t flatten_size = 0;
  double leaky_slope = 0.01;
  double bn_momentum = 0.1;
  double bn_epsilon = 1e-5;
};

EncoderPlan plan_encoder(std::size_t input_width, Variant variant, bool with_fs);

// Mirror of the encoder: 4x4 stride-2 transposed stages, each cropped to the
// recorded encoder side, then a transposed 1D stage restoring the input width.
struct DecoderStage {
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t crop_side = 0;
};

struct DecoderPlan {
  std::vector<DecoderStage> stages;
  std::size_t tconv1d_channels = 0;
  std::size_t tconv1d_kernel = 0;
  std::size_t output_width = 0;
};

DecoderPlan plan_decoder(const EncoderPlan& encoder);

struct MlpSpec {
  std::vector<std::size_t> hidden_widths = {256, 64, 16};
  double dropout_p = 0.2;
};

// Ordered layer pipeline over one ParameterStore. Layers [0, encoder_layer_count)
// are the encoder; when frozen they run in eval mode and backward stops at
// their boundary.
struct ModelGraph {
  nn::ParameterStore store;
  std::vector<nn::LayerPtr> layers;
  std::size_t encoder_layer_count = 0;
  bool encoder_frozen = false;
  EncoderPlan plan;
  std::vector<std::size_t> sample_input_shape;  // without batch dim
  std::unique_ptr<std::mt19937_64> dropout_rng;

  Tensor forward(const Tensor& input, Mode mode);
  // Returns the gradient at the earliest layer it reached.
  Tensor backward(const Tensor& grad_output);
  Tensor forward_layers(std::size_t begin, std::size_t end, const Tensor& input,
                        Mode mode);
  Tensor batch_from_rows(const linalg::Matrix& rows,
                         std::span<const std::size_t> row_indices) const;
};

ModelGraph build_cae(const EncoderPlan& plan, uint64_t seed);

// Pretrained-encoder + 4 blocks of (Dense, Dropout, Sigmoid) tapering to one
// sigmoid output. encoder_checkpoint may be empty for the supervised control
// (random initialization, nothing frozen).
ModelGraph build_localizer(const EncoderPlan& plan, const MlpSpec& mlp,
                           uint64_t seed, bool frozen,
                           const std::string& encoder_checkpoint = "");

Tensor encode(ModelGraph& graph, const Tensor& batch);
Tensor decode(ModelGraph& graph, const Tensor& codes);

// Human-readable layer table (name, kind, output shape, parameters) plus the
// n_Conv1D / k_Conv1D / n_Dense1 summary.
std::string describe(const ModelGraph& graph);

}  // namespace uwloc::models

#endif  // UWLOC_MODELS_HPP
