#include "uwloc/models.hpp"

#include <algorithm>
#include <set>
#include <sstream>

namespace uwloc::models {

Variant variant_from_string(const std::string& s) {
  if (s == "original") return Variant::Original;
  if (s == "structure1") return Variant::Structure1;
  if (s == "structure2") return Variant::Structure2;
  fail(ErrorCode::ConfigError,
       "unknown variant '" + s + "' (original, structure1, structure2)");
}

std::string to_string(Variant v) {
  switch (v) {
    case Variant::Original: return "original";
    case Variant::Structure1: return "structure1";
    case Variant::Structure2: return "structure2";
  }
  return "?";
}

namespace {

std::vector<std::size_t> conv2d_channels_for(Variant v) {
  switch (v) {
    case Variant::Original: return {128, 128, 3};
    case Variant::Structure1: return {128, 3};
    case Variant::Structure2: return {3};
  }
  return {};
}

constexpr std::size_t kFullSpectrumWidth = 750;
constexpr std::size_t kSquareSide = 114;
constexpr std::size_t kConv2dKernel = 3;
constexpr std::size_t kTconv2dKernel = 4;
constexpr std::size_t kConvStride = 2;

}  // namespace

EncoderPlan plan_encoder(std::size_t input_width, Variant variant, bool with_fs) {
  EncoderPlan plan;
  plan.input_width = input_width;
  plan.with_fs = with_fs;
  plan.variant = variant;
  if (with_fs) {
    if (input_width < kSquareSide)
      fail(ErrorCode::KernelExceedsInput,
           "selected width M=" + std::to_string(input_width) +
               " requires kernel M-113 >= 1, so M must be at least 114");
    plan.conv1d_channels = kSquareSide;
    plan.conv1d_kernel = input_width - (kSquareSide - 1);
  } else {
    if (input_width != kFullSpectrumWidth)
      fail(ErrorCode::ConfigError,
           "the full-spectrum geometry expects 750 input features, got " +
               std::to_string(input_width) +
               "; run feature selection for other widths");
    plan.conv1d_channels = 738;
    plan.conv1d_kernel = 13;
  }
  // conv1d output length equals its channel count: a square image
  plan.sides.push_back(plan.conv1d_channels);
  plan.conv2d_channels = conv2d_channels_for(variant);
  for (std::size_t stage = 0; stage < plan.conv2d_channels.size(); ++stage) {
    const std::size_t side = plan.sides.back();
    if (side < kConv2dKernel)
      fail(ErrorCode::TooManyLayersForWidth,
           "side " + std::to_string(side) + " too small for another 3x3 stage");
    plan.sides.push_back((side - kConv2dKernel) / kConvStride + 1);
  }
  plan.flatten_size =
      plan.conv2d_channels.back() * plan.sides.back() * plan.sides.back();
  return plan;
}

DecoderPlan plan_decoder(const EncoderPlan& encoder) {
  DecoderPlan plan;
  const auto& outs = encoder.conv2d_channels;
  const std::size_t n = outs.size();
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t enc_stage = n - 1 - i;
    DecoderStage stage;
    stage.in_channels = outs[enc_stage];
    stage.out_channels = enc_stage == 0 ? 1 : outs[enc_stage - 1];
    stage.crop_side = encoder.sides[enc_stage];
    plan.stages.push_back(stage);
  }
  plan.tconv1d_channels = encoder.conv1d_channels;
  plan.tconv1d_kernel = encoder.conv1d_kernel;
  plan.output_width = encoder.input_width;
  return plan;
}

// ---- graph assembly ----

namespace {

void append_encoder_layers(ModelGraph& graph, const EncoderPlan& plan,
                           std::mt19937_64& init_rng) {
  auto& L = graph.layers;
  auto& store = graph.store;
  L.push_back(std::make_unique<nn::Conv1d>(store, "enc.conv1d", 1,
                                           plan.conv1d_channels,
                                           plan.conv1d_kernel, 1, init_rng));
  L.push_back(std::make_unique<nn::BatchNorm>(store, "enc.bn_1d",
                                              plan.conv1d_channels,
                                              plan.bn_momentum, plan.bn_epsilon));
  L.push_back(std::make_unique<nn::LeakyRelu>("enc.act_1d", plan.leaky_slope));
  // channels become image rows of a single-channel square image
  L.push_back(std::make_unique<nn::Reshape>(
      "enc.to_image",
      std::vector<std::size_t>{1, plan.conv1d_channels, plan.conv1d_channels}));
  std::size_t in_ch = 1;
  for (std::size_t i = 0; i < plan.conv2d_channels.size(); ++i) {
    const std::string tag = std::to_string(i + 1);
    const std::size_t out_ch = plan.conv2d_channels[i];
    L.push_back(std::make_unique<nn::Conv2d>(store, "enc.conv2d_" + tag, in_ch,
                                             out_ch, kConv2dKernel, kConvStride,
                                             init_rng));
    L.push_back(std::make_unique<nn::BatchNorm>(
        store, "enc.bn_" + tag, out_ch, plan.bn_momentum, plan.bn_epsilon));
    L.push_back(std::make_unique<nn::LeakyRelu>("enc.act_" + tag, plan.leaky_slope));
    in_ch = out_ch;
  }
  graph.encoder_layer_count = L.size();
}

}  // namespace

Tensor ModelGraph::forward_layers(std::size_t begin, std::size_t end,
                                  const Tensor& input, Mode mode) {
  Tensor x = input;
  for (std::size_t i = begin; i < end; ++i) {
    const Mode layer_mode =
        (encoder_frozen && i < encoder_layer_count) ? Mode::Eval : mode;
    x = layers[i]->forward(x, layer_mode);
  }
  return x;
}

Tensor ModelGraph::forward(const Tensor& input, Mode mode) {
  return forward_layers(0, layers.size(), input, mode);
}

Tensor ModelGraph::backward(const Tensor& grad_output) {
  Tensor g = grad_output;
  const std::size_t stop = encoder_frozen ? encoder_layer_count : 0;
  for (std::size_t i = layers.size(); i > stop; --i) g = layers[i - 1]->backward(g);
  return g;
}

Tensor ModelGraph::batch_from_rows(const linalg::Matrix& rows,
                                   std::span<const std::size_t> row_indices) const {
  const std::size_t width = rows.cols();
  std::vector<std::size_t> shape{row_indices.size()};
  shape.insert(shape.end(), sample_input_shape.begin(), sample_input_shape.end());
  Tensor batch(shape);
  for (std::size_t r = 0; r < row_indices.size(); ++r) {
    auto src = rows.row(row_indices[r]);
    std::copy(src.begin(), src.end(), batch.data.begin() + r * width);
  }
  return batch;
}

ModelGraph build_cae(const EncoderPlan& plan, uint64_t seed) {
  ModelGraph graph;
  graph.plan = plan;
  graph.sample_input_shape = {1, plan.input_width};
  graph.dropout_rng =
      std::make_unique<std::mt19937_64>(derive_seed(seed, /*stream=*/1));
  std::mt19937_64 init_rng(derive_seed(seed, /*stream=*/0));

  append_encoder_layers(graph, plan, init_rng);

  const DecoderPlan dec = plan_decoder(plan);
  auto& L = graph.layers;
  for (std::size_t i = 0; i < dec.stages.size(); ++i) {
    const auto& stage = dec.stages[i];
    const std::string tag = std::to_string(i + 1);
    L.push_back(std::make_unique<nn::ConvTranspose2d>(
        graph.store, "dec.tconv2d_" + tag, stage.in_channels, stage.out_channels,
        kTconv2dKernel, kConvStride, stage.crop_side, stage.crop_side, init_rng));
    L.push_back(std::make_unique<nn::BatchNorm>(
        graph.store, "dec.bn_" + tag, stage.out_channels, plan.bn_momentum,
        plan.bn_epsilon));
    L.push_back(std::make_unique<nn::LeakyRelu>("dec.act_" + tag, plan.leaky_slope));
  }
  // back to conv1d layout: image rows become channels
  L.push_back(std::make_unique<nn::Reshape>(
      "dec.to_sequence",
      std::vector<std::size_t>{dec.tconv1d_channels, dec.tconv1d_channels}));
  // final reconstruction stage is linear
  L.push_back(std::make_unique<nn::ConvTranspose1d>(
      graph.store, "dec.tconv1d", dec.tconv1d_channels, 1, dec.tconv1d_kernel, 1,
      dec.output_width, init_rng));
  return graph;
}

ModelGraph build_localizer(const EncoderPlan& plan, const MlpSpec& mlp,
                           uint64_t seed, bool frozen,
                           const std::string& encoder_checkpoint) {
  if (frozen && encoder_checkpoint.empty())
    fail(ErrorCode::MissingCheckpoint,
         "a frozen encoder requires a step-one checkpoint");

  ModelGraph graph;
  graph.plan = plan;
  graph.sample_input_shape = {1, plan.input_width};
  graph.dropout_rng =
      std::make_unique<std::mt19937_64>(derive_seed(seed, /*stream=*/1));
  std::mt19937_64 init_rng(derive_seed(seed, /*stream=*/0));

  append_encoder_layers(graph, plan, init_rng);

  auto& L = graph.layers;
  L.push_back(std::make_unique<nn::Flatten>("mlp.flatten"));
  std::size_t width = plan.flatten_size;
  std::vector<std::size_t> widths = mlp.hidden_widths;
  widths.push_back(1);
  for (std::size_t i = 0; i < widths.size(); ++i) {
    const std::string tag = std::to_string(i + 1);
    L.push_back(std::make_unique<nn::Dense>(graph.store, "mlp.dense_" + tag, width,
                                            widths[i], init_rng));
    L.push_back(std::make_unique<nn::Dropout>("mlp.drop_" + tag, mlp.dropout_p,
                                              graph.dropout_rng.get()));
    L.push_back(std::make_unique<nn::Sigmoid>("mlp.act_" + tag));
    width = widths[i];
  }

  if (!encoder_checkpoint.empty()) {
    const auto report = nn::load_checkpoint(graph.store, encoder_checkpoint);
    std::set<std::string> loaded(report.loaded.begin(), report.loaded.end());
    for (const auto& p : graph.store.entries())
      if (p->name.rfind("enc.", 0) == 0 && !loaded.count(p->name))
        fail(ErrorCode::MissingCheckpoint,
             "checkpoint " + encoder_checkpoint + " lacks encoder array " +
                 p->name);
  }
  if (frozen) {
    graph.store.freeze_prefix("enc.");
    graph.encoder_frozen = true;
  }
  return graph;
}

Tensor encode(ModelGraph& graph, const Tensor& batch) {
  return graph.forward_layers(0, graph.encoder_layer_count, batch, Mode::Eval);
}

Tensor decode(ModelGraph& graph, const Tensor& codes) {
  return graph.forward_layers(graph.encoder_layer_count, graph.layers.size(),
                              codes, Mode::Eval);
}

std::string describe(const ModelGraph& graph) {
  std::ostringstream out;
  out << "input width: " << graph.plan.input_width
      << (graph.plan.with_fs ? " (selected features)" : " (full spectrum)")
      << ", variant: " << to_string(graph.plan.variant) << "\n";
  out << "n_Conv1D=" << graph.plan.conv1d_channels
      << " k_Conv1D=" << graph.plan.conv1d_kernel
      << " n_Dense1=" << graph.plan.flatten_size << "\n\n";

  std::vector<std::size_t> shape{1};
  shape.insert(shape.end(), graph.sample_input_shape.begin(),
               graph.sample_input_shape.end());
  out << "layer                     kind              output shape        params\n";
  std::size_t total = 0;
  for (const auto& layer : graph.layers) {
    shape = layer->infer_shape(shape);
    const std::size_t count = layer->parameter_count();
    total += count;
    std::string name = layer->name();
    name.resize(26, ' ');
    std::string kind = layer->kind();
    kind.resize(18, ' ');
    std::string shp = nn::shape_string(shape);
    shp.resize(20, ' ');
    out << name << kind << shp << count << "\n";
  }
  out << "\ntotal parameters: " << total << "\n";
  return out.str();
}

}  // namespace uwloc::models
