#ifndef UWLOC_NN_LAYERS_HPP
#define UWLOC_NN_LAYERS_HPP

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "uwloc/nn/params.hpp"
#include "uwloc/nn/tensor.hpp"

namespace uwloc::nn {

// A layer owns no parameter storage; it registers named arrays in the
// ParameterStore and keeps pointers. backward() consumes the cache left by
// the matching forward() call and accumulates into parameter grad buffers.
class Layer {
 public:
  virtual ~Layer() = default;

  virtual Tensor forward(const Tensor& input, Mode mode) = 0;
  virtual Tensor backward(const Tensor& grad_output) = 0;

  virtual std::string kind() const = 0;
  const std::string& name() const { return name_; }

  virtual std::vector<std::size_t> infer_shape(
      const std::vector<std::size_t>& input_shape) const = 0;

  virtual std::size_t parameter_count() const { return 0; }
  virtual bool has_trainable_parameters() const { return false; }

 protected:
  explicit Layer(std::string name) : name_(std::move(name)) {}
  void require_cache(bool have) const {
    if (!have)
      fail(ErrorCode::StaleCache, name_ + ": backward without matching forward");
  }

  std::string name_;
};

using LayerPtr = std::unique_ptr<Layer>;

class Dense : public Layer {
 public:
  Dense(ParameterStore& store, std::string name, std::size_t in_features,
        std::size_t out_features, std::mt19937_64& init_rng);
  Tensor forward(const Tensor& input, Mode mode) override;
  Tensor backward(const Tensor& grad_output) override;
  std::string kind() const override { return "Dense"; }
  std::vector<std::size_t> infer_shape(
      const std::vector<std::size_t>& in) const override;
  std::size_t parameter_count() const override;
  bool has_trainable_parameters() const override { return true; }

 private:
  std::size_t in_, out_;
  Parameter* weight_;
  Parameter* bias_;
  Tensor cached_input_;
  bool have_cache_ = false;
};

class Conv1d : public Layer {
 public:
  Conv1d(ParameterStore& store, std::string name, std::size_t in_channels,
         std::size_t out_channels, std::size_t kernel, std::size_t stride,
         std::mt19937_64& init_rng);
  Tensor forward(const Tensor& input, Mode mode) override;
  Tensor backward(const Tensor& grad_output) override;
  std::string kind() const override { return "Conv1D"; }
  std::vector<std::size_t> infer_shape(
      const std::vector<std::size_t>& in) const override;
  std::size_t parameter_count() const override;
  bool has_trainable_parameters() const override { return true; }

  std::size_t out_channels() const { return c_out_; }
  std::size_t kernel() const { return kernel_; }

 private:
  std::size_t c_in_, c_out_, kernel_, stride_;
  Parameter* weight_;
  Parameter* bias_;
  Tensor cached_input_;
  bool have_cache_ = false;
};

class Conv2d : public Layer {
 public:
  Conv2d(ParameterStore& store, std::string name, std::size_t in_channels,
         std::size_t out_channels, std::size_t kernel, std::size_t stride,
         std::mt19937_64& init_rng);
  Tensor forward(const Tensor& input, Mode mode) override;
  Tensor backward(const Tensor& grad_output) override;
  std::string kind() const override { return "Conv2D"; }
  std::vector<std::size_t> infer_shape(
      const std::vector<std::size_t>& in) const override;
  std::size_t parameter_count() const override;
  bool has_trainable_parameters() const override { return true; }

 private:
  std::size_t c_in_, c_out_, kernel_, stride_;
  Parameter* weight_;
  Parameter* bias_;
  Tensor cached_input_;
  bool have_cache_ = false;
};

// Stride-s transposed convolution; the full output has length
// (L_in - 1) * s + k and is cropped (front-anchored) to crop_to when set.
class ConvTranspose1d : public Layer {
 public:
  ConvTranspose1d(ParameterStore& store, std::string name, std::size_t in_channels,
                  std::size_t out_channels, std::size_t kernel, std::size_t stride,
                  std::size_t crop_to, std::mt19937_64& init_rng);
  Tensor forward(const Tensor& input, Mode mode) override;
  Tensor backward(const Tensor& grad_output) override;
  std::string kind() const override { return "TransposedConv1D"; }
  std::vector<std::size_t> infer_shape(
      const std::vector<std::size_t>& in) const override;
  std::size_t parameter_count() const override;
  bool has_trainable_parameters() const override { return true; }

 private:
  std::size_t c_in_, c_out_, kernel_, stride_, crop_to_;
  Parameter* weight_;
  Parameter* bias_;
  Tensor cached_input_;
  bool have_cache_ = false;
};

class ConvTranspose2d : public Layer {
 public:
  ConvTranspose2d(ParameterStore& store, std::string name, std::size_t in_channels,
                  std::size_t out_channels, std::size_t kernel, std::size_t stride,
                  std::size_t crop_h, std::size_t crop_w, std::mt19937_64& init_rng);
  Tensor forward(const Tensor& input, Mode mode) override;
  Tensor backward(const Tensor& grad_output) override;
  std::string kind() const override { return "TransposedConv2D"; }
  std::vector<std::size_t> infer_shape(
      const std::vector<std::size_t>& in) const override;
  std::size_t parameter_count() const override;
  bool has_trainable_parameters() const override { return true; }

 private:
  std::size_t c_in_, c_out_, kernel_, stride_, crop_h_, crop_w_;
  Parameter* weight_;
  Parameter* bias_;
  Tensor cached_input_;
  bool have_cache_ = false;
};

// Normalizes per channel over batch and spatial dims (rank-3 or rank-4
// input). Train mode uses batch statistics and updates the running ones;
// eval mode reads the running statistics.
class BatchNorm : public Layer {
 public:
  BatchNorm(ParameterStore& store, std::string name, std::size_t channels,
            double momentum = 0.1, double epsilon = 1e-5);
  Tensor forward(const Tensor& input, Mode mode) override;
  Tensor backward(const Tensor& grad_output) override;
  std::string kind() const override { return "BatchNorm"; }
  std::vector<std::size_t> infer_shape(
      const std::vector<std::size_t>& in) const override;
  std::size_t parameter_count() const override;
  bool has_trainable_parameters() const override { return true; }

 private:
  std::size_t channels_;
  double momentum_, epsilon_;
  Parameter* scale_;
  Parameter* shift_;
  Parameter* running_mean_;
  Parameter* running_var_;
  Tensor cached_xhat_;
  std::vector<double> cached_inv_std_;
  Mode cached_mode_ = Mode::Train;
  bool have_cache_ = false;
};

class LeakyRelu : public Layer {
 public:
  LeakyRelu(std::string name, double alpha = 0.01);
  Tensor forward(const Tensor& input, Mode mode) override;
  Tensor backward(const Tensor& grad_output) override;
  std::string kind() const override { return "LeakyReLU"; }
  std::vector<std::size_t> infer_shape(
      const std::vector<std::size_t>& in) const override {
    return in;
  }

 private:
  double alpha_;
  std::vector<uint8_t> cached_nonneg_;
  std::vector<std::size_t> cached_shape_;
  bool have_cache_ = false;
};

class Sigmoid : public Layer {
 public:
  explicit Sigmoid(std::string name);
  Tensor forward(const Tensor& input, Mode mode) override;
  Tensor backward(const Tensor& grad_output) override;
  std::string kind() const override { return "Sigmoid"; }
  std::vector<std::size_t> infer_shape(
      const std::vector<std::size_t>& in) const override {
    return in;
  }

 private:
  Tensor cached_output_;
  bool have_cache_ = false;
};

// Inverted dropout: active in train mode only, keeps expectation by scaling
// with 1/(1-p). The mask stream comes from the graph-owned generator.
class Dropout : public Layer {
 public:
  Dropout(std::string name, double p, std::mt19937_64* rng);
  Tensor forward(const Tensor& input, Mode mode) override;
  Tensor backward(const Tensor& grad_output) override;
  std::string kind() const override { return "Dropout"; }
  std::vector<std::size_t> infer_shape(
      const std::vector<std::size_t>& in) const override {
    return in;
  }

 private:
  double p_;
  std::mt19937_64* rng_;
  std::vector<double> cached_mask_;
  bool cached_identity_ = false;
  std::vector<std::size_t> cached_shape_;
  bool have_cache_ = false;
};

// Reinterprets each sample as target_shape (batch dim preserved).
class Reshape : public Layer {
 public:
  Reshape(std::string name, std::vector<std::size_t> target_shape);
  Tensor forward(const Tensor& input, Mode mode) override;
  Tensor backward(const Tensor& grad_output) override;
  std::string kind() const override { return "Reshape"; }
  std::vector<std::size_t> infer_shape(
      const std::vector<std::size_t>& in) const override;

 private:
  std::vector<std::size_t> target_;
  std::vector<std::size_t> cached_shape_;
  bool have_cache_ = false;
};

class Flatten : public Layer {
 public:
  explicit Flatten(std::string name);
  Tensor forward(const Tensor& input, Mode mode) override;
  Tensor backward(const Tensor& grad_output) override;
  std::string kind() const override { return "Flatten"; }
  std::vector<std::size_t> infer_shape(
      const std::vector<std::size_t>& in) const override;

 private:
  std::vector<std::size_t> cached_shape_;
  bool have_cache_ = false;
};

// loss = mean((pred - target)^2), grad = 2 (pred - target) / numel
std::pair<double, Tensor> mse_loss(const Tensor& pred, const Tensor& target);

double uniform_fan_in_bound(std::size_t fan_in);
void init_uniform(Tensor& t, double bound, std::mt19937_64& rng);

}  // namespace uwloc::nn

#endif  // UWLOC_NN_LAYERS_HPP
