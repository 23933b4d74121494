#include "uwloc/nn/layers.hpp"

#include <algorithm>
#include <cmath>

namespace uwloc::nn {

double uniform_fan_in_bound(std::size_t fan_in) {
  return std::sqrt(6.0 / static_cast<double>(fan_in));
}

void init_uniform(Tensor& t, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (double& v : t.data) v = dist(rng);
}

namespace {

std::size_t conv_out_len(std::size_t in_len, std::size_t kernel, std::size_t stride,
                         const std::string& context) {
  if (in_len < kernel)
    fail(ErrorCode::ShapeMismatch, context + ": input length " +
                                       std::to_string(in_len) +
                                       " shorter than kernel " +
                                       std::to_string(kernel));
  return (in_len - kernel) / stride + 1;
}

}  // namespace

// ---------------- Dense ----------------

Dense::Dense(ParameterStore& store, std::string name, std::size_t in_features,
             std::size_t out_features, std::mt19937_64& init_rng)
    : Layer(std::move(name)), in_(in_features), out_(out_features) {
  weight_ = &store.create(name_ + ".weight", {out_, in_});
  bias_ = &store.create(name_ + ".bias", {out_});
  init_uniform(weight_->value, uniform_fan_in_bound(in_), init_rng);
}

std::vector<std::size_t> Dense::infer_shape(
    const std::vector<std::size_t>& in) const {
  if (in.size() != 2 || in[1] != in_)
    fail(ErrorCode::ShapeMismatch,
         name_ + ": expects (B, " + std::to_string(in_) + "), got " +
             shape_string(in));
  return {in[0], out_};
}

std::size_t Dense::parameter_count() const { return out_ * in_ + out_; }

Tensor Dense::forward(const Tensor& input, Mode) {
  infer_shape(input.shape);
  const std::size_t batch = input.dim(0);
  Tensor out({batch, out_});
  const double* w = weight_->value.data.data();
  const double* bias = bias_->value.data.data();
  parallel_for(batch, [&](std::size_t b) {
    const double* x = input.data.data() + b * in_;
    double* y = out.data.data() + b * out_;
    for (std::size_t o = 0; o < out_; ++o) {
      const double* wo = w + o * in_;
      double acc = bias[o];
      for (std::size_t i = 0; i < in_; ++i) acc += wo[i] * x[i];
      y[o] = acc;
    }
  });
  cached_input_ = input;
  have_cache_ = true;
  return out;
}

Tensor Dense::backward(const Tensor& grad_output) {
  require_cache(have_cache_);
  have_cache_ = false;
  const std::size_t batch = cached_input_.dim(0);
  require_shape(grad_output, {batch, out_}, name_ + " backward");

  const double* w = weight_->value.data.data();
  double* gw = weight_->grad.data.data();
  double* gb = bias_->grad.data.data();
  for (std::size_t b = 0; b < batch; ++b) {
    const double* g = grad_output.data.data() + b * out_;
    const double* x = cached_input_.data.data() + b * in_;
    for (std::size_t o = 0; o < out_; ++o) {
      const double go = g[o];
      if (go == 0.0) continue;
      gb[o] += go;
      double* gwo = gw + o * in_;
      for (std::size_t i = 0; i < in_; ++i) gwo[i] += go * x[i];
    }
  }

  Tensor grad_input({batch, in_});
  parallel_for(batch, [&](std::size_t b) {
    const double* g = grad_output.data.data() + b * out_;
    double* gi = grad_input.data.data() + b * in_;
    for (std::size_t o = 0; o < out_; ++o) {
      const double go = g[o];
      if (go == 0.0) continue;
      const double* wo = w + o * in_;
      for (std::size_t i = 0; i < in_; ++i) gi[i] += go * wo[i];
    }
  });
  return grad_input;
}

// ---------------- Conv1d ----------------

Conv1d::Conv1d(ParameterStore& store, std::string name, std::size_t in_channels,
               std::size_t out_channels, std::size_t kernel, std::size_t stride,
               std::mt19937_64& init_rng)
    : Layer(std::move(name)),
      c_in_(in_channels),
      c_out_(out_channels),
      kernel_(kernel),
      stride_(stride) {
  if (kernel_ == 0 || stride_ == 0)
    fail(ErrorCode::ConfigError, name_ + ": kernel and stride must be positive");
  weight_ = &store.create(name_ + ".weight", {c_out_, c_in_, kernel_});
  bias_ = &store.create(name_ + ".bias", {c_out_});
  init_uniform(weight_->value, uniform_fan_in_bound(c_in_ * kernel_), init_rng);
}

std::vector<std::size_t> Conv1d::infer_shape(
    const std::vector<std::size_t>& in) const {
  if (in.size() != 3 || in[1] != c_in_)
    fail(ErrorCode::ShapeMismatch,
         name_ + ": expects (B, " + std::to_string(c_in_) + ", L), got " +
             shape_string(in));
  return {in[0], c_out_, conv_out_len(in[2], kernel_, stride_, name_)};
}

std::size_t Conv1d::parameter_count() const {
  return c_out_ * c_in_ * kernel_ + c_out_;
}

Tensor Conv1d::forward(const Tensor& input, Mode) {
  const auto out_shape = infer_shape(input.shape);
  const std::size_t batch = out_shape[0], lo = out_shape[2], li = input.dim(2);
  Tensor out(out_shape);
  const double* w = weight_->value.data.data();
  const double* bias = bias_->value.data.data();
  parallel_for(batch * c_out_, [&](std::size_t task) {
    const std::size_t b = task / c_out_, co = task % c_out_;
    double* y = out.data.data() + (b * c_out_ + co) * lo;
    std::fill(y, y + lo, bias[co]);
    for (std::size_t ci = 0; ci < c_in_; ++ci) {
      const double* x = input.data.data() + (b * c_in_ + ci) * li;
      const double* wk = w + (co * c_in_ + ci) * kernel_;
      for (std::size_t k = 0; k < kernel_; ++k) {
        const double wv = wk[k];
        const double* src = x + k;
        for (std::size_t o = 0; o < lo; ++o) y[o] += wv * src[o * stride_];
      }
    }
  });
  cached_input_ = input;
  have_cache_ = true;
  return out;
}

Tensor Conv1d::backward(const Tensor& grad_output) {
  require_cache(have_cache_);
  have_cache_ = false;
  const auto out_shape = infer_shape(cached_input_.shape);
  require_shape(grad_output, out_shape, name_ + " backward");
  const std::size_t batch = out_shape[0], lo = out_shape[2],
                    li = cached_input_.dim(2);

  double* gb = bias_->grad.data.data();
  const double* w = weight_->value.data.data();
  parallel_for(c_out_, [&](std::size_t co) {
    double* gw = weight_->grad.data.data() + co * c_in_ * kernel_;
    for (std::size_t b = 0; b < batch; ++b) {
      const double* g = grad_output.data.data() + (b * c_out_ + co) * lo;
      double acc = 0.0;
      for (std::size_t o = 0; o < lo; ++o) acc += g[o];
      gb[co] += acc;
      for (std::size_t ci = 0; ci < c_in_; ++ci) {
        const double* x = cached_input_.data.data() + (b * c_in_ + ci) * li;
        for (std::size_t k = 0; k < kernel_; ++k) {
          const double* src = x + k;
          double sum = 0.0;
          for (std::size_t o = 0; o < lo; ++o) sum += g[o] * src[o * stride_];
          gw[ci * kernel_ + k] += sum;
        }
      }
    }
  });

  Tensor grad_input(cached_input_.shape);
  parallel_for(batch * c_in_, [&](std::size_t task) {
    const std::size_t b = task / c_in_, ci = task % c_in_;
    double* gi = grad_input.data.data() + (b * c_in_ + ci) * li;
    for (std::size_t co = 0; co < c_out_; ++co) {
      const double* g = grad_output.data.data() + (b * c_out_ + co) * lo;
      const double* wk = w + (co * c_in_ + ci) * kernel_;
      for (std::size_t k = 0; k < kernel_; ++k) {
        const double wv = wk[k];
        double* dst = gi + k;
        for (std::size_t o = 0; o < lo; ++o) dst[o * stride_] += wv * g[o];
      }
    }
  });
  return grad_input;
}

// ---------------- Conv2d ----------------

Conv2d::Conv2d(ParameterStore& store, std::string name, std::size_t in_channels,
               std::size_t out_channels, std::size_t kernel, std::size_t stride,
               std::mt19937_64& init_rng)
    : Layer(std::move(name)),
      c_in_(in_channels),
      c_out_(out_channels),
      kernel_(kernel),
      stride_(stride) {
  if (kernel_ == 0 || stride_ == 0)
    fail(ErrorCode::ConfigError, name_ + ": kernel and stride must be positive");
  weight_ = &store.create(name_ + ".weight", {c_out_, c_in_, kernel_, kernel_});
  bias_ = &store.create(name_ + ".bias", {c_out_});
  init_uniform(weight_->value, uniform_fan_in_bound(c_in_ * kernel_ * kernel_),
               init_rng);
}

std::vector<std::size_t> Conv2d::infer_shape(
    const std::vector<std::size_t>& in) const {
  if (in.size() != 4 || in[1] != c_in_)
    fail(ErrorCode::ShapeMismatch,
         name_ + ": expects (B, " + std::to_string(c_in_) + ", H, W), got " +
             shape_string(in));
  return {in[0], c_out_, conv_out_len(in[2], kernel_, stride_, name_),
          conv_out_len(in[3], kernel_, stride_, name_)};
}

std::size_t Conv2d::parameter_count() const {
  return c_out_ * c_in_ * kernel_ * kernel_ + c_out_;
}

Tensor Conv2d::forward(const Tensor& input, Mode) {
  const auto out_shape = infer_shape(input.shape);
  const std::size_t batch = out_shape[0], ho = out_shape[2], wo = out_shape[3];
  const std::size_t hi = input.dim(2), wi = input.dim(3);
  Tensor out(out_shape);
  const double* w = weight_->value.data.data();
  const double* bias = bias_->value.data.data();
  parallel_for(batch * c_out_, [&](std::size_t task) {
    const std::size_t b = task / c_out_, co = task % c_out_;
    double* y = out.data.data() + (b * c_out_ + co) * ho * wo;
    std::fill(y, y + ho * wo, bias[co]);
    for (std::size_t ci = 0; ci < c_in_; ++ci) {
      const double* x = input.data.data() + (b * c_in_ + ci) * hi * wi;
      const double* wk = w + (co * c_in_ + ci) * kernel_ * kernel_;
      for (std::size_t kh = 0; kh < kernel_; ++kh) {
        for (std::size_t kw = 0; kw < kernel_; ++kw) {
          const double wv = wk[kh * kernel_ + kw];
          for (std::size_t oh = 0; oh < ho; ++oh) {
            const double* src = x + (oh * stride_ + kh) * wi + kw;
            double* dst = y + oh * wo;
            for (std::size_t ow = 0; ow < wo; ++ow)
              dst[ow] += wv * src[ow * stride_];
          }
        }
      }
    }
  });
  cached_input_ = input;
  have_cache_ = true;
  return out;
}

Tensor Conv2d::backward(const Tensor& grad_output) {
  require_cache(have_cache_);
  have_cache_ = false;
  const auto out_shape = infer_shape(cached_input_.shape);
  require_shape(grad_output, out_shape, name_ + " backward");
  const std::size_t batch = out_shape[0], ho = out_shape[2], wo = out_shape[3];
  const std::size_t hi = cached_input_.dim(2), wi = cached_input_.dim(3);

  double* gb = bias_->grad.data.data();
  parallel_for(c_out_, [&](std::size_t co) {
    double* gw = weight_->grad.data.data() + co * c_in_ * kernel_ * kernel_;
    for (std::size_t b = 0; b < batch; ++b) {
      const double* g = grad_output.data.data() + (b * c_out_ + co) * ho * wo;
      double acc = 0.0;
      for (std::size_t i = 0; i < ho * wo; ++i) acc += g[i];
      gb[co] += acc;
      for (std::size_t ci = 0; ci < c_in_; ++ci) {
        const double* x = cached_input_.data.data() + (b * c_in_ + ci) * hi * wi;
        for (std::size_t kh = 0; kh < kernel_; ++kh) {
          for (std::size_t kw = 0; kw < kernel_; ++kw) {
            double sum = 0.0;
            for (std::size_t oh = 0; oh < ho; ++oh) {
              const double* src = x + (oh * stride_ + kh) * wi + kw;
              const double* gr = g + oh * wo;
              for (std::size_t ow = 0; ow < wo; ++ow)
                sum += gr[ow] * src[ow * stride_];
            }
            gw[ci * kernel_ * kernel_ + kh * kernel_ + kw] += sum;
          }
        }
      }
    }
  });

  Tensor grad_input(cached_input_.shape);
  const double* w = weight_->value.data.data();
  parallel_for(batch * c_in_, [&](std::size_t task) {
    const std::size_t b = task / c_in_, ci = task % c_in_;
    double* gi = grad_input.data.data() + (b * c_in_ + ci) * hi * wi;
    for (std::size_t co = 0; co < c_out_; ++co) {
      const double* g = grad_output.data.data() + (b * c_out_ + co) * ho * wo;
      const double* wk = w + (co * c_in_ + ci) * kernel_ * kernel_;
      for (std::size_t kh = 0; kh < kernel_; ++kh) {
        for (std::size_t kw = 0; kw < kernel_; ++kw) {
          const double wv = wk[kh * kernel_ + kw];
          for (std::size_t oh = 0; oh < ho; ++oh) {
            double* dst = gi + (oh * stride_ + kh) * wi + kw;
            const double* gr = g + oh * wo;
            for (std::size_t ow = 0; ow < wo; ++ow)
              dst[ow * stride_] += wv * gr[ow];
          }
        }
      }
    }
  });
  return grad_input;
}

// ---------------- ConvTranspose1d ----------------

ConvTranspose1d::ConvTranspose1d(ParameterStore& store, std::string name,
                                 std::size_t in_channels, std::size_t out_channels,
                                 std::size_t kernel, std::size_t stride,
                                 std::size_t crop_to, std::mt19937_64& init_rng)
    : Layer(std::move(name)),
      c_in_(in_channels),
      c_out_(out_channels),
      kernel_(kernel),
      stride_(stride),
      crop_to_(crop_to) {
  if (kernel_ == 0 || stride_ == 0)
    fail(ErrorCode::ConfigError, name_ + ": kernel and stride must be positive");
  weight_ = &store.create(name_ + ".weight", {c_in_, c_out_, kernel_});
  bias_ = &store.create(name_ + ".bias", {c_out_});
  init_uniform(weight_->value, uniform_fan_in_bound(c_in_ * kernel_), init_rng);
}

std::vector<std::size_t> ConvTranspose1d::infer_shape(
    const std::vector<std::size_t>& in) const {
  if (in.size() != 3 || in[1] != c_in_)
    fail(ErrorCode::ShapeMismatch,
         name_ + ": expects (B, " + std::to_string(c_in_) + ", L), got " +
             shape_string(in));
  const std::size_t full = (in[2] - 1) * stride_ + kernel_;
  const std::size_t cropped = crop_to_ == 0 ? full : crop_to_;
  if (cropped > full)
    fail(ErrorCode::ShapeMismatch, name_ + ": crop target " +
                                       std::to_string(crop_to_) +
                                       " exceeds full output " +
                                       std::to_string(full));
  return {in[0], c_out_, cropped};
}

std::size_t ConvTranspose1d::parameter_count() const {
  return c_in_ * c_out_ * kernel_ + c_out_;
}

Tensor ConvTranspose1d::forward(const Tensor& input, Mode) {
  const auto out_shape = infer_shape(input.shape);
  const std::size_t batch = out_shape[0], lc = out_shape[2], li = input.dim(2);
  const std::size_t lf = (li - 1) * stride_ + kernel_;
  Tensor out(out_shape);
  const double* w = weight_->value.data.data();
  const double* bias = bias_->value.data.data();
  parallel_for(batch * c_out_, [&](std::size_t task) {
    const std::size_t b = task / c_out_, co = task % c_out_;
    std::vector<double> full(lf, 0.0);
    for (std::size_t ci = 0; ci < c_in_; ++ci) {
      const double* x = input.data.data() + (b * c_in_ + ci) * li;
      const double* wk = w + (ci * c_out_ + co) * kernel_;
      for (std::size_t k = 0; k < kernel_; ++k) {
        const double wv = wk[k];
        double* dst = full.data() + k;
        for (std::size_t i = 0; i < li; ++i) dst[i * stride_] += wv * x[i];
      }
    }
    double* y = out.data.data() + (b * c_out_ + co) * lc;
    for (std::size_t i = 0; i < lc; ++i) y[i] = full[i] + bias[co];
  });
  cached_input_ = input;
  have_cache_ = true;
  return out;
}

Tensor ConvTranspose1d::backward(const Tensor& grad_output) {
  require_cache(have_cache_);
  have_cache_ = false;
  const auto out_shape = infer_shape(cached_input_.shape);
  require_shape(grad_output, out_shape, name_ + " backward");
  const std::size_t batch = out_shape[0], lc = out_shape[2],
                    li = cached_input_.dim(2);
  const std::size_t lf = (li - 1) * stride_ + kernel_;

  // zero-padded gradient over the uncropped extent
  Tensor grad_full({batch, c_out_, lf});
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t co = 0; co < c_out_; ++co) {
      const double* g = grad_output.data.data() + (b * c_out_ + co) * lc;
      double* gf = grad_full.data.data() + (b * c_out_ + co) * lf;
      std::copy(g, g + lc, gf);
    }

  double* gb = bias_->grad.data.data();
  for (std::size_t co = 0; co < c_out_; ++co) {
    double acc = 0.0;
    for (std::size_t b = 0; b < batch; ++b) {
      const double* g = grad_output.data.data() + (b * c_out_ + co) * lc;
      for (std::size_t i = 0; i < lc; ++i) acc += g[i];
    }
    gb[co] += acc;
  }

  parallel_for(c_in_, [&](std::size_t ci) {
    double* gw = weight_->grad.data.data() + ci * c_out_ * kernel_;
    for (std::size_t b = 0; b < batch; ++b) {
      const double* x = cached_input_.data.data() + (b * c_in_ + ci) * li;
      for (std::size_t co = 0; co < c_out_; ++co) {
        const double* gf = grad_full.data.data() + (b * c_out_ + co) * lf;
        for (std::size_t k = 0; k < kernel_; ++k) {
          const double* src = gf + k;
          double sum = 0.0;
          for (std::size_t i = 0; i < li; ++i) sum += x[i] * src[i * stride_];
          gw[co * kernel_ + k] += sum;
        }
      }
    }
  });

  Tensor grad_input(cached_input_.shape);
  const double* w = weight_->value.data.data();
  parallel_for(batch * c_in_, [&](std::size_t task) {
    const std::size_t b = task / c_in_, ci = task % c_in_;
    double* gi = grad_input.data.data() + (b * c_in_ + ci) * li;
    for (std::size_t co = 0; co < c_out_; ++co) {
      const double* gf = grad_full.data.data() + (b * c_out_ + co) * lf;
      const double* wk = w + (ci * c_out_ + co) * kernel_;
      for (std::size_t k = 0; k < kernel_; ++k) {
        const double wv = wk[k];
        const double* src = gf + k;
        for (std::size_t i = 0; i < li; ++i) gi[i] += wv * src[i * stride_];
      }
    }
  });
  return grad_input;
}

// ---------------- ConvTranspose2d ----------------

ConvTranspose2d::ConvTranspose2d(ParameterStore& store, std::string name,
                                 std::size_t in_channels, std::size_t out_channels,
                                 std::size_t kernel, std::size_t stride,
                                 std::size_t crop_h, std::size_t crop_w,
                                 std::mt19937_64& init_rng)
    : Layer(std::move(name)),
      c_in_(in_channels),
      c_out_(out_channels),
      kernel_(kernel),
      stride_(stride),
      crop_h_(crop_h),
      crop_w_(crop_w) {
  if (kernel_ == 0 || stride_ == 0)
    fail(ErrorCode::ConfigError, name_ + ": kernel and stride must be positive");
  weight_ = &store.create(name_ + ".weight", {c_in_, c_out_, kernel_, kernel_});
  bias_ = &store.create(name_ + ".bias", {c_out_});
  init_uniform(weight_->value, uniform_fan_in_bound(c_in_ * kernel_ * kernel_),
               init_rng);
}

std::vector<std::size_t> ConvTranspose2d::infer_shape(
    const std::vector<std::size_t>& in) const {
  if (in.size() != 4 || in[1] != c_in_)
    fail(ErrorCode::ShapeMismatch,
         name_ + ": expects (B, " + std::to_string(c_in_) + ", H, W), got " +
             shape_string(in));
  const std::size_t full_h = (in[2] - 1) * stride_ + kernel_;
  const std::size_t full_w = (in[3] - 1) * stride_ + kernel_;
  const std::size_t ch = crop_h_ == 0 ? full_h : crop_h_;
  const std::size_t cw = crop_w_ == 0 ? full_w : crop_w_;
  if (ch > full_h || cw > full_w)
    fail(ErrorCode::ShapeMismatch,
         name_ + ": crop target exceeds full output size");
  return {in[0], c_out_, ch, cw};
}

std::size_t ConvTranspose2d::parameter_count() const {
  return c_in_ * c_out_ * kernel_ * kernel_ + c_out_;
}

Tensor ConvTranspose2d::forward(const Tensor& input, Mode) {
  const auto out_shape = infer_shape(input.shape);
  const std::size_t batch = out_shape[0], ch = out_shape[2], cw = out_shape[3];
  const std::size_t hi = input.dim(2), wi = input.dim(3);
  const std::size_t fh = (hi - 1) * stride_ + kernel_;
  const std::size_t fw = (wi - 1) * stride_ + kernel_;
  Tensor out(out_shape);
  const double* w = weight_->value.data.data();
  const double* bias = bias_->value.data.data();
  parallel_for(batch * c_out_, [&](std::size_t task) {
    const std::size_t b = task / c_out_, co = task % c_out_;
    std::vector<double> full(fh * fw, 0.0);
    for (std::size_t ci = 0; ci < c_in_; ++ci) {
      const double* x = input.data.data() + (b * c_in_ + ci) * hi * wi;
      const double* wk = w + (ci * c_out_ + co) * kernel_ * kernel_;
      for (std::size_t kh = 0; kh < kernel_; ++kh) {
        for (std::size_t kw = 0; kw < kernel_; ++kw) {
          const double wv = wk[kh * kernel_ + kw];
          for (std::size_t ih = 0; ih < hi; ++ih) {
            const double* src = x + ih * wi;
            double* dst = full.data() + (ih * stride_ + kh) * fw + kw;
            for (std::size_t iw = 0; iw < wi; ++iw)
              dst[iw * stride_] += wv * src[iw];
          }
        }
      }
    }
    double* y = out.data.data() + (b * c_out_ + co) * ch * cw;
    for (std::size_t oh = 0; oh < ch; ++oh)
      for (std::size_t ow = 0; ow < cw; ++ow)
        y[oh * cw + ow] = full[oh * fw + ow] + bias[co];
  });
  cached_input_ = input;
  have_cache_ = true;
  return out;
}

Tensor ConvTranspose2d::backward(const Tensor& grad_output) {
  require_cache(have_cache_);
  have_cache_ = false;
  const auto out_shape = infer_shape(cached_input_.shape);
  require_shape(grad_output, out_shape, name_ + " backward");
  const std::size_t batch = out_shape[0], ch = out_shape[2], cw = out_shape[3];
  const std::size_t hi = cached_input_.dim(2), wi = cached_input_.dim(3);
  const std::size_t fh = (hi - 1) * stride_ + kernel_;
  const std::size_t fw = (wi - 1) * stride_ + kernel_;

  Tensor grad_full({batch, c_out_, fh, fw});
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t co = 0; co < c_out_; ++co) {
      const double* g = grad_output.data.data() + (b * c_out_ + co) * ch * cw;
      double* gf = grad_full.data.data() + (b * c_out_ + co) * fh * fw;
      for (std::size_t oh = 0; oh < ch; ++oh)
        std::copy(g + oh * cw, g + (oh + 1) * cw, gf + oh * fw);
    }

  double* gb = bias_->grad.data.data();
  for (std::size_t co = 0; co < c_out_; ++co) {
    double acc = 0.0;
    for (std::size_t b = 0; b < batch; ++b) {
      const double* g = grad_output.data.data() + (b * c_out_ + co) * ch * cw;
      for (std::size_t i = 0; i < ch * cw; ++i) acc += g[i];
    }
    gb[co] += acc;
  }

  parallel_for(c_in_, [&](std::size_t ci) {
    double* gw = weight_->grad.data.data() + ci * c_out_ * kernel_ * kernel_;
    for (std::size_t b = 0; b < batch; ++b) {
      const double* x = cached_input_.data.data() + (b * c_in_ + ci) * hi * wi;
      for (std::size_t co = 0; co < c_out_; ++co) {
        const double* gf = grad_full.data.data() + (b * c_out_ + co) * fh * fw;
        for (std::size_t kh = 0; kh < kernel_; ++kh) {
          for (std::size_t kw = 0; kw < kernel_; ++kw) {
            double sum = 0.0;
            for (std::size_t ih = 0; ih < hi; ++ih) {
              const double* src = x + ih * wi;
              const double* gr = gf + (ih * stride_ + kh) * fw + kw;
              for (std::size_t iw = 0; iw < wi; ++iw)
                sum += src[iw] * gr[iw * stride_];
            }
            gw[co * kernel_ * kernel_ + kh * kernel_ + kw] += sum;
          }
        }
      }
    }
  });

  Tensor grad_input(cached_input_.shape);
  const double* w = weight_->value.data.data();
  parallel_for(batch * c_in_, [&](std::size_t task) {
    const std::size_t b = task / c_in_, ci = task % c_in_;
    double* gi = grad_input.data.data() + (b * c_in_ + ci) * hi * wi;
    for (std::size_t co = 0; co < c_out_; ++co) {
      const double* gf = grad_full.data.data() + (b * c_out_ + co) * fh * fw;
      const double* wk = w + (ci * c_out_ + co) * kernel_ * kernel_;
      for (std::size_t kh = 0; kh < kernel_; ++kh) {
        for (std::size_t kw = 0; kw < kernel_; ++kw) {
          const double wv = wk[kh * kernel_ + kw];
          for (std::size_t ih = 0; ih < hi; ++ih) {
            double* dst = gi + ih * wi;
            const double* gr = gf + (ih * stride_ + kh) * fw + kw;
            for (std::size_t iw = 0; iw < wi; ++iw)
              dst[iw] += wv * gr[iw * stride_];
          }
        }
      }
    }
  });
  return grad_input;
}

// ---------------- BatchNorm ----------------

BatchNorm::BatchNorm(ParameterStore& store, std::string name, std::size_t channels,
                     double momentum, double epsilon)
    : Layer(std::move(name)),
      channels_(channels),
      momentum_(momentum),
      epsilon_(epsilon) {
  scale_ = &store.create(name_ + ".scale", {channels_});
  shift_ = &store.create(name_ + ".shift", {channels_});
  running_mean_ = &store.create(name_ + ".running_mean", {channels_}, false);
  running_var_ = &store.create(name_ + ".running_var", {channels_}, false);
  std::fill(scale_->value.data.begin(), scale_->value.data.end(), 1.0);
  std::fill(running_var_->value.data.begin(), running_var_->value.data.end(), 1.0);
}

std::vector<std::size_t> BatchNorm::infer_shape(
    const std::vector<std::size_t>& in) const {
  if (in.size() < 3 || in.size() > 4 || in[1] != channels_)
    fail(ErrorCode::ShapeMismatch,
         name_ + ": expects (B, " + std::to_string(channels_) +
             ", spatial...), got " + shape_string(in));
  return in;
}

std::size_t BatchNorm::parameter_count() const { return 2 * channels_; }

Tensor BatchNorm::forward(const Tensor& input, Mode mode) {
  infer_shape(input.shape);
  const std::size_t batch = input.dim(0);
  std::size_t spatial = 1;
  for (std::size_t d = 2; d < input.rank(); ++d) spatial *= input.dim(d);
  const std::size_t reduce_n = batch * spatial;

  Tensor out(input.shape);
  cached_xhat_ = Tensor(input.shape);
  cached_inv_std_.assign(channels_, 0.0);
  const double* gamma = scale_->value.data.data();
  const double* beta = shift_->value.data.data();

  parallel_for(channels_, [&](std::size_t c) {
    double mean = 0.0, var = 0.0;
    if (mode == Mode::Train) {
      for (std::size_t b = 0; b < batch; ++b) {
        const double* x = input.data.data() + (b * channels_ + c) * spatial;
        for (std::size_t i = 0; i < spatial; ++i) mean += x[i];
      }
      mean /= static_cast<double>(reduce_n);
      for (std::size_t b = 0; b < batch; ++b) {
        const double* x = input.data.data() + (b * channels_ + c) * spatial;
        for (std::size_t i = 0; i < spatial; ++i) {
          const double d = x[i] - mean;
          var += d * d;
        }
      }
      var /= static_cast<double>(reduce_n);
      running_mean_->value.data[c] =
          (1.0 - momentum_) * running_mean_->value.data[c] + momentum_ * mean;
      running_var_->value.data[c] =
          (1.0 - momentum_) * running_var_->value.data[c] + momentum_ * var;
    } else {
      mean = running_mean_->value.data[c];
      var = running_var_->value.data[c];
    }
    const double inv_std = 1.0 / std::sqrt(var + epsilon_);
    cached_inv_std_[c] = inv_std;
    for (std::size_t b = 0; b < batch; ++b) {
      const double* x = input.data.data() + (b * channels_ + c) * spatial;
      double* xh = cached_xhat_.data.data() + (b * channels_ + c) * spatial;
      double* y = out.data.data() + (b * channels_ + c) * spatial;
      for (std::size_t i = 0; i < spatial; ++i) {
        xh[i] = (x[i] - mean) * inv_std;
        y[i] = gamma[c] * xh[i] + beta[c];
      }
    }
  });
  cached_mode_ = mode;
  have_cache_ = true;
  return out;
}

Tensor BatchNorm::backward(const Tensor& grad_output) {
  require_cache(have_cache_);
  have_cache_ = false;
  require_shape(grad_output, cached_xhat_.shape, name_ + " backward");
  const std::size_t batch = grad_output.dim(0);
  std::size_t spatial = 1;
  for (std::size_t d = 2; d < grad_output.rank(); ++d) spatial *= grad_output.dim(d);
  const double n = static_cast<double>(batch * spatial);

  Tensor grad_input(grad_output.shape);
  const double* gamma = scale_->value.data.data();
  double* ggamma = scale_->grad.data.data();
  double* gbeta = shift_->grad.data.data();

  parallel_for(channels_, [&](std::size_t c) {
    double sum_g = 0.0, sum_gx = 0.0;
    for (std::size_t b = 0; b < batch; ++b) {
      const double* g = grad_output.data.data() + (b * channels_ + c) * spatial;
      const double* xh = cached_xhat_.data.data() + (b * channels_ + c) * spatial;
      for (std::size_t i = 0; i < spatial; ++i) {
        sum_g += g[i];
        sum_gx += g[i] * xh[i];
      }
    }
    ggamma[c] += sum_gx;
    gbeta[c] += sum_g;
    const double inv_std = cached_inv_std_[c];
    for (std::size_t b = 0; b < batch; ++b) {
      const double* g = grad_output.data.data() + (b * channels_ + c) * spatial;
      const double* xh = cached_xhat_.data.data() + (b * channels_ + c) * spatial;
      double* gi = grad_input.data.data() + (b * channels_ + c) * spatial;
      if (cached_mode_ == Mode::Train) {
        for (std::size_t i = 0; i < spatial; ++i)
          gi[i] = gamma[c] * inv_std * (g[i] - sum_g / n - xh[i] * sum_gx / n);
      } else {
        for (std::size_t i = 0; i < spatial; ++i)
          gi[i] = gamma[c] * inv_std * g[i];
      }
    }
  });
  return grad_input;
}

// ---------------- LeakyRelu ----------------

LeakyRelu::LeakyRelu(std::string name, double alpha)
    : Layer(std::move(name)), alpha_(alpha) {
  if (!(alpha_ > 0.0))
    fail(ErrorCode::ConfigError, name_ + ": leaky slope must be positive");
}

Tensor LeakyRelu::forward(const Tensor& input, Mode) {
  Tensor out(input.shape);
  cached_nonneg_.resize(input.numel());
  for (std::size_t i = 0; i < input.numel(); ++i) {
    const bool nonneg = input.data[i] >= 0.0;
    cached_nonneg_[i] = nonneg;
    out.data[i] = nonneg ? input.data[i] : alpha_ * input.data[i];
  }
  cached_shape_ = input.shape;
  have_cache_ = true;
  return out;
}

Tensor LeakyRelu::backward(const Tensor& grad_output) {
  require_cache(have_cache_);
  have_cache_ = false;
  require_shape(grad_output, cached_shape_, name_ + " backward");
  Tensor grad_input(grad_output.shape);
  for (std::size_t i = 0; i < grad_output.numel(); ++i)
    grad_input.data[i] =
        cached_nonneg_[i] ? grad_output.data[i] : alpha_ * grad_output.data[i];
  return grad_input;
}

// ---------------- Sigmoid ----------------

Sigmoid::Sigmoid(std::string name) : Layer(std::move(name)) {}

Tensor Sigmoid::forward(const Tensor& input, Mode) {
  Tensor out(input.shape);
  for (std::size_t i = 0; i < input.numel(); ++i)
    out.data[i] = 1.0 / (1.0 + std::exp(-input.data[i]));
  cached_output_ = out;
  have_cache_ = true;
  return out;
}

Tensor Sigmoid::backward(const Tensor& grad_output) {
  require_cache(have_cache_);
  have_cache_ = false;
  require_shape(grad_output, cached_output_.shape, name_ + " backward");
  Tensor grad_input(grad_output.shape);
  for (std::size_t i = 0; i < grad_output.numel(); ++i) {
    const double y = cached_output_.data[i];
    grad_input.data[i] = grad_output.data[i] * y * (1.0 - y);
  }
  return grad_input;
}

// ---------------- Dropout ----------------

Dropout::Dropout(std::string name, double p, std::mt19937_64* rng)
    : Layer(std::move(name)), p_(p), rng_(rng) {
  if (p_ < 0.0 || p_ >= 1.0)
    fail(ErrorCode::ConfigError, name_ + ": dropout probability must be in [0,1)");
}

Tensor Dropout::forward(const Tensor& input, Mode mode) {
  cached_shape_ = input.shape;
  have_cache_ = true;
  if (mode == Mode::Eval || p_ == 0.0) {
    cached_identity_ = true;
    return input;
  }
  cached_identity_ = false;
  cached_mask_.resize(input.numel());
  std::uniform_real_distribution<double> dist(0.0, 1.0);
  const double keep_scale = 1.0 / (1.0 - p_);
  Tensor out(input.shape);
  for (std::size_t i = 0; i < input.numel(); ++i) {
    cached_mask_[i] = dist(*rng_) < p_ ? 0.0 : keep_scale;
    out.data[i] = input.data[i] * cached_mask_[i];
  }
  return out;
}

Tensor Dropout::backward(const Tensor& grad_output) {
  require_cache(have_cache_);
  have_cache_ = false;
  require_shape(grad_output, cached_shape_, name_ + " backward");
  if (cached_identity_) return grad_output;
  Tensor grad_input(grad_output.shape);
  for (std::size_t i = 0; i < grad_output.numel(); ++i)
    grad_input.data[i] = grad_output.data[i] * cached_mask_[i];
  return grad_input;
}

// ---------------- Reshape / Flatten ----------------

Reshape::Reshape(std::string name, std::vector<std::size_t> target_shape)
    : Layer(std::move(name)), target_(std::move(target_shape)) {}

std::vector<std::size_t> Reshape::infer_shape(
    const std::vector<std::size_t>& in) const {
  if (in.empty()) fail(ErrorCode::ShapeMismatch, name_ + ": scalar input");
  std::size_t sample = 1;
  for (std::size_t d = 1; d < in.size(); ++d) sample *= in[d];
  std::size_t want = 1;
  for (std::size_t d : target_) want *= d;
  if (sample != want)
    fail(ErrorCode::ShapeMismatch, name_ + ": cannot reshape sample of " +
                                       std::to_string(sample) + " elements to " +
                                       shape_string(target_));
  std::vector<std::size_t> out{in[0]};
  out.insert(out.end(), target_.begin(), target_.end());
  return out;
}

Tensor Reshape::forward(const Tensor& input, Mode) {
  const auto out_shape = infer_shape(input.shape);
  cached_shape_ = input.shape;
  have_cache_ = true;
  Tensor out = input;
  out.shape = out_shape;
  return out;
}

Tensor Reshape::backward(const Tensor& grad_output) {
  require_cache(have_cache_);
  have_cache_ = false;
  Tensor grad_input = grad_output;
  grad_input.shape = cached_shape_;
  return grad_input;
}

Flatten::Flatten(std::string name) : Layer(std::move(name)) {}

std::vector<std::size_t> Flatten::infer_shape(
    const std::vector<std::size_t>& in) const {
  if (in.empty()) fail(ErrorCode::ShapeMismatch, name_ + ": scalar input");
  std::size_t sample = 1;
  for (std::size_t d = 1; d < in.size(); ++d) sample *= in[d];
  return {in[0], sample};
}

Tensor Flatten::forward(const Tensor& input, Mode) {
  const auto out_shape = infer_shape(input.shape);
  cached_shape_ = input.shape;
  have_cache_ = true;
  Tensor out = input;
  out.shape = out_shape;
  return out;
}

Tensor Flatten::backward(const Tensor& grad_output) {
  require_cache(have_cache_);
  have_cache_ = false;
  Tensor grad_input = grad_output;
  grad_input.shape = cached_shape_;
  return grad_input;
}

// ---------------- loss ----------------

std::pair<double, Tensor> mse_loss(const Tensor& pred, const Tensor& target) {
  if (!pred.same_shape(target))
    fail(ErrorCode::ShapeMismatch, "mse_loss: prediction " + pred.shape_string() +
                                       " vs target " + target.shape_string());
  const double n = static_cast<double>(pred.numel());
  double loss = 0.0;
  Tensor grad(pred.shape);
  for (std::size_t i = 0; i < pred.numel(); ++i) {
    const double d = pred.data[i] - target.data[i];
    loss += d * d;
    grad.data[i] = 2.0 * d / n;
  }
  return {loss / n, std::move(grad)};
}

}  // namespace uwloc::nn
