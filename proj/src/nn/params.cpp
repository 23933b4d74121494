#include "uwloc/nn/params.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "../io_util.hpp"

namespace uwloc::nn {

Parameter& ParameterStore::create(const std::string& name,
                                  std::vector<std::size_t> shape, bool trainable) {
  if (find(name))
    fail(ErrorCode::ConfigError, "duplicate parameter name: " + name);
  auto p = std::make_unique<Parameter>();
  p->name = name;
  p->value = Tensor(shape);
  p->grad = Tensor(shape);
  p->adam_m = Tensor(shape);
  p->adam_v = Tensor(std::move(shape));
  p->trainable = trainable;
  params_.push_back(std::move(p));
  return *params_.back();
}

Parameter* ParameterStore::find(const std::string& name) {
  for (auto& p : params_)
    if (p->name == name) return p.get();
  return nullptr;
}

const Parameter* ParameterStore::find(const std::string& name) const {
  for (const auto& p : params_)
    if (p->name == name) return p.get();
  return nullptr;
}

void ParameterStore::zero_grads() {
  for (auto& p : params_) std::fill(p->grad.data.begin(), p->grad.data.end(), 0.0);
}

void ParameterStore::freeze_prefix(const std::string& prefix) {
  for (auto& p : params_)
    if (p->name.rfind(prefix, 0) == 0) p->frozen = true;
}

bool ParameterStore::any_unfrozen_trainable_with_prefix(
    const std::string& prefix) const {
  for (const auto& p : params_)
    if (p->trainable && !p->frozen && p->name.rfind(prefix, 0) == 0) return true;
  return false;
}

std::size_t ParameterStore::total_parameter_count(bool trainable_only) const {
  std::size_t n = 0;
  for (const auto& p : params_)
    if (!trainable_only || p->trainable) n += p->value.numel();
  return n;
}

void adam_step(ParameterStore& store, const AdamConfig& cfg) {
  const auto t = static_cast<double>(++store.adam_steps);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  for (auto& p : store.entries()) {
    if (p->trainable && !p->frozen) {
      auto& value = p->value.data;
      auto& grad = p->grad.data;
      auto& m = p->adam_m.data;
      auto& v = p->adam_v.data;
      for (std::size_t i = 0; i < value.size(); ++i) {
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * grad[i];
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
        const double m_hat = m[i] / bc1;
        const double v_hat = v[i] / bc2;
        value[i] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
      }
    }
    std::fill(p->grad.data.begin(), p->grad.data.end(), 0.0);
  }
}

// ---- checkpoints ----

namespace {

constexpr char kMagic[4] = {'U', 'W', 'N', 'N'};
constexpr uint16_t kVersion = 1;
constexpr uint16_t kFlagAdam = 1;

void write_array(std::ofstream& out, const std::string& name, const Tensor& t,
                 StorageType storage) {
  detail::write_pod(out, static_cast<uint32_t>(name.size()));
  out.write(name.data(), static_cast<std::streamsize>(name.size()));
  detail::write_pod(out, static_cast<uint8_t>(storage));
  detail::write_pod(out, static_cast<uint8_t>(t.rank()));
  for (std::size_t d : t.shape) detail::write_pod(out, static_cast<uint64_t>(d));
  if (storage == StorageType::F64) {
    detail::write_doubles(out, t.data.data(), t.numel());
  } else {
    std::vector<float> f(t.data.begin(), t.data.end());
    out.write(reinterpret_cast<const char*>(f.data()), f.size() * sizeof(float));
  }
}

struct NamedArray {
  std::string name;
  Tensor tensor;
};

NamedArray read_array(std::ifstream& in) {
  const auto name_len = detail::read_pod<uint32_t>(in, "array name length");
  std::string name(name_len, '\0');
  in.read(name.data(), name_len);
  if (!in) fail(ErrorCode::IoError, "truncated checkpoint (array name)");
  const auto dtype = detail::read_pod<uint8_t>(in, "dtype");
  const auto rank = detail::read_pod<uint8_t>(in, "rank");
  std::vector<std::size_t> shape(rank);
  for (auto& d : shape)
    d = static_cast<std::size_t>(detail::read_pod<uint64_t>(in, "dim"));
  Tensor t(shape);
  if (dtype == static_cast<uint8_t>(StorageType::F64)) {
    detail::read_doubles(in, t.data.data(), t.numel(), "array data");
  } else if (dtype == static_cast<uint8_t>(StorageType::F32)) {
    std::vector<float> f(t.numel());
    in.read(reinterpret_cast<char*>(f.data()), f.size() * sizeof(float));
    if (!in) fail(ErrorCode::IoError, "truncated checkpoint (f32 data)");
    std::copy(f.begin(), f.end(), t.data.begin());
  } else {
    fail(ErrorCode::IoError, "unknown dtype tag in checkpoint");
  }
  return {std::move(name), std::move(t)};
}

}  // namespace

void save_checkpoint(const ParameterStore& store, const std::string& path,
                     bool include_adam, StorageType storage) {
  auto out = detail::open_out(path, true);
  out.write(kMagic, 4);
  detail::write_pod(out, kVersion);
  detail::write_pod(out, static_cast<uint16_t>(include_adam ? kFlagAdam : 0));
  detail::write_pod(out, static_cast<uint64_t>(store.entries().size()));
  for (const auto& p : store.entries())
    write_array(out, p->name, p->value, storage);
  if (include_adam) {
    detail::write_pod(out, store.adam_steps);
    for (const auto& p : store.entries()) {
      write_array(out, p->name + "#m", p->adam_m, storage);
      write_array(out, p->name + "#v", p->adam_v, storage);
    }
  }
  if (!out) fail(ErrorCode::IoError, "short write: " + path);
}

CheckpointLoadReport load_checkpoint(ParameterStore& store,
                                     const std::string& path) {
  auto in = detail::open_in(path, true);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    fail(ErrorCode::MissingCheckpoint, "not a checkpoint file: " + path);
  const auto version = detail::read_pod<uint16_t>(in, "version");
  if (version != kVersion)
    fail(ErrorCode::MissingCheckpoint,
         "unsupported checkpoint version " + std::to_string(version));
  const auto flags = detail::read_pod<uint16_t>(in, "flags");
  const auto count = detail::read_pod<uint64_t>(in, "array count");

  CheckpointLoadReport report;
  const auto assign = [&](const NamedArray& a) {
    std::string base = a.name;
    Tensor Parameter::* slot = &Parameter::value;
    bool is_value = true;
    if (base.size() > 2 && base.compare(base.size() - 2, 2, "#m") == 0) {
      slot = &Parameter::adam_m;
      base.resize(base.size() - 2);
      is_value = false;
    } else if (base.size() > 2 && base.compare(base.size() - 2, 2, "#v") == 0) {
      slot = &Parameter::adam_v;
      base.resize(base.size() - 2);
      is_value = false;
    }
    Parameter* p = store.find(base);
    if (!p) {
      report.skipped.push_back(a.name);
      return;
    }
    if (p->value.shape != a.tensor.shape)
      fail(ErrorCode::ShapeMismatch,
           "checkpoint array " + a.name + " has shape " +
               a.tensor.shape_string() + ", store expects " +
               p->value.shape_string());
    (*p).*slot = a.tensor;
    if (is_value) report.loaded.push_back(base);
  };

  for (uint64_t i = 0; i < count; ++i) assign(read_array(in));
  if (flags & kFlagAdam) {
    store.adam_steps = detail::read_pod<uint64_t>(in, "adam step count");
    for (uint64_t i = 0; i < 2 * count; ++i) assign(read_array(in));
  }
  return report;
}

}  // namespace uwloc::nn
