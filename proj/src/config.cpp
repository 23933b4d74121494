#include "uwloc/config.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "io_util.hpp"

namespace uwloc::config {

using detail::format_double;

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    fail(ErrorCode::TypeError, key + ": expected a number, got '" + value + "'");
  }
}

uint64_t parse_uint(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const auto v = std::stoull(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    fail(ErrorCode::TypeError,
         key + ": expected a non-negative integer, got '" + value + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  fail(ErrorCode::TypeError, key + ": expected true/false, got '" + value + "'");
}

std::vector<std::size_t> parse_size_list(const std::string& key,
                                         const std::string& value) {
  std::vector<std::size_t> out;
  std::istringstream in(value);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    out.push_back(static_cast<std::size_t>(parse_uint(key, item)));
  }
  if (out.empty()) fail(ErrorCode::TypeError, key + ": empty list");
  return out;
}

using Setter =
    std::function<void(ExperimentConfig&, const std::string&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"paths.signal",
       [](ExperimentConfig& c, const std::string&, const std::string& v) {
         c.signal = v;
       }},
      {"paths.signal_meta",
       [](ExperimentConfig& c, const std::string&, const std::string& v) {
         c.signal_meta = v;
       }},
      {"paths.labels",
       [](ExperimentConfig& c, const std::string&, const std::string& v) {
         c.labels = v;
       }},
      {"paths.workdir",
       [](ExperimentConfig& c, const std::string&, const std::string& v) {
         c.workdir = v;
       }},
      {"preprocess.frame_seconds",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.frame_seconds = parse_double(k, v);
       }},
      {"selection.components",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.components = static_cast<std::size_t>(parse_uint(k, v));
       }},
      {"selection.epsilon",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.epsilon = parse_double(k, v);
       }},
      {"selection.loading_pc_a",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.loading_pc_a = static_cast<std::size_t>(parse_uint(k, v));
       }},
      {"selection.loading_pc_b",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.loading_pc_b = static_cast<std::size_t>(parse_uint(k, v));
       }},
      {"model.variant",
       [](ExperimentConfig& c, const std::string&, const std::string& v) {
         c.variant = v;
       }},
      {"model.with_fs",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.with_fs = parse_bool(k, v);
       }},
      {"model.mlp_widths",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.mlp_widths = parse_size_list(k, v);
       }},
      {"model.dropout_p",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.dropout_p = parse_double(k, v);
       }},
      {"model.leaky_slope",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.leaky_slope = parse_double(k, v);
       }},
      {"train.lr_step_one",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.lr_step_one = parse_double(k, v);
       }},
      {"train.lr_step_two",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.lr_step_two = parse_double(k, v);
       }},
      {"train.epochs",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.epochs = static_cast<std::size_t>(parse_uint(k, v));
       }},
      {"train.batch_size",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.batch_size = static_cast<std::size_t>(parse_uint(k, v));
       }},
      {"train.seed",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.seed = parse_uint(k, v);
       }},
      {"train.precision",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         if (v != "f64" && v != "f32")
           fail(ErrorCode::TypeError, k + ": expected f64 or f32, got '" + v + "'");
         c.precision = v;
       }},
      {"train.threads",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.threads = static_cast<int>(parse_uint(k, v));
         if (c.threads < 1)
           fail(ErrorCode::TypeError, k + ": must be at least 1");
       }},
      {"split.modulus",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.modulus = static_cast<unsigned>(parse_uint(k, v));
       }},
      {"report.emit_svg",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.emit_svg = parse_bool(k, v);
       }},
      {"report.emit_feature_csv",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.emit_feature_csv = parse_bool(k, v);
       }},
  };
  return table;
}

std::size_t edit_distance(const std::string& a, const std::string& b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

}  // namespace

const std::vector<std::string>& known_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& [key, _] : setters()) k.push_back(key);
    return k;
  }();
  return keys;
}

void apply_key(ExperimentConfig& cfg, const std::string& key,
               const std::string& value) {
  const auto& table = setters();
  const auto it = table.find(key);
  if (it == table.end()) {
    std::string nearest;
    std::size_t best = std::string::npos;
    for (const auto& candidate : known_keys()) {
      const std::size_t d = edit_distance(key, candidate);
      if (d < best) {
        best = d;
        nearest = candidate;
      }
    }
    fail(ErrorCode::UnknownKey,
         "unknown configuration key '" + key + "'; nearest valid key is '" +
             nearest + "'");
  }
  it->second(cfg, key, value);
}

ExperimentConfig parse_config_text(const std::string& text) {
  ExperimentConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      fail(ErrorCode::ConfigError,
           "line " + std::to_string(line_no) + ": expected key = value");
    apply_key(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return cfg;
}

ExperimentConfig resolve_config(
    const std::string& file_path,
    const std::vector<std::pair<std::string, std::string>>& overrides) {
  ExperimentConfig cfg;
  if (!file_path.empty()) {
    std::ifstream in(file_path);
    if (!in) fail(ErrorCode::ConfigError, "cannot open config file: " + file_path);
    std::ostringstream buffer;
    buffer << in.rdbuf();
    cfg = parse_config_text(buffer.str());
  }
  for (const auto& [key, value] : overrides) apply_key(cfg, key, value);
  return cfg;
}

std::string serialize(const ExperimentConfig& c) {
  std::ostringstream out;
  out << "paths.signal = " << c.signal << "\n";
  out << "paths.signal_meta = " << c.signal_meta << "\n";
  out << "paths.labels = " << c.labels << "\n";
  out << "paths.workdir = " << c.workdir << "\n";
  out << "preprocess.frame_seconds = " << format_double(c.frame_seconds) << "\n";
  out << "selection.components = " << c.components << "\n";
  out << "selection.epsilon = " << format_double(c.epsilon) << "\n";
  out << "selection.loading_pc_a = " << c.loading_pc_a << "\n";
  out << "selection.loading_pc_b = " << c.loading_pc_b << "\n";
  out << "model.variant = " << c.variant << "\n";
  out << "model.with_fs = " << (c.with_fs ? "true" : "false") << "\n";
  out << "model.mlp_widths = ";
  for (std::size_t i = 0; i < c.mlp_widths.size(); ++i)
    out << (i ? "," : "") << c.mlp_widths[i];
  out << "\n";
  out << "model.dropout_p = " << format_double(c.dropout_p) << "\n";
  out << "model.leaky_slope = " << format_double(c.leaky_slope) << "\n";
  out << "train.lr_step_one = " << format_double(c.lr_step_one) << "\n";
  out << "train.lr_step_two = " << format_double(c.lr_step_two) << "\n";
  out << "train.epochs = " << c.epochs << "\n";
  out << "train.batch_size = " << c.batch_size << "\n";
  out << "train.seed = " << c.seed << "\n";
  out << "train.precision = " << c.precision << "\n";
  out << "train.threads = " << c.threads << "\n";
  out << "split.modulus = " << c.modulus << "\n";
  out << "report.emit_svg = " << (c.emit_svg ? "true" : "false") << "\n";
  out << "report.emit_feature_csv = " << (c.emit_feature_csv ? "true" : "false")
      << "\n";
  return out.str();
}

uint64_t fnv1a64(const void* data, std::size_t size, uint64_t seed) {
  const auto* bytes = static_cast<const unsigned char*>(data);
  uint64_t hash = seed;
  for (std::size_t i = 0; i < size; ++i) {
    hash ^= bytes[i];
    hash *= 0x100000001b3ull;
  }
  return hash;
}

uint64_t config_hash(const ExperimentConfig& cfg) {
  const std::string s = serialize(cfg);
  return fnv1a64(s.data(), s.size());
}

}  // namespace uwloc::config
