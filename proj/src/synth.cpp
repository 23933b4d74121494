#include "uwloc/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>

#include "io_util.hpp"

namespace uwloc::synth {

std::vector<Tone> default_tones() {
  std::vector<Tone> tones;
  for (double f : {49.0, 64.0, 79.0, 94.0, 112.0, 130.0, 148.0, 166.0, 201.0,
                   235.0, 283.0, 338.0, 388.0})
    tones.push_back({f, 1.0, "deep"});
  return tones;
}

SynthData generate(const SynthConfig& cfg) {
  if (cfg.duration_s <= 0.0 || cfg.sample_rate <= 0)
    fail(ErrorCode::ConfigError, "duration and sample rate must be positive");
  if (cfg.range_start_km <= 0.0 || cfg.range_end_km <= 0.0)
    fail(ErrorCode::ConfigError, "range trajectory must stay positive");
  if (cfg.frame_seconds <= 0.0)
    fail(ErrorCode::ConfigError, "frame length must be positive");

  const std::vector<Tone> tones = cfg.tones.empty() ? default_tones() : cfg.tones;
  const double nyquist = cfg.sample_rate / 2.0;
  for (const auto& tone : tones)
    if (tone.frequency_hz >= nyquist)
      fail(ErrorCode::ToneAboveNyquist,
           std::to_string(tone.frequency_hz) + " Hz >= Nyquist " +
               std::to_string(nyquist) + " Hz");

  std::mt19937_64 phase_rng(derive_seed(cfg.seed, 0));
  std::uniform_real_distribution<double> phase_dist(0.0, 2.0 * std::numbers::pi);
  std::vector<double> phases(tones.size());
  for (double& p : phases) p = phase_dist(phase_rng);

  const auto n_samples =
      static_cast<std::size_t>(std::llround(cfg.duration_s * cfg.sample_rate));
  SynthData data;
  data.series.sample_rate = cfg.sample_rate;
  data.series.receiver_id = "synthetic";
  data.series.samples.resize(n_samples);

  std::mt19937_64 noise_rng(derive_seed(cfg.seed, 1));
  std::normal_distribution<double> noise(0.0, cfg.noise_std);
  const double range_slope = (cfg.range_end_km - cfg.range_start_km) / cfg.duration_s;
  const double mod_omega = 2.0 * std::numbers::pi / cfg.modulation_period_s;

  for (std::size_t i = 0; i < n_samples; ++i) {
    const double t = static_cast<double>(i) / cfg.sample_rate;
    const double range = cfg.range_start_km + range_slope * t;
    const double spread = std::pow(range, -cfg.amplitude_exponent);
    double s = 0.0;
    for (std::size_t f = 0; f < tones.size(); ++f) {
      const double modulation =
          1.0 + cfg.modulation_depth * std::sin(mod_omega * t + phases[f]);
      s += tones[f].amplitude * spread * modulation *
           std::sin(2.0 * std::numbers::pi * tones[f].frequency_hz * t + phases[f]);
    }
    data.series.samples[i] = s + (cfg.noise_std > 0.0 ? noise(noise_rng) : 0.0);
  }

  const auto n_frames =
      static_cast<std::size_t>(cfg.duration_s / cfg.frame_seconds);
  data.labels_km.resize(n_frames);
  for (std::size_t f = 0; f < n_frames; ++f) {
    const double mid = (static_cast<double>(f) + 0.5) * cfg.frame_seconds;
    data.labels_km[f] = cfg.range_start_km + range_slope * mid;
  }

  for (const auto& tone : tones) {
    const auto bin =
        static_cast<std::size_t>(std::llround(tone.frequency_hz * cfg.frame_seconds));
    if (bin >= 1) data.planted_bins.push_back(bin - 1);  // column j is bin j+1
  }
  std::sort(data.planted_bins.begin(), data.planted_bins.end());
  data.planted_bins.erase(
      std::unique(data.planted_bins.begin(), data.planted_bins.end()),
      data.planted_bins.end());
  return data;
}

// ---- config round-trip ----

std::string serialize_config(const SynthConfig& cfg) {
  using detail::format_double;
  std::ostringstream out;
  out << "duration_s = " << format_double(cfg.duration_s) << "\n";
  out << "sample_rate = " << cfg.sample_rate << "\n";
  out << "frame_seconds = " << format_double(cfg.frame_seconds) << "\n";
  out << "range_start_km = " << format_double(cfg.range_start_km) << "\n";
  out << "range_end_km = " << format_double(cfg.range_end_km) << "\n";
  out << "amplitude_exponent = " << format_double(cfg.amplitude_exponent) << "\n";
  out << "modulation_depth = " << format_double(cfg.modulation_depth) << "\n";
  out << "modulation_period_s = " << format_double(cfg.modulation_period_s) << "\n";
  out << "noise_std = " << format_double(cfg.noise_std) << "\n";
  out << "seed = " << cfg.seed << "\n";
  const auto& tones = cfg.tones.empty() ? default_tones() : cfg.tones;
  out << "tones =";
  for (std::size_t i = 0; i < tones.size(); ++i)
    out << (i ? "," : " ") << format_double(tones[i].frequency_hz) << ':'
        << format_double(tones[i].amplitude) << ':' << tones[i].tag;
  out << "\n";
  return out.str();
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

SynthConfig parse_config(const std::string& text) {
  SynthConfig cfg;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      fail(ErrorCode::ConfigError, "expected key = value, got: " + line);
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    try {
      if (key == "duration_s") cfg.duration_s = std::stod(value);
      else if (key == "sample_rate") cfg.sample_rate = std::stoi(value);
      else if (key == "frame_seconds") cfg.frame_seconds = std::stod(value);
      else if (key == "range_start_km") cfg.range_start_km = std::stod(value);
      else if (key == "range_end_km") cfg.range_end_km = std::stod(value);
      else if (key == "amplitude_exponent") cfg.amplitude_exponent = std::stod(value);
      else if (key == "modulation_depth") cfg.modulation_depth = std::stod(value);
      else if (key == "modulation_period_s") cfg.modulation_period_s = std::stod(value);
      else if (key == "noise_std") cfg.noise_std = std::stod(value);
      else if (key == "seed") cfg.seed = std::stoull(value);
      else if (key == "tones") {
        cfg.tones.clear();
        std::istringstream list(value);
        std::string item;
        while (std::getline(list, item, ',')) {
          item = trim(item);
          if (item.empty()) continue;
          Tone tone;
          const auto c1 = item.find(':');
          if (c1 == std::string::npos) {
            tone.frequency_hz = std::stod(item);
          } else {
            tone.frequency_hz = std::stod(item.substr(0, c1));
            const auto c2 = item.find(':', c1 + 1);
            if (c2 == std::string::npos) {
              tone.amplitude = std::stod(item.substr(c1 + 1));
            } else {
              tone.amplitude = std::stod(item.substr(c1 + 1, c2 - c1 - 1));
              tone.tag = item.substr(c2 + 1);
            }
          }
          cfg.tones.push_back(tone);
        }
      } else {
        fail(ErrorCode::UnknownKey, "unknown generator key: " + key);
      }
    } catch (const std::invalid_argument&) {
      fail(ErrorCode::TypeError, "cannot parse value for " + key + ": " + value);
    } catch (const std::out_of_range&) {
      fail(ErrorCode::TypeError, "value out of range for " + key + ": " + value);
    }
  }
  return cfg;
}

void save_config(const SynthConfig& cfg, const std::string& path) {
  auto out = detail::open_out(path);
  out << serialize_config(cfg);
}

SynthConfig load_config(const std::string& path) {
  auto in = detail::open_in(path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_config(buffer.str());
}

// ---- oracles ----

std::vector<std::size_t> brute_force_feature_ranking(const linalg::Matrix& x,
                                                     std::span<const double> y) {
  if (y.size() != x.rows())
    fail(ErrorCode::DimensionMismatch, "ranking oracle: label length != rows");
  const std::size_t n = x.rows(), k = x.cols();
  double y_mean = 0.0;
  for (double v : y) y_mean += v;
  y_mean /= static_cast<double>(n);
  double y_ss = 0.0;
  std::vector<double> yc(n);
  for (std::size_t i = 0; i < n; ++i) {
    yc[i] = y[i] - y_mean;
    y_ss += yc[i] * yc[i];
  }

  std::vector<double> abs_corr(k, 0.0);
  for (std::size_t j = 0; j < k; ++j) {
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += x(i, j);
    mean /= static_cast<double>(n);
    double ss = 0.0, cross = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = x(i, j) - mean;
      ss += d * d;
      cross += d * yc[i];
    }
    if (ss > 0.0 && y_ss > 0.0)
      abs_corr[j] = std::abs(cross) / std::sqrt(ss * y_ss);
  }

  std::vector<std::size_t> ranking(k);
  std::iota(ranking.begin(), ranking.end(), 0);
  std::stable_sort(ranking.begin(), ranking.end(), [&](std::size_t a, std::size_t b) {
    return abs_corr[a] > abs_corr[b];
  });
  return ranking;
}

namespace {

// Classical Jacobi with largest off-diagonal pivot; written independently of
// the production cyclic-sweep solver on purpose.
void pivoted_jacobi(std::vector<std::vector<double>>& s,
                    std::vector<std::vector<double>>& q) {
  const std::size_t n = s.size();
  double scale = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) scale += s[i][j] * s[i][j];
  scale = std::sqrt(scale);
  if (scale == 0.0) return;

  const double tol = 1e-14 * scale;
  for (std::size_t iter = 0; iter < 100 * n * n; ++iter) {
    std::size_t p = 0, r = 1;
    double biggest = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j)
        if (std::abs(s[i][j]) > biggest) {
          biggest = std::abs(s[i][j]);
          p = i;
          r = j;
        }
    if (biggest <= tol) break;

    const double theta = (s[r][r] - s[p][p]) / (2.0 * s[p][r]);
    const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                     (std::abs(theta) + std::sqrt(theta * theta + 1.0));
    const double c = 1.0 / std::sqrt(t * t + 1.0);
    const double sn = t * c;
    for (std::size_t k = 0; k < n; ++k) {
      const double skp = s[k][p], skr = s[k][r];
      s[k][p] = c * skp - sn * skr;
      s[k][r] = sn * skp + c * skr;
    }
    for (std::size_t k = 0; k < n; ++k) {
      const double spk = s[p][k], srk = s[r][k];
      s[p][k] = c * spk - sn * srk;
      s[r][k] = sn * spk + c * srk;
    }
    for (std::size_t k = 0; k < n; ++k) {
      const double qkp = q[k][p], qkr = q[k][r];
      q[k][p] = c * qkp - sn * qkr;
      q[k][r] = sn * qkp + c * qkr;
    }
  }
}

}  // namespace

SvdReference reference_svd(const linalg::Matrix& x) {
  const std::size_t n = x.rows(), k = x.cols();
  const std::size_t small = std::min(n, k);
  if (small > 64)
    fail(ErrorCode::SizeTooLarge,
         "reference SVD accepts min(N,K) <= 64, got " + std::to_string(small));
  const bool gram_right = k <= n;  // X^T X when K is the small side
  const std::size_t m = gram_right ? k : n;

  std::vector<std::vector<double>> s(m, std::vector<double>(m, 0.0));
  for (std::size_t a = 0; a < m; ++a)
    for (std::size_t b = 0; b < m; ++b) {
      double acc = 0.0;
      if (gram_right) {
        for (std::size_t i = 0; i < n; ++i) acc += x(i, a) * x(i, b);
      } else {
        for (std::size_t j = 0; j < k; ++j) acc += x(a, j) * x(b, j);
      }
      s[a][b] = acc;
    }
  std::vector<std::vector<double>> q(m, std::vector<double>(m, 0.0));
  for (std::size_t i = 0; i < m; ++i) q[i][i] = 1.0;
  pivoted_jacobi(s, q);

  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return s[a][a] > s[b][b]; });

  SvdReference ref;
  ref.s.resize(m);
  ref.u = linalg::Matrix(n, m);
  ref.v = linalg::Matrix(k, m);
  for (std::size_t c = 0; c < m; ++c) {
    const std::size_t src = order[c];
    const double sigma = std::sqrt(std::max(s[src][src], 0.0));
    ref.s[c] = sigma;
    if (gram_right) {
      for (std::size_t j = 0; j < k; ++j) ref.v(j, c) = q[j][src];
      if (sigma > 0.0)
        for (std::size_t i = 0; i < n; ++i) {
          double acc = 0.0;
          for (std::size_t j = 0; j < k; ++j) acc += x(i, j) * ref.v(j, c);
          ref.u(i, c) = acc / sigma;
        }
    } else {
      for (std::size_t i = 0; i < n; ++i) ref.u(i, c) = q[i][src];
      if (sigma > 0.0)
        for (std::size_t j = 0; j < k; ++j) {
          double acc = 0.0;
          for (std::size_t i = 0; i < n; ++i) acc += x(i, j) * ref.u(i, c);
          ref.v(j, c) = acc / sigma;
        }
    }
  }
  // same sign convention as the production path so columns compare directly
  for (std::size_t c = 0; c < m; ++c) {
    std::size_t arg = 0;
    double best = 0.0;
    for (std::size_t j = 0; j < k; ++j)
      if (std::abs(ref.v(j, c)) > best) {
        best = std::abs(ref.v(j, c));
        arg = j;
      }
    if (ref.v(arg, c) < 0.0) {
      for (std::size_t j = 0; j < k; ++j) ref.v(j, c) = -ref.v(j, c);
      for (std::size_t i = 0; i < n; ++i) ref.u(i, c) = -ref.u(i, c);
    }
  }
  return ref;
}

}  // namespace uwloc::synth
