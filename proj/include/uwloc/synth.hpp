#ifndef UWLOC_SYNTH_HPP
#define UWLOC_SYNTH_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "uwloc/linalg.hpp"
#include "uwloc/spectral.hpp"

namespace uwloc::synth {

struct Tone {
  double frequency_hz = 0.0;
  double amplitude = 1.0;
  std::string tag = "deep";
};

// Fully controlled test signal: tones whose amplitude follows the range
// trajectory (1/r^exponent spreading) with a slow sinusoidal modulation
// standing in for modal interference, plus white noise. Tone frequencies on
// DFT bin centers make the planted column indices unambiguous.
struct SynthConfig {
  double duration_s = 600.0;
  int sample_rate = 512;
  double frame_seconds = 1.0;
  std::vector<Tone> tones;  // empty selects the 13-tone default set
  double range_start_km = 1.0;
  double range_end_km = 9.0;
  double amplitude_exponent = 1.0;  // spreading law r^-exponent
  double modulation_depth = 0.3;
  double modulation_period_s = 60.0;
  double noise_std = 0.02;
  uint64_t seed = 1;
};

std::vector<Tone> default_tones();

struct SynthData {
  spectral::TimeSeries series;
  std::vector<double> labels_km;          // one per frame, frame midpoint range
  std::vector<std::size_t> planted_bins;  // 0-based feature-matrix columns
};

SynthData generate(const SynthConfig& cfg);

// key=value round-trip of the generator configuration.
std::string serialize_config(const SynthConfig& cfg);
SynthConfig parse_config(const std::string& text);
void save_config(const SynthConfig& cfg, const std::string& path);
SynthConfig load_config(const std::string& path);

// Exhaustive |Pearson correlation(column, y)| ranking, ties by index.
std::vector<std::size_t> brute_force_feature_ranking(const linalg::Matrix& x,
                                                     std::span<const double> y);

struct SvdReference {
  linalg::Matrix u;
  linalg::Vector s;
  linalg::Matrix v;
};

// Independent full SVD for matrices with min(N,K) <= 64: classical
// largest-pivot Jacobi sweeps on the smaller Gram matrix, run to 1e-14
// off-diagonal norm. Shares no code with the production decomposition.
SvdReference reference_svd(const linalg::Matrix& x);

}  // namespace uwloc::synth

#endif  // UWLOC_SYNTH_HPP
