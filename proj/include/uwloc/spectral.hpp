#ifndef UWLOC_SPECTRAL_HPP
#define UWLOC_SPECTRAL_HPP

#include <complex>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "uwloc/common.hpp"
#include "uwloc/linalg.hpp"

namespace uwloc::spectral {

struct TimeSeries {
  std::vector<double> samples;
  int sample_rate = 0;  // Hz
  std::string receiver_id;
};

// Per-column scaling parameters for (v - min) / (max - min). Columns with
// max == min map to 0 and are flagged degenerate.
struct ColumnScale {
  std::vector<double> mins;
  std::vector<double> maxs;
  std::vector<uint8_t> degenerate;
};

struct ScalarScale {
  double min = 0.0;
  double max = 0.0;
  bool degenerate = false;
};

// Row-per-frame magnitude spectra, min-max scaled per column, plus the label
// scaling parameters so predictions can be mapped back to kilometers.
struct FeatureMatrix {
  linalg::Matrix values;  // N x K, entries in [0,1]
  ColumnScale column_scale;
  double label_min = 0.0;
  double label_max = 0.0;
  double frame_seconds = 1.0;

  std::size_t n_frames() const { return values.rows(); }
  std::size_t n_features() const { return values.cols(); }
  // Column j holds DFT bin j+1 (DC dropped), i.e. (j+1)/frame_seconds Hz.
  double column_frequency_hz(std::size_t j) const {
    return static_cast<double>(j + 1) / frame_seconds;
  }
};

struct LabelVector {
  std::vector<double> values;  // scaled to [0,1]; raw unit is kilometers
};

// Consecutive non-overlapping frames of frame_seconds * sample_rate samples;
// the trailing remainder is discarded.
std::vector<std::vector<double>> frame_signal(const TimeSeries& ts,
                                              double frame_seconds);

std::vector<std::complex<double>> dft(std::span<const double> frame);

// One-sided magnitudes at bins 1..L/2 (DC dropped, Nyquist kept), so a
// length-L frame yields L/2 features. No 1/L normalization.
std::vector<double> magnitude_spectrum(std::span<const double> frame);

// In-place scaling; returns the parameters needed to invert it.
ColumnScale min_max_scale_columns(linalg::Matrix& m);
ScalarScale min_max_scale_vector(std::vector<double>& v);

std::vector<double> inverse_scale_labels(std::span<const double> scaled,
                                         double label_min, double label_max);

std::pair<FeatureMatrix, LabelVector> build_feature_matrix(
    const TimeSeries& ts, std::span<const double> labels_km,
    double frame_seconds = 1.0);

// ---- persistence ----

// Binary layout: "UWFM", version u16, N u64, K u64, row-major f64 data,
// column mins (K f64), column maxs (K f64), label min f64, label max f64,
// frame seconds f64. All little-endian.
void save_feature_matrix(const FeatureMatrix& fm, const std::string& path);
FeatureMatrix load_feature_matrix(const std::string& path);

void export_feature_matrix_csv(const FeatureMatrix& fm, const std::string& path);

// WAV (PCM 16-bit little-endian mono) and raw f32 + sidecar ingestion.
TimeSeries read_wav(const std::string& path, const std::string& receiver_id = "");
void write_wav(const TimeSeries& ts, const std::string& path);

// Sidecar is a key=value text file declaring sample_rate and receiver_id.
TimeSeries read_raw_f32(const std::string& data_path, const std::string& meta_path);
void write_raw_f32(const TimeSeries& ts, const std::string& data_path,
                   const std::string& meta_path);

// CSV with header "index,range_km"; index is the 0-based frame index.
std::vector<double> read_labels_csv(const std::string& path);
void write_labels_csv(std::span<const double> labels_km, const std::string& path);

}  // namespace uwloc::spectral

#endif  // UWLOC_SPECTRAL_HPP
