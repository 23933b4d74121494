#include "uwloc/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace uwloc::spectral {

namespace {

std::size_t smallest_prime_factor(std::size_t n) {
  if (n % 2 == 0) return 2;
  for (std::size_t f = 3; f * f <= n; f += 2)
    if (n % f == 0) return f;
  return n;
}

// Twiddle table e^{-2*pi*i*j/n} for the top-level length, shared by all
// recursion levels through index striding.
std::vector<std::complex<double>> make_twiddles(std::size_t n) {
  std::vector<std::complex<double>> tw(n);
  for (std::size_t j = 0; j < n; ++j) {
    const double angle = -2.0 * std::numbers::pi * static_cast<double>(j) /
                         static_cast<double>(n);
    tw[j] = {std::cos(angle), std::sin(angle)};
  }
  return tw;
}

// Mixed-radix Cooley-Tukey, splitting by the smallest prime factor. Prime
// lengths fall back to the direct O(n^2) transform.
void fft_recurse(const std::complex<double>* x, std::size_t n,
                 std::size_t in_stride, std::complex<double>* out,
                 const std::vector<std::complex<double>>& tw,
                 std::size_t tw_stride) {
  if (n == 1) {
    out[0] = x[0];
    return;
  }
  const std::size_t p = smallest_prime_factor(n);
  if (p == n) {
    const std::size_t top = tw.size();
    for (std::size_t k = 0; k < n; ++k) {
      std::complex<double> acc{0.0, 0.0};
      for (std::size_t j = 0; j < n; ++j)
        acc += tw[(j * k * tw_stride) % top] * x[j * in_stride];
      out[k] = acc;
    }
    return;
  }
  const std::size_t m = n / p;
  for (std::size_t r = 0; r < p; ++r)
    fft_recurse(x + r * in_stride, m, in_stride * p, out + r * m, tw,
                tw_stride * p);

  const std::size_t top = tw.size();
  std::vector<std::complex<double>> mixed(n);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t km = k % m;
    std::complex<double> acc{0.0, 0.0};
    for (std::size_t r = 0; r < p; ++r)
      acc += tw[(r * k * tw_stride) % top] * out[r * m + km];
    mixed[k] = acc;
  }
  std::copy(mixed.begin(), mixed.end(), out);
}

}  // namespace

std::vector<std::complex<double>> dft(std::span<const double> frame) {
  const std::size_t n = frame.size();
  std::vector<std::complex<double>> x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = {frame[i], 0.0};
  if (n <= 1) return x;
  const auto tw = make_twiddles(n);
  std::vector<std::complex<double>> out(n);
  fft_recurse(x.data(), n, 1, out.data(), tw, 1);
  return out;
}

std::vector<std::vector<double>> frame_signal(const TimeSeries& ts,
                                              double frame_seconds) {
  if (ts.sample_rate <= 0)
    fail(ErrorCode::EmptySignal, "time series has non-positive sample rate");
  const double exact = frame_seconds * ts.sample_rate;
  const auto frame_len = static_cast<std::size_t>(std::llround(exact));
  if (frame_len == 0)
    fail(ErrorCode::EmptySignal, "frame shorter than one sample");
  if (ts.samples.size() < frame_len)
    fail(ErrorCode::EmptySignal,
         "signal has " + std::to_string(ts.samples.size()) +
             " samples, need at least " + std::to_string(frame_len));
  const std::size_t n_frames = ts.samples.size() / frame_len;
  std::vector<std::vector<double>> frames(n_frames);
  for (std::size_t f = 0; f < n_frames; ++f)
    frames[f].assign(ts.samples.begin() + f * frame_len,
                     ts.samples.begin() + (f + 1) * frame_len);
  return frames;
}

std::vector<double> magnitude_spectrum(std::span<const double> frame) {
  if (frame.size() % 2 != 0 || frame.empty())
    fail(ErrorCode::OddFrameLength,
         "frame length must be even and positive, got " +
             std::to_string(frame.size()));
  const auto spectrum = dft(frame);
  const std::size_t half = frame.size() / 2;
  std::vector<double> mags(half);
  for (std::size_t k = 1; k <= half; ++k) mags[k - 1] = std::abs(spectrum[k]);
  return mags;
}

ColumnScale min_max_scale_columns(linalg::Matrix& m) {
  if (m.empty()) fail(ErrorCode::EmptySignal, "cannot scale an empty matrix");
  const std::size_t k = m.cols();
  ColumnScale scale;
  scale.mins.assign(k, 0.0);
  scale.maxs.assign(k, 0.0);
  scale.degenerate.assign(k, 0);
  for (std::size_t j = 0; j < k; ++j) {
    double lo = m(0, j), hi = m(0, j);
    for (std::size_t i = 1; i < m.rows(); ++i) {
      lo = std::min(lo, m(i, j));
      hi = std::max(hi, m(i, j));
    }
    scale.mins[j] = lo;
    scale.maxs[j] = hi;
    if (hi > lo) {
      const double inv = 1.0 / (hi - lo);
      for (std::size_t i = 0; i < m.rows(); ++i) m(i, j) = (m(i, j) - lo) * inv;
    } else {
      scale.degenerate[j] = 1;
      for (std::size_t i = 0; i < m.rows(); ++i) m(i, j) = 0.0;
    }
  }
  return scale;
}

ScalarScale min_max_scale_vector(std::vector<double>& v) {
  if (v.empty()) fail(ErrorCode::EmptySignal, "cannot scale an empty vector");
  ScalarScale s;
  auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  s.min = *lo;
  s.max = *hi;
  if (s.max > s.min) {
    const double inv = 1.0 / (s.max - s.min);
    for (double& x : v) x = (x - s.min) * inv;
  } else {
    s.degenerate = true;
    std::fill(v.begin(), v.end(), 0.0);
  }
  return s;
}

std::vector<double> inverse_scale_labels(std::span<const double> scaled,
                                         double label_min, double label_max) {
  if (!(label_max > label_min))
    fail(ErrorCode::DegenerateRange, "label_max must exceed label_min");
  std::vector<double> km(scaled.size());
  for (std::size_t i = 0; i < scaled.size(); ++i)
    km[i] = scaled[i] * (label_max - label_min) + label_min;
  return km;
}

std::pair<FeatureMatrix, LabelVector> build_feature_matrix(
    const TimeSeries& ts, std::span<const double> labels_km,
    double frame_seconds) {
  const auto frames = frame_signal(ts, frame_seconds);
  if (labels_km.size() != frames.size())
    fail(ErrorCode::LabelLengthMismatch,
         "got " + std::to_string(labels_km.size()) + " labels for " +
             std::to_string(frames.size()) + " frames");

  const std::size_t k = frames[0].size() / 2;
  FeatureMatrix fm;
  fm.values = linalg::Matrix(frames.size(), k);
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const auto mags = magnitude_spectrum(frames[i]);
    std::copy(mags.begin(), mags.end(), fm.values.row(i).begin());
  }
  fm.column_scale = min_max_scale_columns(fm.values);
  fm.frame_seconds = frame_seconds;

  LabelVector labels;
  labels.values.assign(labels_km.begin(), labels_km.end());
  const ScalarScale ls = min_max_scale_vector(labels.values);
  fm.label_min = ls.min;
  fm.label_max = ls.max;
  return {std::move(fm), std::move(labels)};
}

}  // namespace uwloc::spectral
