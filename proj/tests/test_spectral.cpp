#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <numbers>
#include <random>

#include "test_helpers.hpp"
#include "uwloc/spectral.hpp"

using namespace uwloc;
using namespace uwloc::spectral;

namespace {

TimeSeries tone_series(double freq, int rate, double seconds, double amp = 1.0) {
  TimeSeries ts;
  ts.sample_rate = rate;
  ts.receiver_id = "t";
  const auto n = static_cast<std::size_t>(seconds * rate);
  ts.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    ts.samples[i] =
        amp * std::sin(2.0 * std::numbers::pi * freq * i / rate);
  return ts;
}

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("uwloc_test_" + name);
}

}  // namespace

TEST_CASE("frame_signal partitions without overlap and drops the remainder") {
  TimeSeries ts;
  ts.sample_rate = 1500;
  ts.samples.resize(1500 * 4 + 700);
  for (std::size_t i = 0; i < ts.samples.size(); ++i)
    ts.samples[i] = static_cast<double>(i);
  const auto frames = frame_signal(ts, 1.0);
  REQUIRE(frames.size() == 4);
  // concatenation reproduces the first N*frame_len samples exactly
  std::size_t idx = 0;
  for (const auto& frame : frames) {
    CHECK(frame.size() == 1500);
    for (double v : frame) CHECK(v == static_cast<double>(idx++));
  }
}

TEST_CASE("frame_signal single frame and short-signal error") {
  TimeSeries ts;
  ts.sample_rate = 1500;
  ts.samples.assign(1500, 0.25);
  CHECK(frame_signal(ts, 1.0).size() == 1);
  ts.samples.resize(1499);
  CHECK_THROWS_AS(frame_signal(ts, 1.0), Error);
}

TEST_CASE("75 minutes at 1500 Hz gives 4500 frames of 1500 samples") {
  TimeSeries ts;
  ts.sample_rate = 1500;
  ts.samples.assign(static_cast<std::size_t>(75 * 60) * 1500, 0.0);
  const auto frames = frame_signal(ts, 1.0);
  CHECK(frames.size() == 4500);
  CHECK(frames[0].size() == 1500);
}

TEST_CASE("magnitude_spectrum matches the direct DFT oracle") {
  std::mt19937_64 rng(7);
  for (const std::size_t len : {16u, 60u, 150u, 1500u}) {
    const auto frame = test::random_vector(len, rng);
    const auto mags = magnitude_spectrum(frame);
    REQUIRE(mags.size() == len / 2);
    const auto oracle = test::naive_dft(frame);
    for (std::size_t k = 1; k <= len / 2; ++k)
      CHECK(mags[k - 1] ==
            doctest::Approx(std::abs(oracle[k])).epsilon(1e-9));
  }
}

TEST_CASE("pure integer-period tone concentrates in a single bin") {
  const auto ts = tone_series(100.0, 1500, 1.0);
  const auto mags = magnitude_spectrum(ts.samples);
  REQUIRE(mags.size() == 750);
  // bin index 100 -> column 99; |DFT| = L/2 * amplitude
  CHECK(mags[99] == doctest::Approx(750.0).epsilon(1e-9));
  for (std::size_t j = 0; j < mags.size(); ++j)
    if (j != 99) CHECK(mags[j] < 1e-9 * 750.0);
}

TEST_CASE("all-zero frame gives an all-zero spectrum") {
  const std::vector<double> zeros(64, 0.0);
  for (double v : magnitude_spectrum(zeros)) CHECK(v == 0.0);
}

TEST_CASE("odd frame length is rejected") {
  CHECK_THROWS_AS(magnitude_spectrum(std::vector<double>(15, 1.0)), Error);
}

TEST_CASE("min-max scaling endpoints, degenerate columns and round trip") {
  linalg::Matrix m(3, 2);
  m(0, 0) = 2; m(1, 0) = 4; m(2, 0) = 6;
  m(0, 1) = 5; m(1, 1) = 5; m(2, 1) = 5;
  const auto scale = min_max_scale_columns(m);
  CHECK(m(0, 0) == doctest::Approx(0.0));
  CHECK(m(1, 0) == doctest::Approx(0.5));
  CHECK(m(2, 0) == doctest::Approx(1.0));
  CHECK(scale.degenerate[0] == 0);
  CHECK(scale.degenerate[1] == 1);
  for (std::size_t i = 0; i < 3; ++i) CHECK(m(i, 1) == 0.0);

  std::mt19937_64 rng(11);
  linalg::Matrix r = test::random_matrix(10, 4, rng, -3.0, 9.0);
  const linalg::Matrix original = r;
  const auto params = min_max_scale_columns(r);
  for (std::size_t i = 0; i < r.rows(); ++i)
    for (std::size_t j = 0; j < r.cols(); ++j) {
      CHECK(r(i, j) >= 0.0);
      CHECK(r(i, j) <= 1.0);
      const double restored =
          r(i, j) * (params.maxs[j] - params.mins[j]) + params.mins[j];
      CHECK(restored == doctest::Approx(original(i, j)).epsilon(1e-12));
    }

  // idempotence: the scaled matrix's own parameters are 0/1, rescaling is a no-op
  linalg::Matrix twice = r;
  const auto params2 = min_max_scale_columns(twice);
  for (std::size_t j = 0; j < twice.cols(); ++j) {
    CHECK(params2.mins[j] == doctest::Approx(0.0));
    CHECK(params2.maxs[j] == doctest::Approx(1.0));
  }
  for (std::size_t i = 0; i < twice.rows(); ++i)
    for (std::size_t j = 0; j < twice.cols(); ++j)
      CHECK(twice(i, j) == doctest::Approx(r(i, j)).epsilon(1e-12));
}

TEST_CASE("label scaling and inversion") {
  std::vector<double> labels{1.0, 3.0, 5.0};
  const auto s = min_max_scale_vector(labels);
  CHECK(labels[0] == doctest::Approx(0.0));
  CHECK(labels[1] == doctest::Approx(0.5));
  CHECK(labels[2] == doctest::Approx(1.0));
  const auto km = inverse_scale_labels(labels, s.min, s.max);
  CHECK(km[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(km[2] == doctest::Approx(5.0).epsilon(1e-12));

  const std::vector<double> scaled{0.0, 1.0};
  const auto r = inverse_scale_labels(scaled, 1.0, 5.0);
  CHECK(r[0] == doctest::Approx(1.0));
  CHECK(r[1] == doctest::Approx(5.0));
  CHECK(inverse_scale_labels(std::vector<double>{0.5}, 0.0, 9.0)[0] ==
        doctest::Approx(4.5));
  CHECK_THROWS_AS(inverse_scale_labels(scaled, 2.0, 2.0), Error);
}

TEST_CASE("build_feature_matrix shapes, scaling metadata and errors") {
  auto ts = tone_series(40.0, 256, 4.0);
  std::vector<double> labels{1.0, 2.0, 3.0, 4.0};
  auto [fm, lv] = build_feature_matrix(ts, labels, 1.0);
  CHECK(fm.n_frames() == 4);
  CHECK(fm.n_features() == 128);  // frame_len / 2 always
  CHECK(fm.frame_seconds == 1.0);
  CHECK(fm.label_min == 1.0);
  CHECK(fm.label_max == 4.0);
  CHECK(lv.values.front() == doctest::Approx(0.0));
  CHECK(lv.values.back() == doctest::Approx(1.0));
  for (std::size_t i = 0; i < fm.n_frames(); ++i)
    for (double v : fm.values.row(i)) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  CHECK(fm.column_frequency_hz(0) == doctest::Approx(1.0));

  std::vector<double> bad{1.0, 2.0};
  CHECK_THROWS_AS(build_feature_matrix(ts, bad, 1.0), Error);
}

TEST_CASE("constant signal: every degenerate column maps to zero") {
  TimeSeries ts;
  ts.sample_rate = 64;
  ts.samples.assign(128, 0.7);
  std::vector<double> labels{1.0, 2.0};
  auto [fm, lv] = build_feature_matrix(ts, labels, 1.0);
  REQUIRE(fm.n_frames() == 2);
  for (std::size_t j = 0; j < fm.n_features(); ++j) {
    CHECK(fm.values(0, j) == fm.values(1, j));
    if (fm.column_scale.degenerate[j]) CHECK(fm.values(0, j) == 0.0);
  }
}

TEST_CASE("feature matrix binary round trip") {
  std::mt19937_64 rng(3);
  auto ts = tone_series(10.0, 64, 3.0);
  for (double& v : ts.samples) v += 0.01 * rng() / double(rng.max());
  std::vector<double> labels{2.0, 4.0, 8.0};
  auto [fm, lv] = build_feature_matrix(ts, labels, 1.0);

  const auto path = temp_file("fm.uwfm");
  save_feature_matrix(fm, path.string());
  const auto loaded = load_feature_matrix(path.string());
  CHECK(loaded.values == fm.values);
  CHECK(loaded.column_scale.mins == fm.column_scale.mins);
  CHECK(loaded.column_scale.maxs == fm.column_scale.maxs);
  CHECK(loaded.label_min == fm.label_min);
  CHECK(loaded.label_max == fm.label_max);
  CHECK(loaded.frame_seconds == fm.frame_seconds);
  std::filesystem::remove(path);
}

TEST_CASE("wav round trip preserves samples to 16-bit precision") {
  auto ts = tone_series(5.0, 100, 2.0, 0.5);
  const auto path = temp_file("sig.wav");
  write_wav(ts, path.string());
  const auto back = read_wav(path.string(), "t");
  REQUIRE(back.samples.size() == ts.samples.size());
  CHECK(back.sample_rate == 100);
  for (std::size_t i = 0; i < ts.samples.size(); ++i)
    CHECK(back.samples[i] == doctest::Approx(ts.samples[i]).epsilon(1e-4));
  std::filesystem::remove(path);
}

TEST_CASE("raw f32 + sidecar round trip") {
  auto ts = tone_series(5.0, 100, 1.0, 0.25);
  ts.receiver_id = "r9";
  const auto data = temp_file("sig.f32");
  const auto meta = temp_file("sig.meta");
  write_raw_f32(ts, data.string(), meta.string());
  const auto back = read_raw_f32(data.string(), meta.string());
  CHECK(back.sample_rate == 100);
  CHECK(back.receiver_id == "r9");
  REQUIRE(back.samples.size() == ts.samples.size());
  for (std::size_t i = 0; i < ts.samples.size(); ++i)
    CHECK(back.samples[i] ==
          doctest::Approx(ts.samples[i]).epsilon(1e-7));
  std::filesystem::remove(data);
  std::filesystem::remove(meta);
}

TEST_CASE("labels csv round trip and header validation") {
  const std::vector<double> labels{0.5, 1.25, 9.75};
  const auto path = temp_file("labels.csv");
  write_labels_csv(labels, path.string());
  const auto back = read_labels_csv(path.string());
  REQUIRE(back.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) CHECK(back[i] == labels[i]);
  std::filesystem::remove(path);
}
