#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

#include "io_util.hpp"
#include "uwloc/spectral.hpp"

namespace uwloc::spectral {

using detail::format_double;
using detail::open_in;
using detail::open_out;
using detail::read_doubles;
using detail::read_pod;
using detail::write_doubles;
using detail::write_pod;

namespace {

constexpr char kFeatureMagic[4] = {'U', 'W', 'F', 'M'};
constexpr uint16_t kFeatureVersion = 1;

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

}  // namespace

void save_feature_matrix(const FeatureMatrix& fm, const std::string& path) {
  auto out = open_out(path, true);
  out.write(kFeatureMagic, 4);
  write_pod(out, kFeatureVersion);
  write_pod(out, static_cast<uint64_t>(fm.n_frames()));
  write_pod(out, static_cast<uint64_t>(fm.n_features()));
  write_doubles(out, fm.values.data(), fm.n_frames() * fm.n_features());
  write_doubles(out, fm.column_scale.mins.data(), fm.n_features());
  write_doubles(out, fm.column_scale.maxs.data(), fm.n_features());
  write_pod(out, fm.label_min);
  write_pod(out, fm.label_max);
  write_pod(out, fm.frame_seconds);
  if (!out) fail(ErrorCode::IoError, "short write: " + path);
}

FeatureMatrix load_feature_matrix(const std::string& path) {
  auto in = open_in(path, true);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kFeatureMagic, 4) != 0)
    fail(ErrorCode::IoError, "not a feature matrix file: " + path);
  const auto version = read_pod<uint16_t>(in, "version");
  if (version != kFeatureVersion)
    fail(ErrorCode::IoError, "unsupported feature matrix version " +
                                 std::to_string(version));
  const auto n = read_pod<uint64_t>(in, "row count");
  const auto k = read_pod<uint64_t>(in, "column count");
  FeatureMatrix fm;
  fm.values = linalg::Matrix(n, k);
  read_doubles(in, fm.values.data(), n * k, "matrix data");
  fm.column_scale.mins.resize(k);
  fm.column_scale.maxs.resize(k);
  read_doubles(in, fm.column_scale.mins.data(), k, "column mins");
  read_doubles(in, fm.column_scale.maxs.data(), k, "column maxs");
  fm.column_scale.degenerate.resize(k);
  for (uint64_t j = 0; j < k; ++j)
    fm.column_scale.degenerate[j] =
        fm.column_scale.maxs[j] > fm.column_scale.mins[j] ? 0 : 1;
  fm.label_min = read_pod<double>(in, "label min");
  fm.label_max = read_pod<double>(in, "label max");
  fm.frame_seconds = read_pod<double>(in, "frame seconds");
  return fm;
}

void export_feature_matrix_csv(const FeatureMatrix& fm, const std::string& path) {
  auto out = open_out(path);
  out << "frame";
  for (std::size_t j = 0; j < fm.n_features(); ++j) out << ",bin" << (j + 1);
  out << "\n";
  for (std::size_t i = 0; i < fm.n_frames(); ++i) {
    out << i;
    for (double v : fm.values.row(i)) out << ',' << format_double(v);
    out << "\n";
  }
}

// ---- WAV ----

TimeSeries read_wav(const std::string& path, const std::string& receiver_id) {
  auto in = open_in(path, true);
  char tag[4];
  in.read(tag, 4);
  if (!in || std::memcmp(tag, "RIFF", 4) != 0)
    fail(ErrorCode::IoError, "not a RIFF file: " + path);
  read_pod<uint32_t>(in, "riff size");
  in.read(tag, 4);
  if (!in || std::memcmp(tag, "WAVE", 4) != 0)
    fail(ErrorCode::IoError, "not a WAVE file: " + path);

  TimeSeries ts;
  ts.receiver_id = receiver_id;
  bool have_fmt = false;
  while (in.read(tag, 4)) {
    const auto chunk_size = read_pod<uint32_t>(in, "chunk size");
    if (std::memcmp(tag, "fmt ", 4) == 0) {
      const auto format = read_pod<uint16_t>(in, "wav format");
      const auto channels = read_pod<uint16_t>(in, "wav channels");
      const auto rate = read_pod<uint32_t>(in, "wav sample rate");
      read_pod<uint32_t>(in, "wav byte rate");
      read_pod<uint16_t>(in, "wav block align");
      const auto bits = read_pod<uint16_t>(in, "wav bit depth");
      if (format != 1 || channels != 1 || bits != 16)
        fail(ErrorCode::IoError,
             "expected PCM 16-bit mono WAV, got format=" + std::to_string(format) +
                 " channels=" + std::to_string(channels) +
                 " bits=" + std::to_string(bits));
      ts.sample_rate = static_cast<int>(rate);
      have_fmt = true;
      if (chunk_size > 16) in.seekg(chunk_size - 16, std::ios::cur);
    } else if (std::memcmp(tag, "data", 4) == 0) {
      if (!have_fmt) fail(ErrorCode::IoError, "WAV data chunk before fmt chunk");
      const std::size_t count = chunk_size / 2;
      std::vector<int16_t> raw(count);
      in.read(reinterpret_cast<char*>(raw.data()), chunk_size);
      if (!in) fail(ErrorCode::IoError, "truncated WAV data chunk");
      ts.samples.resize(count);
      for (std::size_t i = 0; i < count; ++i) ts.samples[i] = raw[i] / 32768.0;
      return ts;
    } else {
      in.seekg(chunk_size + (chunk_size & 1), std::ios::cur);
    }
  }
  fail(ErrorCode::IoError, "WAV file has no data chunk: " + path);
}

void write_wav(const TimeSeries& ts, const std::string& path) {
  auto out = open_out(path, true);
  const uint32_t data_bytes = static_cast<uint32_t>(ts.samples.size() * 2);
  out.write("RIFF", 4);
  write_pod(out, static_cast<uint32_t>(36 + data_bytes));
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  write_pod(out, static_cast<uint32_t>(16));
  write_pod(out, static_cast<uint16_t>(1));  // PCM
  write_pod(out, static_cast<uint16_t>(1));  // mono
  write_pod(out, static_cast<uint32_t>(ts.sample_rate));
  write_pod(out, static_cast<uint32_t>(ts.sample_rate * 2));
  write_pod(out, static_cast<uint16_t>(2));
  write_pod(out, static_cast<uint16_t>(16));
  out.write("data", 4);
  write_pod(out, data_bytes);
  for (double v : ts.samples) {
    const double scaled = std::clamp(v * 32768.0, -32768.0, 32767.0);
    write_pod(out, static_cast<int16_t>(std::lrint(scaled)));
  }
}

// ---- raw f32 + sidecar ----

TimeSeries read_raw_f32(const std::string& data_path, const std::string& meta_path) {
  TimeSeries ts;
  {
    auto meta = open_in(meta_path);
    std::string line;
    while (std::getline(meta, line)) {
      const auto eq = line.find('=');
      if (eq == std::string::npos) continue;
      const std::string key = trim(line.substr(0, eq));
      const std::string value = trim(line.substr(eq + 1));
      if (key == "sample_rate") {
        ts.sample_rate = std::stoi(value);
      } else if (key == "receiver_id") {
        ts.receiver_id = value;
      }
    }
  }
  if (ts.sample_rate <= 0)
    fail(ErrorCode::IoError, "sidecar missing positive sample_rate: " + meta_path);

  auto in = open_in(data_path, true);
  in.seekg(0, std::ios::end);
  const auto bytes = static_cast<std::size_t>(in.tellg());
  in.seekg(0, std::ios::beg);
  if (bytes % 4 != 0)
    fail(ErrorCode::IoError, "raw f32 file size not a multiple of 4: " + data_path);
  std::vector<float> raw(bytes / 4);
  in.read(reinterpret_cast<char*>(raw.data()), bytes);
  if (!in) fail(ErrorCode::IoError, "truncated raw f32 file: " + data_path);
  ts.samples.assign(raw.begin(), raw.end());
  return ts;
}

void write_raw_f32(const TimeSeries& ts, const std::string& data_path,
                   const std::string& meta_path) {
  {
    auto out = open_out(data_path, true);
    std::vector<float> raw(ts.samples.begin(), ts.samples.end());
    out.write(reinterpret_cast<const char*>(raw.data()), raw.size() * 4);
  }
  auto meta = open_out(meta_path);
  meta << "sample_rate = " << ts.sample_rate << "\n";
  meta << "receiver_id = " << ts.receiver_id << "\n";
}

// ---- labels CSV ----

std::vector<double> read_labels_csv(const std::string& path) {
  auto in = open_in(path);
  std::string line;
  if (!std::getline(in, line))
    fail(ErrorCode::IoError, "empty labels file: " + path);
  if (trim(line) != "index,range_km")
    fail(ErrorCode::IoError, "labels file must start with 'index,range_km': " + path);
  std::vector<double> labels;
  std::size_t expected = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos)
      fail(ErrorCode::IoError, "malformed labels row: " + line);
    const auto index = static_cast<std::size_t>(std::stoull(trim(line.substr(0, comma))));
    if (index != expected)
      fail(ErrorCode::IoError, "labels rows must be consecutive from 0, got index " +
                                   std::to_string(index) + " at row " +
                                   std::to_string(expected));
    labels.push_back(std::stod(trim(line.substr(comma + 1))));
    ++expected;
  }
  return labels;
}

void write_labels_csv(std::span<const double> labels_km, const std::string& path) {
  auto out = open_out(path);
  out << "index,range_km\n";
  for (std::size_t i = 0; i < labels_km.size(); ++i)
    out << i << ',' << format_double(labels_km[i]) << "\n";
}

}  // namespace uwloc::spectral
