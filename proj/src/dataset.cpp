#include "uwloc/dataset.hpp"

#include <algorithm>
#include <numeric>

#include "io_util.hpp"

namespace uwloc::dataset {

SplitIndices split_indices(std::size_t n, unsigned modulus) {
  if (modulus < 2)
    fail(ErrorCode::InvalidModulus,
         "split modulus must be >= 2, got " + std::to_string(modulus));
  if (n < modulus)
    fail(ErrorCode::InvalidModulus, "need at least modulus rows, got " +
                                        std::to_string(n) + " for m=" +
                                        std::to_string(modulus));
  SplitIndices split;
  for (std::size_t i = 0; i < n; ++i) {
    if ((i + 1) % modulus == 1)
      split.train.push_back(i);
    else
      split.test.push_back(i);
  }
  return split;
}

StepOneDataset build_step_one(const Matrix& selected) {
  if (selected.empty())
    fail(ErrorCode::EmptySignal, "step-one dataset needs at least one row");
  return StepOneDataset{selected};
}

StepTwoDataset build_step_two(const Matrix& selected, std::span<const double> labels,
                              SplitScheme scheme) {
  if (labels.size() != selected.rows())
    fail(ErrorCode::LengthMismatch,
         "label count " + std::to_string(labels.size()) + " != row count " +
             std::to_string(selected.rows()));
  StepTwoDataset ds;
  ds.indices = split_indices(selected.rows(), scheme.modulus);

  const auto gather = [&](const std::vector<std::size_t>& idx, Matrix& rows,
                          Vector& out_labels) {
    rows = Matrix(idx.size(), selected.cols());
    out_labels.resize(idx.size());
    for (std::size_t r = 0; r < idx.size(); ++r) {
      auto src = selected.row(idx[r]);
      std::copy(src.begin(), src.end(), rows.row(r).begin());
      out_labels[r] = labels[idx[r]];
    }
  };
  gather(ds.indices.train, ds.train_rows, ds.train_labels);
  gather(ds.indices.test, ds.test_rows, ds.test_labels);
  return ds;
}

void export_split_csv(const SplitIndices& split, std::size_t n,
                      const std::string& path) {
  std::vector<uint8_t> is_train(n, 0);
  for (std::size_t i : split.train) is_train[i] = 1;
  auto out = detail::open_out(path);
  out << "index,partition\n";
  for (std::size_t i = 0; i < n; ++i)
    out << i << ',' << (is_train[i] ? "train" : "test") << "\n";
}

BatchIterator::BatchIterator(std::size_t n_rows, std::size_t batch_size,
                             uint64_t seed)
    : n_rows_(n_rows), batch_size_(batch_size), rng_(seed) {
  if (batch_size_ == 0)
    fail(ErrorCode::ConfigError, "batch size must be at least 1");
}

std::vector<std::vector<std::size_t>> BatchIterator::next_epoch() {
  std::vector<std::size_t> order(n_rows_);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng_);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < n_rows_; start += batch_size_) {
    const std::size_t end = std::min(start + batch_size_, n_rows_);
    batches.emplace_back(order.begin() + start, order.begin() + end);
  }
  return batches;
}

}  // namespace uwloc::dataset
