#ifndef UWLOC_DATASET_HPP
#define UWLOC_DATASET_HPP

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "uwloc/linalg.hpp"

namespace uwloc::dataset {

using linalg::Matrix;
using linalg::Vector;

struct SplitScheme {
  unsigned modulus = 2;  // 2, 4, 8 give the 50/25/12.5% label fractions
};

// 0-based row indices; the split formula is 1-based (row i trains iff
// (i+1) mod m == 1), matching the published scheme.
struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

SplitIndices split_indices(std::size_t n, unsigned modulus);

// Pretraining set: every row, labels deliberately absent.
struct StepOneDataset {
  Matrix rows;
};

struct StepTwoDataset {
  Matrix train_rows;
  Vector train_labels;
  Matrix test_rows;
  Vector test_labels;
  SplitIndices indices;
};

StepOneDataset build_step_one(const Matrix& selected);

StepTwoDataset build_step_two(const Matrix& selected, std::span<const double> labels,
                              SplitScheme scheme);

// index,partition rows ("train"/"test") so a split can be audited and replayed.
void export_split_csv(const SplitIndices& split, std::size_t n,
                      const std::string& path);

// Seeded epoch shuffling; every row appears exactly once per epoch and the
// final short batch is emitted.
class BatchIterator {
 public:
  BatchIterator(std::size_t n_rows, std::size_t batch_size, uint64_t seed);

  // Deterministic batch schedule for the next epoch.
  std::vector<std::vector<std::size_t>> next_epoch();

 private:
  std::size_t n_rows_;
  std::size_t batch_size_;
  std::mt19937_64 rng_;
};

}  // namespace uwloc::dataset

#endif  // UWLOC_DATASET_HPP
