#ifndef UWLOC_NN_TENSOR_HPP
#define UWLOC_NN_TENSOR_HPP

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "uwloc/common.hpp"

namespace uwloc::nn {

enum class Mode { Train, Eval };

// Row-major dense tensor; all arithmetic is 64-bit.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> s)
      : shape(std::move(s)), data(numel_of(shape), 0.0) {}

  static std::size_t numel_of(const std::vector<std::size_t>& s) {
    std::size_t n = 1;
    for (std::size_t d : s) n *= d;
    return s.empty() ? 0 : n;
  }

  std::size_t numel() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  std::size_t dim(std::size_t i) const { return shape[i]; }

  bool same_shape(const Tensor& other) const { return shape == other.shape; }

  std::string shape_string() const;
};

std::string shape_string(const std::vector<std::size_t>& shape);

void require_shape(const Tensor& t, const std::vector<std::size_t>& expected,
                   const std::string& context);

bool all_finite(const Tensor& t);

// Chunked index-range dispatch over worker threads; ranges are disjoint so
// results are bitwise identical at any thread count.
void set_num_threads(int n);
int num_threads();
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& fn);

}  // namespace uwloc::nn

#endif  // UWLOC_NN_TENSOR_HPP
