#include "uwloc/nn/tensor.hpp"

#include <atomic>
#include <cmath>
#include <thread>

namespace uwloc::nn {

std::string shape_string(const std::vector<std::size_t>& shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + ")";
}

std::string Tensor::shape_string() const { return nn::shape_string(shape); }

void require_shape(const Tensor& t, const std::vector<std::size_t>& expected,
                   const std::string& context) {
  if (t.shape != expected)
    fail(ErrorCode::ShapeMismatch, context + ": expected " +
                                       nn::shape_string(expected) + ", got " +
                                       t.shape_string());
}

bool all_finite(const Tensor& t) {
  for (double v : t.data)
    if (!std::isfinite(v)) return false;
  return true;
}

namespace {
std::atomic<int> g_threads{1};
}

void set_num_threads(int n) { g_threads.store(n < 1 ? 1 : n); }
int num_threads() { return g_threads.load(); }

void parallel_for(std::size_t count, const std::function<void(std::size_t)>& fn) {
  const int workers = num_threads();
  if (workers <= 1 || count < 2) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  const std::size_t n_workers = std::min<std::size_t>(workers, count);
  std::vector<std::thread> pool;
  pool.reserve(n_workers);
  for (std::size_t w = 0; w < n_workers; ++w) {
    pool.emplace_back([&, w]() {
      for (std::size_t i = w; i < count; i += n_workers) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace uwloc::nn
