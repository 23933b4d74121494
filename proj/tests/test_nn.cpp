#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "test_helpers.hpp"
#include "uwloc/nn/gradcheck.hpp"
#include "uwloc/nn/layers.hpp"

using namespace uwloc;
using namespace uwloc::nn;

namespace {

struct Harness {
  ParameterStore store;
  std::unique_ptr<Layer> layer;
  Tensor input;
  Tensor target;
  Tensor input_grad;
  Mode mode = Mode::Train;

  void randomize(uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    for (double& v : input.data) v = dist(rng);
    target = Tensor(layer->infer_shape(input.shape));
    for (double& v : target.data) v = dist(rng);
  }

  double loss() {
    const Tensor out = layer->forward(input, mode);
    return mse_loss(out, target).first;
  }

  void grad() {
    store.zero_grads();
    const Tensor out = layer->forward(input, mode);
    auto [l, g] = mse_loss(out, target);
    input_grad = layer->backward(g);
  }

  double check(double h = 1e-5) {
    auto targets = parameter_targets(store);
    targets.push_back({"input", &input, &input_grad});
    const auto report = check_gradients([this] { return loss(); },
                                        [this] { grad(); }, targets, h, 0, 5);
    return report.max_rel_error;
  }
};

}  // namespace

TEST_CASE("pointwise layer definitions") {
  std::mt19937_64 rng(1);
  {
    Sigmoid s("s");
    Tensor x({1, 1});
    x.data[0] = 0.0;
    CHECK(s.forward(x, Mode::Eval).data[0] == doctest::Approx(0.5));
    // derivative at 0 is 1/4
    Tensor g({1, 1});
    g.data[0] = 1.0;
    CHECK(s.backward(g).data[0] == doctest::Approx(0.25));
  }
  {
    LeakyRelu l("l", 0.01);
    Tensor x({1, 2});
    x.data = {-1.0, 2.0};
    const Tensor y = l.forward(x, Mode::Eval);
    CHECK(y.data[0] == doctest::Approx(-0.01));
    CHECK(y.data[1] == doctest::Approx(2.0));
  }
  {
    // identity-weight dense maps input to itself
    ParameterStore store;
    Dense d(store, "d", 3, 3, rng);
    auto* w = store.find("d.weight");
    std::fill(w->value.data.begin(), w->value.data.end(), 0.0);
    for (std::size_t i = 0; i < 3; ++i) w->value.data[i * 3 + i] = 1.0;
    Tensor x({2, 3});
    x.data = {1, 2, 3, 4, 5, 6};
    const Tensor y = d.forward(x, Mode::Eval);
    for (std::size_t i = 0; i < 6; ++i)
      CHECK(y.data[i] == doctest::Approx(x.data[i]));
  }
}

TEST_CASE("conv shape arithmetic") {
  std::mt19937_64 rng(2);
  ParameterStore store;
  Conv1d conv(store, "c", 1, 738, 13, 1, rng);
  CHECK(conv.infer_shape({4, 1, 750}) == std::vector<std::size_t>{4, 738, 738});
  CHECK_THROWS_AS(conv.infer_shape({4, 1, 12}), Error);
  CHECK_THROWS_AS(conv.infer_shape({4, 2, 750}), Error);

  Conv2d conv2(store, "c2", 1, 128, 3, 2, rng);
  CHECK(conv2.infer_shape({1, 1, 114, 114}) ==
        std::vector<std::size_t>{1, 128, 56, 56});

  ConvTranspose2d tconv(store, "t", 3, 128, 4, 2, 27, 27, rng);
  CHECK(tconv.infer_shape({1, 3, 13, 13}) ==
        std::vector<std::size_t>{1, 128, 27, 27});
}

TEST_CASE("conv then matching transposed conv restores the length") {
  std::mt19937_64 rng(3);
  for (const auto& [len, kernel, stride] :
       std::vector<std::tuple<std::size_t, std::size_t, std::size_t>>{
           {9, 3, 2}, {10, 4, 2}, {16, 4, 3}, {21, 5, 4}}) {
    REQUIRE((len - kernel) % stride == 0);  // exact tiling
    ParameterStore store;
    Conv1d down(store, "down", 1, 2, kernel, stride, rng);
    ConvTranspose1d up(store, "up", 2, 1, kernel, stride, 0, rng);
    Tensor x({1, 1, len});
    const auto mid = down.infer_shape(x.shape);
    const auto back = up.infer_shape(mid);
    CHECK(back == x.shape);
  }
  // stride-2 3x3 encoder against the 4x4 decoder cropped to the source side
  for (std::size_t side = 5; side <= 120; ++side) {
    ParameterStore store;
    Conv2d down(store, "down", 1, 2, 3, 2, rng);
    const auto mid = down.infer_shape({1, 1, side, side});
    ConvTranspose2d up(store, "up", 2, 1, 4, 2, side, side, rng);
    CHECK(up.infer_shape(mid) == std::vector<std::size_t>{1, 1, side, side});
  }
}

TEST_CASE("gradients: Dense") {
  Harness h;
  std::mt19937_64 rng(11);
  h.layer = std::make_unique<Dense>(h.store, "dense", 6, 4, rng);
  h.input = Tensor({3, 6});
  h.randomize(21);
  CHECK(h.check() < 1e-4);
}

TEST_CASE("gradients: Conv1d stride 1 and 2") {
  for (std::size_t stride : {std::size_t{1}, std::size_t{2}}) {
    Harness h;
    std::mt19937_64 rng(12 + stride);
    h.layer = std::make_unique<Conv1d>(h.store, "conv", 2, 3, 3, stride, rng);
    h.input = Tensor({2, 2, 11});
    h.randomize(22 + stride);
    CHECK(h.check() < 1e-4);
  }
}

TEST_CASE("gradients: Conv2d") {
  Harness h;
  std::mt19937_64 rng(13);
  h.layer = std::make_unique<Conv2d>(h.store, "conv2", 2, 3, 3, 2, rng);
  h.input = Tensor({2, 2, 9, 9});
  h.randomize(23);
  CHECK(h.check() < 1e-4);
}

TEST_CASE("gradients: ConvTranspose1d with crop") {
  Harness h;
  std::mt19937_64 rng(14);
  h.layer = std::make_unique<ConvTranspose1d>(h.store, "tconv", 3, 2, 4, 2, 9, rng);
  h.input = Tensor({2, 3, 4});
  h.randomize(24);
  CHECK(h.check() < 1e-4);
}

TEST_CASE("gradients: ConvTranspose2d with crop") {
  Harness h;
  std::mt19937_64 rng(15);
  h.layer =
      std::make_unique<ConvTranspose2d>(h.store, "tconv2", 2, 2, 4, 2, 9, 9, rng);
  h.input = Tensor({2, 2, 4, 4});
  h.randomize(25);
  CHECK(h.check() < 1e-4);
}

TEST_CASE("gradients: BatchNorm in both modes") {
  {
    Harness h;
    h.layer = std::make_unique<BatchNorm>(h.store, "bn", 3);
    h.input = Tensor({4, 3, 5});
    h.randomize(26);
    CHECK(h.check() < 1e-4);
  }
  {
    Harness h;
    h.mode = Mode::Eval;
    h.layer = std::make_unique<BatchNorm>(h.store, "bn", 3);
    h.input = Tensor({4, 3, 5});
    h.randomize(27);
    CHECK(h.check() < 1e-4);
  }
}

TEST_CASE("gradients: activations and eval-mode dropout") {
  {
    Harness h;
    h.layer = std::make_unique<LeakyRelu>("lrelu", 0.01);
    h.input = Tensor({3, 8});
    h.randomize(28);
    CHECK(h.check() < 1e-6);
  }
  {
    Harness h;
    h.layer = std::make_unique<Sigmoid>("sig");
    h.input = Tensor({3, 8});
    h.randomize(29);
    CHECK(h.check() < 1e-6);
  }
  {
    Harness h;
    h.mode = Mode::Eval;
    std::mt19937_64 rng(5);
    h.layer = std::make_unique<Dropout>("drop", 0.3, &rng);
    h.input = Tensor({3, 8});
    h.randomize(30);
    CHECK(h.check() < 1e-6);
  }
}

TEST_CASE("gradients: Dense+Sigmoid+MSE chain") {
  ParameterStore store;
  std::mt19937_64 rng(31);
  Dense dense(store, "dense", 5, 3, rng);
  Sigmoid sigmoid("sig");
  Tensor input({4, 5});
  Tensor target({4, 3});
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  for (double& v : input.data) v = dist(rng);
  for (double& v : target.data) v = dist(rng);
  Tensor input_grad;

  const auto loss_fn = [&] {
    return mse_loss(
               sigmoid.forward(dense.forward(input, Mode::Train), Mode::Train),
               target)
        .first;
  };
  const auto grad_fn = [&] {
    store.zero_grads();
    auto [l, g] = mse_loss(
        sigmoid.forward(dense.forward(input, Mode::Train), Mode::Train), target);
    input_grad = dense.backward(sigmoid.backward(g));
  };
  auto targets = parameter_targets(store);
  targets.push_back({"input", &input, &input_grad});
  CHECK(check_gradients(loss_fn, grad_fn, targets).max_rel_error < 1e-6);
}

TEST_CASE("mse_loss values and gradient") {
  Tensor a({1, 2}), b({1, 2});
  a.data = {1.0, 1.0};
  b.data = {0.0, 0.0};
  auto [loss, grad] = mse_loss(a, b);
  CHECK(loss == doctest::Approx(1.0));
  CHECK(grad.data[0] == doctest::Approx(1.0));
  CHECK(grad.data[1] == doctest::Approx(1.0));
  auto [zero, zgrad] = mse_loss(a, a);
  CHECK(zero == 0.0);
  Tensor c({2, 1});
  CHECK_THROWS_AS(mse_loss(a, c), Error);
}

TEST_CASE("batchnorm train-mode statistics before scale/shift") {
  ParameterStore store;
  BatchNorm bn(store, "bn", 2);
  Tensor x({8, 2, 16});
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> dist(-4.0, 10.0);
  for (double& v : x.data) v = dist(rng);
  const Tensor y = bn.forward(x, Mode::Train);
  for (std::size_t c = 0; c < 2; ++c) {
    double mean = 0.0, var = 0.0;
    std::size_t count = 0;
    for (std::size_t b = 0; b < 8; ++b)
      for (std::size_t i = 0; i < 16; ++i) {
        mean += y.data[(b * 2 + c) * 16 + i];
        ++count;
      }
    mean /= static_cast<double>(count);
    for (std::size_t b = 0; b < 8; ++b)
      for (std::size_t i = 0; i < 16; ++i) {
        const double d = y.data[(b * 2 + c) * 16 + i] - mean;
        var += d * d;
      }
    var /= static_cast<double>(count);
    CHECK(std::abs(mean) < 1e-8);
    CHECK(var == doctest::Approx(1.0).epsilon(1e-4));  // epsilon shifts it a bit
  }
}

TEST_CASE("dropout train mode scales by 1/(1-p), eval is identity") {
  std::mt19937_64 rng(8);
  Dropout drop("d", 0.5, &rng);
  Tensor x({1, 1000});
  std::fill(x.data.begin(), x.data.end(), 1.0);
  const Tensor y = drop.forward(x, Mode::Train);
  std::size_t kept = 0;
  for (double v : y.data) {
    CHECK((v == 0.0 || v == doctest::Approx(2.0)));
    if (v != 0.0) ++kept;
  }
  CHECK(kept > 380);
  CHECK(kept < 620);
  const Tensor z = drop.forward(x, Mode::Eval);
  for (double v : z.data) CHECK(v == 1.0);
}

TEST_CASE("adam first step moves by about lr in the gradient direction") {
  ParameterStore store;
  auto& p = store.create("w", {3});
  p.value.data = {1.0, 2.0, 3.0};
  p.grad.data = {0.5, -0.25, 10.0};
  adam_step(store, {0.01, 0.9, 0.999, 1e-8});
  CHECK(p.value.data[0] == doctest::Approx(1.0 - 0.01).epsilon(1e-6));
  CHECK(p.value.data[1] == doctest::Approx(2.0 + 0.01).epsilon(1e-6));
  CHECK(p.value.data[2] == doctest::Approx(3.0 - 0.01).epsilon(1e-6));
  for (double g : p.grad.data) CHECK(g == 0.0);
  CHECK(store.adam_steps == 1);
}

TEST_CASE("frozen parameters are bitwise stable under adam") {
  ParameterStore store;
  auto& frozen = store.create("enc.w", {4});
  auto& live = store.create("mlp.w", {4});
  frozen.value.data = {1.0, -2.0, 3.0, -4.0};
  live.value.data = {1.0, -2.0, 3.0, -4.0};
  const auto snapshot = frozen.value.data;
  store.freeze_prefix("enc.");
  for (int step = 0; step < 25; ++step) {
    frozen.grad.data = {1.0, 1.0, 1.0, 1.0};
    live.grad.data = {1.0, 1.0, 1.0, 1.0};
    adam_step(store, {0.05, 0.9, 0.999, 1e-8});
  }
  CHECK(frozen.value.data == snapshot);
  CHECK(live.value.data != snapshot);
}

TEST_CASE("adam determinism: two identical runs match bitwise") {
  const auto run = [] {
    ParameterStore store;
    std::mt19937_64 rng(9);
    Dense dense(store, "d", 4, 2, rng);
    Tensor x({2, 4}), t({2, 2});
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    for (double& v : x.data) v = dist(rng);
    for (double& v : t.data) v = dist(rng);
    for (int step = 0; step < 10; ++step) {
      store.zero_grads();
      auto [l, g] = mse_loss(dense.forward(x, Mode::Train), t);
      dense.backward(g);
      adam_step(store, {1e-3, 0.9, 0.999, 1e-8});
    }
    return store.find("d.weight")->value.data;
  };
  CHECK(run() == run());
}

TEST_CASE("backward without forward reports a stale cache") {
  ParameterStore store;
  std::mt19937_64 rng(10);
  Dense dense(store, "d", 3, 2, rng);
  Tensor g({1, 2});
  CHECK_THROWS_AS(dense.backward(g), Error);
  Tensor x({1, 3});
  dense.forward(x, Mode::Train);
  dense.backward(g);
  CHECK_THROWS_AS(dense.backward(g), Error);
}

TEST_CASE("no NaN propagation through randomized stacks (property)") {
  std::mt19937_64 rng(44);
  for (int trial = 0; trial < 10; ++trial) {
    ParameterStore store;
    std::mt19937_64 drop_rng(trial);
    Conv1d conv(store, "c", 1, 4, 3, 1, rng);
    BatchNorm bn(store, "b", 4);
    LeakyRelu act("a", 0.01);
    Dropout drop("d", 0.2, &drop_rng);
    Tensor x({3, 1, 17});
    std::uniform_real_distribution<double> dist(-100.0, 100.0);
    for (double& v : x.data) v = dist(rng);
    Tensor y = drop.forward(
        act.forward(bn.forward(conv.forward(x, Mode::Train), Mode::Train),
                    Mode::Train),
        Mode::Train);
    CHECK(all_finite(y));
    auto [l, g] = mse_loss(y, Tensor(y.shape));
    const Tensor gi = conv.backward(bn.backward(act.backward(drop.backward(g))));
    CHECK(all_finite(gi));
  }
}

TEST_CASE("checkpoint round trip is bitwise for f64") {
  namespace fs = std::filesystem;
  ParameterStore store;
  std::mt19937_64 rng(12);
  Dense dense(store, "d", 5, 3, rng);
  BatchNorm bn(store, "b", 3);
  store.find("d.weight")->grad.data[0] = 42.0;  // grads are not persisted
  store.adam_steps = 7;

  const auto path = fs::temp_directory_path() / "uwloc_test_ckpt.uwnn";
  save_checkpoint(store, path.string(), /*include_adam=*/true);

  ParameterStore restored;
  std::mt19937_64 rng2(99);
  Dense dense2(restored, "d", 5, 3, rng2);
  BatchNorm bn2(restored, "b", 3);
  const auto report = load_checkpoint(restored, path.string());
  CHECK(report.loaded.size() == restored.entries().size());
  CHECK(report.skipped.empty());
  CHECK(restored.adam_steps == 7);
  for (const auto& p : store.entries()) {
    const auto* q = restored.find(p->name);
    REQUIRE(q != nullptr);
    CHECK(q->value.data == p->value.data);
    CHECK(q->adam_m.data == p->adam_m.data);
    CHECK(q->adam_v.data == p->adam_v.data);
  }

  // saving the restored store reproduces the file byte for byte
  const auto path2 = fs::temp_directory_path() / "uwloc_test_ckpt2.uwnn";
  save_checkpoint(restored, path2.string(), /*include_adam=*/true);
  std::ifstream fa(path, std::ios::binary), fb(path2, std::ios::binary);
  std::stringstream sa, sb;
  sa << fa.rdbuf();
  sb << fb.rdbuf();
  CHECK(sa.str() == sb.str());
  fs::remove(path);
  fs::remove(path2);

  CHECK_THROWS_AS(load_checkpoint(restored, "/nonexistent/ckpt.uwnn"), Error);
}

TEST_CASE("checkpoint shape mismatch is rejected") {
  namespace fs = std::filesystem;
  ParameterStore store;
  std::mt19937_64 rng(13);
  Dense dense(store, "d", 4, 2, rng);
  const auto path = fs::temp_directory_path() / "uwloc_test_ckpt3.uwnn";
  save_checkpoint(store, path.string());
  ParameterStore other;
  Dense dense2(other, "d", 5, 2, rng);
  CHECK_THROWS_AS(load_checkpoint(other, path.string()), Error);
  fs::remove(path);
}
