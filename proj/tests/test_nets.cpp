#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "qwm/nets.hpp"
#include "test_util.hpp"

using namespace qwm;
using namespace qwm::nets;
using tensor::Tensor;
using testutil::max_fd_rel_err;
using testutil::random_tensor;

TEST_CASE("grucell zero input, state and params give zero state", "[nets]") {
  Rng rng(1);
  auto cell = build_grucell(3, 4, rng);
  for (auto& p : cell.params())
    std::fill(p.val().begin(), p.val().end(), 0.0);
  auto h = grucell_step(cell, Tensor::zeros({2, 3}), Tensor::zeros({2, 4}));
  for (double v : h.val()) CHECK(v == 0.0);
}

TEST_CASE("grucell saturated update gate reduces to the tanh path", "[nets]") {
  Rng rng(2);
  auto cell = build_grucell(2, 3, rng);
  // drive update gate to 1 via a huge bias
  std::fill(cell.bu.val().begin(), cell.bu.val().end(), 1e3);
  Tensor x = random_tensor({1, 2}, rng, 1.0, false);
  Tensor h_prev = random_tensor({1, 3}, rng, 1.0, false);
  auto h = grucell_step(cell, x, h_prev);
  // candidate recomputed by hand
  using namespace tensor;
  Tensor r = sigmoid(add(affine(x, cell.Wr, cell.br),
                         affine(h_prev, cell.Ur, Tensor::zeros({3}))));
  Tensor c = tanh(add(affine(x, cell.Wc, cell.bc),
                      affine(mul(r, h_prev), cell.Uc, Tensor::zeros({3}))));
  for (int i = 0; i < 3; ++i) CHECK(h.val()[i] == Catch::Approx(c.val()[i]).margin(1e-9));
}

TEST_CASE("grucell random step matches the three-gate formula", "[nets]") {
  Rng rng(3);
  auto cell = build_grucell(3, 4, rng);
  Tensor x = random_tensor({2, 3}, rng, 1.0, false);
  Tensor h_prev = random_tensor({2, 4}, rng, 0.5, false);
  auto h = grucell_step(cell, x, h_prev);

  auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  for (int b = 0; b < 2; ++b)
    for (int i = 0; i < 4; ++i) {
      double u = cell.bu.val()[i], r = cell.br.val()[i], cd = cell.bc.val()[i];
      for (int j = 0; j < 3; ++j) {
        u += x.val()[b * 3 + j] * cell.Wu.val()[i * 3 + j];
        r += x.val()[b * 3 + j] * cell.Wr.val()[i * 3 + j];
        cd += x.val()[b * 3 + j] * cell.Wc.val()[i * 3 + j];
      }
      double rgate_pre = r, ugate_pre = u;
      for (int j = 0; j < 4; ++j) {
        ugate_pre += h_prev.val()[b * 4 + j] * cell.Uu.val()[i * 4 + j];
        rgate_pre += h_prev.val()[b * 4 + j] * cell.Ur.val()[i * 4 + j];
      }
      double ug = sig(ugate_pre), rg = sig(rgate_pre);
      // recompute candidate with the row-wise reset gate
      double cand_pre = cd;
      for (int j = 0; j < 4; ++j) {
        double rj_pre = cell.br.val()[j];
        for (int k = 0; k < 3; ++k) rj_pre += x.val()[b * 3 + k] * cell.Wr.val()[j * 3 + k];
        for (int k = 0; k < 4; ++k)
          rj_pre += h_prev.val()[b * 4 + k] * cell.Ur.val()[j * 4 + k];
        cand_pre += sig(rj_pre) * h_prev.val()[b * 4 + j] * cell.Uc.val()[i * 4 + j];
      }
      double cand = std::tanh(cand_pre);
      double want = (1 - ug) * h_prev.val()[b * 4 + i] + ug * cand;
      (void)rg;
      CHECK(h.val()[b * 4 + i] == Catch::Approx(want).margin(1e-9));
    }
}

TEST_CASE("grucell keeps the state sup-norm bounded by one", "[nets]") {
  Rng rng(4);
  auto cell = build_grucell(3, 5, rng);
  Tensor h = Tensor::zeros({4, 5});
  for (int step = 0; step < 50; ++step) {
    Tensor x = random_tensor({4, 3}, rng, 3.0, false);
    h = grucell_step(cell, x, h);
    for (double v : h.val()) CHECK(std::abs(v) <= 1.0 + 1e-12);
  }
}

TEST_CASE("grucell gradients pass finite differences", "[nets]") {
  Rng rng(5);
  auto cell = build_grucell(2, 3, rng);
  Tensor x = random_tensor({2, 2}, rng);
  Tensor h0 = random_tensor({2, 3}, rng, 0.3);
  auto params = cell.params();
  params.push_back(x);
  params.push_back(h0);
  double err = max_fd_rel_err(
      [&]() {
        auto h1 = grucell_step(cell, x, h0);
        auto h2 = grucell_step(cell, x, h1);
        return tensor::mean_all(tensor::mul(h2, h2));
      },
      params);
  CHECK(err < 1e-4);
}

TEST_CASE("dominant logit samples deterministically one-hot", "[nets]") {
  Rng rng(6);
  Tensor logits = Tensor::zeros({1, 2, 3});
  logits.val()[1] = 1e6;   // group 0 -> class 1
  logits.val()[3 + 2] = 1e6;  // group 1 -> class 2
  CategoricalLatent lat{2, 3, logits};
  auto s = sample_categorical(lat, rng, 1.0, 0.0);
  REQUIRE(s.sample.shape() == std::vector<int>{1, 6});
  CHECK(s.sample.val() == std::vector<double>{0, 1, 0, 0, 0, 1});
}

TEST_CASE("unimix one gives uniform probabilities", "[nets]") {
  Rng rng(7);
  Tensor logits = random_tensor({2, 2, 4}, rng, 3.0, false);
  CategoricalLatent lat{2, 4, logits};
  auto s = sample_categorical(lat, rng, 1.0, 1.0);
  for (double p : s.probs.val()) CHECK(p == Catch::Approx(0.25));
}

TEST_CASE("sampling frequencies match probabilities within 3 sigma", "[nets]") {
  Rng rng(8);
  Tensor logits = Tensor::from_data({1, 1, 3}, {0.3, -0.4, 1.1});
  CategoricalLatent lat{1, 3, logits};
  const int n = 100000;
  std::array<int, 3> counts{};
  std::array<double, 3> probs{};
  for (int i = 0; i < n; ++i) {
    auto s = sample_categorical(lat, rng, 1.0, 0.01);
    for (int k = 0; k < 3; ++k) {
      counts[k] += s.sample.val()[k] == 1.0 ? 1 : 0;
      probs[k] = s.probs.val()[k];
    }
  }
  for (int k = 0; k < 3; ++k) {
    double sigma = std::sqrt(probs[k] * (1 - probs[k]) * n);
    CHECK(std::abs(counts[k] - probs[k] * n) < 3 * sigma + 1);
  }
}

TEST_CASE("straight-through gradient equals the probability-path gradient", "[nets]") {
  Rng rng(9);
  Tensor logits = random_tensor({2, 2, 3}, rng);
  Tensor w = random_tensor({2, 6}, rng, 1.0, false);
  CategoricalLatent lat{2, 3, logits};

  Rng sample_rng(1);
  logits.zero_grad();
  {
    tensor::Tape tape;
    tensor::Tape::Scope scope(tape);
    auto s = sample_categorical(lat, sample_rng, 1.0, 0.01);
    tape.backward(tensor::sum_all(tensor::mul(s.sample, w)));
  }
  auto st_grad = logits.grad();

  logits.zero_grad();
  {
    tensor::Tape tape;
    tensor::Tape::Scope scope(tape);
    auto probs = unimix_probs(logits, 0.01);
    tape.backward(tensor::sum_all(tensor::mul(tensor::reshape(probs, {2, 6}), w)));
  }
  CHECK(st_grad == logits.grad());  // exactly equal
}

TEST_CASE("KL of identical logits is zero and KL is non-negative", "[nets]") {
  Rng rng(10);
  Tensor p = random_tensor({3, 2, 4}, rng, 2.0, false);
  auto zero = kl_categorical(p, p, 0.01);
  for (double v : zero.val()) CHECK(v == Catch::Approx(0.0).margin(1e-12));
  for (int trial = 0; trial < 20; ++trial) {
    Tensor a = random_tensor({2, 3, 4}, rng, 2.0, false);
    Tensor b = random_tensor({2, 3, 4}, rng, 2.0, false);
    auto kl_ab = kl_categorical(a, b, 0.01);
    for (double v : kl_ab.val()) CHECK(v >= -1e-12);
  }
}

TEST_CASE("KL matches the hand-computed two-class case", "[nets]") {
  // p = (0.75, 0.25), q = (0.5, 0.5) without smoothing
  Tensor p = Tensor::from_data({1, 1, 2}, {std::log(0.75), std::log(0.25)});
  Tensor q = Tensor::from_data({1, 1, 2}, {std::log(0.5), std::log(0.5)});
  double want = 0.75 * std::log(1.5) + 0.25 * std::log(0.5);
  CHECK(kl_categorical(p, q, 0.0).item() == Catch::Approx(want).epsilon(1e-12));
}

TEST_CASE("two-hot encoding hits centers, midpoints, and round-trips", "[nets]") {
  auto head = TwoHotHead::make(11, 5.0);
  // value exactly at a bin center
  double center_val = tensor::symexp_value(head.centers[4]);
  auto w = twohot_encode(center_val, head);
  CHECK(w[4] == Catch::Approx(1.0));
  for (int i = 0; i < 11; ++i)
    if (i != 4) CHECK(w[i] == 0.0);

  // midpoint between adjacent centers
  double mid = 0.5 * (head.centers[4] + head.centers[5]);
  auto wm = twohot_encode(tensor::symexp_value(mid), head);
  CHECK(wm[4] == Catch::Approx(0.5));
  CHECK(wm[5] == Catch::Approx(0.5));

  Rng rng(11);
  for (int i = 0; i < 100; ++i) {
    double v = tensor::symexp_value(rng.uniform(-4.9, 4.9));
    auto enc = twohot_encode(v, head);
    double sum = 0;
    int support = 0;
    for (double x : enc) {
      CHECK(x >= 0.0);
      sum += x;
      support += x > 0 ? 1 : 0;
    }
    CHECK(sum == Catch::Approx(1.0).epsilon(1e-12));
    CHECK(support <= 2);
    double back = twohot_decode_value(enc, head);
    CHECK(std::abs(back - v) <= 1e-9 * std::max(1.0, std::abs(v)));
  }
}

TEST_CASE("two-hot clamps outside the bin range", "[nets]") {
  auto head = TwoHotHead::make(5, 1.0);
  auto lo = twohot_encode(-1e9, head);
  CHECK(lo[0] == 1.0);
  auto hi = twohot_encode(1e9, head);
  CHECK(hi[4] == 1.0);
}

TEST_CASE("twohot_decode is the probability-weighted center sum", "[nets]") {
  auto head = TwoHotHead::make(7, 3.0);
  Rng rng(12);
  Tensor logits = random_tensor({3, 7}, rng, 1.0, false);
  auto probs = tensor::softmax(logits);
  auto dec = twohot_decode(probs, head);
  for (int b = 0; b < 3; ++b) {
    double acc = 0;
    for (int i = 0; i < 7; ++i) acc += probs.val()[b * 7 + i] * head.centers[i];
    CHECK(dec.val()[b] == Catch::Approx(tensor::symexp_value(acc)).margin(1e-12));
  }
}

TEST_CASE("build_dense_stack shapes, determinism, and init scale", "[nets]") {
  Rng rng_a(77), rng_b(77);
  auto a = build_dense_stack(5, {16, 16}, 3, rng_a);
  auto b = build_dense_stack(5, {16, 16}, 3, rng_b);
  auto out = a.forward(Tensor::zeros({4, 5}));
  REQUIRE(out.shape() == std::vector<int>{4, 3});

  auto pa = a.params(), pb = b.params();
  REQUIRE(pa.size() == pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa[i].val() == pb[i].val());

  // init std within 10% of 1/sqrt(fan_in) over a large sample
  Rng rng_c(99);
  auto big = build_dense_stack(100, {100}, 100, rng_c);
  double ss = 0;
  const auto& w = big.layers[0].W.val();
  for (double v : w) ss += v * v;
  double std_emp = std::sqrt(ss / w.size());
  double want = 1.0 / std::sqrt(100.0);  // truncation at 2 sigma shrinks slightly
  CHECK(std_emp > 0.78 * want);
  CHECK(std_emp < 1.05 * want);
  for (double v : big.layers.back().b.val()) CHECK(v == 0.0);
  for (double v : big.layers[0].gain.val()) CHECK(v == 1.0);
}
