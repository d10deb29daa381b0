#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "helpers.hpp"
#include "xpose/attack.hpp"
#include "xpose/bench.hpp"

using namespace xpose;
using namespace xpose::test;

namespace {

// two-class linear classifier: logits = W^T x, used for analytic oracles
ModelGraph linear_model(int in_dim, std::vector<float> w) {
  ModelGraph m;
  m.name = "linear";
  m.input_spec = {1, 1, in_dim, 2};
  Dense d;
  d.out_dim = 2;
  d.weight = Tensor(Shape{1, 1, in_dim, 2}, std::move(w));
  d.bias = Tensor(Shape{1, 1, 1, 2});
  m.layers.push_back(Layer{"fc", std::move(d)});
  validate_model(m);
  return m;
}

ModelGraph tiny_conv_model(uint64_t seed) {
  ModelGraph m;
  m.name = "tinyconv";
  m.input_spec = {8, 8, 3, 4};
  Conv2d c;
  c.out_ch = 6;
  c.kernel = 3;
  c.stride = 1;
  c.pad = 1;
  c.weight = Tensor(Shape{3, 3, 3, 6});
  c.bias = Tensor(Shape{1, 1, 1, 6});
  m.layers.push_back(Layer{"conv1", std::move(c)});
  m.layers.push_back(Layer{"relu1", ReLU{}});
  m.layers.push_back(Layer{"pool1", MaxPool{2, 2}});
  m.layers.push_back(Layer{"flat", Flatten{}});
  Dense d;
  d.out_dim = 4;
  d.weight = Tensor(Shape{1, 1, 4 * 4 * 6, 4});
  d.bias = Tensor(Shape{1, 1, 1, 4});
  m.layers.push_back(Layer{"fc", std::move(d)});
  Rng rng(seed);
  for (Tensor* p : trainable_params(m))
    for (float& v : p->vec()) v = rng.uniform(-0.3f, 0.3f);
  validate_model(m);
  return m;
}

// batch kept away from 0/1 so PGN's vanishing-noise collapse stays bit-exact
Tensor safe_batch(Shape s, uint64_t seed) {
  Rng rng(seed);
  Tensor x(s);
  for (float& v : x.vec()) v = rng.uniform(0.25f, 0.75f);
  return x;
}

void l1_normalize(Tensor& g) {
  const Shape s = g.shape();
  const int64_t stride = int64_t(s.h) * s.w * s.c;
  for (int n = 0; n < s.b; ++n) {
    double l1 = 0.0;
    float* p = g.data() + n * stride;
    for (int64_t i = 0; i < stride; ++i) l1 += std::fabs(p[i]);
    if (l1 > 0.0)
      for (int64_t i = 0; i < stride; ++i) p[i] = float(p[i] / l1);
  }
}

// reference MI-FGSM step used by the re-implementation oracles: advances the
// iterate, clipping against the clean anchor
Tensor ref_step(const Tensor& x_iter, const Tensor& x_clean, const Tensor& ghat, float mu,
                Tensor& g, float alpha, float eps) {
  Tensor gn = ghat;
  l1_normalize(gn);
  for (size_t i = 0; i < g.size(); ++i) g.vec()[i] = mu * g.vec()[i] + gn.vec()[i];
  Tensor x = x_iter;
  for (size_t i = 0; i < x.size(); ++i) {
    float s = g.vec()[i] > 0.0f ? 1.0f : (g.vec()[i] < 0.0f ? -1.0f : 0.0f);
    float v = x.vec()[i] + alpha * s;
    v = std::min(x_clean.vec()[i] + eps, std::max(x_clean.vec()[i] - eps, v));
    x.vec()[i] = std::min(1.0f, std::max(0.0f, v));
  }
  return x;
}

}  // namespace

TEST_CASE("single step on a linear model equals the analytic sign step") {
  // dL/dx for label 0 is (p0 - 1) * (w0 - w1); p0 - 1 < 0 so the ascent
  // direction is sign(w1 - w0)
  std::vector<float> w = {0.8f, -0.2f, -0.5f, 0.9f, 0.3f, 0.3f, -0.1f, -0.4f};
  ModelGraph m = linear_model(4, w);
  Tensor x(Shape{1, 1, 1, 4}, {0.5f, 0.5f, 0.5f, 0.5f});
  AttackConfig cfg;
  cfg.variant = AttackVariant::MIFGSM;
  cfg.momentum = 0.0f;
  cfg.iters = 1;
  cfg.epsilon = 0.1f;
  Tensor x_adv = craft(m, x, {0}, cfg);
  const float alpha = cfg.alpha();
  for (int i = 0; i < 4; ++i) {
    float dir = w[size_t(i * 2 + 1)] - w[size_t(i * 2)];  // w1 - w0
    float expect = 0.5f + alpha * (dir > 0 ? 1.0f : (dir < 0 ? -1.0f : 0.0f));
    CHECK(x_adv.at(0, 0, 0, i) == doctest::Approx(expect).epsilon(1e-6));
  }
}

TEST_CASE("epsilon 0 returns the clean batch exactly") {
  ModelGraph m = tiny_conv_model(3);
  Tensor x = safe_batch(Shape{4, 8, 8, 3}, 1);
  AttackConfig cfg;
  cfg.epsilon = 0.0f;
  cfg.iters = 3;
  Tensor x_adv = craft(m, x, {0, 1, 2, 3}, cfg);
  CHECK(same_bits(x_adv, x));
}

TEST_CASE("constant-sign gradient with momentum 1 walks a straight ray into the ball") {
  std::vector<float> w = {0.8f, -0.2f, -0.5f, 0.9f, 0.3f, 0.6f, -0.1f, -0.4f};
  ModelGraph m = linear_model(4, w);
  Tensor x(Shape{1, 1, 1, 4}, {0.5f, 0.5f, 0.5f, 0.5f});
  AttackConfig cfg;
  cfg.momentum = 1.0f;
  cfg.iters = 7;
  cfg.step = 0.01f;
  cfg.epsilon = 0.05f;
  Tensor x_adv = craft(m, x, {0}, cfg);
  // 7 steps of 0.01 along a constant sign direction, clipped at eps=0.05
  for (int i = 0; i < 4; ++i) {
    float dir = w[size_t(i * 2 + 1)] - w[size_t(i * 2)];
    float expect = 0.5f + 0.05f * (dir > 0 ? 1.0f : -1.0f);
    CHECK(x_adv.at(0, 0, 0, i) == doctest::Approx(expect).epsilon(1e-6));
  }
}

TEST_CASE("an all-zero gradient leaves the iterate in place") {
  ModelGraph m = linear_model(4, std::vector<float>(8, 0.0f));
  Tensor x(Shape{1, 1, 1, 4}, {0.3f, 0.4f, 0.5f, 0.6f});
  AttackConfig cfg;
  cfg.iters = 4;
  Tensor x_adv = craft(m, x, {0}, cfg);
  CHECK(same_bits(x_adv, x));
}

TEST_CASE("variant collapse: degenerate parameters reproduce MI-FGSM bit-exactly") {
  ModelGraph m = tiny_conv_model(5);
  Tensor x = safe_batch(Shape{6, 8, 8, 3}, 2);
  std::vector<int> labels{0, 1, 2, 3, 0, 1};
  AttackConfig base;
  base.variant = AttackVariant::MIFGSM;
  base.epsilon = 8.0f / 255.0f;
  base.iters = 5;
  base.seed = 77;
  Tensor ref = craft(m, x, labels, base);

  AttackConfig dim = base;
  dim.variant = AttackVariant::DIM;
  dim.dim_prob = 0.0f;
  CHECK(same_bits(craft(m, x, labels, dim), ref));

  AttackConfig tim = base;
  tim.variant = AttackVariant::TIM;
  tim.tim_kernel = 1;
  CHECK(same_bits(craft(m, x, labels, tim), ref));

  AttackConfig sim = base;
  sim.variant = AttackVariant::SIM;
  sim.sim_copies = 1;
  CHECK(same_bits(craft(m, x, labels, sim), ref));

  AttackConfig pgn = base;
  pgn.variant = AttackVariant::PGN;
  pgn.pgn_delta = 0.0f;
  pgn.pgn_samples = 1;
  pgn.pgn_zeta = 1e-12f;
  CHECK(same_bits(craft(m, x, labels, pgn), ref));

  AttackConfig gi = base;
  gi.variant = AttackVariant::GIFGSM;
  gi.gi_pre_iters = 0;
  CHECK(same_bits(craft(m, x, labels, gi), ref));
}

TEST_CASE("every variant respects the epsilon ball and the value range") {
  ModelGraph m = tiny_conv_model(7);
  Rng rng(3);
  Tensor x = random_image(Shape{8, 8, 8, 3}, rng);
  std::vector<int> labels = random_labels(8, 4, rng);
  for (AttackVariant v : {AttackVariant::IFGSM, AttackVariant::MIFGSM, AttackVariant::DIM,
                          AttackVariant::TIM, AttackVariant::SIM, AttackVariant::PGN,
                          AttackVariant::GIFGSM}) {
    for (float eps : {2.0f / 255.0f, 16.0f / 255.0f}) {
      AttackConfig cfg;
      cfg.variant = v;
      cfg.epsilon = eps;
      cfg.iters = 4;
      cfg.pgn_samples = 4;
      cfg.seed = 11;
      Tensor x_adv = craft(m, x, labels, cfg);
      float linf = max_abs_diff(x_adv, x);
      CHECK(linf <= eps + 1e-6f);
      bool in_range = true;
      for (float val : x_adv.vec()) in_range = in_range && val >= 0.0f && val <= 1.0f;
      CHECK(in_range);
    }
  }
}

TEST_CASE("stochastic variants are byte-deterministic under a fixed seed") {
  ModelGraph m = tiny_conv_model(9);
  Rng rng(5);
  Tensor x = random_image(Shape{4, 8, 8, 3}, rng);
  std::vector<int> labels = random_labels(4, 4, rng);
  for (AttackVariant v : {AttackVariant::DIM, AttackVariant::PGN}) {
    AttackConfig cfg;
    cfg.variant = v;
    cfg.iters = 3;
    cfg.pgn_samples = 3;
    cfg.seed = 1234;
    Tensor a = craft(m, x, labels, cfg);
    Tensor b = craft(m, x, labels, cfg);
    CHECK(same_bits(a, b));
    cfg.seed = 1235;
    Tensor c = craft(m, x, labels, cfg);
    CHECK(!same_bits(a, c));
  }
}

TEST_CASE("dim draws stay in the documented ranges and the transform keeps the shape") {
  Rng rng(8);
  for (int trial = 0; trial < 500; ++trial) {
    DimDraw d = dim_draw(rng, 32);
    CHECK(d.r >= 32);
    CHECK(d.r <= 36);
    CHECK(d.content >= 28);
    CHECK(d.content <= 32);
    CHECK(d.oy >= 0);
    CHECK(d.oy + d.content <= 32);
    CHECK(d.ox >= 0);
    CHECK(d.ox + d.content <= 32);
  }
  Tensor x = safe_batch(Shape{2, 32, 32, 3}, 4);
  DimDraw d = dim_draw(rng, 32);
  CHECK(dim_transform(x, d).shape() == x.shape());
}

TEST_CASE("dim adjoint satisfies the inner-product identity") {
  Rng rng(9);
  Tensor x = random_image(Shape{1, 16, 16, 2}, rng);
  Tensor y = random_image(Shape{1, 16, 16, 2}, rng);
  DimDraw d = dim_draw(rng, 16);
  Tensor tx = dim_transform(x, d);
  Tensor aty = dim_transform_adjoint(y, d);
  double lhs = 0.0, rhs = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    lhs += double(tx.vec()[i]) * y.vec()[i];
    rhs += double(x.vec()[i]) * aty.vec()[i];
  }
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-5));
}

TEST_CASE("dim single iteration matches a scripted re-implementation") {
  ModelGraph m = tiny_conv_model(11);
  Tensor x = safe_batch(Shape{3, 8, 8, 3}, 6);
  std::vector<int> labels{0, 1, 2};
  AttackConfig cfg;
  cfg.variant = AttackVariant::DIM;
  cfg.dim_prob = 1.0f;
  cfg.iters = 1;
  cfg.seed = 99;
  Tensor got = craft(m, x, labels, cfg);

  Rng rng(99);
  (void)rng.next_unit();  // the probability draw
  DimDraw d = dim_draw(rng, 8);
  EnsembleSpec ens{{&m}};
  Tensor ghat = dim_transform_adjoint(ensemble_gradient(ens, dim_transform(x, d), labels), d);
  Tensor g(x.shape());
  Tensor expect = ref_step(x, x, ghat, cfg.momentum, g, cfg.alpha(), cfg.epsilon);
  CHECK(same_bits(got, expect));
}

TEST_CASE("gaussian kernel matches the direct formula") {
  auto k7 = gaussian_kernel(7);
  REQUIRE(k7.size() == 49);
  // frozen oracle values from exp(-(i^2+j^2)/(2 sigma^2)) / sum, sigma = 7/3
  CHECK(k7[3 * 7 + 3] == doctest::Approx(0.038677313553059957).epsilon(1e-6));
  CHECK(k7[3 * 7 + 6] == doctest::Approx(0.01692382855979575).epsilon(1e-6));
  CHECK(k7[6 * 7 + 6] == doctest::Approx(0.0074052706046513544).epsilon(1e-6));
  CHECK(k7[4 * 7 + 5] == doctest::Approx(0.024436295354573742).epsilon(1e-6));
  double sum = 0.0;
  for (float v : k7) sum += v;
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
  // symmetric with the mass in the center
  for (int i = 0; i < 7; ++i)
    for (int j = 0; j < 7; ++j) {
      CHECK(k7[size_t(i * 7 + j)] == k7[size_t(j * 7 + i)]);
      CHECK(k7[size_t(i * 7 + j)] == k7[size_t((6 - i) * 7 + (6 - j))]);
      CHECK(k7[size_t(i * 7 + j)] <= k7[3 * 7 + 3]);
    }
  CHECK(gaussian_kernel(1) == std::vector<float>{1.0f});
  CHECK_THROWS_AS(gaussian_kernel(4), ConfigError);
}

TEST_CASE("tim single iteration matches a scripted smoothing of the gradient") {
  ModelGraph m = tiny_conv_model(13);
  Tensor x = safe_batch(Shape{2, 8, 8, 3}, 7);
  std::vector<int> labels{0, 3};
  AttackConfig cfg;
  cfg.variant = AttackVariant::TIM;
  cfg.tim_kernel = 5;
  cfg.iters = 1;
  Tensor got = craft(m, x, labels, cfg);

  EnsembleSpec ens{{&m}};
  Tensor ghat = ensemble_gradient(ens, x, labels);
  auto kern = gaussian_kernel(5);
  Tensor smooth(ghat.shape());
  const Shape s = ghat.shape();
  for (int n = 0; n < s.b; ++n)
    for (int i = 0; i < s.h; ++i)
      for (int j = 0; j < s.w; ++j)
        for (int c = 0; c < s.c; ++c) {
          float acc = 0.0f;
          for (int ki = -2; ki <= 2; ++ki)
            for (int kj = -2; kj <= 2; ++kj) {
              int ii = i + ki, jj = j + kj;
              if (ii < 0 || ii >= s.h || jj < 0 || jj >= s.w) continue;
              acc += kern[size_t((ki + 2) * 5 + kj + 2)] * ghat.at(n, ii, jj, c);
            }
          smooth.at(n, i, j, c) = acc;
        }
  Tensor g(x.shape());
  Tensor expect = ref_step(x, x, smooth, cfg.momentum, g, cfg.alpha(), cfg.epsilon);
  CHECK(same_bits(got, expect));
}

TEST_CASE("sim keeps the sign pattern of the plain gradient on a linear model") {
  std::vector<float> w = {0.8f, -0.2f, -0.5f, 0.9f, 0.3f, 0.6f, -0.1f, -0.4f};
  ModelGraph m = linear_model(4, w);
  Tensor x(Shape{1, 1, 1, 4}, {0.5f, 0.6f, 0.4f, 0.7f});
  AttackConfig cfg;
  cfg.variant = AttackVariant::SIM;
  cfg.sim_copies = 5;
  cfg.iters = 1;
  cfg.momentum = 0.0f;
  Tensor sim_adv = craft(m, x, {0}, cfg);
  AttackConfig plain = cfg;
  plain.variant = AttackVariant::MIFGSM;
  Tensor plain_adv = craft(m, x, {0}, plain);
  CHECK(same_bits(sim_adv, plain_adv));  // same sign pattern => same step
}

TEST_CASE("sim with five copies matches the brute-force average") {
  ModelGraph m = tiny_conv_model(15);
  Tensor x = safe_batch(Shape{2, 8, 8, 3}, 8);
  std::vector<int> labels{1, 2};
  AttackConfig cfg;
  cfg.variant = AttackVariant::SIM;
  cfg.sim_copies = 5;
  cfg.iters = 1;
  Tensor got = craft(m, x, labels, cfg);

  EnsembleSpec ens{{&m}};
  Tensor acc(x.shape());
  for (int i = 0; i < 5; ++i) {
    Tensor xs = x;
    if (i > 0) {
      const float scale = 1.0f / float(1 << i);
      for (float& v : xs.vec()) v *= scale;
    }
    Tensor gi = ensemble_gradient(ens, xs, labels);
    if (i == 0)
      acc = gi;
    else
      for (size_t k = 0; k < acc.size(); ++k) acc.vec()[k] += gi.vec()[k];
  }
  for (float& v : acc.vec()) v *= 1.0f / 5.0f;
  Tensor g(x.shape());
  Tensor expect = ref_step(x, x, acc, cfg.momentum, g, cfg.alpha(), cfg.epsilon);
  CHECK(same_bits(got, expect));
}

TEST_CASE("pgn with N samples matches the brute-force accumulation") {
  ModelGraph m = tiny_conv_model(17);
  Tensor x = safe_batch(Shape{2, 8, 8, 3}, 9);
  std::vector<int> labels{0, 2};
  AttackConfig cfg;
  cfg.variant = AttackVariant::PGN;
  cfg.pgn_samples = 6;
  cfg.pgn_delta = 0.5f;
  cfg.pgn_zeta = 3.0f;
  cfg.iters = 1;
  cfg.seed = 321;
  Tensor got = craft(m, x, labels, cfg);

  Rng rng(321);
  EnsembleSpec ens{{&m}};
  const float bound = cfg.pgn_zeta * cfg.epsilon;
  const float alpha = cfg.alpha();
  Tensor acc(x.shape());
  for (int s = 0; s < 6; ++s) {
    Tensor xp = x;
    for (float& v : xp.vec()) v += rng.uniform(-bound, bound);
    Tensor g1 = ensemble_gradient(ens, xp, labels);
    Tensor dir = g1;
    l1_normalize(dir);
    Tensor xpp = xp;
    for (size_t k = 0; k < xpp.size(); ++k) xpp.vec()[k] -= alpha * dir.vec()[k];
    Tensor g2 = ensemble_gradient(ens, xpp, labels);
    for (size_t k = 0; k < acc.size(); ++k)
      acc.vec()[k] += 0.5f * g1.vec()[k] + 0.5f * g2.vec()[k];
  }
  for (float& v : acc.vec()) v *= 1.0f / 6.0f;
  Tensor g(x.shape());
  Tensor expect = ref_step(x, x, acc, cfg.momentum, g, alpha, cfg.epsilon);
  CHECK(same_bits(got, expect));
}

TEST_CASE("gi-fgsm matches a scripted pre-convergence plus main loop") {
  ModelGraph m = tiny_conv_model(19);
  Tensor x = safe_batch(Shape{2, 8, 8, 3}, 10);
  std::vector<int> labels{3, 1};
  AttackConfig cfg;
  cfg.variant = AttackVariant::GIFGSM;
  cfg.gi_pre_iters = 3;
  cfg.gi_factor = 10.0f;
  cfg.iters = 3;
  Tensor got = craft(m, x, labels, cfg);

  EnsembleSpec ens{{&m}};
  const float alpha = cfg.alpha();
  Tensor g(x.shape());
  Tensor xc = x;
  for (int t = 0; t < 3; ++t)
    xc = ref_step(xc, x, ensemble_gradient(ens, xc, labels), cfg.momentum, g,
                  cfg.gi_factor * alpha, cfg.epsilon);
  Tensor xm = x;  // the pre-run iterate is discarded, the momentum g carries over
  for (int t = 0; t < 3; ++t)
    xm = ref_step(xm, x, ensemble_gradient(ens, xm, labels), cfg.momentum, g, alpha,
                  cfg.epsilon);
  CHECK(same_bits(got, xm));
}

TEST_CASE("ensemble gradients fuse mean logits") {
  ModelGraph a = tiny_conv_model(23);
  ModelGraph b = tiny_conv_model(29);
  Tensor x = safe_batch(Shape{2, 8, 8, 3}, 11);
  std::vector<int> labels{0, 1};
  EnsembleSpec single{{&a}};
  EnsembleSpec twice{{&a, &a}};
  CHECK(same_bits(ensemble_gradient(single, x, labels), ensemble_gradient(twice, x, labels)));

  // two linear models: gradient equals the single-model gradient of the
  // averaged weights
  std::vector<float> w1 = {0.8f, -0.2f, -0.5f, 0.9f, 0.3f, 0.6f, -0.1f, -0.4f};
  std::vector<float> w2 = {0.1f, 0.4f, 0.2f, -0.6f, -0.8f, 0.5f, 0.7f, 0.0f};
  std::vector<float> wm(8);
  for (int i = 0; i < 8; ++i) wm[size_t(i)] = (w1[size_t(i)] + w2[size_t(i)]) / 2.0f;
  ModelGraph m1 = linear_model(4, w1), m2 = linear_model(4, w2), mm = linear_model(4, wm);
  Tensor xi(Shape{1, 1, 1, 4}, {0.5f, 0.6f, 0.4f, 0.7f});
  EnsembleSpec pair{{&m1, &m2}};
  Tensor ge = ensemble_gradient(pair, xi, {0});
  Tensor gm = ensemble_gradient(EnsembleSpec{{&mm}}, xi, {0});
  CHECK(max_abs_diff(ge, gm) < 1e-6f);

  ModelGraph other = tiny_conv_model(31);
  other.input_spec.h = 16;
  EnsembleSpec bad{{&a, &other}};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  CHECK_THROWS_AS(EnsembleSpec{}.validate(), ConfigError);
}

TEST_CASE("white-box I-FGSM success is non-decreasing in epsilon") {
  const ModelGraph& m = tiny_trained_model();
  const Dataset& test = tiny_dataset().test;
  std::vector<int> idx(64);
  for (int i = 0; i < 64; ++i) idx[size_t(i)] = i;
  Dataset batch = select_images(test, idx);
  double prev = -1.0;
  for (float eps : {2.0f / 255.0f, 4.0f / 255.0f, 8.0f / 255.0f, 16.0f / 255.0f}) {
    AttackConfig cfg;
    cfg.variant = AttackVariant::IFGSM;
    cfg.epsilon = eps;
    cfg.iters = 8;
    Tensor x_adv = craft(m, batch.images, batch.labels, cfg);
    double rate = success_rate(m, x_adv, batch.labels);
    CHECK(rate >= prev);
    prev = rate;
  }
  CHECK(prev > 50.0);  // the strongest epsilon must actually bite
}

TEST_CASE("config invariants are validated") {
  AttackConfig cfg;
  cfg.epsilon = 1.5f;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.iters = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.tim_kernel = 4;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.pgn_zeta = 0.0f;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.dim_prob = 1.2f;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  CHECK(attack_variant_from("pgn") == AttackVariant::PGN);
  CHECK_THROWS_AS(attack_variant_from("bsr"), ConfigError);
  ModelGraph m = tiny_conv_model(37);
  Tensor bad(Shape{1, 8, 8, 3}, std::vector<float>(192, 1.5f));
  AttackConfig ok;
  CHECK_THROWS_AS(craft(m, bad, {0}, ok), ConfigError);
}

TEST_CASE("non-finite gradients abort with the iteration index") {
  // logits overflow to inf, so the softmax gradient goes NaN
  ModelGraph m = linear_model(4, std::vector<float>(8, 3e38f));
  Tensor x(Shape{1, 1, 1, 4}, {0.5f, 0.5f, 0.5f, 0.5f});
  AttackConfig cfg;
  cfg.iters = 3;
  CHECK_THROWS_WITH_AS(craft(m, x, {0}, cfg), doctest::Contains("iteration"), NumericError);
}
