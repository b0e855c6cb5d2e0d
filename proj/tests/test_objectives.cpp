#include <doctest.h>

#include <cmath>

#include "core/objectives.hpp"

using namespace aseg;

namespace {

constexpr double kLn2 = 0.6931471805599453;

Tensor random_logits(std::vector<int> dims, Rng& rng, float lo = -8.0f, float hi = 8.0f) {
  size_t n = 1;
  for (int d : dims) n *= static_cast<size_t>(d);
  std::vector<float> values(n);
  for (auto& v : values) v = lo + static_cast<float>(rng.next_uniform()) * (hi - lo);
  return Tensor(std::move(dims), std::move(values));
}

// Direct log-sigmoid evaluation in double, the naive form of the same means.
double naive_bce(const Tensor& logits, int target) {
  double sum = 0;
  for (float l : logits.values()) {
    const double sig = 1.0 / (1.0 + std::exp(-static_cast<double>(l)));
    sum += target == 1 ? -std::log(sig) : -std::log(1.0 - sig);
  }
  return sum / static_cast<double>(logits.numel());
}

}  // namespace

TEST_CASE("bce_from_logits: zero logits give ln 2 for either target") {
  const Tensor zeros = Tensor::full({4, 4}, 0.0f);
  CHECK(bce_from_logits(zeros, 1).value() == doctest::Approx(kLn2).epsilon(1e-6));
  CHECK(bce_from_logits(zeros, 0).value() == doctest::Approx(kLn2).epsilon(1e-6));
}

TEST_CASE("bce_from_logits: saturated logits drive the loss to zero") {
  const Tensor high = Tensor::full({8}, 40.0f);
  CHECK(bce_from_logits(high, 1).value() <= 1e-6);
  CHECK(bce_from_logits(neg(high), 0).value() <= 1e-6);
}

TEST_CASE("bce_from_logits: softplus hand evaluation") {
  const Tensor logits = Tensor::from_values({2}, {1.0f, -2.0f});
  // (softplus(-1) + softplus(2)) / 2 = (0.313262 + 2.126928) / 2
  CHECK(bce_from_logits(logits, 1).value() == doctest::Approx(1.220095).epsilon(1e-5));
}

TEST_CASE("bce_from_logits: agrees with the naive form wherever it is finite") {
  Rng rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor logits = random_logits({3, 7}, rng, -10.0f, 10.0f);
    for (int target : {0, 1}) {
      CHECK(bce_from_logits(logits, target).value() ==
            doctest::Approx(naive_bce(logits, target)).epsilon(1e-6));
    }
  }
}

TEST_CASE("bce losses stay finite across the saturation range") {
  for (float l : {-80.0f, -40.0f, -1.0f, 0.0f, 1.0f, 40.0f, 80.0f}) {
    const Tensor logits = Tensor::full({3}, l);
    CHECK(std::isfinite(bce_from_logits(logits, 0).value()));
    CHECK(std::isfinite(bce_from_logits(logits, 1).value()));
    const auto d = discriminator_loss(logits, logits);
    CHECK(std::isfinite(d.total.value()));
  }
}

TEST_CASE("discriminator_loss: zero logits, perfect split, and the direct oracle") {
  const Tensor zeros = Tensor::full({2, 3}, 0.0f);
  const auto at_zero = discriminator_loss(zeros, zeros);
  CHECK(at_zero.total.value() == doctest::Approx(2.0 * kLn2).epsilon(1e-6));
  CHECK(at_zero.total.value() == at_zero.real.value() + at_zero.fake.value());

  const auto perfect =
      discriminator_loss(Tensor::full({4}, 40.0f), Tensor::full({4}, -40.0f));
  CHECK(perfect.total.value() <= 1e-5);

  Rng rng(22);
  const Tensor real = random_logits({5, 5}, rng);
  const Tensor fake = random_logits({5, 5}, rng);
  const auto loss = discriminator_loss(real, fake);
  CHECK(loss.total.value() ==
        doctest::Approx(naive_bce(real, 1) + naive_bce(fake, 0)).epsilon(1e-6));

  CHECK_THROWS_AS(discriminator_loss(real, Tensor::full({2}, 0.0f)), Error);
}

TEST_CASE("generator_adversarial_loss: zero logits, saturation, oracle") {
  CHECK(generator_adversarial_loss(Tensor::full({6}, 0.0f)).value() ==
        doctest::Approx(kLn2).epsilon(1e-6));
  CHECK(generator_adversarial_loss(Tensor::full({6}, 40.0f)).value() <= 1e-6);

  Rng rng(23);
  const Tensor fake = random_logits({4, 4}, rng);
  CHECK(generator_adversarial_loss(fake).value() ==
        doctest::Approx(naive_bce(fake, 1)).epsilon(1e-6));
}

TEST_CASE("l1_loss: zero on equality, hand value, symmetry") {
  Rng rng(24);
  const Tensor x = random_logits({3, 3}, rng, -1.0f, 1.0f);
  CHECK(l1_loss(x, x).value() == 0.0f);

  const Tensor y = Tensor::from_values({2}, {1.0f, 3.0f});
  const Tensor y_hat = Tensor::from_values({2}, {0.0f, 1.0f});
  CHECK(l1_loss(y, y_hat).value() == doctest::Approx(1.5));
  CHECK(l1_loss(y, y_hat).value() == l1_loss(y_hat, y).value());
  CHECK(l1_loss(y, y_hat).value() >= 0.0f);
}

TEST_CASE("generator_total_loss: composition is exact in float arithmetic") {
  const Tensor g_adv = Tensor::from_values({1}, {0.7f});
  const Tensor g_l1 = Tensor::from_values({1}, {0.01f});
  CHECK(generator_total_loss(g_adv, g_l1, 0.0f).value() == 0.7f);
  CHECK(generator_total_loss(g_adv, g_l1, 100.0f).value() == doctest::Approx(1.7).epsilon(1e-7));

  // Exactly the float expression, not merely close to it.
  const float expect = 0.7f + 100.0f * 0.01f;
  CHECK(generator_total_loss(g_adv, g_l1, 100.0f).value() == expect);

  // Doubling lambda adds exactly lambda * g_l1 in double arithmetic.
  const double at_100 = generator_total_loss(g_adv, g_l1, 100.0f).value();
  const double at_200 = generator_total_loss(g_adv, g_l1, 200.0f).value();
  CHECK(at_200 - at_100 == doctest::Approx(100.0f * 0.01f).epsilon(1e-6));

  CHECK_THROWS_AS(generator_total_loss(g_adv, g_l1, -1.0f), Error);
}

TEST_CASE("pixel_bce_loss: uniform uncertainty, perfect prediction, direct oracle") {
  const Tensor half = Tensor::full({4, 4}, 0.5f);
  const Tensor mask = Tensor::full({4, 4}, 1.0f);
  CHECK(pixel_bce_loss(half, mask).value() == doctest::Approx(kLn2).epsilon(1e-6));

  std::vector<float> mask_values{1, 0, 1, 0, 0, 1, 0, 1};
  const Tensor m({2, 4}, mask_values);
  std::vector<float> close(mask_values);
  for (auto& v : close) v = v == 1.0f ? 0.9999f : 0.0001f;
  CHECK(pixel_bce_loss(Tensor({2, 4}, close), m).value() <= 1e-3);

  Rng rng(25);
  std::vector<float> probs(8);
  for (auto& p : probs) p = 0.05f + 0.9f * static_cast<float>(rng.next_uniform());
  const Tensor p({2, 4}, probs);
  double expect = 0;
  for (size_t i = 0; i < probs.size(); ++i) {
    const double pv = probs[i], mv = mask_values[i];
    expect += -(mv * std::log(pv) + (1.0 - mv) * std::log(1.0 - pv));
  }
  expect /= 8.0;
  CHECK(pixel_bce_loss(p, m).value() == doctest::Approx(expect).epsilon(1e-6));
}

TEST_CASE("adam_step: zero gradients leave parameters unchanged") {
  ParameterSet params;
  params.add("w", Tensor::from_values({3}, {1.0f, -2.0f, 3.0f}));
  AdamState state;
  std::vector<float> zero(3, 0.0f);
  adam_step(params, {&zero}, state);
  CHECK(params.at("w").values() == std::vector<float>{1.0f, -2.0f, 3.0f});

  adam_step(params, {nullptr}, state);  // absent gradient means zero
  CHECK(params.at("w").values() == std::vector<float>{1.0f, -2.0f, 3.0f});
}

TEST_CASE("adam_step: bias-corrected first step moves by the learning rate") {
  ParameterSet params;
  params.add("w", Tensor::from_values({1}, {1.0f}));
  AdamConfig config;
  config.learning_rate = 0.1f;
  AdamState state(config);
  std::vector<float> grad{1.0f};
  adam_step(params, {&grad}, state);
  // m-hat = v-hat = 1 after bias correction: w' = 1 - 0.1 / (1 + 1e-8)
  CHECK(params.at("w").value() == doctest::Approx(0.9).epsilon(1e-6));
  CHECK(state.step() == 1);
}

TEST_CASE("adam_step: identical runs are bit-identical") {
  const auto run = [] {
    Rng rng(31);
    ParameterSet params;
    params.add("w", Tensor::gaussian({16}, 0.0, 1.0, rng));
    AdamState state;
    for (int i = 0; i < 25; ++i) {
      std::vector<float> grad(16);
      for (auto& g : grad) g = static_cast<float>(rng.next_gaussian());
      adam_step(params, {&grad}, state);
    }
    return params.at("w").values();
  };
  CHECK(run() == run());
}

TEST_CASE("adam_step: one step against l1_loss strictly decreases it") {
  Rng rng(32);
  ParameterSet params;
  params.add("w", Tensor::gaussian({1}, 0.0, 1.0, rng));
  const Tensor target = Tensor::from_values({1}, {5.0f});
  AdamConfig config;
  config.learning_rate = 1e-3f;
  AdamState state(config);

  Tape tape;
  const ParameterSet tracked = watch(params, tape);
  const Tensor loss = l1_loss(target, tracked.at("w"), &tape);
  const float before = loss.value();
  const GradientMap grads = backward(loss, tape);
  adam_step(params, collect_grads(tracked, grads), state);
  const float after = l1_loss(target, params.at("w")).value();
  CHECK(after < before);
}

TEST_CASE("loss breakdown: structural identities hold exactly, violations rejected") {
  LossBreakdown ok;
  ok.d_loss_real = 0.61f;
  ok.d_loss_fake = 0.74f;
  ok.d_loss_total = 0.61f + 0.74f;
  ok.g_adv = 0.8f;
  ok.g_l1 = 0.0125f;
  ok.lambda = 100.0f;
  ok.g_total = 0.8f + 100.0f * 0.0125f;
  CHECK_NOTHROW(validate(ok));

  LossBreakdown broken_total = ok;
  broken_total.d_loss_total += 0.01f;
  CHECK_THROWS_AS(validate(broken_total), Error);

  LossBreakdown broken_composition = ok;
  broken_composition.g_total += 0.5f;
  CHECK_THROWS_AS(validate(broken_composition), Error);

  LossBreakdown negative = ok;
  negative.g_l1 = -0.1f;
  CHECK_THROWS_AS(validate(negative), Error);
}

TEST_CASE("adam_step: dimension mismatches are rejected") {
  ParameterSet params;
  params.add("w", Tensor::from_values({2}, {1.0f, 2.0f}));
  AdamState state;
  std::vector<float> bad(3, 0.0f);
  CHECK_THROWS_AS(adam_step(params, {&bad}, state), Error);
  std::vector<const std::vector<float>*> wrong_count;
  CHECK_THROWS_AS(adam_step(params, wrong_count, state), Error);
}
