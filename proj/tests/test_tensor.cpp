#include <doctest.h>

#include <cmath>

#include "core/ops.hpp"
#include "core/tensor.hpp"

using namespace aseg;

TEST_CASE("construct: fill, values, and validation") {
  const Tensor zeros = Tensor::full({2, 2}, 0.0f);
  CHECK(zeros.values() == std::vector<float>{0, 0, 0, 0});

  const Tensor t = Tensor::from_values({3}, {1, 2, 3});
  CHECK(t.values() == std::vector<float>{1, 2, 3});

  CHECK_THROWS_AS(Tensor::from_values({2, 2}, {1, 2, 3}), Error);  // length mismatch
  CHECK_THROWS_AS(Tensor::from_values({0, 2}, {}), Error);        // zero extent
  CHECK_THROWS_AS(Tensor::full({3, 0}, 1.0f), Error);
}

TEST_CASE("construct: gaussian draws are seed-deterministic") {
  Rng rng_a(7), rng_b(7);
  const Tensor a = Tensor::gaussian({4, 4}, 0.0, 0.02, rng_a);
  const Tensor b = Tensor::gaussian({4, 4}, 0.0, 0.02, rng_b);
  CHECK(a.values() == b.values());

  Rng rng_c(8);
  const Tensor c = Tensor::gaussian({4, 4}, 0.0, 0.02, rng_c);
  CHECK(a.values() != c.values());
}

TEST_CASE("rng: identical seeds give identical streams") {
  Rng a(123456), b(123456);
  for (int i = 0; i < 100; ++i) {
    CHECK(a.next_u64() == b.next_u64());
  }
  for (int i = 0; i < 100; ++i) {
    CHECK(a.next_gaussian() == b.next_gaussian());
  }
}

TEST_CASE("elementwise: arithmetic basics") {
  const Tensor a = Tensor::from_values({2}, {1, 2});
  const Tensor b = Tensor::from_values({2}, {3, 4});
  CHECK(add(a, b).values() == std::vector<float>{4, 6});
  CHECK(sub(a, b).values() == std::vector<float>{-2, -2});
  CHECK(mul(a, b).values() == std::vector<float>{3, 8});
  CHECK(neg(a).values() == std::vector<float>{-1, -2});
  CHECK(scalar_mul(a, 2.0f).values() == std::vector<float>{2, 4});

  const Tensor x = Tensor::from_values({3}, {0.5f, -1.5f, 2.0f});
  const Tensor diff = abs(sub(x, x));
  for (float v : diff.values()) CHECK(v == 0.0f);

  CHECK(log(Tensor::from_values({1}, {1.0f})).value() == 0.0f);
  CHECK_THROWS_AS(log(Tensor::from_values({1}, {0.0f})), Error);
  CHECK_THROWS_AS(add(a, Tensor::from_values({3}, {1, 2, 3})), Error);
}

TEST_CASE("elementwise: scalar second operand broadcasts") {
  const Tensor a = Tensor::from_values({3}, {1, 2, 3});
  const Tensor s = Tensor::from_values({1}, {10});
  CHECK(add(a, s).values() == std::vector<float>{11, 12, 13});
  CHECK(mul(a, s).values() == std::vector<float>{10, 20, 30});
}

TEST_CASE("activations: fixed points and ranges") {
  const Tensor x = Tensor::from_values({5}, {-3, -1, 0, 1, 3});
  CHECK(sigmoid(x).values()[2] == doctest::Approx(0.5));
  CHECK(tanh(x).values()[2] == 0.0f);
  CHECK(relu(Tensor::from_values({1}, {-2.0f})).value() == 0.0f);
  CHECK(leaky_relu(Tensor::from_values({1}, {-1.0f}), 0.2f).value() == doctest::Approx(-0.2));
  for (float v : tanh(x).values()) {
    CHECK(v > -1.0f);
    CHECK(v < 1.0f);
  }
  for (float v : sigmoid(x).values()) {
    CHECK(v > 0.0f);
    CHECK(v < 1.0f);
  }
}

TEST_CASE("dropout: identity cases and validation") {
  Rng rng(3);
  const Tensor x = Tensor::from_values({4}, {1, 2, 3, 4});
  CHECK(dropout(x, 0.0, rng, true).values() == x.values());
  CHECK(dropout(x, 0.9, rng, false).values() == x.values());
  CHECK_THROWS_AS(dropout(x, 1.0, rng, true), Error);
  CHECK_THROWS_AS(dropout(x, -0.1, rng, true), Error);
}

TEST_CASE("dropout: survivor mean stays near 1 over a large draw") {
  Rng rng(42);
  const Tensor ones = Tensor::full({100000}, 1.0f);
  const Tensor dropped = dropout(ones, 0.5, rng, true);
  double sum = 0;
  for (float v : dropped.values()) sum += v;
  const double mean = sum / 100000.0;
  CHECK(mean > 0.99);
  CHECK(mean < 1.01);
}

TEST_CASE("dropout: masks are seed-deterministic") {
  Rng a(11), b(11);
  const Tensor x = Tensor::full({1000}, 1.0f);
  CHECK(dropout(x, 0.3, a, true).values() == dropout(x, 0.3, b, true).values());
}

TEST_CASE("concat/slice: round trip and channel accounting") {
  const Tensor a = Tensor::from_values({1, 1, 2, 2}, {1, 2, 3, 4});
  const Tensor b = Tensor::from_values({1, 2, 2, 2}, {5, 6, 7, 8, 9, 10, 11, 12});
  const Tensor joined = concat_channels(a, b);
  CHECK(joined.dims() == std::vector<int>{1, 3, 2, 2});
  CHECK(joined.at4(0, 0, 0, 0) == 1.0f);
  CHECK(joined.at4(0, 1, 0, 0) == 5.0f);
  CHECK(joined.at4(0, 2, 1, 1) == 12.0f);

  CHECK(slice_channels(joined, 0, 1).values() == a.values());
  CHECK(slice_channels(joined, 1, 3).values() == b.values());

  // Zero-channel operand: concatenation degenerates to the other input.
  const TensorT<float> empty({1, 0, 2, 2}, {});
  CHECK(concat_channels(a, empty).values() == a.values());

  CHECK_THROWS_AS(concat_channels(a, Tensor::full({1, 1, 3, 3}, 0.0f)), Error);
}

TEST_CASE("reduce_mean: definition and linearity over concatenation") {
  CHECK(reduce_mean(Tensor::full({3, 3}, 2.5f)).value() == doctest::Approx(2.5));
  CHECK(reduce_mean(Tensor::from_values({4}, {1, 2, 3, 4})).value() == doctest::Approx(2.5));

  Rng rng(5);
  const Tensor a = Tensor::gaussian({1, 2, 3, 3}, 0.0, 1.0, rng);
  const Tensor b = Tensor::gaussian({1, 2, 3, 3}, 0.0, 1.0, rng);
  const double joint = reduce_mean(concat_channels(a, b)).value();
  const double split = (reduce_mean(a).value() + reduce_mean(b).value()) / 2.0;
  CHECK(joint == doctest::Approx(split).epsilon(1e-6));
}

TEST_CASE("backward: mean gradient is 1/n") {
  Tape tape;
  const Tensor x = tape.leaf(Tensor::from_values({4}, {1, 2, 3, 4}));
  const Tensor loss = reduce_mean(x, &tape);
  const GradientMap grads = backward(loss, tape);
  const Tensor gx = grads.grad_or_zero(x);
  for (float v : gx.values()) CHECK(v == doctest::Approx(0.25));
}

TEST_CASE("backward: d(x^2)/dx = 2x") {
  Tape tape;
  const Tensor x = tape.leaf(Tensor::from_values({1}, {3.0f}));
  const Tensor loss = reduce_mean(mul(x, x, &tape), &tape);
  const GradientMap grads = backward(loss, tape);
  CHECK(grads.grad_or_zero(x).value() == doctest::Approx(6.0));
}

TEST_CASE("backward: fan-out contributions accumulate additively") {
  const Tensor x0 = Tensor::from_values({4}, {1, -2, 3, -4});

  Tape t1;
  const Tensor x1 = t1.leaf(x0);
  const GradientMap g1 = backward(reduce_mean(x1, &t1), t1);

  Tape t2;
  const Tensor x2 = t2.leaf(x0);
  const Tensor doubled = add(reduce_mean(x2, &t2), reduce_mean(x2, &t2), &t2);
  const GradientMap g2 = backward(doubled, t2);

  const auto& single = g1.grad_or_zero(x1).values();
  const auto& twice = g2.grad_or_zero(x2).values();
  for (size_t i = 0; i < single.size(); ++i) {
    CHECK(twice[i] == 2.0f * single[i]);
  }
}

TEST_CASE("backward: rejects non-scalar and off-tape losses") {
  Tape tape;
  const Tensor x = tape.leaf(Tensor::from_values({2}, {1, 2}));
  CHECK_THROWS_AS(backward(x, tape), Error);                        // not scalar
  CHECK_THROWS_AS(backward(Tensor::full({1}, 1.0f), tape), Error);  // not on tape
}

TEST_CASE("forward results on finite inputs stay finite") {
  Rng rng(17);
  const Tensor x = Tensor::gaussian({2, 3, 8, 8}, 0.0, 2.0, rng);
  const Tensor k = Tensor::gaussian({4, 3, 3, 3}, 0.0, 1.0, rng);
  const Tensor bias = Tensor::full({4}, 0.1f);
  CHECK(conv2d(x, k, bias, 1, 1).all_finite());
  CHECK(tanh(x).all_finite());
  CHECK(softplus(scalar_mul(x, 40.0f)).all_finite());
}
