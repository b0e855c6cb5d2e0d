#include <doctest.h>

#include <cmath>
#include <vector>

#include "core/gradcheck_suite.hpp"
#include "core/ops.hpp"

using namespace aseg;

namespace {

Tensor random_tensor(std::vector<int> dims, Rng& rng, float lo = -2.0f, float hi = 2.0f) {
  size_t n = 1;
  for (int d : dims) n *= static_cast<size_t>(d);
  std::vector<float> values(n);
  for (auto& v : values) v = lo + static_cast<float>(rng.next_uniform()) * (hi - lo);
  return Tensor(std::move(dims), std::move(values));
}

// Independent direct-summation reference: walks the input instead of the
// kernel window, all in double.
std::vector<double> conv_reference(const Tensor& input, const Tensor& kernel, const Tensor& bias,
                                   int stride, int padding) {
  const int batch = input.dim(0), in_ch = input.dim(1), in_h = input.dim(2), in_w = input.dim(3);
  const int out_ch = kernel.dim(0), kh = kernel.dim(2), kw = kernel.dim(3);
  const int out_h = conv_output_extent(in_h, kh, stride, padding);
  const int out_w = conv_output_extent(in_w, kw, stride, padding);
  std::vector<double> out(static_cast<size_t>(batch) * out_ch * out_h * out_w);
  for (int n = 0; n < batch; ++n) {
    for (int oc = 0; oc < out_ch; ++oc) {
      for (int oh = 0; oh < out_h; ++oh) {
        for (int ow = 0; ow < out_w; ++ow) {
          double acc = bias.at(static_cast<size_t>(oc));
          for (int ic = 0; ic < in_ch; ++ic) {
            for (int ih = 0; ih < in_h; ++ih) {
              for (int iw = 0; iw < in_w; ++iw) {
                const int fy = ih - (oh * stride - padding);
                const int fx = iw - (ow * stride - padding);
                if (fy < 0 || fy >= kh || fx < 0 || fx >= kw) continue;
                acc += static_cast<double>(input.at4(n, ic, ih, iw)) *
                       kernel.at4(oc, ic, fy, fx);
              }
            }
          }
          out[((static_cast<size_t>(n) * out_ch + oc) * out_h + oh) * out_w + ow] = acc;
        }
      }
    }
  }
  return out;
}

double inner(const Tensor& a, const Tensor& b) {
  REQUIRE(a.numel() == b.numel());
  double sum = 0;
  for (size_t i = 0; i < a.numel(); ++i)
    sum += static_cast<double>(a.at(i)) * static_cast<double>(b.at(i));
  return sum;
}

}  // namespace

TEST_CASE("conv2d: identity and zero kernels") {
  Rng rng(1);
  const Tensor x = random_tensor({1, 1, 5, 5}, rng);
  const Tensor unit = Tensor::from_values({1, 1, 1, 1}, {1.0f});
  const Tensor zero_bias = Tensor::full({1}, 0.0f);
  CHECK(conv2d(x, unit, zero_bias, 1, 0).values() == x.values());

  const Tensor zeros = Tensor::full({1, 1, 3, 3}, 0.0f);
  const Tensor bias = Tensor::full({1}, 0.75f);
  for (float v : conv2d(x, zeros, bias, 1, 1).values()) CHECK(v == 0.75f);
}

TEST_CASE("conv2d: matches the direct-summation reference") {
  Rng rng(2);
  const Tensor x = random_tensor({1, 1, 4, 4}, rng);
  const Tensor k = random_tensor({1, 1, 3, 3}, rng, -1.0f, 1.0f);
  const Tensor bias = random_tensor({1}, rng, -0.5f, 0.5f);
  const Tensor got = conv2d(x, k, bias, 1, 1);
  const std::vector<double> want = conv_reference(x, k, bias, 1, 1);
  REQUIRE(got.numel() == want.size());
  for (size_t i = 0; i < want.size(); ++i) {
    CHECK(got.at(i) == doctest::Approx(want[i]).epsilon(1e-6));
  }

  const Tensor x2 = random_tensor({2, 3, 7, 6}, rng);
  const Tensor k2 = random_tensor({4, 3, 4, 4}, rng, -1.0f, 1.0f);
  const Tensor bias2 = random_tensor({4}, rng, -0.5f, 0.5f);
  const Tensor got2 = conv2d(x2, k2, bias2, 2, 1);
  const std::vector<double> want2 = conv_reference(x2, k2, bias2, 2, 1);
  for (size_t i = 0; i < want2.size(); ++i) {
    CHECK(got2.at(i) == doctest::Approx(want2[i]).epsilon(1e-5));
  }
}

TEST_CASE("conv2d/conv_transpose2d: output extents follow the closed forms") {
  Rng rng(3);
  for (int k : {1, 3, 4}) {
    for (int s : {1, 2}) {
      for (int p : {0, 1}) {
        for (int size : {8, 9, 12}) {
          if (k > size + 2 * p) continue;
          const Tensor x = random_tensor({1, 2, size, size}, rng);
          const Tensor kern = random_tensor({3, 2, k, k}, rng, -1.0f, 1.0f);
          const Tensor bias = Tensor::full({3}, 0.0f);
          const Tensor y = conv2d(x, kern, bias, s, p);
          CHECK(y.dim(2) == (size + 2 * p - k) / s + 1);
          CHECK(y.dim(3) == (size + 2 * p - k) / s + 1);

          const int t_out = (size - 1) * s - 2 * p + k;
          const Tensor kern_t = random_tensor({2, 3, k, k}, rng, -1.0f, 1.0f);
          if (t_out >= 1) {
            const Tensor yt = conv_transpose2d(x, kern_t, bias, s, p);
            CHECK(yt.dim(2) == t_out);
          } else {
            CHECK_THROWS_AS(conv_transpose2d(x, kern_t, bias, s, p), Error);
          }
        }
      }
    }
  }
}

TEST_CASE("conv2d: rejects bad geometry and channel mismatch") {
  Rng rng(4);
  const Tensor x = random_tensor({1, 2, 4, 4}, rng);
  const Tensor k_chan = random_tensor({1, 3, 3, 3}, rng);
  const Tensor bias = Tensor::full({1}, 0.0f);
  CHECK_THROWS_AS(conv2d(x, k_chan, bias, 1, 1), Error);

  const Tensor k_huge = random_tensor({1, 2, 7, 7}, rng);
  CHECK_THROWS_AS(conv2d(x, k_huge, bias, 1, 0), Error);
}

TEST_CASE("conv_transpose2d: identity kernel and stride-2 upsampling extent") {
  Rng rng(5);
  const Tensor x = random_tensor({1, 1, 6, 6}, rng);
  const Tensor unit = Tensor::from_values({1, 1, 1, 1}, {1.0f});
  const Tensor zero_bias = Tensor::full({1}, 0.0f);
  CHECK(conv_transpose2d(x, unit, zero_bias, 1, 0).values() == x.values());

  const Tensor x8 = random_tensor({1, 2, 8, 8}, rng);
  const Tensor k = random_tensor({2, 1, 4, 4}, rng);
  const Tensor bias1 = Tensor::full({1}, 0.0f);
  const Tensor up = conv_transpose2d(x8, k, bias1, 2, 1);
  CHECK(up.dim(2) == 16);
  CHECK(up.dim(3) == 16);
}

TEST_CASE("conv_transpose2d: adjoint of conv2d under matching geometry") {
  Rng rng(6);
  struct Geometry {
    int size, k, s, p;
  };
  for (const Geometry g : {Geometry{4, 3, 1, 0}, Geometry{8, 4, 2, 1}, Geometry{5, 3, 2, 1}}) {
    const Tensor a = random_tensor({1, 2, g.size, g.size}, rng);
    const Tensor kernel = random_tensor({3, 2, g.k, g.k}, rng, -1.0f, 1.0f);
    const Tensor bias_fwd = Tensor::full({3}, 0.0f);
    const Tensor bias_bwd = Tensor::full({2}, 0.0f);
    const Tensor image = conv2d(a, kernel, bias_fwd, g.s, g.p);
    const Tensor b = random_tensor(image.dims(), rng);
    // conv kernel [out,in,kh,kw] doubles as the transpose kernel [in,out,...]
    const Tensor back = conv_transpose2d(b, kernel, bias_bwd, g.s, g.p);
    REQUIRE(back.dims() == a.dims());
    const double lhs = inner(image, b);
    const double rhs = inner(a, back);
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-5));
  }
}

TEST_CASE("channel_norm: constant input maps to zero, gain/shift apply") {
  const Tensor constant = Tensor::full({1, 2, 3, 3}, 4.0f);
  const Tensor gain = Tensor::full({2}, 1.0f);
  const Tensor shift = Tensor::full({2}, 0.0f);
  for (float v : channel_norm(constant, gain, shift, NormMode::train).values()) {
    CHECK(v == doctest::Approx(0.0));
  }

  const Tensor zero_gain = Tensor::full({2}, 0.0f);
  const Tensor shift_c = Tensor::full({2}, 1.25f);
  Rng rng(7);
  const Tensor x = random_tensor({2, 2, 4, 4}, rng);
  for (float v : channel_norm(x, zero_gain, shift_c, NormMode::train).values()) {
    CHECK(v == doctest::Approx(1.25));
  }
}

TEST_CASE("channel_norm: normalized statistics before gain/shift") {
  Rng rng(8);
  const Tensor x = random_tensor({2, 3, 5, 5}, rng, -3.0f, 3.0f);
  const Tensor gain = Tensor::full({3}, 1.0f);
  const Tensor shift = Tensor::full({3}, 0.0f);
  const Tensor y = channel_norm(x, gain, shift, NormMode::train);

  const int count = 2 * 5 * 5;
  for (int c = 0; c < 3; ++c) {
    double sum = 0, sq = 0;
    for (int n = 0; n < 2; ++n) {
      for (int h = 0; h < 5; ++h) {
        for (int w = 0; w < 5; ++w) {
          const double v = y.at4(n, c, h, w);
          sum += v;
          sq += v * v;
        }
      }
    }
    const double mean = sum / count;
    const double var = sq / count - mean * mean;
    CHECK(std::fabs(mean) < 1e-5);
    CHECK(std::fabs(var - 1.0) < 1e-3);
  }
}

TEST_CASE("channel_norm: eval mode consumes running statistics") {
  Rng rng(9);
  const Tensor gain = Tensor::full({2}, 1.0f);
  const Tensor shift = Tensor::full({2}, 0.0f);
  RunningStatsT<float> running;
  for (int i = 0; i < 50; ++i) {
    const Tensor x = random_tensor({4, 2, 3, 3}, rng, -1.0f, 3.0f);
    channel_norm(x, gain, shift, NormMode::train, &running);
  }
  REQUIRE(running.mean.size() == 2);

  const Tensor probe = Tensor::full({1, 2, 2, 2}, 1.0f);
  const Tensor y = channel_norm(probe, gain, shift, NormMode::eval, &running);
  for (int c = 0; c < 2; ++c) {
    const double expect =
        (1.0 - running.mean[c]) / std::sqrt(static_cast<double>(running.var[c]) + 1e-5);
    CHECK(y.at4(0, c, 0, 0) == doctest::Approx(expect).epsilon(1e-5));
  }

  RunningStatsT<float> empty;
  CHECK_THROWS_AS(channel_norm(probe, gain, shift, NormMode::eval, &empty), Error);
}

TEST_CASE("grad_check: linear maps are exact to rounding") {
  Rng rng(10);
  std::vector<double> weights(12);
  for (auto& w : weights) w = rng.next_uniform() * 2.0 - 1.0;
  const TensorT<double> w_const({3, 4}, weights);
  const GradCheckFn fn = [w_const](const std::vector<TensorT<double>>& xs, TapeT<double>& tape) {
    return reduce_mean(mul(xs[0], w_const, &tape), &tape);
  };
  std::vector<double> x0(12);
  for (auto& v : x0) v = rng.next_uniform() * 4.0 - 2.0;
  CHECK(grad_check(fn, {TensorT<double>({3, 4}, x0)}) <= 1e-9);
}

TEST_CASE("grad_check: rejects non-scalar functions") {
  const GradCheckFn fn = [](const std::vector<TensorT<double>>& xs, TapeT<double>& tape) {
    return add(xs[0], xs[0], &tape);
  };
  CHECK_THROWS_AS(grad_check(fn, {TensorT<double>({2}, {1.0, 2.0})}), Error);
}

TEST_CASE("grad_check suite: every operation and composed graph within tolerance") {
  const std::vector<GradCheckCase> cases = run_grad_check_suite();
  REQUIRE(cases.size() > 20);
  for (const auto& c : cases) {
    INFO(c.name, " err=", c.max_rel_error, " tol=", c.tolerance);
    CHECK(c.max_rel_error <= c.tolerance);
  }
  CHECK(max_error(cases, kOpGradTolerance) <= kOpGradTolerance);
  CHECK(max_error(cases, kGraphGradTolerance) <= kGraphGradTolerance);
}
