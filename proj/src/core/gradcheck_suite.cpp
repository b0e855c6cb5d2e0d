#include "core/gradcheck_suite.hpp"

#include <cmath>

#include "core/networks.hpp"
#include "core/objectives.hpp"
#include "core/ops.hpp"

namespace aseg {

namespace {

using DTensor = TensorT<double>;
using DTape = TapeT<double>;

DTensor uniform_tensor(std::vector<int> dims, Rng& rng, double lo, double hi) {
  size_t n = 1;
  for (int d : dims) n *= static_cast<size_t>(d);
  std::vector<double> values(n);
  for (auto& v : values) v = lo + rng.next_uniform() * (hi - lo);
  return DTensor(std::move(dims), std::move(values));
}

// Keeps samples away from derivative kinks (|x| = 0 for abs/relu family), so
// the finite-difference stencil stays on one branch.
DTensor away_from_zero(const DTensor& t, double min_abs) {
  std::vector<double> values = t.values();
  for (auto& v : values) {
    if (std::fabs(v) < min_abs) v = v < 0 ? v - min_abs : v + min_abs;
  }
  return DTensor(t.dims(), std::move(values));
}

// Weighted mean turns any op output into a scalar with non-uniform gradients.
DTensor weighted_mean(const DTensor& t, const DTensor& weights, DTape& tape) {
  return reduce_mean(mul(t, weights, &tape), &tape);
}

struct SuiteBuilder {
  std::vector<GradCheckCase> cases;
  Rng rng{20240617};

  void op_case(const std::string& name, const GradCheckFn& fn,
               std::vector<DTensor> inputs) {
    cases.push_back({name, grad_check(fn, inputs), kOpGradTolerance});
  }

  void graph_case(const std::string& name, const GradCheckFn& fn,
                  std::vector<DTensor> inputs) {
    cases.push_back({name, grad_check(fn, inputs), kGraphGradTolerance});
  }
};

void add_elementwise_cases(SuiteBuilder& b) {
  const std::vector<int> dims{2, 3};
  const DTensor w = uniform_tensor(dims, b.rng, -1.0, 1.0);
  const DTensor a = uniform_tensor(dims, b.rng, -2.0, 2.0);
  const DTensor b2 = uniform_tensor(dims, b.rng, -2.0, 2.0);
  const DTensor scalar_operand = uniform_tensor({1}, b.rng, -2.0, 2.0);

  b.op_case("add", [w](const auto& xs, DTape& t) { return weighted_mean(add(xs[0], xs[1], &t), w, t); },
            {a, b2});
  b.op_case("add_broadcast",
            [w](const auto& xs, DTape& t) { return weighted_mean(add(xs[0], xs[1], &t), w, t); },
            {a, scalar_operand});
  b.op_case("sub", [w](const auto& xs, DTape& t) { return weighted_mean(sub(xs[0], xs[1], &t), w, t); },
            {a, b2});
  b.op_case("mul", [w](const auto& xs, DTape& t) { return weighted_mean(mul(xs[0], xs[1], &t), w, t); },
            {a, b2});
  b.op_case("mul_broadcast",
            [w](const auto& xs, DTape& t) { return weighted_mean(mul(xs[0], xs[1], &t), w, t); },
            {a, scalar_operand});
  b.op_case("scalar_mul",
            [w](const auto& xs, DTape& t) {
              return weighted_mean(scalar_mul(xs[0], 1.7, &t), w, t);
            },
            {a});
  b.op_case("neg", [w](const auto& xs, DTape& t) { return weighted_mean(neg(xs[0], &t), w, t); },
            {a});
  b.op_case("abs", [w](const auto& xs, DTape& t) { return weighted_mean(abs(xs[0], &t), w, t); },
            {away_from_zero(a, 0.05)});
  b.op_case("log", [w](const auto& xs, DTape& t) { return weighted_mean(log(xs[0], &t), w, t); },
            {uniform_tensor(dims, b.rng, 0.4, 2.0)});
  b.op_case("softplus",
            [w](const auto& xs, DTape& t) { return weighted_mean(softplus(xs[0], &t), w, t); },
            {a});
  b.op_case("relu", [w](const auto& xs, DTape& t) { return weighted_mean(relu(xs[0], &t), w, t); },
            {away_from_zero(a, 0.05)});
  b.op_case("leaky_relu",
            [w](const auto& xs, DTape& t) {
              return weighted_mean(leaky_relu(xs[0], 0.2, &t), w, t);
            },
            {away_from_zero(a, 0.05)});
  b.op_case("tanh", [w](const auto& xs, DTape& t) { return weighted_mean(tanh(xs[0], &t), w, t); },
            {a});
  b.op_case("sigmoid",
            [w](const auto& xs, DTape& t) { return weighted_mean(sigmoid(xs[0], &t), w, t); },
            {a});
  b.op_case("reduce_mean", [](const auto& xs, DTape& t) { return reduce_mean(xs[0], &t); }, {a});
}

void add_structural_cases(SuiteBuilder& b) {
  const DTensor a = uniform_tensor({1, 2, 3, 3}, b.rng, -2.0, 2.0);
  const DTensor c = uniform_tensor({1, 1, 3, 3}, b.rng, -2.0, 2.0);
  const DTensor w3 = uniform_tensor({1, 3, 3, 3}, b.rng, -1.0, 1.0);
  const DTensor w_slice = uniform_tensor({1, 1, 3, 3}, b.rng, -1.0, 1.0);

  b.op_case("concat_channels",
            [w3](const auto& xs, DTape& t) {
              return weighted_mean(concat_channels(xs[0], xs[1], &t), w3, t);
            },
            {a, c});
  b.op_case("slice_channels",
            [w_slice](const auto& xs, DTape& t) {
              return weighted_mean(slice_channels(xs[0], 1, 2, &t), w_slice, t);
            },
            {a});

  const DTensor x4 = uniform_tensor({1, 2, 4, 4}, b.rng, -2.0, 2.0);
  const DTensor w_dropout = uniform_tensor({1, 2, 4, 4}, b.rng, -1.0, 1.0);
  b.op_case("dropout",
            [w_dropout](const auto& xs, DTape& t) {
              Rng mask_rng(99);  // reseeded per evaluation: identical mask
              return weighted_mean(dropout(xs[0], 0.4, mask_rng, true, &t), w_dropout, t);
            },
            {x4});
}

void add_conv_cases(SuiteBuilder& b) {
  struct Geometry {
    int in_ch, out_ch, size, kernel, stride, padding;
  };
  for (const Geometry g : {Geometry{1, 1, 4, 3, 1, 1}, Geometry{2, 3, 6, 4, 2, 1},
                           Geometry{2, 2, 5, 1, 1, 0}}) {
    const DTensor x = uniform_tensor({1, g.in_ch, g.size, g.size}, b.rng, -2.0, 2.0);
    const DTensor k =
        uniform_tensor({g.out_ch, g.in_ch, g.kernel, g.kernel}, b.rng, -1.0, 1.0);
    const DTensor bias = uniform_tensor({g.out_ch}, b.rng, -0.5, 0.5);
    const int out = conv_output_extent(g.size, g.kernel, g.stride, g.padding);
    const DTensor w = uniform_tensor({1, g.out_ch, out, out}, b.rng, -1.0, 1.0);
    const std::string name = "conv2d_k" + std::to_string(g.kernel) + "_s" +
                             std::to_string(g.stride) + "_p" + std::to_string(g.padding);
    b.op_case(name,
              [w, g](const auto& xs, DTape& t) {
                return weighted_mean(conv2d(xs[0], xs[1], xs[2], g.stride, g.padding, &t), w, t);
              },
              {x, k, bias});
  }
  for (const Geometry g : {Geometry{2, 2, 4, 4, 2, 1}, Geometry{2, 1, 4, 3, 1, 0}}) {
    const DTensor x = uniform_tensor({1, g.in_ch, g.size, g.size}, b.rng, -2.0, 2.0);
    const DTensor k =
        uniform_tensor({g.in_ch, g.out_ch, g.kernel, g.kernel}, b.rng, -1.0, 1.0);
    const DTensor bias = uniform_tensor({g.out_ch}, b.rng, -0.5, 0.5);
    const int out = conv_transpose_output_extent(g.size, g.kernel, g.stride, g.padding);
    const DTensor w = uniform_tensor({1, g.out_ch, out, out}, b.rng, -1.0, 1.0);
    const std::string name = "conv_transpose2d_k" + std::to_string(g.kernel) + "_s" +
                             std::to_string(g.stride) + "_p" + std::to_string(g.padding);
    b.op_case(name,
              [w, g](const auto& xs, DTape& t) {
                return weighted_mean(conv_transpose2d(xs[0], xs[1], xs[2], g.stride, g.padding, &t),
                                     w, t);
              },
              {x, k, bias});
  }

  const DTensor x = uniform_tensor({2, 3, 4, 4}, b.rng, -2.0, 2.0);
  const DTensor gain = uniform_tensor({3}, b.rng, 0.5, 1.5);
  const DTensor shift = uniform_tensor({3}, b.rng, -0.5, 0.5);
  const DTensor w = uniform_tensor({2, 3, 4, 4}, b.rng, -1.0, 1.0);
  b.op_case("channel_norm",
            [w](const auto& xs, DTape& t) {
              return weighted_mean(
                  channel_norm(xs[0], xs[1], xs[2], NormMode::train,
                               static_cast<RunningStatsT<double>*>(nullptr), &t),
                  w, t);
            },
            {x, gain, shift});

  const DTensor chain_x = uniform_tensor({1, 2, 6, 6}, b.rng, -2.0, 2.0);
  const DTensor chain_k = uniform_tensor({3, 2, 3, 3}, b.rng, -1.0, 1.0);
  const DTensor chain_bias = uniform_tensor({3}, b.rng, -0.5, 0.5);
  b.op_case("conv_leaky_mean_chain",
            [](const auto& xs, DTape& t) {
              return reduce_mean(leaky_relu(conv2d(xs[0], xs[1], xs[2], 1, 1, &t), 0.2, &t), &t);
            },
            {chain_x, chain_k, chain_bias});
}

void add_loss_cases(SuiteBuilder& b) {
  const std::vector<int> dims{2, 5};
  const DTensor logits = uniform_tensor(dims, b.rng, -3.0, 3.0);
  const DTensor logits2 = uniform_tensor(dims, b.rng, -3.0, 3.0);
  const DTensor target = uniform_tensor(dims, b.rng, 0.0, 1.0);
  const DTensor probs = uniform_tensor(dims, b.rng, 0.1, 0.9);
  const DTensor mask = uniform_tensor(dims, b.rng, 0.0, 1.0);

  b.op_case("bce_from_logits_target1",
            [](const auto& xs, DTape& t) { return bce_from_logits(xs[0], 1, &t); }, {logits});
  b.op_case("bce_from_logits_target0",
            [](const auto& xs, DTape& t) { return bce_from_logits(xs[0], 0, &t); }, {logits});
  b.op_case("bce_with_logits",
            [](const auto& xs, DTape& t) { return bce_with_logits(xs[0], xs[1], &t); },
            {logits, target});
  b.op_case("discriminator_loss",
            [](const auto& xs, DTape& t) { return discriminator_loss(xs[0], xs[1], &t).total; },
            {logits, logits2});
  b.op_case("l1_loss", [](const auto& xs, DTape& t) { return l1_loss(xs[0], xs[1], &t); },
            {uniform_tensor(dims, b.rng, -2.0, 2.0), uniform_tensor(dims, b.rng, 2.2, 4.0)});
  b.op_case("pixel_bce_loss",
            [](const auto& xs, DTape& t) { return pixel_bce_loss(xs[0], xs[1], &t); },
            {probs, mask});
  b.op_case("generator_total_loss",
            [](const auto& xs, DTape& t) {
              return generator_total_loss(xs[0], xs[1], 100.0, &t);
            },
            {uniform_tensor({1}, b.rng, 0.1, 1.0), uniform_tensor({1}, b.rng, 0.1, 1.0)});
}

ParameterSetT<double> assemble(const ParameterSetT<double>& reference,
                               const std::vector<DTensor>& values) {
  ParameterSetT<double> set;
  for (size_t i = 0; i < reference.size(); ++i) set.add(reference.name(i), values[i]);
  return set;
}

void add_graph_cases(SuiteBuilder& b) {
  GeneratorSpec gen_spec;
  gen_spec.base_width = 4;
  gen_spec.depth = 2;
  gen_spec.dropout_p = 0.5f;
  gen_spec.image_size = 8;
  DiscriminatorSpec disc_spec;
  disc_spec.base_width = 4;
  disc_spec.n_layers = 2;

  Rng build_rng(11);
  const ParameterSetT<double> gen_params = build_generator<double>(gen_spec, build_rng);
  const ParameterSetT<double> disc_params = build_discriminator<double>(disc_spec, build_rng);

  const DTensor x = uniform_tensor({1, 1, 8, 8}, b.rng, -1.0, 1.0);
  std::vector<double> y_values(64);
  for (size_t i = 0; i < y_values.size(); ++i) y_values[i] = (i % 3 == 0) ? 1.0 : -1.0;
  const DTensor y({1, 1, 8, 8}, y_values);

  std::vector<DTensor> gen_inputs;
  for (size_t i = 0; i < gen_params.size(); ++i) gen_inputs.push_back(gen_params.value(i));
  b.graph_case("generator_loss_graph",
               [gen_spec, disc_spec, gen_params, disc_params, x, y](const auto& xs, DTape& t) {
                 const ParameterSetT<double> params = assemble(gen_params, xs);
                 Rng noise_rng(5);  // reseeded per evaluation: identical dropout
                 const DTensor fake = generator_forward(params, gen_spec, x, true, noise_rng, &t);
                 const DTensor logits = discriminator_forward(disc_params, disc_spec, x, fake, &t);
                 const DTensor adv = generator_adversarial_loss(logits, &t);
                 const DTensor l1 = l1_loss(y, fake, &t);
                 return generator_total_loss(adv, l1, 100.0, &t);
               },
               gen_inputs);

  Rng fake_rng(17);
  const DTensor fake_const = uniform_tensor({1, 1, 8, 8}, fake_rng, -1.0, 1.0);
  std::vector<DTensor> disc_inputs;
  for (size_t i = 0; i < disc_params.size(); ++i) disc_inputs.push_back(disc_params.value(i));
  b.graph_case("discriminator_loss_graph",
               [disc_spec, disc_params, x, y, fake_const](const auto& xs, DTape& t) {
                 const ParameterSetT<double> params = assemble(disc_params, xs);
                 const DTensor logits_real = discriminator_forward(params, disc_spec, x, y, &t);
                 const DTensor logits_fake =
                     discriminator_forward(params, disc_spec, x, fake_const, &t);
                 return discriminator_loss(logits_real, logits_fake, &t).total;
               },
               disc_inputs);
}

}  // namespace

std::vector<GradCheckCase> run_grad_check_suite() {
  SuiteBuilder builder;
  add_elementwise_cases(builder);
  add_structural_cases(builder);
  add_conv_cases(builder);
  add_loss_cases(builder);
  add_graph_cases(builder);
  return builder.cases;
}

double max_error(const std::vector<GradCheckCase>& cases, double tolerance_class) {
  double worst = 0;
  for (const auto& c : cases) {
    if (c.tolerance == tolerance_class) worst = std::max(worst, c.max_rel_error);
  }
  return worst;
}

}  // namespace aseg
