#pragma once

#include <vector>

#include "core/networks.hpp"
#include "core/ops.hpp"
#include "core/tensor.hpp"

namespace aseg {

// One training step's loss values. d_loss_total is exactly real + fake and
// g_total exactly g_adv + lambda * g_l1, in the arithmetic of the float width
// they were computed in.
struct LossBreakdown {
  float d_loss_real = 0;
  float d_loss_fake = 0;
  float d_loss_total = 0;
  float g_adv = 0;
  float g_l1 = 0;
  float g_total = 0;
  float lambda = 0;
};

// Enforces the structural identities: d_loss_total = real + fake and
// g_total = g_adv + lambda * g_l1, exactly in float arithmetic, with every
// component finite and non-negative.
void validate(const LossBreakdown& breakdown);

// Mean sigmoid cross-entropy against a constant 0/1 target, in softplus form:
// target 1 -> mean(softplus(-l)), target 0 -> mean(softplus(l)). Equal to
// -mean log sigmoid(l) resp. -mean log(1 - sigmoid(l)) but never evaluates the
// log of a saturated sigmoid.
template <class S>
TensorT<S> bce_from_logits(const TensorT<S>& logits, int target, TapeT<S>* tape = nullptr);

// Mean sigmoid cross-entropy against a per-element target tensor:
// mean(softplus(l) - l * t).
template <class S>
TensorT<S> bce_with_logits(const TensorT<S>& logits, const TensorT<S>& targets,
                           TapeT<S>* tape = nullptr);

template <class S>
struct DiscriminatorLossT {
  TensorT<S> real;   // -E[log D(x, y)]
  TensorT<S> fake;   // -E[log(1 - D(x, G(x, z)))]
  TensorT<S> total;  // real + fake
};

template <class S>
DiscriminatorLossT<S> discriminator_loss(const TensorT<S>& logits_real,
                                         const TensorT<S>& logits_fake, TapeT<S>* tape = nullptr);

// Non-saturating generator objective: -E[log D(x, G(x, z))].
template <class S>
TensorT<S> generator_adversarial_loss(const TensorT<S>& logits_fake, TapeT<S>* tape = nullptr);

// Mean absolute difference.
template <class S>
TensorT<S> l1_loss(const TensorT<S>& target, const TensorT<S>& predicted,
                   TapeT<S>* tape = nullptr);

// g_adv + lambda * g_l1 on scalar loss tensors; lambda must be >= 0.
template <class S>
TensorT<S> generator_total_loss(const TensorT<S>& g_adv, const TensorT<S>& g_l1, S lambda,
                                TapeT<S>* tape = nullptr);

// Mean of -[m log p + (1 - m) log(1 - p)] on probabilities strictly inside
// (0, 1). Training paths use bce_with_logits upstream of the sigmoid instead.
template <class S>
TensorT<S> pixel_bce_loss(const TensorT<S>& probabilities, const TensorT<S>& mask,
                          TapeT<S>* tape = nullptr);

struct AdamConfig {
  float learning_rate = 2e-4f;
  float beta1 = 0.5f;
  float beta2 = 0.999f;
  float epsilon = 1e-8f;
};

// Bias-corrected first/second moment state, aligned with the parameter order
// of the set it updates. Moments start at zero and are sized lazily.
class AdamState {
 public:
  explicit AdamState(AdamConfig config = {}) : config_(config) {}
  const AdamConfig& config() const { return config_; }
  long step() const { return step_; }

  friend void adam_step(ParameterSet& params, const std::vector<const std::vector<float>*>& grads,
                        AdamState& state);

 private:
  AdamConfig config_;
  long step_ = 0;
  std::vector<std::vector<float>> m_;
  std::vector<std::vector<float>> v_;
};

// One update over the whole set; grads is aligned with parameter order and
// may hold nullptr for parameters without a gradient (treated as zero).
void adam_step(ParameterSet& params, const std::vector<const std::vector<float>*>& grads,
               AdamState& state);

// Pulls raw gradient buffers for every parameter of a watched set out of a
// gradient map, aligned with parameter order.
std::vector<const std::vector<float>*> collect_grads(const ParameterSet& watched,
                                                     const GradientMap& grads);

}  // namespace aseg
