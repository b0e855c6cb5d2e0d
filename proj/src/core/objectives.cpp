#include "core/objectives.hpp"

#include <cmath>

namespace aseg {

template <class S>
TensorT<S> bce_from_logits(const TensorT<S>& logits, int target, TapeT<S>* tape) {
  require_arg(target == 0 || target == 1, "bce_from_logits: target must be 0 or 1");
  if (target == 1) return reduce_mean(softplus(neg(logits, tape), tape), tape);
  return reduce_mean(softplus(logits, tape), tape);
}

template <class S>
TensorT<S> bce_with_logits(const TensorT<S>& logits, const TensorT<S>& targets, TapeT<S>* tape) {
  require_arg(logits.same_dims(targets), "bce_with_logits: dims mismatch");
  return reduce_mean(sub(softplus(logits, tape), mul(logits, targets, tape), tape), tape);
}

template <class S>
DiscriminatorLossT<S> discriminator_loss(const TensorT<S>& logits_real,
                                         const TensorT<S>& logits_fake, TapeT<S>* tape) {
  require_arg(logits_real.same_dims(logits_fake), "discriminator_loss: logit dims mismatch");
  DiscriminatorLossT<S> loss;
  loss.real = bce_from_logits(logits_real, 1, tape);
  loss.fake = bce_from_logits(logits_fake, 0, tape);
  loss.total = add(loss.real, loss.fake, tape);
  return loss;
}

template <class S>
TensorT<S> generator_adversarial_loss(const TensorT<S>& logits_fake, TapeT<S>* tape) {
  return bce_from_logits(logits_fake, 1, tape);
}

template <class S>
TensorT<S> l1_loss(const TensorT<S>& target, const TensorT<S>& predicted, TapeT<S>* tape) {
  require_arg(target.same_dims(predicted), "l1_loss: dims mismatch");
  return reduce_mean(abs(sub(target, predicted, tape), tape), tape);
}

template <class S>
TensorT<S> generator_total_loss(const TensorT<S>& g_adv, const TensorT<S>& g_l1, S lambda,
                                TapeT<S>* tape) {
  require_arg(lambda >= S(0), "generator_total_loss: lambda must be >= 0");
  require_arg(g_adv.numel() == 1 && g_l1.numel() == 1,
              "generator_total_loss: loss terms must be scalars");
  return add(g_adv, scalar_mul(g_l1, lambda, tape), tape);
}

template <class S>
TensorT<S> pixel_bce_loss(const TensorT<S>& probabilities, const TensorT<S>& mask,
                          TapeT<S>* tape) {
  require_arg(probabilities.same_dims(mask), "pixel_bce_loss: dims mismatch");
  // sub() broadcasts only its second operand, so (1 - x) is built as -(x - 1).
  const TensorT<S> one = TensorT<S>::full({1}, S(1));
  const TensorT<S> not_mask = neg(sub(mask, one, tape), tape);
  const TensorT<S> not_p = neg(sub(probabilities, one, tape), tape);
  const TensorT<S> hit = mul(mask, log(probabilities, tape), tape);
  const TensorT<S> miss = mul(not_mask, log(not_p, tape), tape);
  return reduce_mean(neg(add(hit, miss, tape), tape), tape);
}

void validate(const LossBreakdown& breakdown) {
  const auto finite_nonneg = [](float v) { return std::isfinite(v) && v >= 0.0f; };
  require(finite_nonneg(breakdown.d_loss_real) && finite_nonneg(breakdown.d_loss_fake) &&
              finite_nonneg(breakdown.d_loss_total) && finite_nonneg(breakdown.g_adv) &&
              finite_nonneg(breakdown.g_l1) && finite_nonneg(breakdown.g_total) &&
              finite_nonneg(breakdown.lambda),
          ErrorCode::numeric, "loss breakdown: non-finite or negative component");
  require(breakdown.d_loss_total == breakdown.d_loss_real + breakdown.d_loss_fake,
          ErrorCode::numeric, "loss breakdown: discriminator total is not real + fake");
  require(breakdown.g_total == breakdown.g_adv + breakdown.lambda * breakdown.g_l1,
          ErrorCode::numeric, "loss breakdown: generator total composition broken");
}

void adam_step(ParameterSet& params, const std::vector<const std::vector<float>*>& grads,
               AdamState& state) {
  require_arg(grads.size() == params.size(), "adam_step: gradient list must match parameter set");
  if (state.m_.empty()) {
    state.m_.resize(params.size());
    state.v_.resize(params.size());
  }
  require_arg(state.m_.size() == params.size(), "adam_step: state does not match parameter set");

  const AdamConfig& cfg = state.config_;
  state.step_ += 1;
  const float bias1 = 1.0f - std::pow(cfg.beta1, static_cast<float>(state.step_));
  const float bias2 = 1.0f - std::pow(cfg.beta2, static_cast<float>(state.step_));

  for (size_t p = 0; p < params.size(); ++p) {
    const TensorT<float>& param = params.value(p);
    const size_t n = param.numel();
    auto& m = state.m_[p];
    auto& v = state.v_[p];
    if (m.empty()) {
      m.assign(n, 0.0f);
      v.assign(n, 0.0f);
    }
    require_arg(m.size() == n, "adam_step: moment dims mismatch for " + params.name(p));
    const std::vector<float>* grad = grads[p];
    if (grad != nullptr) {
      require_arg(grad->size() == n, "adam_step: gradient dims mismatch for " + params.name(p));
    }

    const auto& w = param.values();
    std::vector<float> updated(w);
    bool changed = false;
    for (size_t i = 0; i < n; ++i) {
      const float g = grad ? (*grad)[i] : 0.0f;
      m[i] = cfg.beta1 * m[i] + (1.0f - cfg.beta1) * g;
      v[i] = cfg.beta2 * v[i] + (1.0f - cfg.beta2) * g * g;
      if (m[i] == 0.0f && v[i] == 0.0f) continue;  // untouched parameter
      const float m_hat = m[i] / bias1;
      const float v_hat = v[i] / bias2;
      updated[i] = w[i] - cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
      changed = true;
    }
    if (changed) params.set(p, TensorT<float>(param.dims(), std::move(updated)));
  }
}

std::vector<const std::vector<float>*> collect_grads(const ParameterSet& watched,
                                                     const GradientMap& grads) {
  std::vector<const std::vector<float>*> out(watched.size(), nullptr);
  for (size_t i = 0; i < watched.size(); ++i) {
    out[i] = grads.raw(watched.value(i).node());
  }
  return out;
}

#define ASEG_INSTANTIATE_OBJECTIVES(S)                                                        \
  template TensorT<S> bce_from_logits<S>(const TensorT<S>&, int, TapeT<S>*);                  \
  template TensorT<S> bce_with_logits<S>(const TensorT<S>&, const TensorT<S>&, TapeT<S>*);    \
  template DiscriminatorLossT<S> discriminator_loss<S>(const TensorT<S>&, const TensorT<S>&,  \
                                                       TapeT<S>*);                            \
  template TensorT<S> generator_adversarial_loss<S>(const TensorT<S>&, TapeT<S>*);            \
  template TensorT<S> l1_loss<S>(const TensorT<S>&, const TensorT<S>&, TapeT<S>*);            \
  template TensorT<S> generator_total_loss<S>(const TensorT<S>&, const TensorT<S>&, S,        \
                                              TapeT<S>*);                                     \
  template TensorT<S> pixel_bce_loss<S>(const TensorT<S>&, const TensorT<S>&, TapeT<S>*);

ASEG_INSTANTIATE_OBJECTIVES(float)
ASEG_INSTANTIATE_OBJECTIVES(double)

#undef ASEG_INSTANTIATE_OBJECTIVES

}  // namespace aseg
