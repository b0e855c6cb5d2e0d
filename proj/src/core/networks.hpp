#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "core/ops.hpp"
#include "core/tensor.hpp"

namespace aseg {

// Translation generator: symmetric encoder/decoder with skip concatenation.
// image_size must be divisible by 2^depth so every level halves cleanly.
struct GeneratorSpec {
  int in_channels = 1;
  int out_channels = 1;
  int base_width = 16;   // first-level filter count; levels double, capped at 8x
  int depth = 4;         // number of down/up levels
  float dropout_p = 0.5f;
  int image_size = 64;   // square input
};

void validate(const GeneratorSpec& spec);

// Patch discriminator: joint (image, mask) input, stride-2 stack, one-channel
// logit map head.
struct DiscriminatorSpec {
  int in_channels = 2;
  int base_width = 16;
  int n_layers = 3;
};

void validate(const DiscriminatorSpec& spec);

// Ordered, uniquely named collection of tensors for one network. Iteration
// order is fixed at construction and identical across runs of the same spec.
template <class S>
class ParameterSetT {
 public:
  void add(const std::string& name, TensorT<S> value);
  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  const TensorT<S>& at(const std::string& name) const;
  void set(const std::string& name, TensorT<S> value);

  size_t size() const { return names_.size(); }
  const std::string& name(size_t i) const { return names_.at(i); }
  const TensorT<S>& value(size_t i) const { return values_.at(i); }
  void set(size_t i, TensorT<S> value) { values_.at(i) = std::move(value); }
  size_t total_elements() const;

 private:
  std::vector<std::string> names_;
  std::vector<TensorT<S>> values_;
  std::unordered_map<std::string, size_t> index_;
};

using ParameterSet = ParameterSetT<float>;

// Registers every parameter as a tape leaf; the returned set shares storage
// with the original but is tracked.
template <class S>
ParameterSetT<S> watch(const ParameterSetT<S>& params, TapeT<S>& tape);

// Channel width at an encoder/discriminator level: doubles per level, capped
// at eight times the base width.
int level_width(int base_width, int level);

// Weights drawn gaussian(0, 0.02), normalization gains gaussian(1, 0.02),
// biases and shifts zero; draw order equals parameter order.
template <class S>
ParameterSetT<S> build_generator(const GeneratorSpec& spec, Rng& rng);

// Forward pass; output matches the input dims with values in (-1, 1). When
// noise_active, dropout runs inside the innermost decoder blocks, drawing
// from `rng`.
template <class S>
TensorT<S> generator_forward(const ParameterSetT<S>& params, const GeneratorSpec& spec,
                             const TensorT<S>& x, bool noise_active, Rng& rng,
                             TapeT<S>* tape = nullptr);

template <class S>
ParameterSetT<S> build_discriminator(const DiscriminatorSpec& spec, Rng& rng);

// Concatenates (x, y) on channels and returns the patch logit map; no sigmoid
// is applied, losses handle it.
template <class S>
TensorT<S> discriminator_forward(const ParameterSetT<S>& params, const DiscriminatorSpec& spec,
                                 const TensorT<S>& x, const TensorT<S>& y,
                                 TapeT<S>* tape = nullptr);

// Baseline segmentation network: generator topology with a sigmoid head and
// no dropout.
template <class S>
ParameterSetT<S> build_baseline_unet(const GeneratorSpec& spec, Rng& rng);

// Pre-sigmoid output of the baseline network, for stable cross-entropy.
template <class S>
TensorT<S> baseline_forward_logits(const ParameterSetT<S>& params, const GeneratorSpec& spec,
                                   const TensorT<S>& x, TapeT<S>* tape = nullptr);

// Foreground probabilities in (0, 1).
template <class S>
TensorT<S> baseline_forward(const ParameterSetT<S>& params, const GeneratorSpec& spec,
                            const TensorT<S>& x, TapeT<S>* tape = nullptr);

}  // namespace aseg
