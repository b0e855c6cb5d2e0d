#include "core/networks.hpp"

#include <algorithm>
#include <string>

namespace aseg {

void validate(const GeneratorSpec& spec) {
  require_arg(spec.in_channels >= 1 && spec.out_channels >= 1,
              "generator spec: channel counts must be >= 1");
  require_arg(spec.depth >= 2, "generator spec: depth must be >= 2");
  require_arg(spec.base_width >= 4, "generator spec: base_width must be >= 4");
  require_arg(spec.dropout_p >= 0.0f && spec.dropout_p < 1.0f,
              "generator spec: dropout_p must be in [0, 1)");
  require_arg(spec.image_size >= 1, "generator spec: image_size must be >= 1");
  const int step = 1 << spec.depth;
  require_arg(spec.image_size % step == 0 && spec.image_size / step >= 1,
              "generator spec: image_size must be divisible by 2^depth");
}

void validate(const DiscriminatorSpec& spec) {
  require_arg(spec.in_channels >= 1, "discriminator spec: in_channels must be >= 1");
  require_arg(spec.base_width >= 4, "discriminator spec: base_width must be >= 4");
  require_arg(spec.n_layers >= 1, "discriminator spec: n_layers must be >= 1");
}

template <class S>
void ParameterSetT<S>::add(const std::string& name, TensorT<S> value) {
  require_arg(index_.count(name) == 0, "parameter set: duplicate name " + name);
  index_.emplace(name, names_.size());
  names_.push_back(name);
  values_.push_back(std::move(value));
}

template <class S>
const TensorT<S>& ParameterSetT<S>::at(const std::string& name) const {
  const auto it = index_.find(name);
  require_arg(it != index_.end(), "parameter set: unknown name " + name);
  return values_[it->second];
}

template <class S>
void ParameterSetT<S>::set(const std::string& name, TensorT<S> value) {
  const auto it = index_.find(name);
  require_arg(it != index_.end(), "parameter set: unknown name " + name);
  values_[it->second] = std::move(value);
}

template <class S>
size_t ParameterSetT<S>::total_elements() const {
  size_t n = 0;
  for (const auto& v : values_) n += v.numel();
  return n;
}

template <class S>
ParameterSetT<S> watch(const ParameterSetT<S>& params, TapeT<S>& tape) {
  ParameterSetT<S> tracked;
  for (size_t i = 0; i < params.size(); ++i) {
    tracked.add(params.name(i), tape.leaf(params.value(i)));
  }
  return tracked;
}

int level_width(int base_width, int level) { return base_width << std::min(level, 3); }

namespace {

constexpr int kKernel = 4;

// Decoder blocks carrying dropout: the innermost three, never the output
// block.
bool decoder_has_dropout(int block, int depth) { return block < std::min(3, depth - 1); }

template <class S>
void add_conv_block(ParameterSetT<S>& params, const std::string& prefix, int in_ch, int out_ch,
                    bool with_norm, Rng& rng) {
  params.add(prefix + ".conv.weight",
             TensorT<S>::gaussian({out_ch, in_ch, kKernel, kKernel}, 0.0, 0.02, rng));
  params.add(prefix + ".conv.bias", TensorT<S>::full({out_ch}, S(0)));
  if (with_norm) {
    params.add(prefix + ".norm.gain", TensorT<S>::gaussian({out_ch}, 1.0, 0.02, rng));
    params.add(prefix + ".norm.shift", TensorT<S>::full({out_ch}, S(0)));
  }
}

template <class S>
void add_deconv_block(ParameterSetT<S>& params, const std::string& prefix, int in_ch, int out_ch,
                      bool with_norm, Rng& rng) {
  params.add(prefix + ".convt.weight",
             TensorT<S>::gaussian({in_ch, out_ch, kKernel, kKernel}, 0.0, 0.02, rng));
  params.add(prefix + ".convt.bias", TensorT<S>::full({out_ch}, S(0)));
  if (with_norm) {
    params.add(prefix + ".norm.gain", TensorT<S>::gaussian({out_ch}, 1.0, 0.02, rng));
    params.add(prefix + ".norm.shift", TensorT<S>::full({out_ch}, S(0)));
  }
}

template <class S>
ParameterSetT<S> build_unet_params(const GeneratorSpec& spec, Rng& rng) {
  validate(spec);
  ParameterSetT<S> params;
  const int depth = spec.depth;
  for (int i = 0; i < depth; ++i) {
    const int in_ch = i == 0 ? spec.in_channels : level_width(spec.base_width, i - 1);
    add_conv_block(params, "enc" + std::to_string(i), in_ch, level_width(spec.base_width, i),
                   /*with_norm=*/i > 0, rng);
  }
  for (int j = 0; j < depth; ++j) {
    const int in_ch = j == 0 ? level_width(spec.base_width, depth - 1)
                             : level_width(spec.base_width, depth - 1 - j) +
                                   level_width(spec.base_width, depth - 1 - j);
    const bool final_block = j == depth - 1;
    const int out_ch = final_block ? spec.out_channels : level_width(spec.base_width, depth - 2 - j);
    add_deconv_block(params, "dec" + std::to_string(j), in_ch, out_ch,
                     /*with_norm=*/!final_block, rng);
  }
  return params;
}

// Shared encoder/decoder pass; the head activation differs between the
// generator (tanh) and the baseline (sigmoid, applied by the caller).
template <class S>
TensorT<S> unet_forward_raw(const ParameterSetT<S>& params, const GeneratorSpec& spec,
                            const TensorT<S>& x, bool noise_active, Rng& rng, TapeT<S>* tape) {
  validate(spec);
  require_arg(x.rank() == 4, "generator: input must be [N,C,H,W]");
  require_arg(x.dim(1) == spec.in_channels, "generator: input channel mismatch");
  require_arg(x.dim(2) == spec.image_size && x.dim(3) == spec.image_size,
              "generator: input size does not match spec.image_size");

  const int depth = spec.depth;
  std::vector<TensorT<S>> skips;
  skips.reserve(depth);
  TensorT<S> h = x;
  for (int i = 0; i < depth; ++i) {
    const std::string prefix = "enc" + std::to_string(i);
    h = conv2d(h, params.at(prefix + ".conv.weight"), params.at(prefix + ".conv.bias"),
               /*stride=*/2, /*padding=*/1, tape);
    if (i > 0) {
      h = channel_norm(h, params.at(prefix + ".norm.gain"), params.at(prefix + ".norm.shift"),
                       NormMode::train, static_cast<RunningStatsT<S>*>(nullptr), tape);
    }
    h = leaky_relu(h, S(0.2), tape);
    skips.push_back(h);
  }
  for (int j = 0; j < depth; ++j) {
    const std::string prefix = "dec" + std::to_string(j);
    TensorT<S> input = j == 0 ? skips[depth - 1] : concat_channels(h, skips[depth - 1 - j], tape);
    h = conv_transpose2d(input, params.at(prefix + ".convt.weight"),
                         params.at(prefix + ".convt.bias"), /*stride=*/2, /*padding=*/1, tape);
    if (j < depth - 1) {
      h = channel_norm(h, params.at(prefix + ".norm.gain"), params.at(prefix + ".norm.shift"),
                       NormMode::train, static_cast<RunningStatsT<S>*>(nullptr), tape);
      if (decoder_has_dropout(j, depth)) {
        h = dropout(h, spec.dropout_p, rng, noise_active, tape);
      }
      h = relu(h, tape);
    }
  }
  return h;
}

}  // namespace

template <class S>
ParameterSetT<S> build_generator(const GeneratorSpec& spec, Rng& rng) {
  return build_unet_params<S>(spec, rng);
}

template <class S>
TensorT<S> generator_forward(const ParameterSetT<S>& params, const GeneratorSpec& spec,
                             const TensorT<S>& x, bool noise_active, Rng& rng, TapeT<S>* tape) {
  return tanh(unet_forward_raw(params, spec, x, noise_active, rng, tape), tape);
}

template <class S>
ParameterSetT<S> build_discriminator(const DiscriminatorSpec& spec, Rng& rng) {
  validate(spec);
  ParameterSetT<S> params;
  for (int i = 0; i < spec.n_layers; ++i) {
    const int in_ch = i == 0 ? spec.in_channels : level_width(spec.base_width, i - 1);
    add_conv_block(params, "blk" + std::to_string(i), in_ch, level_width(spec.base_width, i),
                   /*with_norm=*/i > 0, rng);
  }
  params.add("head.conv.weight",
             TensorT<S>::gaussian({1, level_width(spec.base_width, spec.n_layers - 1), kKernel,
                                   kKernel},
                                  0.0, 0.02, rng));
  params.add("head.conv.bias", TensorT<S>::full({1}, S(0)));
  return params;
}

template <class S>
TensorT<S> discriminator_forward(const ParameterSetT<S>& params, const DiscriminatorSpec& spec,
                                 const TensorT<S>& x, const TensorT<S>& y, TapeT<S>* tape) {
  validate(spec);
  require_arg(x.rank() == 4 && y.rank() == 4, "discriminator: inputs must be [N,C,H,W]");
  require_arg(x.dim(0) == y.dim(0) && x.dim(2) == y.dim(2) && x.dim(3) == y.dim(3),
              "discriminator: spatial/batch mismatch between image and mask");
  require_arg(x.dim(1) + y.dim(1) == spec.in_channels,
              "discriminator: combined channels do not match spec.in_channels");

  TensorT<S> h = concat_channels(x, y, tape);
  for (int i = 0; i < spec.n_layers; ++i) {
    const std::string prefix = "blk" + std::to_string(i);
    h = conv2d(h, params.at(prefix + ".conv.weight"), params.at(prefix + ".conv.bias"),
               /*stride=*/2, /*padding=*/1, tape);
    if (i > 0) {
      h = channel_norm(h, params.at(prefix + ".norm.gain"), params.at(prefix + ".norm.shift"),
                       NormMode::train, static_cast<RunningStatsT<S>*>(nullptr), tape);
    }
    h = leaky_relu(h, S(0.2), tape);
  }
  return conv2d(h, params.at("head.conv.weight"), params.at("head.conv.bias"), /*stride=*/1,
                /*padding=*/1, tape);
}

template <class S>
ParameterSetT<S> build_baseline_unet(const GeneratorSpec& spec, Rng& rng) {
  return build_unet_params<S>(spec, rng);
}

template <class S>
TensorT<S> baseline_forward_logits(const ParameterSetT<S>& params, const GeneratorSpec& spec,
                                   const TensorT<S>& x, TapeT<S>* tape) {
  Rng unused(0);
  return unet_forward_raw(params, spec, x, /*noise_active=*/false, unused, tape);
}

template <class S>
TensorT<S> baseline_forward(const ParameterSetT<S>& params, const GeneratorSpec& spec,
                            const TensorT<S>& x, TapeT<S>* tape) {
  return sigmoid(baseline_forward_logits(params, spec, x, tape), tape);
}

#define ASEG_INSTANTIATE_NETWORKS(S)                                                        \
  template class ParameterSetT<S>;                                                         \
  template ParameterSetT<S> watch<S>(const ParameterSetT<S>&, TapeT<S>&);                   \
  template ParameterSetT<S> build_generator<S>(const GeneratorSpec&, Rng&);                 \
  template TensorT<S> generator_forward<S>(const ParameterSetT<S>&, const GeneratorSpec&,   \
                                           const TensorT<S>&, bool, Rng&, TapeT<S>*);       \
  template ParameterSetT<S> build_discriminator<S>(const DiscriminatorSpec&, Rng&);         \
  template TensorT<S> discriminator_forward<S>(const ParameterSetT<S>&,                     \
                                               const DiscriminatorSpec&, const TensorT<S>&, \
                                               const TensorT<S>&, TapeT<S>*);               \
  template ParameterSetT<S> build_baseline_unet<S>(const GeneratorSpec&, Rng&);             \
  template TensorT<S> baseline_forward_logits<S>(const ParameterSetT<S>&,                   \
                                                 const GeneratorSpec&, const TensorT<S>&,   \
                                                 TapeT<S>*);                                \
  template TensorT<S> baseline_forward<S>(const ParameterSetT<S>&, const GeneratorSpec&,    \
                                          const TensorT<S>&, TapeT<S>*);

ASEG_INSTANTIATE_NETWORKS(float)
ASEG_INSTANTIATE_NETWORKS(double)

#undef ASEG_INSTANTIATE_NETWORKS

}  // namespace aseg
