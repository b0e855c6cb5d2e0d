#include "core/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "core/image_io.hpp"

namespace aseg {

const char* model_kind_name(ModelKind kind) {
  switch (kind) {
    case ModelKind::pix2pix:
      return "pix2pix";
    case ModelKind::unet_baseline:
      return "unet_baseline";
  }
  return "?";
}

void validate(const TrainConfig& config) {
  require_arg(config.epochs >= 1, "train config: epochs must be >= 1");
  require_arg(config.batch_size >= 1, "train config: batch_size must be >= 1");
  require_arg(config.lambda_l1 >= 0.0f, "train config: lambda must be >= 0");
  validate(config.generator);
  if (config.model == ModelKind::pix2pix) validate(config.discriminator);
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

Tensor stack_samples(const std::vector<SamplePair>& samples, const std::vector<size_t>& batch,
                     const Tensor SamplePair::*field) {
  const Tensor& first = samples[batch.front()].*field;
  const int channels = first.dim(1), height = first.dim(2), width = first.dim(3);
  std::vector<float> values;
  values.reserve(batch.size() * first.numel());
  for (size_t index : batch) {
    const auto& v = (samples[index].*field).values();
    values.insert(values.end(), v.begin(), v.end());
  }
  return Tensor({static_cast<int>(batch.size()), channels, height, width}, std::move(values));
}

std::vector<size_t> epoch_order(size_t count, bool shuffle, Rng& rng) {
  std::vector<size_t> order(count);
  for (size_t i = 0; i < count; ++i) order[i] = i;
  if (shuffle) {
    for (size_t i = count; i > 1; --i) {
      const size_t j = static_cast<size_t>(rng.next_below(i));
      std::swap(order[i - 1], order[j]);
    }
  }
  return order;
}

void check_finite(float value, const char* what, long step) {
  require(std::isfinite(value), ErrorCode::numeric,
          std::string("non-finite ") + what + " at step " + std::to_string(step));
}

}  // namespace

TrainResult train_pix2pix(const TrainConfig& config, const std::vector<SamplePair>& train_set) {
  validate(config);
  require_arg(config.model == ModelKind::pix2pix, "train_pix2pix: wrong model kind");
  require_arg(!train_set.empty(), "train_pix2pix: empty training set");

  Rng rng(config.seed);
  ParameterSet gen = build_generator<float>(config.generator, rng);
  ParameterSet disc = build_discriminator<float>(config.discriminator, rng);
  AdamState gen_state(config.optimizer);
  AdamState disc_state(config.optimizer);

  TrainResult result;
  long step = 0;
  const auto run_start = Clock::now();
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const auto epoch_start = Clock::now();
    const auto order = epoch_order(train_set.size(), config.shuffle, rng);
    for (size_t at = 0; at < order.size(); at += static_cast<size_t>(config.batch_size)) {
      const std::vector<size_t> batch(
          order.begin() + at,
          order.begin() + std::min(at + static_cast<size_t>(config.batch_size), order.size()));
      const Tensor x = stack_samples(train_set, batch, &SamplePair::input);
      const Tensor y = stack_samples(train_set, batch, &SamplePair::mask_signed);
      ++step;

      // Discriminator step on (x, y) vs (x, detached fake).
      Tensor fake = generator_forward(gen, config.generator, x, /*noise_active=*/true, rng);
      Tape d_tape;
      ParameterSet disc_w = watch(disc, d_tape);
      const Tensor logits_real =
          discriminator_forward(disc_w, config.discriminator, x, y, &d_tape);
      const Tensor logits_fake =
          discriminator_forward(disc_w, config.discriminator, x, fake, &d_tape);
      const DiscriminatorLossT<float> d_loss =
          discriminator_loss(logits_real, logits_fake, &d_tape);
      check_finite(d_loss.total.value(), "discriminator loss", step);
      const GradientMap d_grads = backward(d_loss.total, d_tape);
      adam_step(disc, collect_grads(disc_w, d_grads), disc_state);

      // Generator step: fresh forward pass against the updated discriminator.
      Tape g_tape;
      ParameterSet gen_w = watch(gen, g_tape);
      const Tensor fake2 =
          generator_forward(gen_w, config.generator, x, /*noise_active=*/true, rng, &g_tape);
      const Tensor logits_fake2 =
          discriminator_forward(disc, config.discriminator, x, fake2, &g_tape);
      const Tensor g_adv = generator_adversarial_loss(logits_fake2, &g_tape);
      const Tensor g_l1 = l1_loss(y, fake2, &g_tape);
      const Tensor g_total = generator_total_loss(g_adv, g_l1, config.lambda_l1, &g_tape);
      check_finite(g_total.value(), "generator loss", step);
      const GradientMap g_grads = backward(g_total, g_tape);
      adam_step(gen, collect_grads(gen_w, g_grads), gen_state);

      const LossBreakdown breakdown{d_loss.real.value(), d_loss.fake.value(),
                                    d_loss.total.value(), g_adv.value(),
                                    g_l1.value(),         g_total.value(),
                                    config.lambda_l1};
      validate(breakdown);
      result.log.pix2pix_rows.push_back(
          {step, breakdown.d_loss_total, breakdown.g_adv, breakdown.g_l1, breakdown.g_total});
    }
    result.log.epoch_seconds.push_back(seconds_since(epoch_start));
  }
  result.log.total_seconds = seconds_since(run_start);

  result.checkpoint.model = ModelKind::pix2pix;
  result.checkpoint.generator_spec = config.generator;
  result.checkpoint.discriminator_spec = config.discriminator;
  result.checkpoint.step = static_cast<uint32_t>(step);
  result.checkpoint.generator = std::move(gen);
  result.checkpoint.discriminator = std::move(disc);
  return result;
}

TrainResult train_baseline(const TrainConfig& config, const std::vector<SamplePair>& train_set) {
  validate(config);
  require_arg(config.model == ModelKind::unet_baseline, "train_baseline: wrong model kind");
  require_arg(!train_set.empty(), "train_baseline: empty training set");

  Rng rng(config.seed);
  ParameterSet net = build_baseline_unet<float>(config.generator, rng);
  AdamState state(config.optimizer);

  TrainResult result;
  long step = 0;
  const auto run_start = Clock::now();
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const auto epoch_start = Clock::now();
    const auto order = epoch_order(train_set.size(), config.shuffle, rng);
    for (size_t at = 0; at < order.size(); at += static_cast<size_t>(config.batch_size)) {
      const std::vector<size_t> batch(
          order.begin() + at,
          order.begin() + std::min(at + static_cast<size_t>(config.batch_size), order.size()));
      const Tensor x = stack_samples(train_set, batch, &SamplePair::input);
      const Tensor mask = stack_samples(train_set, batch, &SamplePair::mask01);
      ++step;

      Tape tape;
      ParameterSet net_w = watch(net, tape);
      const Tensor logits = baseline_forward_logits(net_w, config.generator, x, &tape);
      const Tensor loss = bce_with_logits(logits, mask, &tape);
      check_finite(loss.value(), "baseline loss", step);
      const GradientMap grads = backward(loss, tape);
      adam_step(net, collect_grads(net_w, grads), state);

      result.log.baseline_rows.push_back({step, loss.value()});
    }
    result.log.epoch_seconds.push_back(seconds_since(epoch_start));
  }
  result.log.total_seconds = seconds_since(run_start);

  result.checkpoint.model = ModelKind::unet_baseline;
  result.checkpoint.generator_spec = config.generator;
  result.checkpoint.step = static_cast<uint32_t>(step);
  result.checkpoint.generator = std::move(net);
  return result;
}

TrainResult train_model(const TrainConfig& config, const std::vector<SamplePair>& train_set) {
  return config.model == ModelKind::pix2pix ? train_pix2pix(config, train_set)
                                            : train_baseline(config, train_set);
}

void write_trainlog_csv(const TrainLog& log, ModelKind kind, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorCode::io, "cannot write trainlog: " + path);
  char line[160];
  if (kind == ModelKind::pix2pix) {
    out << "step,d_loss,g_adv,g_l1,g_total\n";
    for (const auto& row : log.pix2pix_rows) {
      std::snprintf(line, sizeof(line), "%ld,%.6f,%.6f,%.6f,%.6f\n", row.step, row.d_loss,
                    row.g_adv, row.g_l1, row.g_total);
      out << line;
    }
  } else {
    out << "step,bce\n";
    for (const auto& row : log.baseline_rows) {
      std::snprintf(line, sizeof(line), "%ld,%.6f\n", row.step, row.bce);
      out << line;
    }
  }
  require(out.good(), ErrorCode::io, "trainlog write failed: " + path);
}

EvalResult evaluate_with(const std::vector<SamplePair>& pairs,
                         const std::function<Tensor(const SamplePair&)>& predict,
                         float threshold) {
  require_arg(!pairs.empty(), "evaluate: empty pair list");
  EvalResult result;
  const auto start = std::chrono::steady_clock::now();
  for (const auto& pair : pairs) {
    const Tensor prediction = predict(pair);
    const Tensor mask = binarize(prediction, threshold);
    result.records.push_back(make_record(pair.id, confusion(mask, pair.mask01)));
  }
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  result.summaries = summarize_all(result.records);
  return result;
}

Tensor predict_batch(const Checkpoint& checkpoint, const Tensor& input, bool noise_active,
                     Rng& noise_rng) {
  if (checkpoint.model == ModelKind::pix2pix) {
    return generator_forward(checkpoint.generator, checkpoint.generator_spec, input, noise_active,
                             noise_rng);
  }
  return baseline_forward(checkpoint.generator, checkpoint.generator_spec, input);
}

EvalResult evaluate_checkpoint(const Checkpoint& checkpoint, const std::vector<SamplePair>& pairs,
                               bool noise_active, uint64_t noise_seed) {
  const float threshold =
      checkpoint.model == ModelKind::pix2pix ? kTanhThreshold : kProbabilityThreshold;
  Rng noise_rng(noise_seed);
  return evaluate_with(
      pairs,
      [&](const SamplePair& pair) {
        require_arg(pair.input.dim(2) == checkpoint.generator_spec.image_size,
                    "evaluate: sample size does not match checkpoint image_size");
        return predict_batch(checkpoint, pair.input, noise_active, noise_rng);
      },
      threshold);
}

namespace {

constexpr char kMagic[4] = {'A', 'S', 'E', 'G'};

void put_u16(std::string& out, uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_u32(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

uint32_t float_bits(float v) {
  uint32_t bits;
  std::memcpy(&bits, &v, sizeof(bits));
  return bits;
}

float bits_float(uint32_t bits) {
  float v;
  std::memcpy(&v, &bits, sizeof(v));
  return v;
}

void put_tensor(std::string& out, const std::string& name, const Tensor& t) {
  require_arg(name.size() <= 0xffff, "checkpoint: tensor name too long");
  put_u16(out, static_cast<uint16_t>(name.size()));
  out.append(name);
  require_arg(t.rank() <= 0xff, "checkpoint: tensor rank too large");
  out.push_back(static_cast<char>(t.rank()));
  for (int i = 0; i < t.rank(); ++i) put_u32(out, static_cast<uint32_t>(t.dim(i)));
  for (float v : t.values()) put_u32(out, float_bits(v));
}

class Reader {
 public:
  Reader(const std::string& bytes, const std::string& path) : bytes_(bytes), path_(path) {}

  uint8_t u8(const std::string& what) {
    need(1, what);
    return static_cast<uint8_t>(bytes_[at_++]);
  }
  uint16_t u16(const std::string& what) {
    need(2, what);
    const uint16_t v = static_cast<uint16_t>(static_cast<uint8_t>(bytes_[at_])) |
                       static_cast<uint16_t>(static_cast<uint8_t>(bytes_[at_ + 1])) << 8;
    at_ += 2;
    return v;
  }
  uint32_t u32(const std::string& what) {
    need(4, what);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<uint32_t>(static_cast<uint8_t>(bytes_[at_ + i])) << (8 * i);
    at_ += 4;
    return v;
  }
  std::string raw(size_t n, const std::string& what) {
    need(n, what);
    std::string out = bytes_.substr(at_, n);
    at_ += n;
    return out;
  }
  bool remaining(size_t n) const { return at_ + n <= bytes_.size(); }

 private:
  void need(size_t n, const std::string& what) {
    require(at_ + n <= bytes_.size(), ErrorCode::format,
            "truncated " + what + " in checkpoint: " + path_);
  }
  const std::string& bytes_;
  const std::string& path_;
  size_t at_ = 0;
};

}  // namespace

void save_checkpoint(const Checkpoint& checkpoint, const std::string& path) {
  std::string out;
  out.append(kMagic, sizeof(kMagic));
  put_u32(out, checkpoint.version);
  out.push_back(static_cast<char>(checkpoint.model));

  const GeneratorSpec& g = checkpoint.generator_spec;
  const DiscriminatorSpec& d = checkpoint.discriminator_spec;
  put_u32(out, static_cast<uint32_t>(g.in_channels));
  put_u32(out, static_cast<uint32_t>(g.out_channels));
  put_u32(out, static_cast<uint32_t>(g.base_width));
  put_u32(out, static_cast<uint32_t>(g.depth));
  put_u32(out, float_bits(g.dropout_p));
  put_u32(out, static_cast<uint32_t>(g.image_size));
  put_u32(out, static_cast<uint32_t>(d.in_channels));
  put_u32(out, static_cast<uint32_t>(d.base_width));
  put_u32(out, static_cast<uint32_t>(d.n_layers));
  put_u32(out, checkpoint.step);

  const uint32_t count =
      static_cast<uint32_t>(checkpoint.generator.size() + checkpoint.discriminator.size());
  put_u32(out, count);
  for (size_t i = 0; i < checkpoint.generator.size(); ++i) {
    put_tensor(out, "gen." + checkpoint.generator.name(i), checkpoint.generator.value(i));
  }
  for (size_t i = 0; i < checkpoint.discriminator.size(); ++i) {
    put_tensor(out, "disc." + checkpoint.discriminator.name(i), checkpoint.discriminator.value(i));
  }

  std::ofstream file(path, std::ios::binary);
  require(file.good(), ErrorCode::io, "cannot write checkpoint: " + path);
  file.write(out.data(), static_cast<std::streamsize>(out.size()));
  require(file.good(), ErrorCode::io, "checkpoint write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream file(path, std::ios::binary);
  require(file.good(), ErrorCode::io, "cannot read checkpoint: " + path);
  std::string bytes((std::istreambuf_iterator<char>(file)), std::istreambuf_iterator<char>());
  Reader reader(bytes, path);

  const std::string magic = reader.raw(4, "magic");
  require(std::memcmp(magic.data(), kMagic, 4) == 0, ErrorCode::format,
          "bad magic in checkpoint: " + path);
  Checkpoint checkpoint;
  checkpoint.version = reader.u32("version");
  require(checkpoint.version == 1, ErrorCode::format,
          "unsupported checkpoint version " + std::to_string(checkpoint.version) + ": " + path);
  const uint8_t kind = reader.u8("model kind");
  require(kind == static_cast<uint8_t>(ModelKind::pix2pix) ||
              kind == static_cast<uint8_t>(ModelKind::unet_baseline),
          ErrorCode::format, "unknown model kind in checkpoint: " + path);
  checkpoint.model = static_cast<ModelKind>(kind);

  GeneratorSpec& g = checkpoint.generator_spec;
  DiscriminatorSpec& d = checkpoint.discriminator_spec;
  g.in_channels = static_cast<int>(reader.u32("spec block"));
  g.out_channels = static_cast<int>(reader.u32("spec block"));
  g.base_width = static_cast<int>(reader.u32("spec block"));
  g.depth = static_cast<int>(reader.u32("spec block"));
  g.dropout_p = bits_float(reader.u32("spec block"));
  g.image_size = static_cast<int>(reader.u32("spec block"));
  d.in_channels = static_cast<int>(reader.u32("spec block"));
  d.base_width = static_cast<int>(reader.u32("spec block"));
  d.n_layers = static_cast<int>(reader.u32("spec block"));
  checkpoint.step = reader.u32("spec block");

  const uint32_t count = reader.u32("tensor count");
  for (uint32_t i = 0; i < count; ++i) {
    const uint16_t name_len = reader.u16("tensor record");
    const std::string name = reader.raw(name_len, "tensor name");
    const uint8_t rank = reader.u8("tensor record for '" + name + "'");
    require(rank >= 1, ErrorCode::format, "bad tensor rank in checkpoint: " + path);
    std::vector<int> dims(rank);
    size_t numel = 1;
    for (uint8_t r = 0; r < rank; ++r) {
      dims[r] = static_cast<int>(reader.u32("tensor extents for '" + name + "'"));
      require(dims[r] >= 1, ErrorCode::format, "bad tensor extent in checkpoint: " + path);
      numel *= static_cast<size_t>(dims[r]);
    }
    std::vector<float> values(numel);
    for (size_t v = 0; v < numel; ++v) {
      values[v] = bits_float(reader.u32("tensor payload for '" + name + "'"));
    }
    Tensor tensor(std::move(dims), std::move(values));
    if (name.rfind("gen.", 0) == 0) {
      checkpoint.generator.add(name.substr(4), std::move(tensor));
    } else if (name.rfind("disc.", 0) == 0) {
      checkpoint.discriminator.add(name.substr(5), std::move(tensor));
    } else {
      fail_format("unknown tensor prefix '" + name + "' in checkpoint: " + path);
    }
  }
  return checkpoint;
}

void infer(const Checkpoint& checkpoint, const std::string& image_path,
           const std::string& mask_out_path, bool noise_active, uint64_t noise_seed,
           const std::string& raw_out_path) {
  const int size = checkpoint.generator_spec.image_size;
  const GrayImage image = read_png_gray(image_path);
  const std::vector<float> intensities = resize_bilinear(image, size, size);
  std::vector<float> values(intensities.size());
  for (size_t i = 0; i < intensities.size(); ++i) values[i] = intensities[i] / 127.5f - 1.0f;
  const Tensor x({1, 1, size, size}, std::move(values));

  Rng noise_rng(noise_seed);
  const Tensor prediction = predict_batch(checkpoint, x, noise_active, noise_rng);
  const float threshold =
      checkpoint.model == ModelKind::pix2pix ? kTanhThreshold : kProbabilityThreshold;
  save_image(binarize(prediction, threshold), mask_out_path, PixelRange::unit);
  if (!raw_out_path.empty()) {
    const PixelRange range = checkpoint.model == ModelKind::pix2pix ? PixelRange::signed_unit
                                                                    : PixelRange::unit;
    save_image(prediction, raw_out_path, range);
  }
}

}  // namespace aseg
