#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "core/data.hpp"
#include "core/metrics.hpp"
#include "core/networks.hpp"
#include "core/objectives.hpp"

namespace aseg {

enum class ModelKind : uint8_t { pix2pix = 1, unet_baseline = 2 };

const char* model_kind_name(ModelKind kind);

// (config, dataset, seed) fully determine the run, bit for bit. The working
// resolution lives on the generator spec; epochs count full passes over the
// training set.
struct TrainConfig {
  ModelKind model = ModelKind::pix2pix;
  int epochs = 1;
  int batch_size = 1;
  float lambda_l1 = 100.0f;
  GeneratorSpec generator;
  DiscriminatorSpec discriminator;
  AdamConfig optimizer;
  uint64_t seed = 1;
  bool shuffle = true;  // reshuffle sample order each epoch
};

void validate(const TrainConfig& config);

struct Pix2PixLogRow {
  long step;
  float d_loss, g_adv, g_l1, g_total;
};

struct BaselineLogRow {
  long step;
  float bce;
};

struct TrainLog {
  std::vector<Pix2PixLogRow> pix2pix_rows;
  std::vector<BaselineLogRow> baseline_rows;
  std::vector<double> epoch_seconds;
  double total_seconds = 0;
};

// `step,d_loss,g_adv,g_l1,g_total` or `step,bce`. Timing stays out of the
// file so repeated runs produce identical bytes.
void write_trainlog_csv(const TrainLog& log, ModelKind kind, const std::string& path);

struct Checkpoint {
  uint32_t version = 1;
  ModelKind model = ModelKind::pix2pix;
  GeneratorSpec generator_spec;
  DiscriminatorSpec discriminator_spec;  // used by pix2pix only
  uint32_t step = 0;
  ParameterSet generator;      // generator or baseline parameters
  ParameterSet discriminator;  // empty for the baseline
};

struct TrainResult {
  Checkpoint checkpoint;
  TrainLog log;
};

// Alternating adversarial optimization, one discriminator step then one
// generator step per batch. The discriminator trains on a detached fake; the
// generator step re-runs a fresh forward pass against the updated
// discriminator.
TrainResult train_pix2pix(const TrainConfig& config, const std::vector<SamplePair>& train_set);

// Plain supervised loop: sigmoid-head network against the {0,1} mask view
// under pixelwise cross-entropy (computed from logits).
TrainResult train_baseline(const TrainConfig& config, const std::vector<SamplePair>& train_set);

TrainResult train_model(const TrainConfig& config, const std::vector<SamplePair>& train_set);

struct EvalResult {
  std::vector<MetricRecord> records;
  std::vector<SummaryRow> summaries;
  double seconds = 0;
};

// Runs `predict` over every pair, thresholds, and scores against the {0,1}
// mask. Exposed so tests can drive the metrics path with any model stand-in.
EvalResult evaluate_with(const std::vector<SamplePair>& pairs,
                         const std::function<Tensor(const SamplePair&)>& predict,
                         float threshold);

EvalResult evaluate_checkpoint(const Checkpoint& checkpoint, const std::vector<SamplePair>& pairs,
                               bool noise_active = false, uint64_t noise_seed = 0);

// Binary checkpoint file, little-endian throughout:
//   magic "ASEG"; u32 version (=1); u8 model kind;
//   spec block, u32 each: generator {in_channels, out_channels, base_width,
//   depth, dropout_p as IEEE-754 bits, image_size}, discriminator
//   {in_channels, base_width, n_layers}, step counter;
//   u32 tensor count; per tensor: u16 name length + name bytes, u8 rank,
//   u32 extents, raw float32 payload.
// Tensor names carry a "gen." or "disc." prefix selecting the parameter set.
void save_checkpoint(const Checkpoint& checkpoint, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// Segments one image file: resizes to the checkpoint resolution, runs the
// model, thresholds, and writes a {0,255} mask. Optionally also writes the
// raw pre-threshold output.
void infer(const Checkpoint& checkpoint, const std::string& image_path,
           const std::string& mask_out_path, bool noise_active, uint64_t noise_seed,
           const std::string& raw_out_path = "");

// Prediction tensor for one normalized input batch [1,1,S,S].
Tensor predict_batch(const Checkpoint& checkpoint, const Tensor& input, bool noise_active,
                     Rng& noise_rng);

}  // namespace aseg
