#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "core/image_io.hpp"
#include "core/trainer.hpp"
#include "core/workflows.hpp"

using namespace aseg;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string str() const { return path.string(); }
};

TrainConfig tiny_config(ModelKind model, uint64_t seed = 1) {
  TrainConfig config;
  config.model = model;
  config.seed = seed;
  config.generator.base_width = 8;
  config.generator.depth = 3;
  config.generator.image_size = 32;
  config.discriminator.base_width = 8;
  config.discriminator.n_layers = 2;
  return config;
}

std::vector<SamplePair> tiny_phantoms(const std::string& dir, int count, int size,
                                      uint64_t seed = 2) {
  PhantomConfig config;
  config.count = count;
  config.image_size = size;
  config.seed = seed;
  return generate_phantoms(config, dir);
}

bool logs_equal(const TrainLog& a, const TrainLog& b, ModelKind kind) {
  if (kind == ModelKind::pix2pix) {
    if (a.pix2pix_rows.size() != b.pix2pix_rows.size()) return false;
    for (size_t i = 0; i < a.pix2pix_rows.size(); ++i) {
      const auto& ra = a.pix2pix_rows[i];
      const auto& rb = b.pix2pix_rows[i];
      if (ra.step != rb.step || ra.d_loss != rb.d_loss || ra.g_adv != rb.g_adv ||
          ra.g_l1 != rb.g_l1 || ra.g_total != rb.g_total) {
        return false;
      }
    }
    return true;
  }
  if (a.baseline_rows.size() != b.baseline_rows.size()) return false;
  for (size_t i = 0; i < a.baseline_rows.size(); ++i) {
    if (a.baseline_rows[i].step != b.baseline_rows[i].step ||
        a.baseline_rows[i].bce != b.baseline_rows[i].bce) {
      return false;
    }
  }
  return true;
}

bool params_equal(const ParameterSet& a, const ParameterSet& b) {
  if (a.size() != b.size()) return false;
  for (size_t i = 0; i < a.size(); ++i) {
    if (a.name(i) != b.name(i) || a.value(i).values() != b.value(i).values()) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("train_pix2pix: identical (config, data, seed) give bit-identical runs") {
  TempDir dir("aseg_train_det");
  const auto pairs = tiny_phantoms(dir.str(), 2, 32);
  const TrainConfig config = tiny_config(ModelKind::pix2pix, 7);

  TrainConfig two_epochs = config;
  two_epochs.epochs = 2;
  const TrainResult a = train_pix2pix(two_epochs, pairs);
  const TrainResult b = train_pix2pix(two_epochs, pairs);
  CHECK(logs_equal(a.log, b.log, ModelKind::pix2pix));
  CHECK(params_equal(a.checkpoint.generator, b.checkpoint.generator));
  CHECK(params_equal(a.checkpoint.discriminator, b.checkpoint.discriminator));
  CHECK(a.checkpoint.step == 4);
}

TEST_CASE("train_pix2pix: lambda 0 collapses the total to the adversarial term") {
  TempDir dir("aseg_train_lambda0");
  const auto pairs = tiny_phantoms(dir.str(), 2, 32);
  TrainConfig config = tiny_config(ModelKind::pix2pix);
  config.lambda_l1 = 0.0f;
  config.epochs = 2;
  const TrainResult result = train_pix2pix(config, pairs);
  for (const auto& row : result.log.pix2pix_rows) {
    CHECK(row.g_total == row.g_adv);
  }
}

TEST_CASE("train_pix2pix: every generator layer moves after training starts") {
  TempDir dir("aseg_train_coverage");
  const auto pairs = tiny_phantoms(dir.str(), 1, 32);
  TrainConfig config = tiny_config(ModelKind::pix2pix, 11);
  const TrainResult result = train_pix2pix(config, pairs);  // one step

  Rng rebuild(11);
  const ParameterSet init = build_generator<float>(config.generator, rebuild);
  REQUIRE(init.size() == result.checkpoint.generator.size());
  for (const std::string prefix : {"enc0", "enc1", "enc2", "dec0", "dec1", "dec2"}) {
    bool layer_changed = false;
    for (size_t i = 0; i < init.size(); ++i) {
      if (init.name(i).rfind(prefix, 0) != 0) continue;
      if (init.value(i).values() != result.checkpoint.generator.value(i).values()) {
        layer_changed = true;
        break;
      }
    }
    INFO("layer ", prefix);
    CHECK(layer_changed);
  }
}

TEST_CASE("discriminator step: detached fake cuts gradient flow to the generator") {
  TempDir dir("aseg_train_detach");
  const auto pairs = tiny_phantoms(dir.str(), 1, 32);
  TrainConfig config = tiny_config(ModelKind::pix2pix, 13);

  Rng rng(config.seed);
  ParameterSet gen = build_generator<float>(config.generator, rng);
  ParameterSet disc = build_discriminator<float>(config.discriminator, rng);
  const ParameterSet gen_before = gen;

  // Same wiring as the discriminator step, but with the generator tracked, so
  // the detach is what actually severs the graph.
  Tape tape;
  ParameterSet gen_w = watch(gen, tape);
  ParameterSet disc_w = watch(disc, tape);
  const Tensor fake =
      generator_forward(gen_w, config.generator, pairs[0].input, true, rng, &tape).detached();
  const Tensor logits_real =
      discriminator_forward(disc_w, config.discriminator, pairs[0].input, pairs[0].mask_signed,
                            &tape);
  const Tensor logits_fake =
      discriminator_forward(disc_w, config.discriminator, pairs[0].input, fake, &tape);
  const auto loss = discriminator_loss(logits_real, logits_fake, &tape);
  const GradientMap grads = backward(loss.total, tape);

  for (size_t i = 0; i < gen_w.size(); ++i) {
    CHECK_FALSE(grads.has(gen_w.value(i)));
  }
  AdamState disc_state(config.optimizer);
  adam_step(disc, collect_grads(disc_w, grads), disc_state);
  CHECK(params_equal(gen, gen_before));
}

TEST_CASE("train_pix2pix: 200-step run stays finite and bounded") {
  TempDir dir("aseg_train_finite");
  const auto pairs = tiny_phantoms(dir.str(), 4, 32);
  TrainConfig config = tiny_config(ModelKind::pix2pix, 3);
  config.epochs = 50;  // 4 pairs -> 200 steps
  const TrainResult result = train_pix2pix(config, pairs);
  REQUIRE(result.log.pix2pix_rows.size() == 200);
  for (const auto& row : result.log.pix2pix_rows) {
    CHECK(std::isfinite(row.d_loss));
    CHECK(std::isfinite(row.g_adv));
    CHECK(std::isfinite(row.g_l1));
    CHECK(std::isfinite(row.g_total));
  }
  const auto bounded = [](const ParameterSet& params) {
    for (size_t i = 0; i < params.size(); ++i) {
      for (float v : params.value(i).values()) {
        if (!(std::fabs(v) <= 1e3f)) return false;
      }
    }
    return true;
  };
  CHECK(bounded(result.checkpoint.generator));
  CHECK(bounded(result.checkpoint.discriminator));
}

TEST_CASE("train_baseline: first-step loss sits near ln 2 on a balanced init") {
  TempDir dir("aseg_train_bce0");
  const auto pairs = tiny_phantoms(dir.str(), 2, 32);
  TrainConfig config = tiny_config(ModelKind::unet_baseline, 5);
  const TrainResult result = train_baseline(config, pairs);
  REQUIRE(!result.log.baseline_rows.empty());
  CHECK(result.log.baseline_rows.front().bce == doctest::Approx(std::log(2.0)).epsilon(0.3));
}

TEST_CASE("train: empty training set and wrong model kind are rejected") {
  const TrainConfig config = tiny_config(ModelKind::pix2pix);
  CHECK_THROWS_AS(train_pix2pix(config, {}), Error);
  TempDir dir("aseg_train_kind");
  const auto pairs = tiny_phantoms(dir.str(), 1, 32);
  CHECK_THROWS_AS(train_baseline(config, pairs), Error);
}

TEST_CASE("evaluate_with: ground truth as its own prediction scores 1.0") {
  TempDir dir("aseg_eval_identity");
  const auto pairs = tiny_phantoms(dir.str(), 3, 32);
  const EvalResult result = evaluate_with(
      pairs, [](const SamplePair& pair) { return pair.mask01; }, 0.5f);
  CHECK(result.records.size() == pairs.size());
  for (const auto& record : result.records) {
    CHECK(record.accuracy == 1.0);
    CHECK(record.overlap_rate == 1.0);
    CHECK(record.f_measure == 1.0);
  }
}

TEST_CASE("evaluate_checkpoint: deterministic, record per test pair") {
  TempDir dir("aseg_eval_det");
  const auto pairs = tiny_phantoms(dir.str(), 3, 32);
  TrainConfig config = tiny_config(ModelKind::pix2pix, 17);
  const TrainResult trained = train_pix2pix(config, pairs);

  const EvalResult a = evaluate_checkpoint(trained.checkpoint, pairs);
  const EvalResult b = evaluate_checkpoint(trained.checkpoint, pairs);
  REQUIRE(a.records.size() == 3);
  for (size_t i = 0; i < a.records.size(); ++i) {
    CHECK(a.records[i].id == b.records[i].id);
    CHECK(a.records[i].accuracy == b.records[i].accuracy);
    CHECK(a.records[i].overlap_rate == b.records[i].overlap_rate);
    CHECK(a.records[i].f_measure == b.records[i].f_measure);
  }
  CHECK(a.summaries.size() == 3);
}

TEST_CASE("checkpoint: save/load round trip is bit-exact and evaluation-equal") {
  TempDir dir("aseg_ckpt_roundtrip");
  const auto pairs = tiny_phantoms(dir.str(), 2, 32);
  TrainConfig config = tiny_config(ModelKind::pix2pix, 19);
  const TrainResult trained = train_pix2pix(config, pairs);

  const std::string path = (dir.path / "model.aseg").string();
  save_checkpoint(trained.checkpoint, path);
  const Checkpoint loaded = load_checkpoint(path);

  CHECK(loaded.model == ModelKind::pix2pix);
  CHECK(loaded.step == trained.checkpoint.step);
  CHECK(loaded.generator_spec.image_size == config.generator.image_size);
  CHECK(loaded.generator_spec.dropout_p == config.generator.dropout_p);
  CHECK(params_equal(loaded.generator, trained.checkpoint.generator));
  CHECK(params_equal(loaded.discriminator, trained.checkpoint.discriminator));

  const EvalResult direct = evaluate_checkpoint(trained.checkpoint, pairs);
  const EvalResult reloaded = evaluate_checkpoint(loaded, pairs);
  for (size_t i = 0; i < direct.records.size(); ++i) {
    CHECK(direct.records[i].accuracy == reloaded.records[i].accuracy);
    CHECK(direct.records[i].overlap_rate == reloaded.records[i].overlap_rate);
    CHECK(direct.records[i].f_measure == reloaded.records[i].f_measure);
  }
}

TEST_CASE("checkpoint: bad magic, bad version, truncation each fail distinctly") {
  TempDir dir("aseg_ckpt_errors");
  const auto pairs = tiny_phantoms(dir.str(), 1, 32);
  TrainConfig config = tiny_config(ModelKind::unet_baseline, 23);
  const TrainResult trained = train_baseline(config, pairs);
  const std::string path = (dir.path / "model.aseg").string();
  save_checkpoint(trained.checkpoint, path);

  std::ifstream in(path, std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  in.close();

  const auto write_bytes = [&](const std::string& data, const std::string& p) {
    std::ofstream out(p, std::ios::binary);
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
  };

  std::string corrupt = bytes;
  corrupt[0] = 'X';
  const std::string bad_magic_path = (dir.path / "bad_magic.aseg").string();
  write_bytes(corrupt, bad_magic_path);
  try {
    load_checkpoint(bad_magic_path);
    FAIL("expected bad magic error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::format);
    CHECK(std::string(e.what()).find("bad magic") != std::string::npos);
  }

  std::string bad_version = bytes;
  bad_version[4] = 9;  // little-endian version field
  const std::string bad_version_path = (dir.path / "bad_version.aseg").string();
  write_bytes(bad_version, bad_version_path);
  try {
    load_checkpoint(bad_version_path);
    FAIL("expected version error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("unsupported checkpoint version") != std::string::npos);
  }

  const std::string truncated_path = (dir.path / "truncated.aseg").string();
  write_bytes(bytes.substr(0, bytes.size() - 64), truncated_path);
  try {
    load_checkpoint(truncated_path);
    FAIL("expected truncation error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::format);
    CHECK(std::string(e.what()).find("truncated tensor payload") != std::string::npos);
    CHECK(std::string(e.what()).find("gen.") != std::string::npos);  // names the tensor
  }

  CHECK_THROWS_AS(load_checkpoint((dir.path / "missing.aseg").string()), Error);
}

TEST_CASE("trainlog csv: expected headers and row counts") {
  TempDir dir("aseg_trainlog");
  const auto pairs = tiny_phantoms(dir.str(), 2, 32);

  TrainConfig config = tiny_config(ModelKind::pix2pix, 29);
  const TrainResult gan = train_pix2pix(config, pairs);
  const std::string gan_path = (dir.path / "gan.csv").string();
  write_trainlog_csv(gan.log, ModelKind::pix2pix, gan_path);
  std::ifstream gan_in(gan_path);
  std::string line;
  std::getline(gan_in, line);
  CHECK(line == "step,d_loss,g_adv,g_l1,g_total");
  int rows = 0;
  while (std::getline(gan_in, line)) ++rows;
  CHECK(rows == 2);

  TrainConfig baseline_config = tiny_config(ModelKind::unet_baseline, 29);
  const TrainResult unet = train_baseline(baseline_config, pairs);
  const std::string unet_path = (dir.path / "unet.csv").string();
  write_trainlog_csv(unet.log, ModelKind::unet_baseline, unet_path);
  std::ifstream unet_in(unet_path);
  std::getline(unet_in, line);
  CHECK(line == "step,bce");
}

TEST_CASE("infer: binary output file, deterministic with noise off") {
  TempDir dir("aseg_infer");
  const auto pairs = tiny_phantoms(dir.str(), 1, 32);
  TrainConfig config = tiny_config(ModelKind::pix2pix, 31);
  const TrainResult trained = train_pix2pix(config, pairs);

  const std::string image = (dir.path / "images" / "phantom_0000.png").string();
  const std::string mask_a = (dir.path / "mask_a.png").string();
  const std::string mask_b = (dir.path / "mask_b.png").string();
  const std::string raw = (dir.path / "raw.png").string();
  infer(trained.checkpoint, image, mask_a, false, 0, raw);
  infer(trained.checkpoint, image, mask_b, false, 0);

  const GrayImage a = read_png_gray(mask_a);
  for (uint8_t v : a.pixels) CHECK((v == 0 || v == 255));
  const GrayImage b = read_png_gray(mask_b);
  CHECK(a.pixels == b.pixels);
  CHECK(fs::exists(raw));

  CHECK_THROWS_AS(infer(trained.checkpoint, (dir.path / "missing.png").string(), mask_a, false, 0),
                  Error);
}

TEST_CASE("run_training/run_evaluation: directory outputs appear and split rules hold") {
  TempDir data("aseg_workflow_data");
  TempDir out("aseg_workflow_out");
  tiny_phantoms(data.str(), 5, 32);

  TrainRunOptions train_options;
  train_options.config = tiny_config(ModelKind::pix2pix, 37);
  train_options.config.epochs = 2;
  train_options.data_dir = data.str();
  train_options.out_dir = out.str();
  train_options.train_count = 3;
  run_training(train_options);

  CHECK(fs::exists(out.path / "trainlog.csv"));
  CHECK(fs::exists(out.path / "final.aseg"));
  CHECK(fs::exists(out.path / "manifest.tsv"));
  CHECK(fs::exists(out.path / "timing.txt"));

  std::ifstream manifest((out.path / "manifest.tsv").string());
  int train_rows = 0, test_rows = 0;
  std::string line;
  while (std::getline(manifest, line)) {
    if (line.find("\ttrain") != std::string::npos) ++train_rows;
    if (line.find("\ttest") != std::string::npos) ++test_rows;
  }
  CHECK(train_rows == 3);
  CHECK(test_rows == 2);

  const Checkpoint checkpoint = load_checkpoint((out.path / "final.aseg").string());
  EvalRunOptions eval_options;
  eval_options.data_dir = data.str();
  eval_options.out_dir = (out.path / "eval").string();
  eval_options.split = Split::test;
  eval_options.train_count = 3;
  eval_options.sample_images = 2;
  const EvalResult result = run_evaluation(checkpoint, eval_options);
  CHECK(result.records.size() == 2);
  CHECK(fs::exists(out.path / "eval" / "records.csv"));
  CHECK(fs::exists(out.path / "eval" / "summary.txt"));
  CHECK(fs::exists(out.path / "eval" / "samples" / "phantom_0003.png"));
}
