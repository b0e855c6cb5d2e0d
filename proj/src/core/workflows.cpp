#include "core/workflows.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "core/image_io.hpp"

namespace fs = std::filesystem;

namespace aseg {

void apply_split(DatasetManifest& manifest, size_t n_train, bool seeded, uint64_t seed) {
  if (seeded) {
    split_seeded(manifest, n_train, seed);
  } else {
    split_fixed_prefix(manifest, n_train);
  }
}

namespace {

void ensure_dir(const std::string& path) {
  std::error_code ec;
  fs::create_directories(path, ec);
  require(fs::is_directory(path), ErrorCode::io, "cannot create directory: " + path);
}

std::vector<SamplePair> load_split(const DatasetManifest& manifest, Split split, int size) {
  std::vector<SamplePair> pairs;
  for (const auto& entry : manifest.entries) {
    if (entry.split == split) pairs.push_back(load_pair(entry, size));
  }
  return pairs;
}

void write_timing(const std::string& path, const char* key, double seconds) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorCode::io, "cannot write timing file: " + path);
  char line[96];
  std::snprintf(line, sizeof(line), "%s = %.3f\n", key, seconds);
  out << line;
}

uint8_t to_byte(float v, float lo, float hi) {
  const float t = (v - lo) / (hi - lo) * 255.0f;
  return static_cast<uint8_t>(std::min(255.0f, std::max(0.0f, std::round(t))));
}

// input | prediction | reference, one 8-bit strip per sample.
void write_triptych(const SamplePair& pair, const Tensor& prediction, float threshold,
                    const std::string& path) {
  const int size = pair.input.dim(2);
  GrayImage strip{3 * size, size, std::vector<uint8_t>(static_cast<size_t>(3) * size * size)};
  const Tensor pred_mask = binarize(prediction, threshold);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const size_t row = static_cast<size_t>(y) * (3 * size);
      strip.pixels[row + x] = to_byte(pair.input.at4(0, 0, y, x), -1.0f, 1.0f);
      strip.pixels[row + size + x] = to_byte(pred_mask.at4(0, 0, y, x), 0.0f, 1.0f);
      strip.pixels[row + 2 * size + x] = to_byte(pair.mask01.at4(0, 0, y, x), 0.0f, 1.0f);
    }
  }
  write_png_gray(path, strip);
}

}  // namespace

TrainResult run_training(const TrainRunOptions& options) {
  validate(options.config);
  DatasetManifest manifest = scan_dataset(options.data_dir);
  require_arg(!manifest.entries.empty(), "training: dataset is empty");
  const size_t n_train =
      options.train_count == 0 ? manifest.entries.size() : options.train_count;
  apply_split(manifest, n_train, options.seeded_split, options.split_seed);
  const std::vector<SamplePair> train_set =
      load_split(manifest, Split::train, options.config.generator.image_size);
  require_arg(!train_set.empty(), "training: train split is empty");

  TrainResult result = train_model(options.config, train_set);

  ensure_dir(options.out_dir);
  const fs::path out(options.out_dir);
  write_manifest(manifest, (out / "manifest.tsv").string());
  write_trainlog_csv(result.log, options.config.model, (out / "trainlog.csv").string());
  save_checkpoint(result.checkpoint, (out / "final.aseg").string());
  write_timing((out / "timing.txt").string(), "training_seconds", result.log.total_seconds);
  return result;
}

EvalResult run_evaluation(const Checkpoint& checkpoint, const EvalRunOptions& options) {
  DatasetManifest manifest = scan_dataset(options.data_dir);
  require_arg(!manifest.entries.empty(), "evaluation: dataset is empty");
  apply_split(manifest, options.train_count, options.seeded_split, options.split_seed);
  const std::vector<SamplePair> pairs =
      load_split(manifest, options.split, checkpoint.generator_spec.image_size);
  require_arg(!pairs.empty(), "evaluation: selected split is empty");

  const EvalResult result =
      evaluate_checkpoint(checkpoint, pairs, options.noise, options.noise_seed);

  ensure_dir(options.out_dir);
  const fs::path out(options.out_dir);
  write_records_csv(result.records, (out / "records.csv").string());

  std::ofstream summary((out / "summary.txt").string(), std::ios::binary);
  require(summary.good(), ErrorCode::io, "cannot write summary file");
  summary << render_summary_table(result.summaries);
  char line[96];
  std::snprintf(line, sizeof(line), "records = %zu\ntest_seconds = %.3f\n", result.records.size(),
                result.seconds);
  summary << line;
  summary.close();

  if (options.sample_images > 0) {
    ensure_dir((out / "samples").string());
    const float threshold =
        checkpoint.model == ModelKind::pix2pix ? kTanhThreshold : kProbabilityThreshold;
    Rng noise_rng(options.noise_seed);
    int written = 0;
    for (const auto& pair : pairs) {
      if (written++ >= options.sample_images) break;
      const Tensor prediction = predict_batch(checkpoint, pair.input, options.noise, noise_rng);
      write_triptych(pair, prediction, threshold, (out / "samples" / (pair.id + ".png")).string());
    }
  }
  return result;
}

std::string run_comparison(const CompareOptions& options) {
  const std::vector<MetricRecord> records_a = read_records_csv(options.report_a);
  const std::vector<MetricRecord> records_b = read_records_csv(options.report_b);
  require(!records_a.empty(), ErrorCode::format, "report has no records: " + options.report_a);
  require(!records_b.empty(), ErrorCode::format, "report has no records: " + options.report_b);

  std::vector<ComparisonEntry> entries(2);
  entries[0] = {options.label_a, summarize(records_a, Metric::accuracy),
                summarize(records_a, Metric::overlap_rate), summarize(records_a, Metric::f_measure),
                options.train_time_a, options.test_time_a};
  entries[1] = {options.label_b, summarize(records_b, Metric::accuracy),
                summarize(records_b, Metric::overlap_rate), summarize(records_b, Metric::f_measure),
                options.train_time_b, options.test_time_b};
  const std::string table = render_comparison_table(entries);

  if (!options.out_path.empty()) {
    std::ofstream out(options.out_path, std::ios::binary);
    require(out.good(), ErrorCode::io, "cannot write comparison file: " + options.out_path);
    out << table;
  }
  return table;
}

}  // namespace aseg
