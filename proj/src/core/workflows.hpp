#pragma once

#include <string>

#include "core/trainer.hpp"

namespace aseg {

// End-to-end training run: scan the dataset directory, split, load the train
// pairs at the working resolution, train, and write trainlog.csv, final.aseg,
// manifest.tsv and timing.txt into out_dir.
struct TrainRunOptions {
  TrainConfig config;
  std::string data_dir;
  std::string out_dir;
  size_t train_count = 0;  // 0 = every pair trains
  bool seeded_split = false;
  uint64_t split_seed = 0;
};

TrainResult run_training(const TrainRunOptions& options);

// Checkpoint evaluation over one split: writes records.csv, summary.txt and a
// samples/ directory of input|prediction|reference strips.
struct EvalRunOptions {
  std::string data_dir;
  std::string out_dir;
  Split split = Split::test;
  size_t train_count = 0;  // same split rule the training run used
  bool seeded_split = false;
  uint64_t split_seed = 0;
  bool noise = false;
  uint64_t noise_seed = 0;
  int sample_images = 8;  // triptychs written, 0 disables
};

EvalResult run_evaluation(const Checkpoint& checkpoint, const EvalRunOptions& options);

// Two per-record reports side by side in comparison-table form. Returns the
// rendered table; optionally also writes it to out_path.
struct CompareOptions {
  std::string report_a;
  std::string report_b;
  std::string label_a = "A";
  std::string label_b = "B";
  std::string train_time_a, train_time_b;  // free-form, "-" when empty
  std::string test_time_a, test_time_b;
  std::string out_path;
};

std::string run_comparison(const CompareOptions& options);

// Splits per the shared rule: fixed prefix of the sorted stems by default,
// seeded shuffle when requested. At training time a train_count of 0 expands
// to the whole manifest; at evaluation time 0 leaves everything in the test
// split.
void apply_split(DatasetManifest& manifest, size_t n_train, bool seeded, uint64_t seed);

}  // namespace aseg
