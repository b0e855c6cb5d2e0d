#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "core/tensor.hpp"

namespace aseg {

// One normalized training/test example. The image lives in [-1, 1]; the mask
// is kept both as the {-1, +1} translation target and as a {0, 1} view for
// metrics.
struct SamplePair {
  std::string id;
  Tensor input;        // [1,1,S,S], values in [-1, 1]
  Tensor mask_signed;  // [1,1,S,S], values in {-1, +1}
  Tensor mask01;       // [1,1,S,S], values in {0, 1}
};

enum class Split { train, test };

struct ManifestEntry {
  std::string stem;
  std::string image_path;
  std::string mask_path;
  Split split = Split::test;
};

// Image/mask pairs found under `<root>/images` and `<root>/masks`, sorted
// lexicographically by stem.
struct DatasetManifest {
  std::vector<ManifestEntry> entries;

  size_t count(Split split) const;
  std::vector<ManifestEntry> select(Split split) const;
};

// Scans the two subdirectories and pairs files by stem; any unmatched stem on
// either side is an error naming the orphans.
DatasetManifest scan_dataset(const std::string& root);

// Tags the first n_train entries (sorted order) as train, the rest as test.
void split_fixed_prefix(DatasetManifest& manifest, size_t n_train);

// Reproducible shuffle of the entry order, then the same prefix rule.
void split_seeded(DatasetManifest& manifest, size_t n_train, uint64_t seed);

// One `stem<TAB>split` line per entry.
void write_manifest(const DatasetManifest& manifest, const std::string& path);

// Loads, resizes (bilinear image / nearest mask), and normalizes one entry.
// Mask bytes are thresholded at 127.
SamplePair load_pair(const ManifestEntry& entry, int target_size);

// Synthetic chest-slice stand-ins: a dark background, a brighter elliptical
// body, and two darker elliptical lungs whose exact union is the mask.
struct PhantomConfig {
  int count = 8;
  int image_size = 64;
  uint64_t seed = 1;
  double noise_level = 0.02;  // stddev of additive gaussian noise, 0..1 scale
  double background_low = 0.05, background_high = 0.15;
  double body_low = 0.55, body_high = 0.75;
  double lung_low = 0.20, lung_high = 0.35;
};

void validate(const PhantomConfig& config);

// Writes `images/` and `masks/` PNGs under out_dir and returns the same pairs
// as in-memory samples (built from the quantized bytes, so loading the files
// back reproduces them exactly).
std::vector<SamplePair> generate_phantoms(const PhantomConfig& config,
                                          const std::string& out_dir);

enum class PixelRange { signed_unit, unit };  // [-1,1] or [0,1]

// Quantizes a [1,1,H,W] (or [H,W]-shaped) tensor view to an 8-bit grayscale
// PNG. Round-trip error is at most 1/255 per pixel.
void save_image(const Tensor& t, const std::string& path, PixelRange range);

}  // namespace aseg
