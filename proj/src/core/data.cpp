#include "core/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>

#include "core/error.hpp"
#include "core/image_io.hpp"

namespace fs = std::filesystem;

namespace aseg {

size_t DatasetManifest::count(Split split) const {
  size_t n = 0;
  for (const auto& e : entries)
    if (e.split == split) ++n;
  return n;
}

std::vector<ManifestEntry> DatasetManifest::select(Split split) const {
  std::vector<ManifestEntry> out;
  for (const auto& e : entries)
    if (e.split == split) out.push_back(e);
  return out;
}

namespace {

std::map<std::string, std::string> stems_in(const fs::path& dir) {
  std::map<std::string, std::string> found;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    if (entry.path().extension() != ".png") continue;
    found[entry.path().stem().string()] = entry.path().string();
  }
  return found;
}

}  // namespace

DatasetManifest scan_dataset(const std::string& root) {
  const fs::path images_dir = fs::path(root) / "images";
  const fs::path masks_dir = fs::path(root) / "masks";
  require(fs::is_directory(images_dir), ErrorCode::io,
          "dataset: missing directory " + images_dir.string());
  require(fs::is_directory(masks_dir), ErrorCode::io,
          "dataset: missing directory " + masks_dir.string());

  const auto images = stems_in(images_dir);
  const auto masks = stems_in(masks_dir);

  std::string orphans;
  for (const auto& [stem, path] : images)
    if (masks.count(stem) == 0) orphans += " image:" + stem;
  for (const auto& [stem, path] : masks)
    if (images.count(stem) == 0) orphans += " mask:" + stem;
  require(orphans.empty(), ErrorCode::io, "dataset: unmatched stems:" + orphans);

  DatasetManifest manifest;
  for (const auto& [stem, path] : images) {  // std::map iterates sorted
    manifest.entries.push_back({stem, path, masks.at(stem), Split::test});
  }
  return manifest;
}

void split_fixed_prefix(DatasetManifest& manifest, size_t n_train) {
  require_arg(n_train <= manifest.entries.size(),
              "split: n_train exceeds manifest size " + std::to_string(manifest.entries.size()));
  for (size_t i = 0; i < manifest.entries.size(); ++i) {
    manifest.entries[i].split = i < n_train ? Split::train : Split::test;
  }
}

void split_seeded(DatasetManifest& manifest, size_t n_train, uint64_t seed) {
  require_arg(n_train <= manifest.entries.size(),
              "split: n_train exceeds manifest size " + std::to_string(manifest.entries.size()));
  Rng rng(seed);
  auto& entries = manifest.entries;
  for (size_t i = entries.size(); i > 1; --i) {
    const size_t j = static_cast<size_t>(rng.next_below(i));
    std::swap(entries[i - 1], entries[j]);
  }
  split_fixed_prefix(manifest, n_train);
}

void write_manifest(const DatasetManifest& manifest, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorCode::io, "cannot write manifest: " + path);
  for (const auto& e : manifest.entries) {
    out << e.stem << '\t' << (e.split == Split::train ? "train" : "test") << '\n';
  }
  require(out.good(), ErrorCode::io, "manifest write failed: " + path);
}

namespace {

Tensor image_to_input(const std::vector<float>& intensities, int size) {
  std::vector<float> values(intensities.size());
  for (size_t i = 0; i < intensities.size(); ++i) {
    values[i] = intensities[i] / 127.5f - 1.0f;
  }
  return Tensor({1, 1, size, size}, std::move(values));
}

std::pair<Tensor, Tensor> mask_to_tensors(const GrayImage& mask) {
  std::vector<float> m01(mask.pixels.size());
  std::vector<float> signed_values(mask.pixels.size());
  for (size_t i = 0; i < mask.pixels.size(); ++i) {
    const bool fg = mask.pixels[i] > 127;
    m01[i] = fg ? 1.0f : 0.0f;
    signed_values[i] = fg ? 1.0f : -1.0f;
  }
  Tensor signed_t({1, 1, mask.height, mask.width}, std::move(signed_values));
  Tensor m01_t({1, 1, mask.height, mask.width}, std::move(m01));
  return {std::move(signed_t), std::move(m01_t)};
}

}  // namespace

SamplePair load_pair(const ManifestEntry& entry, int target_size) {
  require_arg(target_size >= 1, "load_pair: target size must be >= 1");
  const GrayImage image = read_png_gray(entry.image_path);
  const GrayImage mask_raw = read_png_gray(entry.mask_path);

  SamplePair pair;
  pair.id = entry.stem;
  pair.input = image_to_input(resize_bilinear(image, target_size, target_size), target_size);
  auto [mask_signed, mask01] = mask_to_tensors(resize_nearest(mask_raw, target_size, target_size));
  pair.mask_signed = std::move(mask_signed);
  pair.mask01 = std::move(mask01);
  return pair;
}

void validate(const PhantomConfig& config) {
  require_arg(config.count >= 1, "phantom: count must be >= 1");
  require_arg(config.image_size >= 16, "phantom: image_size must be >= 16");
  require_arg(config.noise_level >= 0.0, "phantom: noise_level must be >= 0");
}

namespace {

struct Ellipse {
  double cx, cy, ax, ay;
  bool contains(double px, double py) const {
    const double dx = (px - cx) / ax;
    const double dy = (py - cy) / ay;
    return dx * dx + dy * dy <= 1.0;
  }
};

double uniform_in(Rng& rng, double lo, double hi) { return lo + rng.next_uniform() * (hi - lo); }

}  // namespace

std::vector<SamplePair> generate_phantoms(const PhantomConfig& config, const std::string& out_dir) {
  validate(config);
  const fs::path images_dir = fs::path(out_dir) / "images";
  const fs::path masks_dir = fs::path(out_dir) / "masks";
  std::error_code ec;
  fs::create_directories(images_dir, ec);
  fs::create_directories(masks_dir, ec);
  require(fs::is_directory(images_dir) && fs::is_directory(masks_dir), ErrorCode::io,
          "phantom: cannot create output directories under " + out_dir);

  Rng rng(config.seed);
  const int size = config.image_size;
  const double s = static_cast<double>(size);
  std::vector<SamplePair> pairs;
  pairs.reserve(static_cast<size_t>(config.count));

  for (int index = 0; index < config.count; ++index) {
    // Geometry and intensities are drawn in a fixed order, so the whole batch
    // is a pure function of (seed, config).
    const Ellipse body{s * (0.5 + uniform_in(rng, -0.04, 0.04)),
                       s * (0.5 + uniform_in(rng, -0.04, 0.04)), s * uniform_in(rng, 0.34, 0.44),
                       s * uniform_in(rng, 0.36, 0.46)};
    const double bg = uniform_in(rng, config.background_low, config.background_high);
    const double body_level = uniform_in(rng, config.body_low, config.body_high);
    const double lung_level = uniform_in(rng, config.lung_low, config.lung_high);
    const Ellipse left{s * (0.5 - uniform_in(rng, 0.15, 0.20)),
                       s * (0.5 + uniform_in(rng, -0.05, 0.05)), s * uniform_in(rng, 0.10, 0.14),
                       s * uniform_in(rng, 0.15, 0.21)};
    const Ellipse right{s * (0.5 + uniform_in(rng, 0.15, 0.20)),
                        s * (0.5 + uniform_in(rng, -0.05, 0.05)), s * uniform_in(rng, 0.10, 0.14),
                        s * uniform_in(rng, 0.15, 0.21)};

    GrayImage image{size, size, std::vector<uint8_t>(static_cast<size_t>(size) * size)};
    GrayImage mask{size, size, std::vector<uint8_t>(static_cast<size_t>(size) * size)};
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        const double px = x + 0.5, py = y + 0.5;
        const bool in_lung = left.contains(px, py) || right.contains(px, py);
        double level = in_lung ? lung_level : (body.contains(px, py) ? body_level : bg);
        if (config.noise_level > 0.0) level += config.noise_level * rng.next_gaussian();
        level = std::min(std::max(level, 0.0), 1.0);
        const size_t i = static_cast<size_t>(y) * size + x;
        image.pixels[i] = static_cast<uint8_t>(std::lround(level * 255.0));
        mask.pixels[i] = in_lung ? 255 : 0;
      }
    }

    char id[32];
    std::snprintf(id, sizeof(id), "phantom_%04d", index);
    write_png_gray((images_dir / (std::string(id) + ".png")).string(), image);
    write_png_gray((masks_dir / (std::string(id) + ".png")).string(), mask);

    // Build the in-memory pair from the quantized bytes, matching what a
    // later load of the files produces.
    SamplePair pair;
    pair.id = id;
    std::vector<float> intensities(image.pixels.begin(), image.pixels.end());
    pair.input = image_to_input(intensities, size);
    auto [mask_signed, mask01] = mask_to_tensors(mask);
    pair.mask_signed = std::move(mask_signed);
    pair.mask01 = std::move(mask01);
    pairs.push_back(std::move(pair));
  }
  return pairs;
}

void save_image(const Tensor& t, const std::string& path, PixelRange range) {
  require_arg(t.rank() >= 2, "save_image: tensor must have spatial dims");
  const int height = t.dim(t.rank() - 2);
  const int width = t.dim(t.rank() - 1);
  require_arg(t.numel() == static_cast<size_t>(height) * width,
              "save_image: leading dims must be 1");

  GrayImage image{width, height, std::vector<uint8_t>(t.numel())};
  const auto& values = t.values();
  for (size_t i = 0; i < values.size(); ++i) {
    const double v = values[i];
    const double scaled = range == PixelRange::signed_unit ? (v + 1.0) * 127.5 : v * 255.0;
    image.pixels[i] =
        static_cast<uint8_t>(std::min(255.0, std::max(0.0, std::round(scaled))));
  }
  write_png_gray(path, image);
}

}  // namespace aseg
