#pragma once

#include "pnl/core_types.hpp"
#include "pnl/rng.hpp"

#include <json.hpp>

#include <filesystem>
#include <vector>

namespace pnl {

/// Synthetic lesion-like segmentation data. All pixel arithmetic is integer
/// fixed-point so a seed reproduces the same bytes everywhere.
struct GenConfig {
  int height = 96;
  int width = 96;
  int count = 400;        // training images (D1 + D2)
  int test_count = 100;   // held-out evaluation images
  double d1_fraction = 0.047;
  int blob_count_min = 1;
  int blob_count_max = 1;
  int blob_radius_min = 14;
  int blob_radius_max = 24;
  double fg_mean = 0.55;
  double bg_mean = 0.45;
  double noise_sigma = 0.15;
  /// Per-blob contrast factor drawn from [1 - jitter, 1 + jitter].
  double contrast_jitter = 0.0;
  /// Peak amplitude of a smooth additive illumination field.
  double illumination = 0.0;
  /// Small lesion-coloured clutter blobs per image (never foreground).
  int distractor_count = 0;
  int distractor_radius_min = 3;
  int distractor_radius_max = 6;
  /// Erosion radius used when simulating the annotator's click.
  int point_margin = 3;
  std::uint64_t seed = 0;

  /// Throws ConfigError when the configuration cannot be realized.
  void validate() const;
  nlohmann::ordered_json to_json() const;
};

/// max(1, floor(count * fraction)).
int d1_count(int count, double fraction);

/// Pixels whose whole radius-`margin` disk lies on in-bounds foreground.
BinaryMask erode(const BinaryMask& mask, int margin);

/// Uniform draw from the eroded foreground; falls back to the whole
/// foreground when erosion leaves nothing. Throws on an empty mask.
Point simulate_point(const BinaryMask& mask, Rng& rng, int margin = 3);

/// Training samples carry their mask as supervision (D1) or as held-out
/// reference (D2); test samples carry it as supervision.
std::vector<Sample> generate_samples(const GenConfig& cfg);

/// Writes the dataset layout plus gen_config.json.
void generate(const GenConfig& cfg, const std::filesystem::path& dir);

}  // namespace pnl
