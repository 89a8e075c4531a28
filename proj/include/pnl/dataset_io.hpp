#pragma once

#include "pnl/core_types.hpp"

#include <filesystem>
#include <vector>

namespace pnl {

namespace fs = std::filesystem;

/// 8-bit grayscale or RGB PNG; intensities quantized to k/255.
void write_image_png(const fs::path& path, const Image& image);
Image read_image_png(const fs::path& path);

/// Masks live on disk as {0,255}; any value >= 128 reads back as foreground.
void write_mask_png(const fs::path& path, const BinaryMask& mask);
BinaryMask read_mask_png(const fs::path& path);

/// Probability maps quantized to 8 bits (p = v/255).
void write_prob_png(const fs::path& path, const ProbMap& probs);
ProbMap read_prob_png(const fs::path& path);

struct Dataset {
  std::vector<Sample> samples;  // sorted by id

  std::vector<const Sample*> split(Split which) const;
};

/// Layout: images/<id>.png, masks/<id>.png, points.json, split.json.
/// D2 masks (when present) are loaded as held-out masks, never as training
/// supervision.
Dataset load_dataset(const fs::path& dir);
void save_dataset(const fs::path& dir, const std::vector<Sample>& samples);

/// points.json: id -> [[row, col], ...]
std::vector<std::pair<std::string, std::vector<Point>>> read_points_json(const fs::path& path);

}  // namespace pnl
