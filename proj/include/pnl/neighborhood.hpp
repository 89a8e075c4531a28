#pragma once

#include "pnl/core_types.hpp"

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace pnl {

/// Rasterized union of closed disks (i-r)^2 + (j-c)^2 <= R^2 around the
/// annotated points, clipped at the image border.
struct NeighborhoodMask {
  BinaryMask matrix;
  int radius = 0;
  std::vector<Point> centers;
  std::int64_t area = 0;

  int height() const { return static_cast<int>(matrix.rows()); }
  int width() const { return static_cast<int>(matrix.cols()); }
};

/// Number of integer lattice points in the closed disk of the given radius.
std::int64_t disk_lattice_count(int radius);

NeighborhoodMask make_neighborhood_mask(std::span<const Point> points, int radius, int height,
                                        int width);

/// Zeroes rows [r0,r1) x cols [c0,c1) and recomputes the area. Centers are
/// kept.
void clear_region(NeighborhoodMask& mask, int r0, int r1, int c0, int c1);

/// (2R+1)x(2R+1) crop centered on a point. `validity` marks pixels that were
/// both in bounds and inside the disk; the rest of `patch` is zero.
struct NeighborhoodSlice {
  Image patch;
  BinaryMask validity;
  std::string source_id;
  Point center;
};

NeighborhoodSlice extract_slice(const Image& image, Point center, int radius,
                                std::string source_id = {});

class NeighborhoodBank {
 public:
  NeighborhoodBank() = default;
  explicit NeighborhoodBank(int radius) : radius_(radius) {}

  int radius() const { return radius_; }
  std::size_t size() const { return slices_.size(); }
  bool empty() const { return slices_.empty(); }
  const NeighborhoodSlice& operator[](std::size_t i) const { return slices_[i]; }
  std::span<const NeighborhoodSlice> slices() const { return slices_; }

  void add(NeighborhoodSlice slice) { slices_.push_back(std::move(slice)); }

  /// Single archive: header (magic, version, R, channel count, slice count),
  /// an id -> offset index, then raw patches and validity bytes.
  void save(const std::filesystem::path& path) const;
  /// Throws ConfigError when the stored radius differs from `expected_radius`.
  static NeighborhoodBank load(const std::filesystem::path& path, int expected_radius);

 private:
  int radius_ = 0;
  std::vector<NeighborhoodSlice> slices_;
};

/// One slice per (sample, point), ordered by sample id then point order.
NeighborhoodBank build_bank(std::span<const Sample> samples, int radius);
NeighborhoodBank build_bank(std::span<const Sample* const> samples, int radius);

}  // namespace pnl
