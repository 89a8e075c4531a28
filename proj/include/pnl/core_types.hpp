#pragma once

#include <Eigen/Core>

#include <compare>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace pnl {

template <typename T>
using Grid = Eigen::Array<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Per-pixel real values (predictions, pseudo-labels, soft targets).
using ProbMap = Grid<double>;
/// Per-pixel {0,1} values.
using BinaryMask = Grid<std::uint8_t>;

/// Minimum side length; the 3x3 grid used by patch mixing needs at least
/// three pixels per cell edge.
inline constexpr int kMinImageSide = 9;

/// Pixel coordinate, origin top-left.
struct Point {
  int row = 0;
  int col = 0;
  auto operator<=>(const Point&) const = default;
};

/// Intensities in [0,1], channel-major (CHW) storage.
class Image {
 public:
  Image() = default;
  Image(int height, int width, int channels = 1, float fill = 0.0F);

  int height() const { return height_; }
  int width() const { return width_; }
  int channels() const { return channels_; }
  std::size_t pixel_count() const { return static_cast<std::size_t>(height_) * width_; }
  bool empty() const { return data_.empty(); }

  float& at(int channel, int row, int col) { return data_[index(channel, row, col)]; }
  float at(int channel, int row, int col) const { return data_[index(channel, row, col)]; }
  /// Single-channel shorthand.
  float& at(int row, int col) { return at(0, row, col); }
  float at(int row, int col) const { return at(0, row, col); }

  std::span<float> data() { return data_; }
  std::span<const float> data() const { return data_; }
  std::span<const float> channel(int c) const {
    return std::span<const float>(data_).subspan(static_cast<std::size_t>(c) * pixel_count(),
                                                 pixel_count());
  }

  bool same_shape(const Image& other) const {
    return height_ == other.height_ && width_ == other.width_ && channels_ == other.channels_;
  }
  friend bool operator==(const Image&, const Image&) = default;

 private:
  std::size_t index(int c, int r, int col) const {
    return (static_cast<std::size_t>(c) * height_ + r) * width_ + col;
  }

  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  std::vector<float> data_;
};

enum class Split { D1, D2, Test };

std::string_view to_string(Split split);
/// Accepts "D1", "D2", "test".
Split parse_split(std::string_view text);

/// Teacher-produced soft foreground map for a D2 sample.
struct PseudoLabel {
  ProbMap probs;
  int produced_at = 0;
  std::optional<double> score;
};

struct Sample {
  std::string id;
  Image image;
  Split split = Split::D2;
  /// Pixel-level supervision; present for D1 (and test) samples only.
  std::optional<BinaryMask> mask;
  /// Ground truth kept aside for evaluating D2 pseudo-labels; never a
  /// training input.
  std::optional<BinaryMask> heldout_mask;
  std::vector<Point> points;
  std::optional<PseudoLabel> pseudo;
};

bool in_bounds(Point p, int height, int width);

/// Checks every data-model invariant and returns one message per violation.
/// Never throws.
std::vector<std::string> validate_sample(const Sample& sample);

}  // namespace pnl
