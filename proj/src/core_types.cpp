#include "pnl/core_types.hpp"

#include <cmath>
#include <stdexcept>

namespace pnl {

Image::Image(int height, int width, int channels, float fill)
    : height_(height), width_(width), channels_(channels) {
  if (height < 0 || width < 0 || channels < 0) {
    throw std::invalid_argument("image dimensions must be non-negative");
  }
  data_.assign(static_cast<std::size_t>(height) * width * channels, fill);
}

std::string_view to_string(Split split) {
  switch (split) {
    case Split::D1:
      return "D1";
    case Split::D2:
      return "D2";
    case Split::Test:
      return "test";
  }
  return "?";
}

Split parse_split(std::string_view text) {
  if (text == "D1") return Split::D1;
  if (text == "D2") return Split::D2;
  if (text == "test") return Split::Test;
  throw std::invalid_argument("unknown split tag '" + std::string(text) + "'");
}

bool in_bounds(Point p, int height, int width) {
  return p.row >= 0 && p.col >= 0 && p.row < height && p.col < width;
}

namespace {

void check_mask(const BinaryMask& mask, const Image& image, const std::string& field,
                std::vector<std::string>& out) {
  if (mask.rows() != image.height() || mask.cols() != image.width()) {
    out.push_back(field + " shape differs from image");
    return;
  }
  if ((mask > 1).any()) out.push_back(field + " values outside {0,1}");
}

}  // namespace

std::vector<std::string> validate_sample(const Sample& s) {
  std::vector<std::string> out;
  const Image& img = s.image;

  if (s.id.empty()) out.emplace_back("id is empty");
  if (img.channels() != 1 && img.channels() != 3) out.emplace_back("image channels not in {1,3}");
  if (img.height() < kMinImageSide || img.width() < kMinImageSide) {
    out.emplace_back("image smaller than 9x9");
  }
  bool finite = true;
  bool in_range = true;
  for (float v : img.data()) {
    if (!std::isfinite(v)) {
      finite = false;
    } else if (v < 0.0F || v > 1.0F) {
      in_range = false;
    }
  }
  if (!finite) out.emplace_back("image intensity not finite");
  if (!in_range) out.emplace_back("image intensity outside [0,1]");

  if (s.mask) check_mask(*s.mask, img, "mask", out);
  if (s.heldout_mask) check_mask(*s.heldout_mask, img, "heldout_mask", out);

  switch (s.split) {
    case Split::D1:
      if (!s.mask) out.emplace_back("mask missing on D1 sample");
      if (s.points.empty()) out.emplace_back("points missing on D1 sample");
      break;
    case Split::D2:
      if (s.mask) out.emplace_back("mask present on D2 training sample");
      if (s.points.empty()) out.emplace_back("points missing on D2 sample");
      break;
    case Split::Test:
      if (!s.mask) out.emplace_back("mask missing on test sample");
      break;
  }

  const BinaryMask* reference = s.mask ? &*s.mask : (s.heldout_mask ? &*s.heldout_mask : nullptr);
  bool reference_ok = reference != nullptr && reference->rows() == img.height() &&
                      reference->cols() == img.width();
  for (const Point& p : s.points) {
    if (!in_bounds(p, img.height(), img.width())) {
      out.emplace_back("point out of bounds");
    } else if (reference_ok && (*reference)(p.row, p.col) == 0) {
      out.emplace_back("point not on a foreground pixel");
    }
  }

  if (s.pseudo) {
    if (s.split != Split::D2) out.emplace_back("pseudo label attached to non-D2 sample");
    const ProbMap& p = s.pseudo->probs;
    if (p.rows() != img.height() || p.cols() != img.width()) {
      out.emplace_back("pseudo label shape differs from image");
    } else if (!p.allFinite() || (p < 0.0).any() || (p > 1.0).any()) {
      out.emplace_back("pseudo label values outside [0,1]");
    }
    if (s.pseudo->score && (*s.pseudo->score < 0.0 || *s.pseudo->score > 1.0)) {
      out.emplace_back("pseudo score outside [0,1]");
    }
  }
  return out;
}

}  // namespace pnl
