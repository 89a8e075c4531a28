#include "pnl/dataset_io.hpp"

#include "pnl/errors.hpp"

#include <json.hpp>
#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <memory>

namespace pnl {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const fs::path& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) throw IoError("cannot open " + path.string());
  return f;
}

struct RawPng {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<std::uint8_t> bytes;  // interleaved HWC
};

void write_raw_png(const fs::path& path, const RawPng& raw) {
  auto file = open_file(path, "wb");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (png == nullptr) throw IoError("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (info == nullptr || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("failed writing " + path.string());
  }
  png_init_io(png, file.get());
  png_set_compression_level(png, 6);
  const int color = raw.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY;
  png_set_IHDR(png, info, static_cast<png_uint_32>(raw.width), static_cast<png_uint_32>(raw.height),
               8, color, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const std::size_t stride = static_cast<std::size_t>(raw.width) * raw.channels;
  for (int r = 0; r < raw.height; ++r) {
    png_write_row(png, const_cast<png_bytep>(raw.bytes.data() + r * stride));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

RawPng read_raw_png(const fs::path& path) {
  auto file = open_file(path, "rb");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (png == nullptr) throw IoError("png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (info == nullptr || setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("failed reading " + path.string());
  }
  png_init_io(png, file.get());
  png_read_info(png, info);
  const int bit_depth = png_get_bit_depth(png, info);
  const int color = png_get_color_type(png, info);
  if (bit_depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if ((color & PNG_COLOR_MASK_ALPHA) != 0) png_set_strip_alpha(png);
  png_read_update_info(png, info);

  RawPng raw;
  raw.width = static_cast<int>(png_get_image_width(png, info));
  raw.height = static_cast<int>(png_get_image_height(png, info));
  raw.channels = png_get_channels(png, info);
  const std::size_t stride = png_get_rowbytes(png, info);
  raw.bytes.resize(stride * raw.height);
  for (int r = 0; r < raw.height; ++r) png_read_row(png, raw.bytes.data() + r * stride, nullptr);
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  if (raw.channels != 1 && raw.channels != 3) {
    throw IoError(path.string() + ": unsupported channel count");
  }
  return raw;
}

std::uint8_t quantize(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}


}  // namespace

void write_image_png(const fs::path& path, const Image& image) {
  RawPng raw{image.height(), image.width(), image.channels(), {}};
  raw.bytes.resize(image.pixel_count() * image.channels());
  std::size_t k = 0;
  for (int r = 0; r < image.height(); ++r) {
    for (int c = 0; c < image.width(); ++c) {
      for (int ch = 0; ch < image.channels(); ++ch) raw.bytes[k++] = quantize(image.at(ch, r, c));
    }
  }
  write_raw_png(path, raw);
}

Image read_image_png(const fs::path& path) {
  const RawPng raw = read_raw_png(path);
  Image image(raw.height, raw.width, raw.channels);
  std::size_t k = 0;
  for (int r = 0; r < raw.height; ++r) {
    for (int c = 0; c < raw.width; ++c) {
      for (int ch = 0; ch < raw.channels; ++ch) {
        image.at(ch, r, c) = static_cast<float>(raw.bytes[k++]) / 255.0F;
      }
    }
  }
  return image;
}

void write_mask_png(const fs::path& path, const BinaryMask& mask) {
  RawPng raw{static_cast<int>(mask.rows()), static_cast<int>(mask.cols()), 1, {}};
  raw.bytes.resize(mask.size());
  for (Eigen::Index i = 0; i < mask.size(); ++i) raw.bytes[i] = mask.data()[i] != 0 ? 255 : 0;
  write_raw_png(path, raw);
}

BinaryMask read_mask_png(const fs::path& path) {
  const RawPng raw = read_raw_png(path);
  BinaryMask mask(raw.height, raw.width);
  for (int i = 0; i < raw.height * raw.width; ++i) {
    mask.data()[i] = raw.bytes[static_cast<std::size_t>(i) * raw.channels] >= 128 ? 1 : 0;
  }
  return mask;
}

void write_prob_png(const fs::path& path, const ProbMap& probs) {
  RawPng raw{static_cast<int>(probs.rows()), static_cast<int>(probs.cols()), 1, {}};
  raw.bytes.resize(probs.size());
  for (Eigen::Index i = 0; i < probs.size(); ++i) raw.bytes[i] = quantize(probs.data()[i]);
  write_raw_png(path, raw);
}

ProbMap read_prob_png(const fs::path& path) {
  const RawPng raw = read_raw_png(path);
  ProbMap probs(raw.height, raw.width);
  for (int i = 0; i < raw.height * raw.width; ++i) {
    probs.data()[i] = raw.bytes[static_cast<std::size_t>(i) * raw.channels] / 255.0;
  }
  return probs;
}

std::vector<const Sample*> Dataset::split(Split which) const {
  std::vector<const Sample*> out;
  for (const Sample& s : samples) {
    if (s.split == which) out.push_back(&s);
  }
  return out;
}

std::vector<std::pair<std::string, std::vector<Point>>> read_points_json(const fs::path& path) {
  const nlohmann::json j = read_json(path);
  if (!j.is_object()) throw IoError(path.string() + ": expected an object");
  std::vector<std::pair<std::string, std::vector<Point>>> out;
  for (const auto& [id, list] : j.items()) {
    std::vector<Point> pts;
    for (const auto& rc : list) {
      if (!rc.is_array() || rc.size() != 2) throw IoError(path.string() + ": bad point for " + id);
      pts.push_back({rc[0].get<int>(), rc[1].get<int>()});
    }
    out.emplace_back(id, std::move(pts));
  }
  return out;
}

Dataset load_dataset(const fs::path& dir) {
  const nlohmann::json split_json = read_json(dir / "split.json");
  std::map<std::string, std::vector<Point>> points;
  if (fs::exists(dir / "points.json")) {
    for (auto& [id, pts] : read_points_json(dir / "points.json")) points[id] = std::move(pts);
  }

  Dataset ds;
  for (const auto& [id, tag] : split_json.items()) {
    Sample s;
    s.id = id;
    try {
      s.split = parse_split(tag.get<std::string>());
    } catch (const std::exception& e) {
      throw IoError((dir / "split.json").string() + ": " + e.what());
    }
    s.image = read_image_png(dir / "images" / (id + ".png"));
    const fs::path mask_path = dir / "masks" / (id + ".png");
    if (fs::exists(mask_path)) {
      BinaryMask m = read_mask_png(mask_path);
      if (s.split == Split::D2) {
        s.heldout_mask = std::move(m);
      } else {
        s.mask = std::move(m);
      }
    }
    if (auto it = points.find(id); it != points.end()) s.points = it->second;
    ds.samples.push_back(std::move(s));
  }
  std::sort(ds.samples.begin(), ds.samples.end(),
            [](const Sample& a, const Sample& b) { return a.id < b.id; });
  return ds;
}

void save_dataset(const fs::path& dir, const std::vector<Sample>& samples) {
  fs::create_directories(dir / "images");
  fs::create_directories(dir / "masks");
  nlohmann::ordered_json split_json = nlohmann::ordered_json::object();
  nlohmann::ordered_json points_json = nlohmann::ordered_json::object();
  std::vector<const Sample*> sorted;
  for (const Sample& s : samples) sorted.push_back(&s);
  std::sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) { return a->id < b->id; });
  for (const Sample* s : sorted) {
    split_json[s->id] = std::string(to_string(s->split));
    write_image_png(dir / "images" / (s->id + ".png"), s->image);
    if (s->mask) {
      write_mask_png(dir / "masks" / (s->id + ".png"), *s->mask);
    } else if (s->heldout_mask) {
      write_mask_png(dir / "masks" / (s->id + ".png"), *s->heldout_mask);
    }
    if (!s->points.empty()) {
      auto arr = nlohmann::ordered_json::array();
      for (const Point& p : s->points) arr.push_back({p.row, p.col});
      points_json[s->id] = arr;
    }
  }
  std::ofstream(dir / "split.json") << split_json.dump(2) << '\n';
  std::ofstream out(dir / "points.json");
  if (!out) throw IoError("cannot write " + (dir / "points.json").string());
  out << points_json.dump(2) << '\n';
}

}  // namespace pnl
