#include "pnl/neighborhood.hpp"

#include "pnl/errors.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace pnl {

std::int64_t disk_lattice_count(int radius) {
  if (radius < 0) throw std::invalid_argument("radius must be non-negative");
  std::int64_t count = 0;
  const std::int64_t r2 = static_cast<std::int64_t>(radius) * radius;
  for (int dr = -radius; dr <= radius; ++dr) {
    for (int dc = -radius; dc <= radius; ++dc) {
      if (static_cast<std::int64_t>(dr) * dr + static_cast<std::int64_t>(dc) * dc <= r2) ++count;
    }
  }
  return count;
}

NeighborhoodMask make_neighborhood_mask(std::span<const Point> points, int radius, int height,
                                        int width) {
  if (radius < 0) throw std::invalid_argument("neighborhood radius must be non-negative");
  if (height <= 0 || width <= 0) throw std::invalid_argument("mask dimensions must be positive");
  if (points.empty()) throw std::invalid_argument("neighborhood needs at least one point");

  NeighborhoodMask mask;
  mask.radius = radius;
  mask.matrix = BinaryMask::Zero(height, width);
  const std::int64_t r2 = static_cast<std::int64_t>(radius) * radius;
  for (const Point& p : points) {
    if (!in_bounds(p, height, width)) throw std::out_of_range("neighborhood center out of bounds");
    mask.centers.push_back(p);
    const int r0 = std::max(0, p.row - radius);
    const int r1 = std::min(height - 1, p.row + radius);
    const int c0 = std::max(0, p.col - radius);
    const int c1 = std::min(width - 1, p.col + radius);
    for (int r = r0; r <= r1; ++r) {
      const std::int64_t dr = r - p.row;
      for (int c = c0; c <= c1; ++c) {
        const std::int64_t dc = c - p.col;
        if (dr * dr + dc * dc <= r2) mask.matrix(r, c) = 1;
      }
    }
  }
  mask.area = mask.matrix.cast<std::int64_t>().sum();
  return mask;
}

void clear_region(NeighborhoodMask& mask, int r0, int r1, int c0, int c1) {
  r0 = std::clamp(r0, 0, mask.height());
  r1 = std::clamp(r1, 0, mask.height());
  c0 = std::clamp(c0, 0, mask.width());
  c1 = std::clamp(c1, 0, mask.width());
  if (r1 > r0 && c1 > c0) mask.matrix.block(r0, c0, r1 - r0, c1 - c0).setZero();
  mask.area = mask.matrix.cast<std::int64_t>().sum();
}

NeighborhoodSlice extract_slice(const Image& image, Point center, int radius,
                                std::string source_id) {
  if (radius < 0) throw std::invalid_argument("slice radius must be non-negative");
  if (!in_bounds(center, image.height(), image.width())) {
    throw std::out_of_range("slice center out of bounds");
  }
  const int side = 2 * radius + 1;
  NeighborhoodSlice slice;
  slice.patch = Image(side, side, image.channels(), 0.0F);
  slice.validity = BinaryMask::Zero(side, side);
  slice.source_id = std::move(source_id);
  slice.center = center;
  const std::int64_t r2 = static_cast<std::int64_t>(radius) * radius;
  for (int dr = -radius; dr <= radius; ++dr) {
    for (int dc = -radius; dc <= radius; ++dc) {
      if (static_cast<std::int64_t>(dr) * dr + static_cast<std::int64_t>(dc) * dc > r2) continue;
      const Point src{center.row + dr, center.col + dc};
      if (!in_bounds(src, image.height(), image.width())) continue;
      slice.validity(dr + radius, dc + radius) = 1;
      for (int ch = 0; ch < image.channels(); ++ch) {
        slice.patch.at(ch, dr + radius, dc + radius) = image.at(ch, src.row, src.col);
      }
    }
  }
  return slice;
}

NeighborhoodBank build_bank(std::span<const Sample* const> samples, int radius) {
  std::vector<const Sample*> sorted(samples.begin(), samples.end());
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const Sample* a, const Sample* b) { return a->id < b->id; });
  NeighborhoodBank bank(radius);
  for (const Sample* s : sorted) {
    for (const Point& p : s->points) {
      try {
        bank.add(extract_slice(s->image, p, radius, s->id));
      } catch (const std::exception& e) {
        throw std::invalid_argument("sample " + s->id + ": " + e.what());
      }
    }
  }
  return bank;
}

NeighborhoodBank build_bank(std::span<const Sample> samples, int radius) {
  std::vector<const Sample*> ptrs;
  ptrs.reserve(samples.size());
  for (const Sample& s : samples) ptrs.push_back(&s);
  return build_bank(std::span<const Sample* const>(ptrs), radius);
}

namespace {

constexpr char kBankMagic[8] = {'P', 'N', 'L', 'B', 'A', 'N', 'K', '1'};

template <typename T>
void put(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw IoError("truncated bank archive");
  return v;
}

}  // namespace

void NeighborhoodBank::save(const std::filesystem::path& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path.string());
  const int channels = slices_.empty() ? 0 : slices_.front().patch.channels();
  const int side = 2 * radius_ + 1;
  const std::uint64_t record_bytes =
      static_cast<std::uint64_t>(side) * side * (channels * sizeof(float) + 1) + 2 * sizeof(std::int32_t);

  os.write(kBankMagic, sizeof(kBankMagic));
  put<std::int32_t>(os, radius_);
  put<std::int32_t>(os, channels);
  put<std::uint64_t>(os, slices_.size());
  // index
  for (std::size_t i = 0; i < slices_.size(); ++i) {
    const std::string& id = slices_[i].source_id;
    put<std::uint32_t>(os, static_cast<std::uint32_t>(id.size()));
    os.write(id.data(), static_cast<std::streamsize>(id.size()));
    put<std::uint64_t>(os, i * record_bytes);
  }
  // records
  for (const NeighborhoodSlice& s : slices_) {
    if (s.patch.channels() != channels) throw IoError("bank slices disagree on channel count");
    put<std::int32_t>(os, s.center.row);
    put<std::int32_t>(os, s.center.col);
    const auto data = s.patch.data();
    os.write(reinterpret_cast<const char*>(data.data()),
             static_cast<std::streamsize>(data.size() * sizeof(float)));
    os.write(reinterpret_cast<const char*>(s.validity.data()), s.validity.size());
  }
  if (!os) throw IoError("failed writing " + path.string());
}

NeighborhoodBank NeighborhoodBank::load(const std::filesystem::path& path, int expected_radius) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  char magic[sizeof(kBankMagic)];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kBankMagic, sizeof(magic)) != 0) {
    throw IoError(path.string() + ": not a neighborhood bank");
  }
  const auto radius = get<std::int32_t>(is);
  if (radius != expected_radius) {
    throw ConfigError("bank radius " + std::to_string(radius) + " does not match R=" +
                      std::to_string(expected_radius));
  }
  const auto channels = get<std::int32_t>(is);
  const auto count = get<std::uint64_t>(is);
  std::vector<std::string> ids;
  ids.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto len = get<std::uint32_t>(is);
    std::string id(len, '\0');
    is.read(id.data(), len);
    (void)get<std::uint64_t>(is);
    ids.push_back(std::move(id));
  }
  NeighborhoodBank bank(radius);
  const int side = 2 * radius + 1;
  for (std::uint64_t i = 0; i < count; ++i) {
    NeighborhoodSlice s;
    s.source_id = ids[i];
    s.center.row = get<std::int32_t>(is);
    s.center.col = get<std::int32_t>(is);
    s.patch = Image(side, side, channels);
    auto data = s.patch.data();
    is.read(reinterpret_cast<char*>(data.data()),
            static_cast<std::streamsize>(data.size() * sizeof(float)));
    s.validity = BinaryMask(side, side);
    is.read(reinterpret_cast<char*>(s.validity.data()), s.validity.size());
    if (!is) throw IoError("truncated bank archive");
    bank.add(std::move(s));
  }
  return bank;
}

}  // namespace pnl
