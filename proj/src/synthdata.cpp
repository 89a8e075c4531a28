#include "pnl/synthdata.hpp"

#include "pnl/dataset_io.hpp"
#include "pnl/errors.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

namespace pnl {

namespace {

constexpr std::int64_t kFixed = 10000;  // intensity fixed-point scale

std::int64_t to_fixed(double v) { return std::llround(v * static_cast<double>(kFixed)); }

/// Approximately standard-normal deviate scaled by `sigma_fixed`, from the sum
/// of twelve 16-bit uniforms (Irwin-Hall).
std::int64_t gaussian_fixed(Rng& rng, std::int64_t sigma_fixed) {
  std::int64_t sum = 0;
  for (int i = 0; i < 12; ++i) sum += static_cast<std::int64_t>(rng() >> 48);
  sum -= 6 * 65535;
  return sum * sigma_fixed / 65536;
}

struct Disk {
  int row, col, radius;
};

bool inside(const Disk& d, int r, int c) {
  const std::int64_t dr = r - d.row;
  const std::int64_t dc = c - d.col;
  return dr * dr + dc * dc <= static_cast<std::int64_t>(d.radius) * d.radius;
}

/// A lumpy blob: a core disk plus a few overlapping lobes.
std::vector<Disk> make_blob(Rng& rng, int height, int width, int rmin, int rmax) {
  const int r = static_cast<int>(uniform_int(rng, rmin, rmax));
  const int cy = static_cast<int>(uniform_int(rng, r, height - 1 - r));
  const int cx = static_cast<int>(uniform_int(rng, r, width - 1 - r));
  std::vector<Disk> disks{{cy, cx, r}};
  const int lobes = static_cast<int>(uniform_int(rng, 2, 4));
  for (int k = 0; k < lobes; ++k) {
    const int span = std::max(1, r / 2);
    const int dy = static_cast<int>(uniform_int(rng, -span, span));
    const int dx = static_cast<int>(uniform_int(rng, -span, span));
    const int lr = static_cast<int>(uniform_int(rng, std::max(1, r / 2), std::max(1, 3 * r / 4)));
    disks.push_back({cy + dy, cx + dx, lr});
  }
  return disks;
}

/// Smooth additive field from bilinear interpolation of a 4x4 random grid.
std::vector<std::int64_t> illumination_field(Rng& rng, int height, int width, std::int64_t amp) {
  std::vector<std::int64_t> field(static_cast<std::size_t>(height) * width, 0);
  if (amp == 0) return field;
  constexpr int kNodes = 4;
  std::int64_t nodes[kNodes][kNodes];
  for (auto& row : nodes) {
    for (auto& v : row) v = uniform_int(rng, -amp, amp);
  }
  const std::int64_t sy = height - 1;
  const std::int64_t sx = width - 1;
  for (int r = 0; r < height; ++r) {
    const std::int64_t fy = r * (kNodes - 1);  // position * sy
    const int y0 = static_cast<int>(std::min<std::int64_t>(fy / sy, kNodes - 2));
    const std::int64_t ty = fy - y0 * sy;      // in [0, sy]
    for (int c = 0; c < width; ++c) {
      const std::int64_t fx = c * (kNodes - 1);
      const int x0 = static_cast<int>(std::min<std::int64_t>(fx / sx, kNodes - 2));
      const std::int64_t tx = fx - x0 * sx;
      const std::int64_t top = nodes[y0][x0] * (sx - tx) + nodes[y0][x0 + 1] * tx;
      const std::int64_t bot = nodes[y0 + 1][x0] * (sx - tx) + nodes[y0 + 1][x0 + 1] * tx;
      field[static_cast<std::size_t>(r) * width + c] = (top * (sy - ty) + bot * ty) / (sx * sy);
    }
  }
  return field;
}

Sample make_sample(const GenConfig& cfg, std::uint64_t seed, std::string id, Split split) {
  Rng rng(seed);
  const int h = cfg.height;
  const int w = cfg.width;
  const std::int64_t bg = to_fixed(cfg.bg_mean);
  const std::int64_t delta = to_fixed(cfg.fg_mean) - bg;
  const std::int64_t sigma = to_fixed(cfg.noise_sigma);
  const std::int64_t jitter = to_fixed(cfg.contrast_jitter);

  const int blobs = static_cast<int>(uniform_int(rng, cfg.blob_count_min, cfg.blob_count_max));
  std::vector<std::int64_t> offset(static_cast<std::size_t>(h) * w, 0);
  BinaryMask mask = BinaryMask::Zero(h, w);
  std::vector<BinaryMask> blob_masks;

  for (int d = 0; d < cfg.distractor_count; ++d) {
    const int r = static_cast<int>(uniform_int(rng, cfg.distractor_radius_min, cfg.distractor_radius_max));
    const Disk disk{static_cast<int>(uniform_int(rng, 0, h - 1)), static_cast<int>(uniform_int(rng, 0, w - 1)), r};
    for (int y = std::max(0, disk.row - r); y <= std::min(h - 1, disk.row + r); ++y) {
      for (int x = std::max(0, disk.col - r); x <= std::min(w - 1, disk.col + r); ++x) {
        if (inside(disk, y, x)) offset[static_cast<std::size_t>(y) * w + x] = delta;
      }
    }
  }

  for (int b = 0; b < blobs; ++b) {
    const auto disks = make_blob(rng, h, w, cfg.blob_radius_min, cfg.blob_radius_max);
    const std::int64_t factor = kFixed + (jitter > 0 ? uniform_int(rng, -jitter, jitter) : 0);
    const std::int64_t contrast = delta * factor / kFixed;
    BinaryMask bm = BinaryMask::Zero(h, w);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        for (const Disk& dk : disks) {
          if (inside(dk, y, x)) {
            bm(y, x) = 1;
            break;
          }
        }
        if (bm(y, x) != 0) {
          mask(y, x) = 1;
          offset[static_cast<std::size_t>(y) * w + x] = contrast;
        }
      }
    }
    blob_masks.push_back(std::move(bm));
  }

  const auto field = illumination_field(rng, h, w, to_fixed(cfg.illumination));
  Image image(h, w, 1);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      const std::int64_t v = bg + offset[i] + field[i] + gaussian_fixed(rng, sigma);
      const std::int64_t q = std::clamp<std::int64_t>((v * 255 + kFixed / 2) / kFixed, 0, 255);
      image.at(y, x) = static_cast<float>(q) / 255.0F;
    }
  }

  Sample s;
  s.id = std::move(id);
  s.image = std::move(image);
  s.split = split;
  for (const BinaryMask& bm : blob_masks) s.points.push_back(simulate_point(bm, rng, cfg.point_margin));
  if (split == Split::D2) {
    s.heldout_mask = std::move(mask);
  } else {
    s.mask = std::move(mask);
  }
  return s;
}

std::string make_id(const char* prefix, int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s_%04d", prefix, index);
  return buf;
}

}  // namespace

void GenConfig::validate() const {
  if (height < kMinImageSide || width < kMinImageSide) throw ConfigError("image must be at least 9x9");
  if (count < 2) throw ConfigError("count must be >= 2 (D1 and D2 both non-empty)");
  if (test_count < 0) throw ConfigError("test_count must be >= 0");
  if (!(d1_fraction > 0.0 && d1_fraction < 1.0)) throw ConfigError("d1_fraction must lie in (0,1)");
  if (d1_count(count, d1_fraction) >= count) throw ConfigError("d1_fraction leaves no D2 samples");
  if (blob_count_min < 1 || blob_count_max < blob_count_min) throw ConfigError("bad blob count range");
  if (blob_radius_min < 1 || blob_radius_max < blob_radius_min) throw ConfigError("bad blob radius range");
  if (2 * blob_radius_max + 1 > std::min(height, width)) throw ConfigError("blob cannot fit in the image");
  if (distractor_count < 0 || distractor_radius_min < 0 || distractor_radius_max < distractor_radius_min) {
    throw ConfigError("bad distractor settings");
  }
  if (!(noise_sigma >= 0.0) || !(contrast_jitter >= 0.0 && contrast_jitter <= 1.0) || !(illumination >= 0.0)) {
    throw ConfigError("noise_sigma, contrast_jitter, illumination must be non-negative (jitter <= 1)");
  }
  if (fg_mean < 0.0 || fg_mean > 1.0 || bg_mean < 0.0 || bg_mean > 1.0) throw ConfigError("means must lie in [0,1]");
  if (point_margin < 0) throw ConfigError("point_margin must be >= 0");
}

nlohmann::ordered_json GenConfig::to_json() const {
  return {{"height", height},
          {"width", width},
          {"count", count},
          {"test_count", test_count},
          {"d1_fraction", d1_fraction},
          {"blob_count_min", blob_count_min},
          {"blob_count_max", blob_count_max},
          {"blob_radius_min", blob_radius_min},
          {"blob_radius_max", blob_radius_max},
          {"fg_mean", fg_mean},
          {"bg_mean", bg_mean},
          {"noise_sigma", noise_sigma},
          {"contrast_jitter", contrast_jitter},
          {"illumination", illumination},
          {"distractor_count", distractor_count},
          {"distractor_radius_min", distractor_radius_min},
          {"distractor_radius_max", distractor_radius_max},
          {"point_margin", point_margin},
          {"seed", seed}};
}

int d1_count(int count, double fraction) {
  const auto n = static_cast<int>(std::floor(static_cast<double>(count) * fraction + 1e-9));
  return std::max(1, n);
}

BinaryMask erode(const BinaryMask& mask, int margin) {
  const int h = static_cast<int>(mask.rows());
  const int w = static_cast<int>(mask.cols());
  BinaryMask out = BinaryMask::Zero(h, w);
  const std::int64_t m2 = static_cast<std::int64_t>(margin) * margin;
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      if (mask(r, c) == 0) continue;
      bool keep = true;
      for (int dr = -margin; dr <= margin && keep; ++dr) {
        for (int dc = -margin; dc <= margin; ++dc) {
          if (static_cast<std::int64_t>(dr) * dr + static_cast<std::int64_t>(dc) * dc > m2) continue;
          const int rr = r + dr;
          const int cc = c + dc;
          if (rr < 0 || cc < 0 || rr >= h || cc >= w || mask(rr, cc) == 0) {
            keep = false;
            break;
          }
        }
      }
      out(r, c) = keep ? 1 : 0;
    }
  }
  return out;
}

Point simulate_point(const BinaryMask& mask, Rng& rng, int margin) {
  auto collect = [](const BinaryMask& m) {
    std::vector<Point> pts;
    for (int r = 0; r < m.rows(); ++r) {
      for (int c = 0; c < m.cols(); ++c) {
        if (m(r, c) != 0) pts.push_back({r, c});
      }
    }
    return pts;
  };
  std::vector<Point> candidates = collect(erode(mask, margin));
  if (candidates.empty()) candidates = collect(mask);
  if (candidates.empty()) throw std::invalid_argument("simulate_point: empty mask");
  return candidates[static_cast<std::size_t>(
      uniform_int(rng, 0, static_cast<std::int64_t>(candidates.size()) - 1))];
}

std::vector<Sample> generate_samples(const GenConfig& cfg) {
  cfg.validate();
  const int n_d1 = d1_count(cfg.count, cfg.d1_fraction);
  std::vector<int> order(static_cast<std::size_t>(cfg.count));
  std::iota(order.begin(), order.end(), 0);
  Rng split_rng = make_stream(cfg.seed, "split");
  for (int i = cfg.count - 1; i > 0; --i) {
    std::swap(order[static_cast<std::size_t>(i)],
              order[static_cast<std::size_t>(uniform_int(split_rng, 0, i))]);
  }
  std::vector<bool> is_d1(static_cast<std::size_t>(cfg.count), false);
  for (int k = 0; k < n_d1; ++k) is_d1[static_cast<std::size_t>(order[static_cast<std::size_t>(k)])] = true;

  std::vector<Sample> samples;
  samples.reserve(static_cast<std::size_t>(cfg.count + cfg.test_count));
  for (int i = 0; i < cfg.count; ++i) {
    samples.push_back(make_sample(cfg, derive_seed(cfg.seed, "datagen", static_cast<std::uint64_t>(i)),
                                  make_id("train", i), is_d1[static_cast<std::size_t>(i)] ? Split::D1 : Split::D2));
  }
  for (int i = 0; i < cfg.test_count; ++i) {
    samples.push_back(make_sample(cfg, derive_seed(cfg.seed, "datagen-test", static_cast<std::uint64_t>(i)),
                                  make_id("test", i), Split::Test));
  }
  return samples;
}

void generate(const GenConfig& cfg, const std::filesystem::path& dir) {
  const std::vector<Sample> samples = generate_samples(cfg);
  save_dataset(dir, samples);
  std::ofstream out(dir / "gen_config.json");
  if (!out) throw IoError("cannot write " + (dir / "gen_config.json").string());
  out << cfg.to_json().dump(2) << '\n';
}

}  // namespace pnl
