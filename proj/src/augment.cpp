#include "pnl/augment.hpp"

#include "pnl/errors.hpp"

#include <limits>
#include <stdexcept>

namespace pnl {

void MixConfig::validate() const {
  if (!(beta_a > 0.0) || !(beta_b > 0.0)) throw ConfigError("beta_a and beta_b must be > 0");
}

namespace {

std::size_t nearest_center(const std::vector<Point>& centers, int r, int c) {
  std::size_t best = 0;
  std::int64_t best_d = std::numeric_limits<std::int64_t>::max();
  for (std::size_t k = 0; k < centers.size(); ++k) {
    const std::int64_t dr = r - centers[k].row;
    const std::int64_t dc = c - centers[k].col;
    const std::int64_t d = dr * dr + dc * dc;
    if (d < best_d) {
      best_d = d;
      best = k;
    }
  }
  return best;
}

}  // namespace

Image pnmxp_blend(const Image& image, const NeighborhoodMask& mask,
                  const NeighborhoodSlice& partner, double sigma) {
  if (mask.height() != image.height() || mask.width() != image.width()) {
    throw std::invalid_argument("pnmxp: mask shape differs from image");
  }
  if (partner.patch.channels() != image.channels()) {
    throw std::invalid_argument("pnmxp: partner channel count differs");
  }
  const int radius = mask.radius;
  if (partner.patch.height() != 2 * radius + 1) {
    throw ConfigError("pnmxp: partner slice radius differs from mask radius");
  }
  if (sigma < 0.0 || sigma > 1.0) throw std::invalid_argument("pnmxp: sigma outside [0,1]");

  Image out = image;
  if (mask.centers.empty()) return out;
  const double keep = 1.0 - sigma;
  for (int r = 0; r < image.height(); ++r) {
    for (int c = 0; c < image.width(); ++c) {
      if (mask.matrix(r, c) == 0) continue;
      const Point& ctr = mask.centers[nearest_center(mask.centers, r, c)];
      const int pr = r - ctr.row + radius;
      const int pc = c - ctr.col + radius;
      if (pr < 0 || pc < 0 || pr > 2 * radius || pc > 2 * radius) continue;
      if (partner.validity(pr, pc) == 0) continue;
      for (int ch = 0; ch < image.channels(); ++ch) {
        const double v = sigma * image.at(ch, r, c) + keep * partner.patch.at(ch, pr, pc);
        out.at(ch, r, c) = static_cast<float>(v);
      }
    }
  }
  return out;
}

PnmxpResult pnmxp(const Image& image, const NeighborhoodMask& mask, const NeighborhoodBank& bank,
                  const MixConfig& cfg, Rng& rng, const std::string& self_id) {
  if (mask.radius != bank.radius()) {
    throw ConfigError("pnmxp: mask radius " + std::to_string(mask.radius) +
                      " differs from bank radius " + std::to_string(bank.radius()));
  }
  PnmxpResult res;
  std::vector<std::size_t> candidates;
  candidates.reserve(bank.size());
  for (std::size_t i = 0; i < bank.size(); ++i) {
    if (self_id.empty() || bank[i].source_id != self_id) candidates.push_back(i);
  }
  if (candidates.empty()) {
    res.image = image;
    return res;
  }
  res.sigma = sample_beta(rng, cfg.beta_a, cfg.beta_b);
  const auto pick = candidates[static_cast<std::size_t>(
      uniform_int(rng, 0, static_cast<std::int64_t>(candidates.size()) - 1))];
  res.partner = pick;
  res.image = pnmxp_blend(image, mask, bank[pick], res.sigma);
  return res;
}

std::array<int, 4> grid_edges(int n) {
  if (n < 3) throw std::invalid_argument("grid side must be >= 3");
  // Cells are floor(n/3) wide; the leading cells absorb the remainder.
  return {0, n - 2 * (n / 3), n - n / 3, n};
}

GridCell grid_cell(int height, int width, int index) {
  if (index < 0 || index >= 9) throw std::out_of_range("grid cell index outside [0,9)");
  const auto rows = grid_edges(height);
  const auto cols = grid_edges(width);
  const int gr = index / 3;
  const int gc = index % 3;
  return {rows[gr], rows[gr + 1], cols[gc], cols[gc + 1]};
}

AugmentedSample pvrmxp_cell(const Image& d1_image, const BinaryMask& d1_label, const Image& d2_image,
                            const ProbMap& d2_pseudo, const NeighborhoodMask& d2_neighborhood,
                            int index) {
  if (!d1_image.same_shape(d2_image)) throw std::invalid_argument("pvrmxp: image shape mismatch");
  const int h = d2_image.height();
  const int w = d2_image.width();
  if (d1_label.rows() != h || d1_label.cols() != w || d2_pseudo.rows() != h ||
      d2_pseudo.cols() != w || d2_neighborhood.height() != h || d2_neighborhood.width() != w) {
    throw std::invalid_argument("pvrmxp: label shape mismatch");
  }
  const GridCell cell = grid_cell(h, w, index);

  AugmentedSample out;
  out.image = d2_image;
  out.target = d2_pseudo;
  out.source = Grid<std::uint8_t>::Constant(h, w, static_cast<std::uint8_t>(SupervisionSource::Pseudo));
  for (int r = cell.row_begin; r < cell.row_end; ++r) {
    for (int c = cell.col_begin; c < cell.col_end; ++c) {
      for (int ch = 0; ch < d2_image.channels(); ++ch) out.image.at(ch, r, c) = d1_image.at(ch, r, c);
      out.target(r, c) = d1_label(r, c);
      out.source(r, c) = static_cast<std::uint8_t>(SupervisionSource::GroundTruth);
    }
  }
  out.neighborhood = d2_neighborhood;
  clear_region(out.neighborhood, cell.row_begin, cell.row_end, cell.col_begin, cell.col_end);
  out.provenance.patch_index = index;
  return out;
}

AugmentedSample pvrmxp(const Sample& x1, const Sample& x2, const NeighborhoodMask& n2, Rng& rng) {
  if (!x1.mask) throw std::invalid_argument("pvrmxp: D1 sample " + x1.id + " has no mask");
  if (!x2.pseudo) throw std::invalid_argument("pvrmxp: D2 sample " + x2.id + " has no pseudo-label");
  const int index = static_cast<int>(uniform_int(rng, 0, 8));
  AugmentedSample out = pvrmxp_cell(x1.image, *x1.mask, x2.image, x2.pseudo->probs, n2, index);
  out.provenance.source_ids = {x2.id, x1.id};
  return out;
}

Image mirror(const Image& image) {
  Image out(image.height(), image.width(), image.channels());
  const int w = image.width();
  for (int ch = 0; ch < image.channels(); ++ch) {
    for (int r = 0; r < image.height(); ++r) {
      for (int c = 0; c < w; ++c) out.at(ch, r, c) = image.at(ch, r, w - 1 - c);
    }
  }
  return out;
}

NeighborhoodMask mirror(const NeighborhoodMask& mask) {
  NeighborhoodMask out;
  out.matrix = mirror_map(mask.matrix);
  out.radius = mask.radius;
  out.area = mask.area;
  out.centers.reserve(mask.centers.size());
  for (const Point& p : mask.centers) out.centers.push_back({p.row, mask.width() - 1 - p.col});
  return out;
}

AugmentedSample augment_teacher(const Sample& x, const NeighborhoodMask& n,
                                const NeighborhoodBank& bank, const MixConfig& cfg, Rng& rng,
                                const AugmentSwitches& sw) {
  if (!x.mask) throw std::invalid_argument("augment_teacher: sample " + x.id + " has no mask");
  AugmentedSample out;
  if (sw.pnmxp) {
    PnmxpResult mixed = pnmxp(x.image, n, bank, cfg, rng, x.id);
    out.image = std::move(mixed.image);
    out.provenance.sigma = mixed.sigma;
    if (mixed.partner) out.provenance.source_ids.push_back(bank[*mixed.partner].source_id);
  } else {
    out.image = x.image;
  }
  out.provenance.source_ids.insert(out.provenance.source_ids.begin(), x.id);
  out.target = x.mask->cast<double>();
  out.source = Grid<std::uint8_t>::Constant(x.mask->rows(), x.mask->cols(),
                                            static_cast<std::uint8_t>(SupervisionSource::GroundTruth));
  out.neighborhood = n;
  return out;
}

AugmentedSample augment_student(const Sample& x2, const NeighborhoodMask& n2, const Sample& x1,
                                const NeighborhoodMask& n1, const NeighborhoodBank& bank,
                                const MixConfig& cfg, Rng& rng, const AugmentSwitches& sw) {
  if (!x2.pseudo) throw std::invalid_argument("augment_student: sample " + x2.id + " has no pseudo-label");
  if (!x1.mask) throw std::invalid_argument("augment_student: sample " + x1.id + " has no mask");
  Image img2 = x2.image;
  Image img1 = x1.image;
  std::optional<double> sigma2;
  std::optional<double> sigma1;
  if (sw.pnmxp) {
    PnmxpResult m2 = pnmxp(x2.image, n2, bank, cfg, rng, x2.id);
    img2 = std::move(m2.image);
    sigma2 = m2.sigma;
    if (sw.pvrmxp) {
      PnmxpResult m1 = pnmxp(x1.image, n1, bank, cfg, rng, x1.id);
      img1 = std::move(m1.image);
      sigma1 = m1.sigma;
    }
  }

  AugmentedSample out;
  if (sw.pvrmxp) {
    const int index = static_cast<int>(uniform_int(rng, 0, 8));
    out = pvrmxp_cell(img1, *x1.mask, img2, x2.pseudo->probs, n2, index);
    out.provenance.source_ids = {x2.id, x1.id};
  } else {
    out.image = std::move(img2);
    out.target = x2.pseudo->probs;
    out.source = Grid<std::uint8_t>::Constant(out.target.rows(), out.target.cols(),
                                              static_cast<std::uint8_t>(SupervisionSource::Pseudo));
    out.neighborhood = n2;
    out.provenance.source_ids = {x2.id};
  }
  out.provenance.sigma = sigma2;
  out.provenance.sigma_d1 = sigma1;
  return out;
}

}  // namespace pnl
