#pragma once

#include "pnl/core_types.hpp"
#include "pnl/neighborhood.hpp"
#include "pnl/rng.hpp"

#include <array>
#include <optional>
#include <string>
#include <vector>

namespace pnl {

struct MixConfig {
  double beta_a = 1.0;
  double beta_b = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
};

enum class SupervisionSource : std::uint8_t { None = 0, GroundTruth = 1, Pseudo = 2 };

struct Provenance {
  std::vector<std::string> source_ids;
  /// Blend factor used by PNMxp on the primary (D2 or teacher) input.
  std::optional<double> sigma;
  /// Blend factor used by PNMxp on the D1 input of the student path.
  std::optional<double> sigma_d1;
  /// Row-major index in [0,9) of the transplanted grid cell.
  std::optional<int> patch_index;
};

struct AugmentedSample {
  Image image;
  /// Training target per pixel (ground truth or soft pseudo-label).
  ProbMap target;
  Grid<std::uint8_t> source;  // SupervisionSource per pixel
  NeighborhoodMask neighborhood;
  Provenance provenance;
};

// -- PNMxp ----------------------------------------------------------------

/// Blends the mask=1 pixels of `image` with `partner`, aligned center to
/// center: out = sigma*x + (1-sigma)*partner where the partner slice is
/// valid, x elsewhere. With several centers, a pixel follows the nearest one.
Image pnmxp_blend(const Image& image, const NeighborhoodMask& mask,
                  const NeighborhoodSlice& partner, double sigma);

struct PnmxpResult {
  Image image;
  double sigma = 1.0;
  std::optional<std::size_t> partner;  // bank index; empty when nothing to mix with
};

/// Draws sigma ~ Beta(a,b) and a partner uniformly from the bank, excluding
/// slices taken from `self_id`. An empty bank yields the input unchanged.
PnmxpResult pnmxp(const Image& image, const NeighborhoodMask& mask, const NeighborhoodBank& bank,
                  const MixConfig& cfg, Rng& rng, const std::string& self_id = {});

// -- PVRMxp ---------------------------------------------------------------

struct GridCell {
  int row_begin, row_end, col_begin, col_end;  // half-open
};

/// Edges {0, e1, e2, n} of the 3-way split of a side of length n; the first
/// cell takes the remainder (10 -> 0,4,7,10).
std::array<int, 4> grid_edges(int n);
GridCell grid_cell(int height, int width, int index);

/// Transplants cell `index` of the D1 image/label into the D2 image, whose
/// remaining pixels keep the pseudo-label as target. The neighborhood mask of
/// the D2 sample is cleared inside the transplanted cell.
AugmentedSample pvrmxp_cell(const Image& d1_image, const BinaryMask& d1_label, const Image& d2_image,
                            const ProbMap& d2_pseudo, const NeighborhoodMask& d2_neighborhood,
                            int index);

/// Random-cell form on samples; requires x2 to carry a pseudo-label.
AugmentedSample pvrmxp(const Sample& x1, const Sample& x2, const NeighborhoodMask& n2, Rng& rng);

// -- Mirror ---------------------------------------------------------------

Image mirror(const Image& image);
template <typename T>
Grid<T> mirror_map(const Grid<T>& grid) {
  return grid.rowwise().reverse().eval();
}
NeighborhoodMask mirror(const NeighborhoodMask& mask);

// -- Composite paths ------------------------------------------------------

struct AugmentSwitches {
  bool pnmxp = true;
  bool pvrmxp = true;
};

/// Teacher pretraining input: PNMxp only; target = ground truth everywhere.
AugmentedSample augment_teacher(const Sample& x, const NeighborhoodMask& n,
                                const NeighborhoodBank& bank, const MixConfig& cfg, Rng& rng,
                                const AugmentSwitches& sw = {});

/// Student input: PNMxp on both samples, then PVRMxp.
AugmentedSample augment_student(const Sample& x2, const NeighborhoodMask& n2, const Sample& x1,
                                const NeighborhoodMask& n1, const NeighborhoodBank& bank,
                                const MixConfig& cfg, Rng& rng, const AugmentSwitches& sw = {});

}  // namespace pnl
