// Acceptance suite: one PASS/FAIL line per criterion on stdout, progress on
// stderr. Exit status is non-zero when any selected criterion fails.

#include "pnl/augment.hpp"
#include "pnl/config.hpp"
#include "pnl/losses.hpp"
#include "pnl/metrics.hpp"
#include "pnl/neighborhood.hpp"
#include "pnl/psm.hpp"
#include "pnl/rng.hpp"
#include "pnl/synthdata.hpp"
#include "pnl/trainer.hpp"

#include <CLI11.hpp>
#include <fmt/core.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace pnl;

namespace {

// Pinned tolerances and thresholds.
constexpr int kPsmTrials = 1000;
constexpr double kPsmSeconds = 5.0;
constexpr int kMetricTrials = 1000;
constexpr double kMetricRelTol = 1e-9;
constexpr double kMetricSeconds = 10.0;
constexpr int kGradTrials = 100;
constexpr double kGradStep = 1e-5;
constexpr double kGradRelTol = 1e-4;
constexpr double kGradSeconds = 30.0;
constexpr int kEmaSteps = 50;
constexpr double kEmaTol = 1e-10;
constexpr double kEmaAlpha = 0.995;
constexpr int kMixTrials = 1000;
constexpr int kAblationSteps = 20;
constexpr double kGainPoints = 5.0;
constexpr double kContainment = 0.9;
constexpr double kSmallRDrop = 3.0;
constexpr double kLargeRBand = 5.0;
constexpr double kExperimentMinutes = 30.0;
constexpr double kSweepMinutes = 120.0;
const std::vector<std::uint64_t> kSeeds{1, 2, 3};
const std::vector<int> kSweepRadii{1, 3, 10, 20, 40};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

ProbMap random_probs(Rng& rng, int h, int w) {
  ProbMap p(h, w);
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    // Exact 0.5 values exercise the strict threshold.
    p.data()[i] = uniform01(rng) < 0.1 ? 0.5 : uniform01(rng);
  }
  return p;
}

NeighborhoodMask random_mask(Rng& rng, int h, int w) {
  const int n = static_cast<int>(uniform_int(rng, 1, 3));
  std::vector<Point> pts;
  for (int k = 0; k < n; ++k) {
    pts.push_back({static_cast<int>(uniform_int(rng, 0, h - 1)), static_cast<int>(uniform_int(rng, 0, w - 1))});
  }
  return make_neighborhood_mask(pts, static_cast<int>(uniform_int(rng, 0, 6)), h, w);
}

BinaryMask random_binary(Rng& rng, int h, int w, double p_one) {
  BinaryMask m(h, w);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = uniform01(rng) < p_one ? 1 : 0;
  return m;
}

// ---------------------------------------------------------------- 1

Outcome criterion_psm_oracle() {
  const auto t0 = Clock::now();
  Rng rng = make_stream(101, "acceptance-psm");
  int exact = 0;
  for (int t = 0; t < kPsmTrials; ++t) {
    const ProbMap p = random_probs(rng, 16, 16);
    const NeighborhoodMask m = random_mask(rng, 16, 16);
    std::int64_t hit = 0;
    std::int64_t area = 0;
    for (int r = 0; r < 16; ++r) {
      for (int c = 0; c < 16; ++c) {
        if (m.matrix(r, c) == 0) continue;
        ++area;
        if (p(r, c) > 0.5) ++hit;
      }
    }
    const double oracle = static_cast<double>(hit) / static_cast<double>(area);
    if (psm_score(p, m, PsmMode::Count) == oracle) ++exact;
  }
  const double secs = seconds_since(t0);
  return {exact == kPsmTrials && secs < kPsmSeconds,
          fmt::format("{}/{} exact matches, {:.2f} s (limit {} s)", exact, kPsmTrials, secs, kPsmSeconds)};
}

// ---------------------------------------------------------------- 2

bool close_rel(const Metric& got, std::optional<double> want, double tol) {
  if (!got || !want) return got.has_value() == want.has_value();
  const double scale = std::max({std::abs(*got), std::abs(*want), 1e-300});
  return std::abs(*got - *want) <= tol * scale;
}

Outcome criterion_metrics_oracle() {
  const auto t0 = Clock::now();
  Rng rng = make_stream(102, "acceptance-metrics");
  int matched = 0;
  int identity_exact = 0;
  double worst_identity = 0.0;
  for (int t = 0; t < kMetricTrials; ++t) {
    const int h = static_cast<int>(uniform_int(rng, 1, 24));
    const int w = static_cast<int>(uniform_int(rng, 1, 24));
    const double density = uniform01(rng);
    const BinaryMask pred = random_binary(rng, h, w, density);
    const BinaryMask gt = random_binary(rng, h, w, uniform01(rng));

    std::int64_t tp = 0, fp = 0, fn = 0, tn = 0;
    for (int r = 0; r < h; ++r) {
      for (int c = 0; c < w; ++c) {
        const bool p = pred(r, c) != 0;
        const bool g = gt(r, c) != 0;
        tp += p && g;
        fp += p && !g;
        fn += !p && g;
        tn += !p && !g;
      }
    }
    auto pct = [](std::int64_t a, std::int64_t b) -> std::optional<double> {
      if (b == 0) return std::nullopt;
      return 100.0 * static_cast<double>(a) / static_cast<double>(b);
    };
    const auto fg = pct(tp, tp + fp + fn);
    const auto bg = pct(tn, tn + fp + fn);
    std::optional<double> miou_ref;
    if (fg && bg) {
      miou_ref = (*fg + *bg) / 2.0;
    } else if (fg) {
      miou_ref = fg;
    } else {
      miou_ref = bg;
    }

    const ConfusionCounts cc = confusion(pred, gt);
    const bool ok = close_rel(miou(cc), miou_ref, kMetricRelTol) &&
                    close_rel(pixel_accuracy(cc), pct(tp + tn, tp + fp + fn + tn), kMetricRelTol) &&
                    close_rel(recall(cc), pct(tp, tp + fn), kMetricRelTol) &&
                    close_rel(precision(cc), pct(tp, tp + fp), kMetricRelTol) &&
                    close_rel(dice(cc), pct(2 * tp, 2 * tp + fp + fn), kMetricRelTol);
    if (ok) ++matched;

    // Identity over the integer counts, exact in rational arithmetic:
    // 2*I/(1+I) with I = tp/u, u = tp+fp+fn, equals 2tp/(u+tp).
    if (tp + fp + fn == 0) {
      ++identity_exact;
      continue;
    }
    const std::int64_t u = tp + fp + fn;
    const std::int64_t d_num = 2 * tp, d_den = 2 * tp + fp + fn;
    const std::int64_t i_num = 2 * tp, i_den = u + tp;
    if (d_num * i_den == i_num * d_den) ++identity_exact;
    const double di = *dice(cc);
    const double io = *iou_foreground(cc);
    const double via = 100.0 * (2.0 * io / 100.0) / (1.0 + io / 100.0);
    worst_identity = std::max(worst_identity, std::abs(di - via) / std::max(1.0, std::abs(di)));
  }
  const double secs = seconds_since(t0);
  const bool pass = matched == kMetricTrials && identity_exact == kMetricTrials &&
                    worst_identity < 1e-13 && secs < kMetricSeconds;
  return {pass, fmt::format("{}/{} within {:g} rel; Dice-IoU identity exact on counts {}/{}, "
                            "float residual {:.1e}; {:.2f} s (limit {} s)",
                            matched, kMetricTrials, kMetricRelTol, identity_exact, kMetricTrials,
                            worst_identity, secs, kMetricSeconds)};
}

// ---------------------------------------------------------------- 3

double rel_error(const ProbMap& analytic, const ProbMap& fd) {
  const double diff = (analytic - fd).matrix().norm();
  const double scale = std::max({analytic.matrix().norm(), fd.matrix().norm(), 1e-12});
  return diff / scale;
}

template <typename F>
ProbMap central_difference(const ProbMap& x, F&& f) {
  ProbMap g(x.rows(), x.cols());
  ProbMap y = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double v = x.data()[i];
    y.data()[i] = v + kGradStep;
    const double up = f(y);
    y.data()[i] = v - kGradStep;
    const double down = f(y);
    y.data()[i] = v;
    g.data()[i] = (up - down) / (2.0 * kGradStep);
  }
  return g;
}

ProbMap interior_probs(Rng& rng) {
  ProbMap p(6, 6);
  for (Eigen::Index i = 0; i < p.size(); ++i) p.data()[i] = 0.02 + 0.96 * uniform01(rng);
  return p;
}

Outcome criterion_gradients() {
  const auto t0 = Clock::now();
  Rng rng = make_stream(103, "acceptance-grad");
  double worst_pn = 0.0, worst_pxl = 0.0, worst_cs = 0.0;
  for (int t = 0; t < kGradTrials; ++t) {
    const ProbMap p = interior_probs(rng);
    const ProbMap q = interior_probs(rng);
    ProbMap target(6, 6);
    for (Eigen::Index i = 0; i < target.size(); ++i) target.data()[i] = uniform01(rng);
    NeighborhoodMask m = random_mask(rng, 6, 6);
    while (m.area == 0) m = random_mask(rng, 6, 6);

    worst_pn = std::max(worst_pn, rel_error(loss_pn(p, m).grad,
                                            central_difference(p, [&](const ProbMap& x) { return loss_pn(x, m).value; })));
    worst_pxl = std::max(worst_pxl, rel_error(loss_pxl(p, target).grad, central_difference(p, [&](const ProbMap& x) {
                                                return loss_pxl(x, target).value;
                                              })));
    worst_cs = std::max(worst_cs, rel_error(loss_cs(p, q).grad,
                                            central_difference(p, [&](const ProbMap& x) { return loss_cs(x, q).value; })));
    // The second argument of the consistency term gets the negated gradient.
    worst_cs = std::max(worst_cs, rel_error(-loss_cs(p, q).grad, central_difference(q, [&](const ProbMap& x) {
                                              return loss_cs(p, x).value;
                                            })));
  }
  const double secs = seconds_since(t0);
  const double worst = std::max({worst_pn, worst_pxl, worst_cs});
  return {worst < kGradRelTol && secs < kGradSeconds,
          fmt::format("{} trials each, h={:g}: max rel error pn {:.2e}, pxl {:.2e}, cs {:.2e} (limit {:g}); {:.2f} s",
                      kGradTrials, kGradStep, worst_pn, worst_pxl, worst_cs, kGradRelTol, secs)};
}

// ---------------------------------------------------------------- 4

Outcome criterion_ema() {
  const TrainerConfig defaults;
  Rng rng = make_stream(104, "acceptance-ema");
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    std::vector<double> theta(64), c(64);
    for (std::size_t i = 0; i < theta.size(); ++i) {
      theta[i] = 20.0 * (uniform01(rng) - 0.5);
      c[i] = 20.0 * (uniform01(rng) - 0.5);
    }
    std::vector<double> cur = theta;
    for (int k = 0; k < kEmaSteps; ++k) cur = ema_update(cur, c, defaults.alpha);
    const double ak = std::pow(defaults.alpha, kEmaSteps);
    for (std::size_t i = 0; i < theta.size(); ++i) worst = std::max(worst, std::abs(cur[i] - (c[i] + ak * (theta[i] - c[i]))));
  }
  const bool alpha_ok = defaults.alpha == kEmaAlpha;
  return {alpha_ok && worst < kEmaTol,
          fmt::format("default alpha {} (expected {}); k={} max deviation {:.2e} (limit {:g})", defaults.alpha,
                      kEmaAlpha, kEmaSteps, worst, kEmaTol)};
}

// ---------------------------------------------------------------- 5

Sample random_sample(Rng& rng, const std::string& id, Split split, int h, int w) {
  Sample s;
  s.id = id;
  s.split = split;
  s.image = Image(h, w, 1);
  for (float& v : s.image.data()) v = static_cast<float>(uniform01(rng));
  BinaryMask m = BinaryMask::Zero(h, w);
  const Point p{static_cast<int>(uniform_int(rng, 0, h - 1)), static_cast<int>(uniform_int(rng, 0, w - 1))};
  const int rad = static_cast<int>(uniform_int(rng, 1, std::min(h, w) / 3));
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) m(r, c) = (r - p.row) * (r - p.row) + (c - p.col) * (c - p.col) <= rad * rad;
  }
  s.points = {p};
  if (split == Split::D2) {
    s.heldout_mask = m;
  } else {
    s.mask = m;
  }
  return s;
}

Outcome criterion_mixup() {
  Rng rng = make_stream(105, "acceptance-mix");
  int pn_ok = 0;
  for (int t = 0; t < kMixTrials; ++t) {
    const int h = static_cast<int>(uniform_int(rng, 9, 40));
    const int w = static_cast<int>(uniform_int(rng, 9, 40));
    const int radius = static_cast<int>(uniform_int(rng, 1, 6));
    std::vector<Sample> pool;
    for (int k = 0; k < 4; ++k) pool.push_back(random_sample(rng, "s" + std::to_string(k), Split::D1, h, w));
    const NeighborhoodBank bank = build_bank(std::span<const Sample>(pool), radius);
    const Sample& x = pool[0];
    const NeighborhoodMask n = make_neighborhood_mask(x.points, radius, h, w);
    MixConfig cfg;
    const AugmentedSample aug = augment_teacher(x, n, bank, cfg, rng, AugmentSwitches{true, false});
    bool ok = aug.image.same_shape(x.image);
    for (int r = 0; r < h && ok; ++r) {
      for (int c = 0; c < w && ok; ++c) {
        if (n.matrix(r, c) == 0 && aug.image.at(r, c) != x.image.at(r, c)) ok = false;
        if (aug.target(r, c) != static_cast<double>((*x.mask)(r, c))) ok = false;
      }
    }
    if (ok) ++pn_ok;
  }

  // Every grid index on divisible and non-divisible sides.
  int grid_cases = 0;
  int grid_ok = 0;
  for (int h : {9, 10, 11, 12, 13, 17, 31, 96, 97}) {
    for (int w : {9, 10, 11, 14, 23, 96, 98}) {
      Sample d1 = random_sample(rng, "d1", Split::D1, h, w);
      Sample d2 = random_sample(rng, "d2", Split::D2, h, w);
      // Disjoint value ranges make each pixel's origin identifiable.
      for (float& v : d1.image.data()) v = 0.25F * v;
      for (float& v : d2.image.data()) v = 0.5F + 0.25F * v;
      PseudoLabel pl;
      pl.probs = ProbMap::Constant(h, w, 0.75);
      d2.pseudo = pl;
      const NeighborhoodMask n2 = make_neighborhood_mask(d2.points, 3, h, w);
      for (int idx = 0; idx < 9; ++idx) {
        ++grid_cases;
        const AugmentedSample out = pvrmxp_cell(d1.image, *d1.mask, d2.image, pl.probs, n2, idx);
        Grid<int> owner = Grid<int>::Constant(h, w, 0);
        std::int64_t covered = 0;
        for (int k = 0; k < 9; ++k) {
          const GridCell cell = grid_cell(h, w, k);
          for (int r = cell.row_begin; r < cell.row_end; ++r) {
            for (int c = cell.col_begin; c < cell.col_end; ++c) {
              ++owner(r, c);
              ++covered;
            }
          }
        }
        bool ok = covered == static_cast<std::int64_t>(h) * w && (owner == 1).all();
        std::set<int> d1_cells;
        std::set<int> d2_cells;
        for (int k = 0; k < 9 && ok; ++k) {
          const GridCell cell = grid_cell(h, w, k);
          bool all_d1 = true;
          bool all_d2 = true;
          for (int r = cell.row_begin; r < cell.row_end; ++r) {
            for (int c = cell.col_begin; c < cell.col_end; ++c) {
              const bool from_d1 = out.image.at(r, c) == d1.image.at(r, c) &&
                                   out.target(r, c) == static_cast<double>((*d1.mask)(r, c));
              const bool from_d2 = out.image.at(r, c) == d2.image.at(r, c) && out.target(r, c) == 0.75;
              all_d1 = all_d1 && from_d1;
              all_d2 = all_d2 && from_d2;
              if (from_d1 && out.neighborhood.matrix(r, c) != 0) ok = false;
            }
          }
          if (all_d1) d1_cells.insert(k);
          if (all_d2) d2_cells.insert(k);
          if (all_d1 == all_d2) ok = false;
        }
        ok = ok && d1_cells == std::set<int>{idx} && d2_cells.size() == 8;
        if (ok) ++grid_ok;
      }
    }
  }
  return {pn_ok == kMixTrials && grid_ok == grid_cases,
          fmt::format("PNMxp outside-mask bit-exact with labels untouched {}/{}; PVRMxp one D1 cell + eight D2 "
                      "cells, partition exact {}/{}",
                      pn_ok, kMixTrials, grid_ok, grid_cases)};
}

// ---------------------------------------------------------------- 6

Dataset small_dataset(std::uint64_t seed, int count, double d1_fraction) {
  GenConfig g;
  g.height = 32;
  g.width = 32;
  g.count = count;
  g.test_count = 0;
  g.d1_fraction = d1_fraction;
  g.blob_radius_min = 7;
  g.blob_radius_max = 10;
  g.seed = seed;
  Dataset d;
  d.samples = generate_samples(g);
  return d;
}

// A saturated head predicts foreground everywhere, so every PSM score is 1.
void saturate(SegmentationModel& m, int width) {
  std::vector<double> p = m.parameters();
  for (std::size_t i = p.size() - static_cast<std::size_t>(width) - 1; i < p.size(); ++i) p[i] = 0.0;
  p.back() = 40.0;
  m.set_parameters(p);
}

Outcome criterion_ablation() {
  auto run_steps = [](bool psm, double& min_score) {
    TrainerConfig c;
    c.radius = 5;
    c.epochs_teacher = 0;
    c.model_width = 4;
    c.seed = 106;
    c.ablation.psm = psm;
    Trainer tr(c, small_dataset(106, kAblationSteps + 2, 0.1));
    saturate(tr.teacher(), c.model_width);
    min_score = tr.mine_pseudo_labels().min_score;
    std::vector<LossBreakdown> losses;
    tr.on_step = [&](const StepLog& s) { losses.push_back(s.loss); };
    tr.train_student_epoch();
    return std::make_pair(losses, tr.student().parameters());
  };
  double min_on = 0.0, min_off = 0.0;
  const auto [on, p_on] = run_steps(true, min_on);
  const auto [off, p_off] = run_steps(false, min_off);
  bool same = on.size() == static_cast<std::size_t>(kAblationSteps) && off.size() == on.size() && min_on == 1.0;
  for (std::size_t i = 0; same && i < on.size(); ++i) {
    same = on[i].score == 1.0 && off[i].score == 1.0 && on[i].total == off[i].total &&
           on[i].raw.pxl == off[i].raw.pxl && on[i].raw.cs == off[i].raw.cs && on[i].raw.pn == off[i].raw.pn;
  }
  same = same && p_on == p_off;

  // With PNS off the gradient must not depend on the neighborhood at all.
  Rng rng = make_stream(106, "acceptance-pns");
  int independent = 0;
  constexpr int kTrials = 200;
  for (int t = 0; t < kTrials; ++t) {
    const ProbMap p = interior_probs(rng), pm = interior_probs(rng);
    ProbMap y(6, 6);
    for (Eigen::Index i = 0; i < y.size(); ++i) y.data()[i] = uniform01(rng);
    const ProbMap ym = mirror_map(y);
    const NeighborhoodMask m1 = random_mask(rng, 6, 6);
    const NeighborhoodMask m2 = random_mask(rng, 6, 6);
    NeighborhoodMask empty = m1;
    clear_region(empty, 0, 6, 0, 6);
    const double s = uniform01(rng);
    const LossWeights w{uniform01(rng)};
    const CompositeLoss a = student_loss({p, pm, y, ym, m1, mirror(m1)}, s, w, false);
    const CompositeLoss b = student_loss({p, pm, y, ym, m2, mirror(m2)}, s, w, false);
    const CompositeLoss e = student_loss({p, pm, y, ym, empty, empty}, s, w, true);
    const CompositeLoss ta = teacher_loss({p, pm, y, ym, m1, mirror(m1)}, w, false);
    const CompositeLoss te = teacher_loss({p, pm, y, ym, empty, empty}, w, true);
    const bool ok = a.terms.w_pn == 0.0 && (a.grad_pred == b.grad_pred).all() &&
                    (a.grad_pred_mirror == b.grad_pred_mirror).all() && (a.grad_pred == e.grad_pred).all() &&
                    (a.grad_pred_mirror == e.grad_pred_mirror).all() && (ta.grad_pred == te.grad_pred).all() &&
                    (ta.grad_pred_mirror == te.grad_pred_mirror).all() && ta.terms.w_pn == 0.0;
    if (ok) ++independent;
  }
  return {same && independent == kTrials,
          fmt::format("PSM off vs s=1: {} over {} steps; PNS off: gradient independent of N_m {}/{}",
                      same ? "identical losses and weights" : "MISMATCH", kAblationSteps, independent, kTrials)};
}

// ---------------------------------------------------------------- 7-10

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

struct ExperimentRun {
  double test_miou = 0.0;
  std::vector<double> containment;  // mined before each student epoch, then after the last
  double minutes = 0.0;
};

// Epochs of student training completed before containment first reaches
// the threshold; nullopt when it never does.
std::optional<int> epochs_to(const std::vector<double>& containment, double threshold) {
  for (std::size_t e = 0; e < containment.size(); ++e) {
    if (containment[e] >= threshold) return static_cast<int>(e);
  }
  return std::nullopt;
}

class Experiments {
 public:
  Experiments(RunConfig preset, fs::path work, bool reuse)
      : preset_(std::move(preset)), work_(std::move(work)), reuse_(reuse) {}

  const RunConfig& preset() const { return preset_; }

  ExperimentRun run(std::uint64_t seed, const std::vector<std::string>& ablate, int radius) {
    RunConfig cfg = preset_;
    cfg.gen.seed = seed;
    cfg.train.seed = seed;
    cfg.train.radius = radius;
    apply_ablation(cfg.train.ablation, ablate);
    std::string tag = fmt::format("R{}_seed{}", radius, seed);
    for (const auto& a : ablate) tag += "_no" + a;
    const fs::path dir = work_ / tag;
    const std::string key = to_json(cfg).dump();
    if (auto it = cache_.find(key); it != cache_.end()) return it->second;

    ExperimentRun out;
    const fs::path done = dir / "acceptance_done.json";
    if (reuse_ && fs::exists(done) && slurp(dir / "config.json") == to_json(cfg).dump(2) + "\n") {
      const auto j = nlohmann::json::parse(slurp(done));
      out.test_miou = j.at("test_miou").get<double>();
      out.containment = j.at("containment").get<std::vector<double>>();
      out.minutes = j.at("minutes").get<double>();
      fmt::print(stderr, "[acceptance] reusing {}\n", dir.string());
    } else {
      fmt::print(stderr, "[acceptance] training {} ...\n", tag);
      const auto t0 = Clock::now();
      fs::remove_all(dir);
      fs::create_directories(dir);
      write_resolved_config(dir, cfg);
      Dataset data;
      data.samples = generate_samples(cfg.gen);
      Trainer tr(cfg.train, data);
      const RunResult r = tr.run(dir);
      out.test_miou = r.test && r.test->miou ? *r.test->miou : std::numeric_limits<double>::quiet_NaN();
      for (const EpochLog& e : r.epochs) {
        if (e.mining) out.containment.push_back(e.mining->containment);
      }
      out.minutes = seconds_since(t0) / 60.0;
      std::ofstream(done) << nlohmann::json{{"test_miou", out.test_miou},
                                            {"containment", out.containment},
                                            {"minutes", out.minutes}}
                                 .dump(2);
      fmt::print(stderr, "[acceptance] {}: test mIoU {:.2f}, final containment {:.3f}, {:.1f} min\n", tag,
                 out.test_miou, out.containment.empty() ? 0.0 : out.containment.back(), out.minutes);
    }
    cache_[key] = out;
    return out;
  }

 private:
  RunConfig preset_;
  fs::path work_;
  bool reuse_;
  std::map<std::string, ExperimentRun> cache_;
};

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string join(const std::vector<double>& v, const char* fmt_spec) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + fmt::format(fmt::runtime(fmt_spec), v[i]);
  return s;
}

Outcome criterion_end_to_end(Experiments& ex) {
  const int r = ex.preset().train.radius;
  std::vector<double> full, base, gain;
  double minutes = 0.0;
  for (std::uint64_t s : kSeeds) {
    const ExperimentRun f = ex.run(s, {}, r);
    const ExperimentRun b = ex.run(s, {"all"}, r);
    full.push_back(f.test_miou);
    base.push_back(b.test_miou);
    gain.push_back(f.test_miou - b.test_miou);
    minutes = std::max(minutes, f.minutes + b.minutes);
  }
  const double g = median(gain);
  return {g >= kGainPoints && minutes <= kExperimentMinutes,
          fmt::format("test mIoU full [{}] vs all-ablated [{}]; median gain {:.2f} (need >= {}); "
                      "slowest seed pair {:.1f} min (limit {})",
                      join(full, "{:.2f}"), join(base, "{:.2f}"), g, kGainPoints, minutes, kExperimentMinutes)};
}

Outcome criterion_containment(Experiments& ex) {
  const int r = ex.preset().train.radius;
  std::vector<double> e_full, e_abl, c_full, c_abl;
  const double never = std::numeric_limits<double>::infinity();
  for (std::uint64_t s : kSeeds) {
    const ExperimentRun f = ex.run(s, {}, r);
    const ExperimentRun a = ex.run(s, {"pns", "psm"}, r);
    const auto ef = epochs_to(f.containment, kContainment);
    const auto ea = epochs_to(a.containment, kContainment);
    e_full.push_back(ef ? *ef : never);
    e_abl.push_back(ea ? *ea : never);
    c_full.push_back(*std::max_element(f.containment.begin(), f.containment.end()));
    c_abl.push_back(*std::max_element(a.containment.begin(), a.containment.end()));
  }
  const double mf = median(e_full);
  const double ma = median(e_abl);
  const bool pass = median(c_full) >= kContainment && std::isfinite(mf) && mf < ma;
  return {pass, fmt::format("epochs to containment >= {}: with PNS+PSM [{}] median {}, ablated [{}] median {}; "
                            "peak containment [{}] vs [{}]",
                            kContainment, join(e_full, "{:g}"), mf, join(e_abl, "{:g}"), ma, join(c_full, "{:.3f}"),
                            join(c_abl, "{:.3f}"))};
}

Outcome criterion_radius(Experiments& ex) {
  std::map<int, double> miou_at;
  double minutes = 0.0;
  const std::uint64_t seed = kSeeds.front();
  for (int r : kSweepRadii) {
    const ExperimentRun run = ex.run(seed, {}, r);
    miou_at[r] = run.test_miou;
    minutes += run.minutes;
  }
  const double m1 = miou_at.at(1), m20 = miou_at.at(20), m40 = miou_at.at(40);
  const bool pass = m1 <= m20 - kSmallRDrop && std::abs(m40 - m20) <= kLargeRBand && minutes <= kSweepMinutes;
  std::string table;
  for (const auto& [r, m] : miou_at) table += fmt::format("{}R={}:{:.2f}", table.empty() ? "" : " ", r, m);
  return {pass, fmt::format("seed {} test mIoU {}; R=1 is {:.2f} below R=20 (need >= {}), |R=40 - R=20| = {:.2f} "
                            "(need <= {}); sweep {:.1f} min (limit {})",
                            seed, table, m20 - m1, kSmallRDrop, std::abs(m40 - m20), kLargeRBand, minutes,
                            kSweepMinutes)};
}

Outcome criterion_determinism(const fs::path& work) {
  RunConfig cfg;
  cfg.gen.height = 48;
  cfg.gen.width = 48;
  cfg.gen.count = 40;
  cfg.gen.test_count = 10;
  cfg.gen.d1_fraction = 0.1;
  cfg.gen.blob_radius_min = 8;
  cfg.gen.blob_radius_max = 12;
  cfg.gen.seed = 110;
  cfg.train.radius = 6;
  cfg.train.epochs_teacher = 4;
  cfg.train.epochs_student = 4;
  cfg.train.seed = 110;
  cfg.train.workers = 1;
  std::vector<std::string> csv;
  for (const char* name : {"determinism_a", "determinism_b"}) {
    const fs::path dir = work / name;
    fs::remove_all(dir);
    Dataset data;
    data.samples = generate_samples(cfg.gen);
    Trainer(cfg.train, data).run(dir);
    csv.push_back(slurp(dir / "metrics.csv"));
  }
  const std::size_t rows = static_cast<std::size_t>(std::count(csv[0].begin(), csv[0].end(), '\n'));
  return {csv[0] == csv[1] && rows > 1,
          fmt::format("two single-worker runs: metrics.csv {} ({} lines, {} bytes)",
                      csv[0] == csv[1] ? "bit-identical" : "DIFFERENT", rows, csv[0].size())};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::string preset_path;
  std::string work = "acceptance_runs";
  std::vector<int> only;
  bool reuse = false;
  app.add_option("--preset", preset_path, "experiment configuration (flat JSON)")->required();
  app.add_option("--work", work, "directory for experiment runs");
  app.add_option("--only", only, "criterion numbers to run (default all)")->delimiter(',');
  app.add_flag("--reuse", reuse, "reuse finished runs whose resolved config matches");
  CLI11_PARSE(app, argc, argv);

  const RunConfig preset = load_config_file(preset_path);
  fs::create_directories(work);
  Experiments ex(preset, work, reuse);

  const std::vector<std::pair<int, std::function<Outcome()>>> criteria{
      {1, criterion_psm_oracle},
      {2, criterion_metrics_oracle},
      {3, criterion_gradients},
      {4, criterion_ema},
      {5, criterion_mixup},
      {6, criterion_ablation},
      {7, [&] { return criterion_end_to_end(ex); }},
      {8, [&] { return criterion_containment(ex); }},
      {9, [&] { return criterion_radius(ex); }},
      {10, [&] { return criterion_determinism(work); }},
  };
  int failures = 0;
  for (const auto& [id, fn] : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failures;
    fmt::print("criterion {:>2} {}: {}\n", id, o.pass ? "PASS" : "FAIL", o.detail);
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
