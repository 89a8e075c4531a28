#pragma once

#include "pnl/augment.hpp"
#include "pnl/checkpoint.hpp"
#include "pnl/dataset_io.hpp"
#include "pnl/losses.hpp"
#include "pnl/metrics.hpp"
#include "pnl/model.hpp"
#include "pnl/neighborhood.hpp"
#include "pnl/psm.hpp"
#include "pnl/rng.hpp"

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace pnl {

/// Elementwise alpha*teacher + (1-alpha)*student.
std::vector<double> ema_update(std::span<const double> teacher, std::span<const double> student,
                               double alpha);

/// Component switches; each one disables exactly one part of the method.
struct AblationFlags {
  bool pns = true;     // neighborhood L1 terms
  bool psm = true;     // pseudo-label score weighting (off: s = 1)
  bool pnmxp = true;   // neighborhood mixup
  bool pvrmxp = true;  // nine-grid patch transplant
};

enum class StudentInit { Random, Teacher };
StudentInit parse_student_init(std::string_view text);
std::string_view to_string(StudentInit s);

struct TrainerConfig {
  int radius = 20;
  double alpha = 0.995;
  double lambda_pretrain = 0.8;
  double lambda_student = 0.5;
  int epochs_teacher = 150;
  int epochs_student = 400;
  int inner_loops = 1;
  double learning_rate = 0.05;
  std::uint64_t seed = 0;
  AblationFlags ablation;
  double psm_threshold = 0.0;
  PsmMode psm_mode = PsmMode::Count;
  StudentInit student_init = StudentInit::Random;
  MixConfig mix;
  int model_width = 8;
  Averaging averaging = Averaging::Micro;
  int workers = 1;
  /// Test-set evaluation cadence in epochs (the last epoch is always evaluated).
  int eval_every = 1;

  void validate() const;
};

struct StepLog {
  std::string phase;  // "teacher" | "student"
  int epoch = 0;
  int step = 0;
  LossBreakdown loss;
};

struct MiningStats {
  double containment = 0.0;  // fraction of D2 pseudo-labels covering their points
  Metric pseudo_miou;        // against held-out masks, when available
  double mean_score = 0.0;
  double min_score = 0.0;
};

struct EpochLog {
  std::string phase;  // "teacher" | "student" | "final"
  int epoch = 0;
  int steps = 0;
  double l_pxl = 0.0;
  double l_cs = 0.0;
  double l_pn = 0.0;
  double s = 0.0;
  double total = 0.0;
  std::optional<MiningStats> mining;
  std::optional<MetricsReport> test;
};

struct RunResult {
  std::vector<double> teacher;  // final artifact
  std::optional<MetricsReport> test;
  MiningStats final_mining;
  std::vector<EpochLog> epochs;
};

/// Teacher pretraining on D1, then epochs of {mine pseudo-labels on D2;
/// M inner passes of student training each followed by an EMA teacher
/// update}. Single owner of both models.
class Trainer {
 public:
  Trainer(TrainerConfig cfg, const Dataset& data);
  /// Custom backbones; both models must share a parameter layout.
  Trainer(TrainerConfig cfg, const Dataset& data, std::unique_ptr<SegmentationModel> teacher,
          std::unique_ptr<SegmentationModel> student);

  const TrainerConfig& config() const { return cfg_; }
  SegmentationModel& teacher() { return *teacher_; }
  SegmentationModel& student() { return *student_; }
  const SegmentationModel& teacher() const { return *teacher_; }
  const NeighborhoodBank& bank() const { return bank_; }
  std::span<Sample> d2() { return d2_; }
  std::span<const Sample> d1() const { return d1_; }
  std::span<const Sample> test_set() const { return test_; }
  int teacher_epochs_done() const { return teacher_epochs_done_; }
  int student_epochs_done() const { return student_epochs_done_; }

  std::function<void(const StepLog&)> on_step;
  std::function<void(const EpochLog&)> on_epoch;

  /// One pass over D1 (shuffled); returns mean loss terms.
  EpochLog pretrain_epoch();
  /// All remaining pretraining epochs.
  void pretrain_teacher();
  /// Teacher forward on every raw D2 image; attaches soft pseudo-labels and
  /// their scores.
  MiningStats mine_pseudo_labels();
  /// Copies teacher weights if configured; idempotent.
  void prepare_student();
  /// M inner passes over D2 with an EMA update after each. Requires fresh
  /// pseudo-labels.
  EpochLog train_student_epoch();

  std::optional<MetricsReport> evaluate_teacher() const;

  /// Full procedure. With a run directory: writes bank.bin, metrics.csv,
  /// steps.csv, checkpoint.bin after every epoch, teacher_final.bin and the
  /// final report; `resume` continues from an existing checkpoint.
  RunResult run(const std::optional<std::filesystem::path>& run_dir = std::nullopt, bool resume = false);

  Checkpoint checkpoint() const;
  void restore(const Checkpoint& ckpt);

 private:
  void init_data(const Dataset& data);
  LossBreakdown train_step(SegmentationModel& model, const AugmentedSample& aug, double score,
                           double lambda, const std::string& phase, int epoch, int step);
  std::vector<std::size_t> shuffled(std::size_t n);

  TrainerConfig cfg_;
  std::vector<Sample> d1_, d2_, test_;
  std::vector<NeighborhoodMask> n1_, n2_;
  NeighborhoodBank bank_;
  std::unique_ptr<SegmentationModel> teacher_;
  std::unique_ptr<SegmentationModel> student_;
  Rng augment_rng_;
  int teacher_epochs_done_ = 0;
  int student_epochs_done_ = 0;
  bool student_ready_ = false;
  std::uint64_t metrics_rows_ = 0;
  std::uint64_t step_rows_ = 0;
};

}  // namespace pnl
