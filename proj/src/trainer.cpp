#include "pnl/trainer.hpp"

#include "pnl/errors.hpp"
#include "pnl/evaluate.hpp"
#include "pnl/parallel.hpp"

#include <fmt/format.h>

#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace pnl {

std::vector<double> ema_update(std::span<const double> teacher, std::span<const double> student,
                               double alpha) {
  if (teacher.size() != student.size()) throw std::invalid_argument("ema_update: length mismatch");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("ema_update: alpha outside [0,1]");
  std::vector<double> out(teacher.size());
  const double beta = 1.0 - alpha;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = alpha * teacher[i] + beta * student[i];
  return out;
}

StudentInit parse_student_init(std::string_view text) {
  if (text == "random") return StudentInit::Random;
  if (text == "teacher") return StudentInit::Teacher;
  throw std::invalid_argument("unknown student_init '" + std::string(text) + "'");
}

std::string_view to_string(StudentInit s) { return s == StudentInit::Random ? "random" : "teacher"; }

void TrainerConfig::validate() const {
  if (radius < 0) throw ConfigError("R must be >= 0");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("alpha must lie in [0,1]");
  LossWeights{lambda_pretrain}.validate();
  LossWeights{lambda_student}.validate();
  if (epochs_teacher < 0 || epochs_student < 0 || inner_loops < 0) throw ConfigError("epoch counts must be >= 0");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("lr must be positive");
  if (!(psm_threshold >= 0.0 && psm_threshold <= 1.0)) throw ConfigError("psm_threshold must lie in [0,1]");
  if (model_width < 1) throw ConfigError("model_width must be >= 1");
  if (workers < 1) throw ConfigError("workers must be >= 1");
  if (eval_every < 1) throw ConfigError("eval_every must be >= 1");
  mix.validate();
}

namespace {

std::unique_ptr<SegmentationModel> default_model(const TrainerConfig& cfg, int channels, Rng& init) {
  return make_reference_net({channels, cfg.model_width, Precision::Float}, init);
}

int channels_of(const Dataset& data) {
  for (const Sample& s : data.samples) return s.image.channels();
  return 1;
}

struct TermMeans {
  double pxl = 0, cs = 0, pn = 0, s = 0, total = 0;
  int n = 0;
  void add(const LossBreakdown& b) {
    pxl += b.raw.pxl;
    cs += b.raw.cs;
    pn += b.raw.pn;
    s += b.score;
    total += b.total;
    ++n;
  }
  void fill(EpochLog& log) const {
    const double d = n > 0 ? static_cast<double>(n) : 1.0;
    log.steps = n;
    log.l_pxl = pxl / d;
    log.l_cs = cs / d;
    log.l_pn = pn / d;
    log.s = s / d;
    log.total = total / d;
  }
};

}  // namespace

Trainer::Trainer(TrainerConfig cfg, const Dataset& data) : cfg_(std::move(cfg)) {
  cfg_.validate();
  Rng init = make_stream(cfg_.seed, "init");
  const int channels = channels_of(data);
  teacher_ = default_model(cfg_, channels, init);
  student_ = default_model(cfg_, channels, init);
  init_data(data);
}

Trainer::Trainer(TrainerConfig cfg, const Dataset& data, std::unique_ptr<SegmentationModel> teacher,
                 std::unique_ptr<SegmentationModel> student)
    : cfg_(std::move(cfg)), teacher_(std::move(teacher)), student_(std::move(student)) {
  cfg_.validate();
  if (!teacher_ || !student_) throw std::invalid_argument("Trainer: null model");
  if (teacher_->parameter_count() != student_->parameter_count()) {
    throw std::invalid_argument("Trainer: teacher and student dimensionality differ");
  }
  init_data(data);
}

void Trainer::init_data(const Dataset& data) {
  for (const Sample& s : data.samples) {
    switch (s.split) {
      case Split::D1:
        d1_.push_back(s);
        break;
      case Split::D2:
        d2_.push_back(s);
        d2_.back().pseudo.reset();
        break;
      case Split::Test:
        test_.push_back(s);
        break;
    }
  }
  for (const auto* group : {&d1_, &d2_, &test_}) {
    for (const Sample& s : *group) {
      const auto problems = validate_sample(s);
      if (!problems.empty()) throw ConfigError("sample " + s.id + ": " + problems.front());
    }
  }
  if (d1_.empty()) throw ConfigError("dataset has no D1 samples");
  for (const Sample& s : d1_) {
    n1_.push_back(make_neighborhood_mask(s.points, cfg_.radius, s.image.height(), s.image.width()));
  }
  for (const Sample& s : d2_) {
    n2_.push_back(make_neighborhood_mask(s.points, cfg_.radius, s.image.height(), s.image.width()));
  }
  std::vector<const Sample*> train;
  for (const Sample& s : d1_) train.push_back(&s);
  for (const Sample& s : d2_) train.push_back(&s);
  bank_ = build_bank(std::span<const Sample* const>(train), cfg_.radius);
  cfg_.mix.seed = cfg_.seed;
  augment_rng_ = make_stream(cfg_.seed, "augment");
}

std::vector<std::size_t> Trainer::shuffled(std::size_t n) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = n; i > 1; --i) {
    std::swap(order[i - 1], order[static_cast<std::size_t>(uniform_int(augment_rng_, 0, static_cast<std::int64_t>(i) - 1))]);
  }
  return order;
}

LossBreakdown Trainer::train_step(SegmentationModel& model, const AugmentedSample& aug, double score,
                                  double lambda, const std::string& phase, int epoch, int step) {
  const Image flipped = mirror(aug.image);
  const ProbMap target_mirror = mirror_map(aug.target);
  const NeighborhoodMask mask_mirror = mirror(aug.neighborhood);

  std::unique_ptr<SegmentationModel::Trace> trace_a;
  std::unique_ptr<SegmentationModel::Trace> trace_b;
  const ProbMap pred = model.forward(aug.image, &trace_a);
  const ProbMap pred_mirror = model.forward(flipped, &trace_b);

  const PairInputs in{pred, pred_mirror, aug.target, target_mirror, aug.neighborhood, mask_mirror};
  const LossWeights w{lambda};
  const CompositeLoss loss = phase == "teacher" ? teacher_loss(in, w, cfg_.ablation.pns)
                                                : student_loss(in, score, w, cfg_.ablation.pns);
  if (!std::isfinite(loss.terms.total)) {
    throw DivergenceError(fmt::format("non-finite {} loss at epoch {} step {} (l_pxl={}, l_cs={}, l_pn={})",
                                      phase, epoch, step, loss.terms.raw.pxl, loss.terms.raw.cs,
                                      loss.terms.raw.pn));
  }
  std::vector<double> grad(model.parameter_count(), 0.0);
  model.backward(*trace_a, loss.grad_pred, grad);
  model.backward(*trace_b, loss.grad_pred_mirror, grad);
  model.step(grad, cfg_.learning_rate);

  if (on_step) on_step(StepLog{phase, epoch, step, loss.terms});
  ++step_rows_;
  return loss.terms;
}

EpochLog Trainer::pretrain_epoch() {
  const int epoch = teacher_epochs_done_ + 1;
  TermMeans means;
  const AugmentSwitches sw{cfg_.ablation.pnmxp, false};
  int step = 0;
  for (std::size_t idx : shuffled(d1_.size())) {
    const AugmentedSample aug = augment_teacher(d1_[idx], n1_[idx], bank_, cfg_.mix, augment_rng_, sw);
    means.add(train_step(*teacher_, aug, 1.0, cfg_.lambda_pretrain, "teacher", epoch, ++step));
  }
  teacher_epochs_done_ = epoch;
  EpochLog log;
  log.phase = "teacher";
  log.epoch = epoch;
  means.fill(log);
  return log;
}

void Trainer::pretrain_teacher() {
  while (teacher_epochs_done_ < cfg_.epochs_teacher) pretrain_epoch();
}

MiningStats Trainer::mine_pseudo_labels() {
  const int epoch = student_epochs_done_ + 1;
  std::vector<ConfusionCounts> counts(d2_.size());
  std::vector<std::uint8_t> contains(d2_.size(), 0);
  bool all_heldout = true;
  for (const Sample& s : d2_) all_heldout = all_heldout && s.heldout_mask.has_value();

  parallel_for(d2_.size(), cfg_.workers, [&](std::size_t i) {
    Sample& s = d2_[i];
    PseudoLabel p;
    p.probs = teacher_->predict(s.image);
    p.produced_at = epoch;
    p.score = psm_score(p.probs, n2_[i], cfg_.psm_mode);
    contains[i] = point_containment(p.probs, s.points) ? 1 : 0;
    if (all_heldout) counts[i] = confusion(threshold(p.probs), *s.heldout_mask);
    s.pseudo = std::move(p);
  });

  MiningStats stats;
  if (d2_.empty()) return stats;
  double sum = 0.0;
  stats.min_score = 1.0;
  std::size_t n_contain = 0;
  for (std::size_t i = 0; i < d2_.size(); ++i) {
    const double sc = *d2_[i].pseudo->score;
    sum += sc;
    stats.min_score = std::min(stats.min_score, sc);
    n_contain += contains[i];
  }
  stats.mean_score = sum / static_cast<double>(d2_.size());
  stats.containment = static_cast<double>(n_contain) / static_cast<double>(d2_.size());
  if (all_heldout) stats.pseudo_miou = aggregate(counts, Averaging::Micro).miou;
  return stats;
}

void Trainer::prepare_student() {
  if (student_ready_) return;
  if (cfg_.student_init == StudentInit::Teacher) student_->set_parameters(teacher_->parameters());
  student_ready_ = true;
}

EpochLog Trainer::train_student_epoch() {
  prepare_student();
  const int epoch = student_epochs_done_ + 1;
  TermMeans means;
  const AugmentSwitches sw{cfg_.ablation.pnmxp, cfg_.ablation.pvrmxp};
  int step = 0;
  for (int m = 0; m < cfg_.inner_loops; ++m) {
    for (std::size_t idx : shuffled(d2_.size())) {
      const Sample& x2 = d2_[idx];
      if (!x2.pseudo || x2.pseudo->produced_at != epoch) {
        throw std::logic_error("train_student_epoch: pseudo-labels are stale; mine first");
      }
      const auto j = static_cast<std::size_t>(uniform_int(augment_rng_, 0, static_cast<std::int64_t>(d1_.size()) - 1));
      const AugmentedSample aug = augment_student(x2, n2_[idx], d1_[j], n1_[j], bank_, cfg_.mix, augment_rng_, sw);
      const double score = cfg_.ablation.psm ? apply_score_threshold(*x2.pseudo->score, cfg_.psm_threshold) : 1.0;
      means.add(train_step(*student_, aug, score, cfg_.lambda_student, "student", epoch, ++step));
    }
    teacher_->set_parameters(ema_update(teacher_->parameters(), student_->parameters(), cfg_.alpha));
  }
  student_epochs_done_ = epoch;
  EpochLog log;
  log.phase = "student";
  log.epoch = epoch;
  means.fill(log);
  return log;
}

std::optional<MetricsReport> Trainer::evaluate_teacher() const {
  if (test_.empty()) return std::nullopt;
  std::vector<const Sample*> ptrs;
  for (const Sample& s : test_) ptrs.push_back(&s);
  return evaluate(*teacher_, ptrs, cfg_.averaging, cfg_.workers);
}

Checkpoint Trainer::checkpoint() const {
  Checkpoint c;
  c.model = {d1_.front().image.channels(), cfg_.model_width, Precision::Float};
  c.teacher_epochs_done = teacher_epochs_done_;
  c.student_epochs_done = student_epochs_done_;
  c.student_ready = student_ready_;
  c.teacher = teacher_->parameters();
  c.student = student_->parameters();
  c.rng_state = save_state(augment_rng_);
  c.metrics_rows = metrics_rows_;
  c.step_rows = step_rows_;
  return c;
}

void Trainer::restore(const Checkpoint& c) {
  if (c.teacher.size() != teacher_->parameter_count() || c.student.size() != student_->parameter_count()) {
    throw ConfigError("checkpoint parameter count does not match the model");
  }
  teacher_->set_parameters(c.teacher);
  student_->set_parameters(c.student);
  teacher_epochs_done_ = c.teacher_epochs_done;
  student_epochs_done_ = c.student_epochs_done;
  student_ready_ = c.student_ready;
  load_state(augment_rng_, c.rng_state);
  metrics_rows_ = c.metrics_rows;
  step_rows_ = c.step_rows;
}

namespace {

std::string cell(const std::optional<double>& v) { return v ? fmt::format("{:.17g}", *v) : std::string(); }

const char* kMetricsHeader =
    "phase,epoch,steps,l_pxl,l_cs,l_pn,s,total,pseudo_containment,pseudo_miou,mean_score,"
    "test_miou,test_pa,test_recall,test_precision,test_dice";
const char* kStepsHeader = "phase,epoch,step,l_pxl,l_cs,l_pn,s,total";

std::string metrics_row(const EpochLog& e) {
  std::optional<double> cont, pmiou, mscore;
  if (e.mining) {
    cont = e.mining->containment;
    pmiou = e.mining->pseudo_miou;
    mscore = e.mining->mean_score;
  }
  Metric tm, tpa, trec, tprec, tdice;
  if (e.test) {
    tm = e.test->miou;
    tpa = e.test->pa;
    trec = e.test->recall;
    tprec = e.test->precision;
    tdice = e.test->dice;
  }
  return fmt::format("{},{},{},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{},{},{},{},{},{},{},{}", e.phase, e.epoch,
                     e.steps, e.l_pxl, e.l_cs, e.l_pn, e.s, e.total, cell(cont), cell(pmiou), cell(mscore),
                     cell(tm), cell(tpa), cell(trec), cell(tprec), cell(tdice));
}

/// Keeps the header and the first `rows` data lines.
void truncate_csv(const std::filesystem::path& path, std::uint64_t rows, const char* header) {
  std::vector<std::string> lines;
  if (std::ifstream in(path); in) {
    std::string line;
    while (std::getline(in, line)) lines.push_back(line);
  }
  std::ofstream out(path, std::ios::trunc);
  out << header << '\n';
  for (std::uint64_t i = 1; i <= rows && i < lines.size(); ++i) out << lines[i] << '\n';
}

}  // namespace

RunResult Trainer::run(const std::optional<std::filesystem::path>& run_dir, bool resume) {
  RunResult result;
  std::ofstream metrics_csv;
  std::ofstream steps_csv;
  const std::filesystem::path ckpt_path = run_dir ? *run_dir / "checkpoint.bin" : std::filesystem::path{};

  if (run_dir) {
    std::filesystem::create_directories(*run_dir);
    if (resume && std::filesystem::exists(ckpt_path)) {
      restore(load_checkpoint(ckpt_path));
      truncate_csv(*run_dir / "metrics.csv", metrics_rows_, kMetricsHeader);
      truncate_csv(*run_dir / "steps.csv", step_rows_, kStepsHeader);
      metrics_csv.open(*run_dir / "metrics.csv", std::ios::app);
      steps_csv.open(*run_dir / "steps.csv", std::ios::app);
    } else {
      metrics_csv.open(*run_dir / "metrics.csv", std::ios::trunc);
      steps_csv.open(*run_dir / "steps.csv", std::ios::trunc);
      metrics_csv << kMetricsHeader << '\n';
      steps_csv << kStepsHeader << '\n';
    }
    if (!metrics_csv || !steps_csv) throw IoError("cannot write logs in " + run_dir->string());
    bank_.save(*run_dir / "bank.bin");
  }

  auto user_step = on_step;
  on_step = [&](const StepLog& s) {
    if (steps_csv.is_open()) {
      steps_csv << fmt::format("{},{},{},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g}\n", s.phase, s.epoch, s.step,
                               s.loss.raw.pxl, s.loss.raw.cs, s.loss.raw.pn, s.loss.score, s.loss.total);
    }
    if (user_step) user_step(s);
  };
  auto emit = [&](const EpochLog& e) {
    result.epochs.push_back(e);
    ++metrics_rows_;
    if (metrics_csv.is_open()) {
      metrics_csv << metrics_row(e) << '\n';
      metrics_csv.flush();
      steps_csv.flush();
      save_checkpoint(ckpt_path, checkpoint());
    }
    if (on_epoch) on_epoch(e);
  };
  auto due = [&](int epoch, int last) { return epoch % cfg_.eval_every == 0 || epoch == last; };

  while (teacher_epochs_done_ < cfg_.epochs_teacher) {
    EpochLog log = pretrain_epoch();
    if (due(log.epoch, cfg_.epochs_teacher)) log.test = evaluate_teacher();
    emit(log);
  }
  while (student_epochs_done_ < cfg_.epochs_student) {
    const MiningStats mined = mine_pseudo_labels();
    EpochLog log = train_student_epoch();
    log.mining = mined;
    if (due(log.epoch, cfg_.epochs_student)) log.test = evaluate_teacher();
    emit(log);
  }

  on_step = user_step;
  result.final_mining = d2_.empty() ? MiningStats{} : mine_pseudo_labels();
  result.test = evaluate_teacher();
  result.teacher = teacher_->parameters();

  EpochLog final_log;
  final_log.phase = "final";
  final_log.epoch = student_epochs_done_;
  final_log.mining = result.final_mining;
  final_log.test = result.test;
  result.epochs.push_back(final_log);
  if (metrics_csv.is_open()) {
    metrics_csv << metrics_row(final_log) << '\n';
    metrics_csv.close();
    save_weights(*run_dir / "teacher_final.bin", {checkpoint().model, result.teacher});
    if (result.test) {
      MetricsReport rep = *result.test;
      if (!d2_.empty()) {
        rep.pseudo_point_containment = result.final_mining.containment;
        rep.pseudo_miou = result.final_mining.pseudo_miou;
      }
      write_report(*run_dir, rep);
    }
  }
  if (on_epoch) on_epoch(final_log);
  return result;
}

}  // namespace pnl
