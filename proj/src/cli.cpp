#include "pnl/cli.hpp"

#include "pnl/checkpoint.hpp"
#include "pnl/config.hpp"
#include "pnl/dataset_io.hpp"
#include "pnl/errors.hpp"
#include "pnl/evaluate.hpp"
#include "pnl/parallel.hpp"
#include "pnl/plot.hpp"
#include "pnl/psm.hpp"
#include "pnl/synthdata.hpp"
#include "pnl/trainer.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

namespace pnl {

namespace fs = std::filesystem;

namespace {

/// Config file plus per-key overrides, shared by every subcommand.
struct KeyOptions {
  std::string config_file;
  std::map<std::string, std::string> values;
  std::map<std::string, CLI::Option*> options;

  void attach(CLI::App* app) {
    app->add_option("--config", config_file, "JSON file of config keys")->check(CLI::ExistingFile);
    for (const std::string& key : config_keys()) {
      options[key] = app->add_option("--" + key, values[key], std::string(config_key_help(key)));
    }
  }

  RunConfig resolve() const {
    RunConfig cfg = config_file.empty() ? RunConfig{} : load_config_file(config_file);
    for (const auto& [key, opt] : options) {
      if (opt->count() > 0) set_config_value(cfg, key, values.at(key));
    }
    return cfg;
  }
};

std::unique_ptr<SegmentationModel> load_model(const fs::path& path) {
  const WeightsFile w = load_weights(path);
  Rng unused = make_stream(0, "init");
  auto model = make_reference_net(w.model, unused);
  if (model->parameter_count() != w.params.size()) throw ConfigError("weights do not match their architecture header");
  model->set_parameters(w.params);
  return model;
}

std::vector<const Sample*> select(const Dataset& data, Split which) {
  std::vector<const Sample*> out;
  for (const Sample& s : data.samples) {
    if (s.split == which) out.push_back(&s);
  }
  return out;
}

Split parse_split_arg(const std::string& text) {
  try {
    return parse_split(text);
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
}

std::string fmt_metric(const Metric& m) { return m ? fmt::format("{:.17g}", *m) : std::string(); }

std::string require_out(const RunConfig& cfg) {
  if (cfg.out.empty()) throw ConfigError("output directory (--out) is required");
  return cfg.out;
}

int cmd_gen_data(const RunConfig& cfg) {
  const fs::path out = require_out(cfg);
  cfg.validate_generation();
  generate(cfg.gen, out);
  write_resolved_config(out, cfg);
  const int n1 = d1_count(cfg.gen.count, cfg.gen.d1_fraction);
  fmt::print("wrote {} training images ({} D1, {} D2) and {} test images to {}\n", cfg.gen.count, n1,
             cfg.gen.count - n1, cfg.gen.test_count, out.string());
  return kExitOk;
}

RunResult train_run(const RunConfig& cfg, bool resume, bool verbose) {
  cfg.validate_training();
  const fs::path out = require_out(cfg);
  const Dataset data = load_dataset(cfg.dataset);
  write_resolved_config(out, cfg);
  Trainer trainer(cfg.train, data);
  if (verbose) {
    trainer.on_epoch = [](const EpochLog& e) {
      std::string line = fmt::format("{:>7} {:>4}  total {:.5f}  pxl {:.5f}  cs {:.5f}  pn {:.5f}", e.phase, e.epoch,
                                     e.total, e.l_pxl, e.l_cs, e.l_pn);
      if (e.mining) line += fmt::format("  contain {:.4f}  score {:.4f}", e.mining->containment, e.mining->mean_score);
      if (e.test && e.test->miou) line += fmt::format("  test mIoU {:.2f}", *e.test->miou);
      std::cerr << line << '\n';
    };
  }
  return trainer.run(out, resume);
}

int cmd_train(const RunConfig& cfg, bool resume) {
  const RunResult r = train_run(cfg, resume, true);
  if (r.test) std::cout << to_json(*r.test).dump(2) << '\n';
  return kExitOk;
}

int cmd_eval(const RunConfig& cfg, const std::string& weights, const std::string& split, bool save_predictions) {
  if (cfg.dataset.empty()) throw ConfigError("dataset path is required");
  const Dataset data = load_dataset(cfg.dataset);
  const auto model = load_model(weights);
  const auto samples = select(data, parse_split_arg(split));
  const MetricsReport rep = evaluate(*model, samples, cfg.train.averaging, cfg.train.workers);
  if (!cfg.out.empty()) {
    fs::create_directories(cfg.out);
    write_report(cfg.out, rep);
    if (save_predictions) {
      const fs::path dir = fs::path(cfg.out) / "predictions";
      fs::create_directories(dir);
      parallel_for(samples.size(), cfg.train.workers, [&](std::size_t i) {
        write_prob_png(dir / (samples[i]->id + ".png"), model->predict(samples[i]->image));
      });
    }
  } else if (save_predictions) {
    throw ConfigError("--save-predictions needs --out");
  }
  std::cout << to_json(rep).dump(2) << '\n';
  return kExitOk;
}

int cmd_score(const RunConfig& cfg, const std::string& weights, const std::string& predictions,
              const std::string& split) {
  if (cfg.dataset.empty()) throw ConfigError("dataset path is required");
  if (weights.empty() == predictions.empty()) throw ConfigError("give exactly one of --weights and --predictions");
  const fs::path out = require_out(cfg);
  const Dataset data = load_dataset(cfg.dataset);
  const auto samples = select(data, parse_split_arg(split));
  std::vector<ProbMap> pseudos(samples.size());
  std::vector<NeighborhoodMask> masks;
  for (const Sample* s : samples) {
    masks.push_back(make_neighborhood_mask(s->points, cfg.train.radius, s->image.height(), s->image.width()));
  }
  if (!predictions.empty()) {
    for (std::size_t i = 0; i < samples.size(); ++i) {
      pseudos[i] = read_prob_png(fs::path(predictions) / (samples[i]->id + ".png"));
      if (pseudos[i].rows() != samples[i]->image.height() || pseudos[i].cols() != samples[i]->image.width()) {
        throw ConfigError("prediction for " + samples[i]->id + " has the wrong size");
      }
    }
  } else {
    const auto model = load_model(weights);
    parallel_for(samples.size(), cfg.train.workers,
                 [&](std::size_t i) { pseudos[i] = model->predict(samples[i]->image); });
  }
  const BatchScores batch = score_batch(pseudos, masks, 0.5, cfg.train.psm_mode);

  fs::create_directories(out);
  std::string csv = "id,score,weight,contains_point\n";
  std::size_t contained = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const bool c = point_containment(pseudos[i], samples[i]->points);
    contained += c ? 1 : 0;
    csv += fmt::format("{},{:.17g},{:.17g},{}\n", samples[i]->id, batch.scores[i],
                       apply_score_threshold(batch.scores[i], cfg.train.psm_threshold), c ? 1 : 0);
  }
  write_text_file(out / "scores.csv", csv);
  nlohmann::ordered_json summary;
  summary["count"] = samples.size();
  summary["R"] = cfg.train.radius;
  summary["psm_mode"] = std::string(to_string(cfg.train.psm_mode));
  if (batch.summary) {
    summary["mean"] = batch.summary->mean;
    summary["min"] = batch.summary->min;
    summary["fraction_below_0.5"] = batch.summary->fraction_below;
    summary["point_containment"] = static_cast<double>(contained) / static_cast<double>(samples.size());
  }
  write_text_file(out / "score_summary.json", summary.dump(2) + "\n");
  std::cout << summary.dump(2) << '\n';
  return kExitOk;
}

double median(std::vector<double> v) {
  if (v.empty()) return std::nan("");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

/// Header names to columns of text cells.
std::map<std::string, std::vector<std::string>> read_csv_columns(const fs::path& path, std::size_t& rows) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw ConfigError(path.string() + " is empty");
  const auto header = split_csv_line(line);
  std::map<std::string, std::vector<std::string>> cols;
  rows = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    for (std::size_t i = 0; i < header.size(); ++i) cols[header[i]].push_back(i < cells.size() ? cells[i] : "");
    ++rows;
  }
  return cols;
}

double cell_value(const std::string& s) {
  if (s.empty()) return std::nan("");
  try {
    return std::stod(s);
  } catch (const std::exception&) {
    return std::nan("");
  }
}

void write_sweep_plot(const fs::path& out, const std::map<int, std::vector<double>>& by_radius) {
  Series s{"median test mIoU", {}, {}};
  for (const auto& [r, values] : by_radius) {
    s.x.push_back(r);
    s.y.push_back(median(values));
  }
  write_text_file(out, line_chart_svg("Test mIoU vs neighborhood radius", "R (pixels)", "mIoU (%)", {s}));
}

int cmd_sweep(const RunConfig& base, const std::vector<int>& radii, const std::vector<std::uint64_t>& seeds) {
  const fs::path out = require_out(base);
  if (radii.empty()) throw ConfigError("sweep needs at least one radius");
  fs::create_directories(out);
  std::string csv = "R,seed,miou,pa,recall,precision,dice,pseudo_containment\n";
  std::map<int, std::vector<double>> by_radius;
  const std::vector<std::uint64_t> seed_list = seeds.empty() ? std::vector<std::uint64_t>{base.train.seed} : seeds;
  for (int r : radii) {
    for (std::uint64_t seed : seed_list) {
      RunConfig cfg = base;
      cfg.train.radius = r;
      cfg.train.seed = seed;
      cfg.out = (out / fmt::format("R{}_seed{}", r, seed)).string();
      std::cerr << fmt::format("sweep: R={} seed={}\n", r, seed);
      const RunResult res = train_run(cfg, false, false);
      if (!res.test) throw ConfigError("dataset has no test split to evaluate the sweep on");
      const MetricsReport& t = *res.test;
      if (t.miou) by_radius[r].push_back(*t.miou);
      csv += fmt::format("{},{},{},{},{},{},{},{:.17g}\n", r, seed, fmt_metric(t.miou), fmt_metric(t.pa),
                         fmt_metric(t.recall), fmt_metric(t.precision), fmt_metric(t.dice),
                         res.final_mining.containment);
    }
  }
  write_text_file(out / "sweep.csv", csv);
  write_sweep_plot(out / "sweep.svg", by_radius);
  std::cout << csv;
  return kExitOk;
}

int cmd_report(const RunConfig& cfg, const std::vector<std::string>& runs, const std::string& sweep_csv) {
  const fs::path out = require_out(cfg);
  if (runs.empty() && sweep_csv.empty()) throw ConfigError("report needs --runs and/or --sweep");
  fs::create_directories(out);
  std::vector<Series> loss, containment, miou;
  std::vector<Bar> bars;
  for (const std::string& run : runs) {
    std::size_t rows = 0;
    auto cols = read_csv_columns(fs::path(run) / "metrics.csv", rows);
    if (rows == 0) throw ConfigError(run + "/metrics.csv has no epochs");
    const std::string name = fs::path(run).lexically_normal().filename().string().empty()
                                 ? fs::path(run).lexically_normal().parent_path().filename().string()
                                 : fs::path(run).lexically_normal().filename().string();
    Series l{name + " loss", {}, {}}, c{name, {}, {}}, m{name, {}, {}};
    double step = 0, final_miou = std::nan("");
    for (std::size_t i = 0; i < rows; ++i) {
      const std::string& phase = cols["phase"][i];
      if (phase == "final") {
        final_miou = cell_value(cols["test_miou"][i]);
        continue;
      }
      step += 1;
      l.x.push_back(step);
      l.y.push_back(cell_value(cols["total"][i]));
      const double tm = cell_value(cols["test_miou"][i]);
      if (std::isfinite(tm)) {
        m.x.push_back(step);
        m.y.push_back(tm);
      }
      if (phase == "student") {
        c.x.push_back(cell_value(cols["epoch"][i]));
        c.y.push_back(cell_value(cols["pseudo_containment"][i]));
      }
    }
    loss.push_back(std::move(l));
    containment.push_back(std::move(c));
    miou.push_back(std::move(m));
    if (std::isfinite(final_miou)) bars.push_back({name, final_miou});
  }
  std::vector<std::string> written;
  if (!runs.empty()) {
    write_text_file(out / "loss_curves.svg", line_chart_svg("Mean training loss per epoch", "epoch (teacher, then student)", "loss", loss));
    write_text_file(out / "containment.svg",
                    line_chart_svg("Pseudo-labels containing their point", "student epoch", "fraction", containment));
    write_text_file(out / "test_miou.svg", line_chart_svg("Teacher test mIoU", "epoch (teacher, then student)", "mIoU (%)", miou));
    written = {"loss_curves.svg", "containment.svg", "test_miou.svg"};
    if (!bars.empty()) {
      write_text_file(out / "ablation_bars.svg", bar_chart_svg("Final test mIoU per run", "mIoU (%)", bars));
      written.push_back("ablation_bars.svg");
    }
  }
  if (!sweep_csv.empty()) {
    std::size_t rows = 0;
    auto cols = read_csv_columns(sweep_csv, rows);
    if (rows == 0) throw ConfigError(sweep_csv + " has no rows");
    std::map<int, std::vector<double>> by_radius;
    for (std::size_t i = 0; i < rows; ++i) {
      const double v = cell_value(cols["miou"][i]);
      if (std::isfinite(v)) by_radius[static_cast<int>(cell_value(cols["R"][i]))].push_back(v);
    }
    write_sweep_plot(out / "metric_vs_r.svg", by_radius);
    written.push_back("metric_vs_r.svg");
  }
  for (const std::string& w : written) std::cout << (out / w).string() << '\n';
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"Point-neighborhood learning for weakly semi-supervised segmentation"};
  app.require_subcommand(1);

  KeyOptions gen_keys, train_keys, eval_keys, score_keys, sweep_keys, report_keys;
  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic dataset");
  gen_keys.attach(gen);

  bool resume = false;
  std::vector<std::string> ablate;
  auto* train = app.add_subcommand("train", "Pretrain the teacher, then run teacher/student training");
  train_keys.attach(train);
  train->add_flag("--resume", resume, "Continue from checkpoint.bin in the run directory");
  train->add_option("--ablate", ablate, "Disable components: pns, psm, pnmxp, pvrmxp, all")->delimiter(',');

  std::string weights, eval_split = "test";
  bool save_predictions = false;
  auto* eval = app.add_subcommand("eval", "Evaluate saved weights");
  eval_keys.attach(eval);
  eval->add_option("--weights", weights, "Weights file")->required()->check(CLI::ExistingFile);
  eval->add_option("--split", eval_split, "D1, D2 or test");
  eval->add_flag("--save-predictions", save_predictions, "Write probability maps as PNG");

  std::string score_weights, score_predictions, score_split = "D2";
  auto* score = app.add_subcommand("score-pseudolabels", "Score pseudo-labels of saved weights");
  score_keys.attach(score);
  score->add_option("--weights", score_weights, "Weights file")->check(CLI::ExistingFile);
  score->add_option("--predictions", score_predictions, "Directory of <id>.png probability maps")
      ->check(CLI::ExistingDirectory);
  score->add_option("--split", score_split, "D1, D2 or test");

  std::vector<int> radii{1, 3, 10, 20, 40};
  std::vector<std::uint64_t> seeds;
  auto* sweep = app.add_subcommand("sweep-r", "Train once per neighborhood radius");
  sweep_keys.attach(sweep);
  sweep->add_option("--radii", radii, "Radii to sweep")->delimiter(',');
  sweep->add_option("--seeds", seeds, "Seeds per radius (default: seed)")->delimiter(',');

  std::vector<std::string> runs;
  std::string sweep_csv;
  auto* report = app.add_subcommand("report", "Plot training curves and comparisons");
  report_keys.attach(report);
  report->add_option("--runs", runs, "Run directories")->delimiter(',');
  report->add_option("--sweep", sweep_csv, "sweep.csv from sweep-r")->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(gen_keys.resolve());
    if (train->parsed()) {
      RunConfig cfg = train_keys.resolve();
      apply_ablation(cfg.train.ablation, ablate);
      return cmd_train(cfg, resume);
    }
    if (eval->parsed()) return cmd_eval(eval_keys.resolve(), weights, eval_split, save_predictions);
    if (score->parsed()) return cmd_score(score_keys.resolve(), score_weights, score_predictions, score_split);
    if (sweep->parsed()) return cmd_sweep(sweep_keys.resolve(), radii, seeds);
    if (report->parsed()) return cmd_report(report_keys.resolve(), runs, sweep_csv);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const DivergenceError& e) {
    std::cerr << "diverged: " << e.what() << '\n';
    return kExitDivergence;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << '\n';
    return kExitIo;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "io error: " << e.what() << '\n';
    return kExitIo;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid input: " << e.what() << '\n';
    return kExitConfig;
  }
  return kExitConfig;
}

}  // namespace pnl
