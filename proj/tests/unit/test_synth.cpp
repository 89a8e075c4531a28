#include "doctest.h"

#include "pnl/checkpoint.hpp"
#include "pnl/config.hpp"
#include "pnl/dataset_io.hpp"
#include "pnl/errors.hpp"
#include "pnl/rng.hpp"
#include "pnl/synthdata.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>
#include <string>

namespace fs = std::filesystem;
using namespace pnl;

namespace {

GenConfig small_gen(std::uint64_t seed) {
  GenConfig g;
  g.height = 48;
  g.width = 48;
  g.count = 20;
  g.test_count = 4;
  g.d1_fraction = 0.2;
  g.blob_radius_min = 8;
  g.blob_radius_max = 12;
  g.seed = seed;
  return g;
}

fs::path fresh_dir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("pnl_unit_" + name);
  fs::remove_all(p);
  return p;
}

std::map<std::string, std::string> read_tree(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    std::ifstream in(e.path(), std::ios::binary);
    out[fs::relative(e.path(), root).string()] =
        std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  }
  return out;
}

// Distance from p to the nearest background or out-of-bounds pixel.
double boundary_distance(const BinaryMask& m, Point p) {
  double best = 1e9;
  for (int r = -1; r <= m.rows(); ++r) {
    for (int c = -1; c <= m.cols(); ++c) {
      const bool outside = r < 0 || c < 0 || r >= m.rows() || c >= m.cols() || m(r, c) == 0;
      if (!outside) continue;
      best = std::min(best, std::hypot(r - p.row, c - p.col));
    }
  }
  return best;
}

}  // namespace

TEST_CASE("rng streams are deterministic and independent") {
  Rng a = make_stream(7, "augment");
  Rng b = make_stream(7, "augment");
  Rng c = make_stream(7, "init");
  CHECK(a() == b());
  CHECK(derive_seed(7, "augment") != derive_seed(7, "init"));
  CHECK(derive_seed(7, "augment") != derive_seed(8, "augment"));
  CHECK(derive_seed(7, "x", 0) != derive_seed(7, "x", 1));
  (void)c;
}

TEST_CASE("rng state save and load resumes the sequence") {
  Rng a = make_stream(3, "augment");
  for (int i = 0; i < 10; ++i) (void)a();
  const std::string st = save_state(a);
  Rng b;
  load_state(b, st);
  for (int i = 0; i < 100; ++i) CHECK(a() == b());
}

TEST_CASE("uniform draws stay in range") {
  Rng r = make_stream(1, "t");
  for (int i = 0; i < 2000; ++i) {
    const double u = uniform01(r);
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    const auto k = uniform_int(r, -3, 5);
    CHECK(k >= -3);
    CHECK(k <= 5);
    const double be = sample_beta(r, 2.0, 5.0);
    CHECK(be >= 0.0);
    CHECK(be <= 1.0);
  }
  CHECK_THROWS(sample_beta(r, 0.0, 1.0));
}

TEST_CASE("d1 count rounding") {
  CHECK(d1_count(100, 0.05) == 5);
  CHECK(d1_count(400, 0.05) == 20);
  CHECK(d1_count(10, 0.01) == 1);
  CHECK(d1_count(3182, 0.047) == 149);
}

TEST_CASE("simulate_point cases") {
  Rng rng = make_stream(11, "points");

  BinaryMask single = BinaryMask::Zero(20, 20);
  single(4, 9) = 1;
  CHECK(simulate_point(single, rng, 3) == Point{4, 9});

  BinaryMask full = BinaryMask::Ones(30, 25);
  for (int i = 0; i < 1000; ++i) {
    const Point p = simulate_point(full, rng, 3);
    CHECK(p.row >= 3);
    CHECK(p.col >= 3);
    CHECK(p.row <= 30 - 1 - 3);
    CHECK(p.col <= 25 - 1 - 3);
  }

  BinaryMask disk = BinaryMask::Zero(41, 41);
  for (int r = 0; r < 41; ++r) {
    for (int c = 0; c < 41; ++c) {
      if ((r - 20) * (r - 20) + (c - 20) * (c - 20) <= 100) disk(r, c) = 1;
    }
  }
  for (int i = 0; i < 1000; ++i) {
    const Point p = simulate_point(disk, rng, 3);
    // On the pixel lattice the eroded disk reaches slightly past radius 7.
    CHECK(std::hypot(p.row - 20, p.col - 20) <= 7.5);
    for (int dr = -3; dr <= 3; ++dr) {
      for (int dc = -3; dc <= 3; ++dc) {
        if (dr * dr + dc * dc <= 9) CHECK(disk(p.row + dr, p.col + dc) == 1);
      }
    }
  }

  CHECK_THROWS(simulate_point(BinaryMask::Zero(5, 5), rng, 3));
}

TEST_CASE("erode keeps pixels whose disk is in-bounds foreground") {
  BinaryMask m = BinaryMask::Ones(9, 9);
  const BinaryMask e = erode(m, 2);
  for (int r = 0; r < 9; ++r) {
    for (int c = 0; c < 9; ++c) {
      CHECK((e(r, c) != 0) == (r >= 2 && r <= 6 && c >= 2 && c <= 6));
    }
  }
  CHECK((erode(m, 0) == m).all());
}

TEST_CASE("generated samples are valid and points lie on foreground") {
  for (int preset = 0; preset < 2; ++preset) {
    GenConfig g = small_gen(5);
    if (preset == 1) {
      g.blob_count_max = 3;
      g.distractor_count = 2;
      g.contrast_jitter = 0.5;
      g.illumination = 0.1;
    }
    const auto samples = generate_samples(g);
    CHECK(samples.size() == 24);
    int d1 = 0;
    for (const Sample& s : samples) {
      CHECK(validate_sample(s).empty());
      if (s.split == Split::D1) ++d1;
      const BinaryMask& m = s.mask ? *s.mask : *s.heldout_mask;
      CHECK(!s.points.empty());
      for (const Point& p : s.points) CHECK(m(p.row, p.col) == 1);
      if (s.split == Split::D2) {
        CHECK(!s.mask);
        CHECK(s.heldout_mask);
      }
    }
    CHECK(d1 == d1_count(20, 0.2));
  }
}

TEST_CASE("blob radius at least R+2 gives fully interior neighborhoods") {
  const int R = 5;
  GenConfig g = small_gen(9);
  g.blob_radius_min = R + 2;
  g.blob_radius_max = R + 6;
  g.point_margin = R;
  for (const Sample& s : generate_samples(g)) {
    const BinaryMask& m = s.mask ? *s.mask : *s.heldout_mask;
    for (const Point& p : s.points) CHECK(boundary_distance(m, p) > R);
  }
}

TEST_CASE("generation is byte-identical under a fixed seed") {
  const fs::path a = fresh_dir("gen_a");
  const fs::path b = fresh_dir("gen_b");
  generate(small_gen(42), a);
  generate(small_gen(42), b);
  const auto ta = read_tree(a);
  const auto tb = read_tree(b);
  CHECK(ta.size() > 20);
  CHECK(ta == tb);
  CHECK(ta.count("gen_config.json") == 1);

  const fs::path c = fresh_dir("gen_c");
  generate(small_gen(43), c);
  CHECK(read_tree(c) != ta);
  fs::remove_all(a);
  fs::remove_all(b);
  fs::remove_all(c);
}

TEST_CASE("infeasible generator configs are rejected") {
  GenConfig g = small_gen(1);
  g.blob_radius_max = 30;
  CHECK_THROWS_AS(g.validate(), ConfigError);
  g = small_gen(1);
  g.d1_fraction = 1.0;
  CHECK_THROWS_AS(g.validate(), ConfigError);
  g = small_gen(1);
  g.height = 8;
  CHECK_THROWS_AS(g.validate(), ConfigError);
  CHECK_NOTHROW(small_gen(1).validate());
}

TEST_CASE("config keys, overrides and round trip") {
  RunConfig cfg;
  CHECK(cfg.train.radius == 20);
  CHECK(cfg.train.alpha == doctest::Approx(0.995));
  CHECK(cfg.train.lambda_pretrain == doctest::Approx(0.8));
  CHECK(cfg.train.lambda_student == doctest::Approx(0.5));

  set_config_value(cfg, "R", "12");
  set_config_value(cfg, "seed", "77");
  set_config_value(cfg, "psm", "off");
  set_config_value(cfg, "psm_mode", "prob_sum");
  CHECK(cfg.train.radius == 12);
  CHECK(cfg.train.seed == 77);
  CHECK(cfg.gen.seed == 77);
  CHECK_FALSE(cfg.train.ablation.psm);

  CHECK_THROWS_AS(set_config_value(cfg, "no_such_key", "1"), ConfigError);
  CHECK_THROWS_AS(set_config_value(cfg, "R", "abc"), ConfigError);
  CHECK_THROWS_AS(apply_config_json(cfg, nlohmann::json{{"bogus", 1}}), ConfigError);
  CHECK_THROWS_AS(apply_config_json(cfg, nlohmann::json{{"R", "twenty"}}), ConfigError);

  const auto j = to_json(cfg);
  RunConfig back;
  apply_config_json(back, nlohmann::json::parse(j.dump()));
  CHECK(to_json(back).dump() == j.dump());

  for (const std::string& k : config_keys()) {
    CHECK(j.contains(k));
    CHECK(!config_key_help(k).empty());
  }
}

TEST_CASE("resolved config file reloads identically") {
  RunConfig cfg;
  set_config_value(cfg, "E_t", "3");
  set_config_value(cfg, "blob_radius_min", "10");
  const fs::path d = fresh_dir("cfg");
  fs::create_directories(d);
  write_resolved_config(d, cfg);
  const RunConfig back = load_config_file(d / "config.json");
  CHECK(to_json(back).dump() == to_json(cfg).dump());
  CHECK_THROWS_AS(load_config_file(d / "missing.json"), IoError);
  {
    std::ofstream bad(d / "bad.json");
    bad << "{not json";
  }
  CHECK_THROWS_AS(load_config_file(d / "bad.json"), ConfigError);
  fs::remove_all(d);
}

TEST_CASE("ablation names") {
  AblationFlags f;
  apply_ablation(f, {"pns"});
  CHECK_FALSE(f.pns);
  CHECK(f.psm);
  apply_ablation(f, {"all"});
  CHECK_FALSE(f.psm);
  CHECK_FALSE(f.pnmxp);
  CHECK_FALSE(f.pvrmxp);
  CHECK_THROWS_AS(apply_ablation(f, {"nope"}), ConfigError);
}

TEST_CASE("weights and checkpoint files round trip") {
  const fs::path d = fresh_dir("ckpt");
  fs::create_directories(d);
  WeightsFile w;
  w.model.width = 4;
  w.params = {1.5, -2.25, 1e-300, 3.0};
  save_weights(d / "w.bin", w);
  const WeightsFile wb = load_weights(d / "w.bin");
  CHECK(wb.model.width == 4);
  CHECK(wb.params == w.params);

  Checkpoint c;
  c.model.width = 6;
  c.teacher_epochs_done = 3;
  c.student_epochs_done = 2;
  c.student_ready = true;
  c.teacher = {0.1, 0.2};
  c.student = {0.3, 0.4};
  Rng r = make_stream(1, "augment");
  (void)r();
  c.rng_state = save_state(r);
  c.metrics_rows = 5;
  c.step_rows = 99;
  save_checkpoint(d / "c.bin", c);
  const Checkpoint cb = load_checkpoint(d / "c.bin");
  CHECK(cb.model.width == 6);
  CHECK(cb.teacher_epochs_done == 3);
  CHECK(cb.student_epochs_done == 2);
  CHECK(cb.student_ready);
  CHECK(cb.teacher == c.teacher);
  CHECK(cb.student == c.student);
  CHECK(cb.rng_state == c.rng_state);
  CHECK(cb.metrics_rows == 5);
  CHECK(cb.step_rows == 99);

  CHECK_THROWS_AS(load_checkpoint(d / "absent.bin"), IoError);
  {
    std::ofstream bad(d / "junk.bin", std::ios::binary);
    bad << "garbage";
  }
  CHECK_THROWS(load_weights(d / "junk.bin"));
  fs::remove_all(d);
}
