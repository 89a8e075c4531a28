#include "pnl/config.hpp"

#include "pnl/errors.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <limits>

namespace pnl {

namespace {

using nlohmann::json;

enum class Kind { Int, UInt64, Real, Bool, Text };

struct Field {
  const char* name;
  Kind kind;
  const char* help;
  std::function<void(RunConfig&, const json&)> set;
  std::function<json(const RunConfig&)> get;
};

template <typename T>
Field member(const char* name, Kind kind, const char* help, T RunConfig::*group, auto T::*field) {
  return {name, kind, help,
          [group, field](RunConfig& c, const json& v) { (c.*group).*field = v.get<std::remove_reference_t<decltype((c.*group).*field)>>(); },
          [group, field](const RunConfig& c) { return json((c.*group).*field); }};
}

Field top(const char* name, const char* help, std::string RunConfig::*field) {
  return {name, Kind::Text, help, [field](RunConfig& c, const json& v) { c.*field = v.get<std::string>(); },
          [field](const RunConfig& c) { return json(c.*field); }};
}

template <typename E>
Field enumerated(const char* name, const char* help, E TrainerConfig::*field, E (*parse)(std::string_view)) {
  return {name, Kind::Text, help,
          [field, parse](RunConfig& c, const json& v) {
            try {
              c.train.*field = parse(v.get<std::string>());
            } catch (const std::invalid_argument& e) {
              throw ConfigError(e.what());
            }
          },
          [field](const RunConfig& c) { return json(std::string(to_string(c.train.*field))); }};
}

Field ablation(const char* name, const char* help, bool AblationFlags::*flag) {
  return {name, Kind::Bool, help, [flag](RunConfig& c, const json& v) { c.train.ablation.*flag = v.get<bool>(); },
          [flag](const RunConfig& c) { return json(c.train.ablation.*flag); }};
}

Field mix(const char* name, const char* help, double MixConfig::*field) {
  return {name, Kind::Real, help, [field](RunConfig& c, const json& v) { c.train.mix.*field = v.get<double>(); },
          [field](const RunConfig& c) { return json(c.train.mix.*field); }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    using G = GenConfig;
    using T = TrainerConfig;
    std::vector<Field> f;
    f.push_back(top("dataset", "dataset directory", &RunConfig::dataset));
    f.push_back(top("out", "output directory", &RunConfig::out));
    f.push_back({"seed", Kind::UInt64, "root seed for every random stream",
                 [](RunConfig& c, const json& v) { c.gen.seed = c.train.seed = v.get<std::uint64_t>(); },
                 [](const RunConfig& c) { return json(c.train.seed); }});
    f.push_back(member("height", Kind::Int, "image height", &RunConfig::gen, &G::height));
    f.push_back(member("width", Kind::Int, "image width", &RunConfig::gen, &G::width));
    f.push_back(member("count", Kind::Int, "training images (D1 + D2)", &RunConfig::gen, &G::count));
    f.push_back(member("test_count", Kind::Int, "test images", &RunConfig::gen, &G::test_count));
    f.push_back(member("d1_fraction", Kind::Real, "fraction of training images with masks", &RunConfig::gen, &G::d1_fraction));
    f.push_back(member("blob_count_min", Kind::Int, "fewest lesions per image", &RunConfig::gen, &G::blob_count_min));
    f.push_back(member("blob_count_max", Kind::Int, "most lesions per image", &RunConfig::gen, &G::blob_count_max));
    f.push_back(member("blob_radius_min", Kind::Int, "smallest lesion radius", &RunConfig::gen, &G::blob_radius_min));
    f.push_back(member("blob_radius_max", Kind::Int, "largest lesion radius", &RunConfig::gen, &G::blob_radius_max));
    f.push_back(member("fg_mean", Kind::Real, "lesion intensity mean", &RunConfig::gen, &G::fg_mean));
    f.push_back(member("bg_mean", Kind::Real, "background intensity mean", &RunConfig::gen, &G::bg_mean));
    f.push_back(member("noise_sigma", Kind::Real, "pixel noise standard deviation", &RunConfig::gen, &G::noise_sigma));
    f.push_back(member("contrast_jitter", Kind::Real, "per-lesion contrast variation", &RunConfig::gen, &G::contrast_jitter));
    f.push_back(member("illumination", Kind::Real, "amplitude of the smooth illumination field", &RunConfig::gen, &G::illumination));
    f.push_back(member("distractor_count", Kind::Int, "lesion-coloured clutter blobs per image", &RunConfig::gen, &G::distractor_count));
    f.push_back(member("distractor_radius_min", Kind::Int, "smallest clutter radius", &RunConfig::gen, &G::distractor_radius_min));
    f.push_back(member("distractor_radius_max", Kind::Int, "largest clutter radius", &RunConfig::gen, &G::distractor_radius_max));
    f.push_back(member("point_margin", Kind::Int, "erosion radius for simulated clicks", &RunConfig::gen, &G::point_margin));
    f.push_back(member("R", Kind::Int, "neighborhood radius in pixels", &RunConfig::train, &T::radius));
    f.push_back(member("alpha", Kind::Real, "EMA decay", &RunConfig::train, &T::alpha));
    f.push_back(member("lambda_pretrain", Kind::Real, "pixel-loss weight for teacher pretraining", &RunConfig::train, &T::lambda_pretrain));
    f.push_back(member("lambda_student", Kind::Real, "pixel-loss weight for student training", &RunConfig::train, &T::lambda_student));
    f.push_back(member("E_t", Kind::Int, "teacher pretraining epochs", &RunConfig::train, &T::epochs_teacher));
    f.push_back(member("E_s", Kind::Int, "student epochs", &RunConfig::train, &T::epochs_student));
    f.push_back(member("M", Kind::Int, "inner passes per pseudo-label refresh", &RunConfig::train, &T::inner_loops));
    f.push_back(member("lr", Kind::Real, "SGD learning rate", &RunConfig::train, &T::learning_rate));
    f.push_back(ablation("pns", "neighborhood supervision terms", &AblationFlags::pns));
    f.push_back(ablation("psm", "pseudo-label score weighting", &AblationFlags::psm));
    f.push_back(ablation("pnmxp", "neighborhood mixup", &AblationFlags::pnmxp));
    f.push_back(ablation("pvrmxp", "nine-grid patch transplant", &AblationFlags::pvrmxp));
    f.push_back(member("psm_threshold", Kind::Real, "scores below this become 0", &RunConfig::train, &T::psm_threshold));
    f.push_back(enumerated("psm_mode", "count | prob_sum", &T::psm_mode, &parse_psm_mode));
    f.push_back(enumerated("student_init", "random | teacher", &T::student_init, &parse_student_init));
    f.push_back(mix("beta_a", "mixup Beta first shape", &MixConfig::beta_a));
    f.push_back(mix("beta_b", "mixup Beta second shape", &MixConfig::beta_b));
    f.push_back(member("model_width", Kind::Int, "first-level channels of the network", &RunConfig::train, &T::model_width));
    f.push_back(enumerated("averaging", "micro | macro", &T::averaging, &parse_averaging));
    f.push_back(member("workers", Kind::Int, "worker threads for inference", &RunConfig::train, &T::workers));
    f.push_back(member("eval_every", Kind::Int, "test evaluation cadence in epochs", &RunConfig::train, &T::eval_every));
    return f;
  }();
  return table;
}

const Field& find_field(std::string_view key) {
  for (const Field& f : fields()) {
    if (key == f.name) return f;
  }
  throw ConfigError("unknown config key '" + std::string(key) + "'");
}

const char* kind_name(Kind k) {
  switch (k) {
    case Kind::Int: return "an integer";
    case Kind::UInt64: return "an unsigned integer";
    case Kind::Real: return "a number";
    case Kind::Bool: return "a boolean";
    case Kind::Text: return "a string";
  }
  return "a value";
}

bool type_matches(Kind k, const json& v) {
  switch (k) {
    case Kind::Int:
      return v.is_number_integer() && v.get<std::int64_t>() >= std::numeric_limits<int>::min() &&
             v.get<std::int64_t>() <= std::numeric_limits<int>::max();
    case Kind::UInt64: return v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0);
    case Kind::Real: return v.is_number();
    case Kind::Bool: return v.is_boolean();
    case Kind::Text: return v.is_string();
  }
  return false;
}

void assign(RunConfig& cfg, const Field& f, const json& v) {
  if (!type_matches(f.kind, v)) {
    throw ConfigError(std::string("config key '") + f.name + "' expects " + kind_name(f.kind));
  }
  f.set(cfg, v);
}

template <typename T>
bool parse_number(std::string_view text, T& out) {
  const auto* end = text.data() + text.size();
  const auto res = std::from_chars(text.data(), end, out);
  return res.ec == std::errc{} && res.ptr == end;
}

}  // namespace

void RunConfig::validate_training() const {
  train.validate();
  if (dataset.empty()) throw ConfigError("dataset path is required");
}

void RunConfig::validate_generation() const { gen.validate(); }

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const Field& f : fields()) out.emplace_back(f.name);
  return out;
}

std::string_view config_key_help(std::string_view key) { return find_field(key).help; }

void set_config_value(RunConfig& cfg, std::string_view key, std::string_view value) {
  const Field& f = find_field(key);
  const auto bad = [&] {
    return ConfigError("bad value '" + std::string(value) + "' for " + f.name + " (expects " + kind_name(f.kind) + ")");
  };
  switch (f.kind) {
    case Kind::Int: {
      int v = 0;
      if (!parse_number(value, v)) throw bad();
      assign(cfg, f, v);
      break;
    }
    case Kind::UInt64: {
      std::uint64_t v = 0;
      if (!parse_number(value, v)) throw bad();
      assign(cfg, f, v);
      break;
    }
    case Kind::Real: {
      double v = 0;
      if (!parse_number(value, v)) throw bad();
      assign(cfg, f, v);
      break;
    }
    case Kind::Bool:
      if (value == "true" || value == "1" || value == "on") {
        assign(cfg, f, true);
      } else if (value == "false" || value == "0" || value == "off") {
        assign(cfg, f, false);
      } else {
        throw bad();
      }
      break;
    case Kind::Text:
      assign(cfg, f, std::string(value));
      break;
  }
}

void apply_config_json(RunConfig& cfg, const json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& [key, value] : j.items()) assign(cfg, find_field(key), value);
}

RunConfig load_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  RunConfig cfg;
  apply_config_json(cfg, j);
  return cfg;
}

nlohmann::ordered_json to_json(const RunConfig& cfg) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const Field& f : fields()) j[f.name] = f.get(cfg);
  return j;
}

void write_resolved_config(const std::filesystem::path& dir, const RunConfig& cfg) {
  std::filesystem::create_directories(dir);
  std::ofstream out(dir / "config.json");
  if (!out) throw IoError("cannot write " + (dir / "config.json").string());
  out << to_json(cfg).dump(2) << '\n';
}

void apply_ablation(AblationFlags& flags, const std::vector<std::string>& names) {
  for (const std::string& n : names) {
    if (n == "pns") {
      flags.pns = false;
    } else if (n == "psm") {
      flags.psm = false;
    } else if (n == "pnmxp") {
      flags.pnmxp = false;
    } else if (n == "pvrmxp") {
      flags.pvrmxp = false;
    } else if (n == "all") {
      flags = {false, false, false, false};
    } else {
      throw ConfigError("unknown ablation '" + n + "' (pns, psm, pnmxp, pvrmxp, all)");
    }
  }
}

}  // namespace pnl
