#include "pnl/checkpoint.hpp"

#include "pnl/errors.hpp"

#include <cstring>
#include <fstream>

namespace pnl {

namespace {

constexpr char kWeightsMagic[8] = {'P', 'N', 'L', 'W', 'G', 'T', 'S', '1'};
constexpr char kCheckpointMagic[8] = {'P', 'N', 'L', 'C', 'K', 'P', 'T', '1'};

template <typename T>
void put(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw IoError("truncated file");
  return v;
}

void put_vector(std::ostream& os, const std::vector<double>& v) {
  put<std::uint64_t>(os, v.size());
  os.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
}

std::vector<double> get_vector(std::istream& is) {
  const auto n = get<std::uint64_t>(is);
  if (n > (1ULL << 32)) throw IoError("implausible vector length");
  std::vector<double> v(n);
  is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double)));
  if (!is) throw IoError("truncated file");
  return v;
}

void put_model(std::ostream& os, const ReferenceNetConfig& m) {
  put<std::int32_t>(os, m.in_channels);
  put<std::int32_t>(os, m.width);
}

ReferenceNetConfig get_model(std::istream& is) {
  ReferenceNetConfig m;
  m.in_channels = get<std::int32_t>(is);
  m.width = get<std::int32_t>(is);
  return m;
}

void check_magic(std::istream& is, const char (&magic)[8], const std::filesystem::path& path) {
  char buf[8];
  is.read(buf, sizeof(buf));
  if (!is || std::memcmp(buf, magic, sizeof(buf)) != 0) throw IoError(path.string() + ": bad file header");
}

template <typename Fn>
void write_atomic(const std::filesystem::path& path, Fn&& body) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw IoError("cannot write " + tmp.string());
    body(os);
    if (!os) throw IoError("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace

void save_weights(const std::filesystem::path& path, const WeightsFile& w) {
  write_atomic(path, [&](std::ostream& os) {
    os.write(kWeightsMagic, sizeof(kWeightsMagic));
    put_model(os, w.model);
    put_vector(os, w.params);
  });
}

WeightsFile load_weights(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  check_magic(is, kWeightsMagic, path);
  WeightsFile w;
  w.model = get_model(is);
  w.params = get_vector(is);
  return w;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
  write_atomic(path, [&](std::ostream& os) {
    os.write(kCheckpointMagic, sizeof(kCheckpointMagic));
    put_model(os, c.model);
    put<std::int32_t>(os, c.teacher_epochs_done);
    put<std::int32_t>(os, c.student_epochs_done);
    put<std::uint8_t>(os, c.student_ready ? 1 : 0);
    put<std::uint64_t>(os, c.metrics_rows);
    put<std::uint64_t>(os, c.step_rows);
    put_vector(os, c.teacher);
    put_vector(os, c.student);
    put<std::uint64_t>(os, c.rng_state.size());
    os.write(c.rng_state.data(), static_cast<std::streamsize>(c.rng_state.size()));
  });
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  check_magic(is, kCheckpointMagic, path);
  Checkpoint c;
  c.model = get_model(is);
  c.teacher_epochs_done = get<std::int32_t>(is);
  c.student_epochs_done = get<std::int32_t>(is);
  c.student_ready = get<std::uint8_t>(is) != 0;
  c.metrics_rows = get<std::uint64_t>(is);
  c.step_rows = get<std::uint64_t>(is);
  c.teacher = get_vector(is);
  c.student = get_vector(is);
  const auto n = get<std::uint64_t>(is);
  if (n > (1ULL << 20)) throw IoError("implausible rng state length");
  c.rng_state.resize(n);
  is.read(c.rng_state.data(), static_cast<std::streamsize>(n));
  if (!is) throw IoError("truncated checkpoint");
  return c;
}

}  // namespace pnl
