#pragma once

#include "pnl/model.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace pnl {

/// Standalone model weights: architecture header plus the parameter vector.
struct WeightsFile {
  ReferenceNetConfig model;
  std::vector<double> params;
};

void save_weights(const std::filesystem::path& path, const WeightsFile& weights);
WeightsFile load_weights(const std::filesystem::path& path);

/// Training state at an epoch boundary.
struct Checkpoint {
  ReferenceNetConfig model;
  int teacher_epochs_done = 0;
  int student_epochs_done = 0;
  bool student_ready = false;
  std::vector<double> teacher;
  std::vector<double> student;
  std::string rng_state;
  std::uint64_t metrics_rows = 0;
  std::uint64_t step_rows = 0;
};

/// Written through a temporary file and renamed into place.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace pnl
