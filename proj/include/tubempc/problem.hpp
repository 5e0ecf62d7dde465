#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "tubempc/json_io.hpp"
#include "tubempc/rpi.hpp"
#include "tubempc/simulator.hpp"
#include "tubempc/tube_mpc.hpp"

namespace tubempc::io {

/// Everything a problem file can carry. A file holds a plant (with weights),
/// a bare error system for set comparisons, or both.
struct ProblemFile {
  std::string name;
  double dt = 0.0;  // sample-time tag, informational only
  std::optional<mpc::PlantModel> plant;
  mpc::SynthesisConfig synthesis;
  std::optional<rpi::ErrorSystem> error_system;
  std::vector<double> eps{0.01, 0.1, 0.5};
  sim::SimConfig simulation;
  int runs = 1;
};

/// Validates structure and every cross-dimension before any numerics.
/// Throws Error(kValidation) or Error(kDimension) naming the offending field.
ProblemFile problem_from_json(const Json& j);
ProblemFile load_problem(const std::filesystem::path& path);

}  // namespace tubempc::io
