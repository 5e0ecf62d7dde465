#pragma once

#include <Eigen/Core>

#include <filesystem>
#include <string>

#include "json.hpp"
#include "tubempc/geometry.hpp"
#include "tubempc/rpi.hpp"
#include "tubempc/tube_mpc.hpp"

namespace tubempc::io {

using Json = nlohmann::ordered_json;

inline constexpr const char* kArtifactSchema = "tubempc.controller/1";

// Matrices are arrays of rows; vectors are flat arrays. Readers throw
// Error(kValidation) naming `where` on malformed input.
Json to_json(const Eigen::MatrixXd& M);
Json to_json(const Eigen::VectorXd& v);
Json to_json(const geometry::HPolytope& P);
Json to_json(const rpi::RpiResult& r);
Json to_json(const mpc::ControllerArtifact& a);

Eigen::MatrixXd matrix_from_json(const Json& j, const std::string& where);
Eigen::VectorXd vector_from_json(const Json& j, const std::string& where);
geometry::HPolytope polytope_from_json(const Json& j, const std::string& where);
rpi::RpiResult rpi_result_from_json(const Json& j, const std::string& where);
/// Checks the schema tag; does not re-validate the controller.
mpc::ControllerArtifact artifact_from_json(const Json& j);

/// Parses a file, reporting syntax errors with line and column.
Json read_json_file(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const Json& j);

void save_artifact(const std::filesystem::path& path, const mpc::ControllerArtifact& a);
mpc::ControllerArtifact load_artifact(const std::filesystem::path& path);

}  // namespace tubempc::io
