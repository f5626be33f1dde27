#pragma once

#include <filesystem>
#include <string>

#include "json.hpp"

#include "ccam/projector.hpp"

namespace ccam {

// Binary layout, all integers u64 little-endian, values IEEE-754 doubles
// little-endian:
//   section_count
//   per section: name_length, name bytes, rank, dims[rank], row-major values
// Sections appear in ParamTensors order.

void write_params(const ProjectorParams<double>& params, const std::filesystem::path& path);

/// Reads a params file and checks every section against cfg's shapes.
ProjectorParams<double> read_params(const std::filesystem::path& path, const ProjectorConfig& cfg);

nlohmann::json config_to_json(const ProjectorConfig& cfg);

/// Manifest stored next to a params file: config, seed, digest, section shapes.
nlohmann::json params_manifest(const ProjectorParams<double>& params,
                               const std::string& config_digest);

}  // namespace ccam
