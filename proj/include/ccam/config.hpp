#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "ccam/consistency.hpp"
#include "ccam/order_task.hpp"
#include "ccam/projector.hpp"

namespace ccam {

enum class Precision { Double, Float };

std::string_view to_string(Precision p);

/// Synthetic input for mask/forward/gradcheck runs.
struct InputSpec {
    Index frames = 8;
    Index tokens = 4;
    friend bool operator==(const InputSpec&, const InputSpec&) = default;
};

struct SignalSpec {
    Index tokens = 4;
    double duration = 1.0;
    Index harmonics = 7;
    double max_cycles = 4.0;
    double amplitude = 3.0;
    Index grid_points = kDefaultGridPoints;
    friend bool operator==(const SignalSpec&, const SignalSpec&) = default;
};

struct GradcheckSpec {
    double step = 1e-5;
    double tolerance = 1e-4;
    double floor = 1e-8;
    friend bool operator==(const GradcheckSpec&, const GradcheckSpec&) = default;
};

struct ExperimentConfig {
    ProjectorConfig projector;  ///< projector.seed is the run seed
    Precision precision = Precision::Double;
    InputSpec input;
    SignalSpec signal;
    std::vector<Index> frame_counts{8, 16, 32, 64, 128};
    OrderDatasetSpec dataset;  ///< channels and seed follow the projector
    TrainOptions train;
    GradcheckSpec gradcheck;
    std::string output_dir = "out";

    std::uint64_t seed() const { return projector.seed; }
    OrderDatasetSpec dataset_spec() const;
    SignalOptions signal_options() const;

    friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

/// Subcommand defaults; unknown names get the plain defaults.
ExperimentConfig preset(std::string_view subcommand);

nlohmann::json to_json(const ExperimentConfig& cfg);
std::string serialize(const ExperimentConfig& cfg);

/// Validates doc against the schema. Missing keys keep base's values. Errors
/// are ConfigError naming the key path, plus its line in source_text when
/// it can be found there.
ExperimentConfig config_from_json(const nlohmann::json& doc, const ExperimentConfig& base = {},
                                  std::string_view source_text = {},
                                  std::string_view source_name = "config");

ExperimentConfig parse_config(std::string_view text, const ExperimentConfig& base = {},
                              std::string_view source_name = "config");

/// Missing or unreadable file is an IoError.
ExperimentConfig load_config(const std::filesystem::path& path, const ExperimentConfig& base = {});

/// SHA-256 hex of the canonical serialization, output directory excluded.
std::string config_digest(const ExperimentConfig& cfg);

/// Every ProjectorConfig/ExperimentConfig invariant; throws ConfigError.
void validate(const ExperimentConfig& cfg);

}  // namespace ccam
