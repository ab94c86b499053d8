#pragma once

// Experiment configuration: a JSON document merged over built-in defaults.
// The defaults double as the schema: every accepted key appears in them,
// unknown keys and type mismatches are rejected with the dotted key path.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "gnpe/experiments.hpp"
#include "gnpe/models.hpp"

namespace gnpe {

using Json = nlohmann::json;

/// The complete default configuration.
const Json& default_config();

/// Merges `user` over the defaults. Throws ConfigError on unknown keys or
/// values whose type differs from the default's.
Json resolve_config(const Json& user);

/// Reads and resolves a config file. IoError if unreadable, ConfigError if
/// not valid JSON or not valid against the defaults.
Json load_config(const std::filesystem::path& path);

struct ExperimentConfig {
    Json resolved;

    std::uint64_t seed = 0;
    std::size_t workers = 1;
    std::string output_dir;

    std::string model;
    OscillatorOptions oscillator;
    MultichannelOptions multichannel;

    MethodSettings method;
    std::size_t simulations = 0;
    double validation_fraction = 0.0;
    SamplerSettings sampler;

    /// Observation parameters; empty means a prior draw from observation_seed.
    std::vector<double> observation_theta;
    std::uint64_t observation_seed = 0;

    std::vector<std::string> metric_suite;
    C2stConfig c2st;
    double effective_dimension_threshold = 1e-2;

    ToyStudySettings toy_study;
    SpectrumSettings spectra;
    GaussianExampleSettings gaussian_example;
};

/// Typed view of a resolved config; validates value ranges with field-level
/// messages (ConfigError).
ExperimentConfig parse_config(const Json& resolved);

std::unique_ptr<ForwardModel> make_model(const ExperimentConfig& config);

/// Lower-case hex SHA-256.
std::string sha256_hex(std::string_view bytes);
std::string file_sha256(const std::filesystem::path& path);
/// The resolved config without settings that cannot change results
/// (output_dir, workers). This is what artifacts embed and hash.
Json experiment_config(const Json& resolved);
/// Hash of the canonical serialisation of experiment_config(resolved).
std::string config_hash(const Json& resolved);

}  // namespace gnpe
