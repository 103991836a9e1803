// Copyright 2026 The preflab authors
// SPDX-License-Identifier: Apache-2.0
//
// Strict JSON experiment configs. Every object is checked against its allowed
// key set, so a typo in any of the thirteen methods' hyperparameters fails the
// run instead of silently falling back to a default.

#pragma once

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "preflab/data.hpp"
#include "preflab/losses.hpp"
#include "preflab/trainer.hpp"

namespace preflab::cli {

using json = nlohmann::ordered_json;

inline constexpr int kSchemaVersion = 1;

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Either a JSONL file on disk or generation parameters.
struct DatasetSource {
    std::optional<std::filesystem::path> path;
    std::optional<data::GenParams> gen;

    data::Dataset resolve() const;
};

struct RunConfig {
    DatasetSource train_source;
    DatasetSource eval_source;
    losses::LossSpec loss;
    trainer::TrainConfig train;
};

struct SweepConfig {
    DatasetSource train_source;
    DatasetSource eval_source;
    losses::LossSpec loss;      // shared fields; beta comes from `betas`
    trainer::TrainConfig train; // shared fields; lr comes from `lrs`
    std::vector<losses::Method> methods;
    std::vector<double> lrs;
    std::vector<double> betas;
};

json load_json_file(const std::filesystem::path& path);

RunConfig parse_run_config(const json& j);
SweepConfig parse_sweep_config(const json& j);

json loss_spec_to_json(const losses::LossSpec& spec);
json train_config_to_json(const trainer::TrainConfig& cfg);
json metrics_to_json(const trainer::StepMetrics& m);

}  // namespace preflab::cli
