// Copyright 2026 The preflab authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace preflab::cli {

// Exit codes shared by every subcommand.
inline constexpr int kExitOk = 0;
inline constexpr int kExitInternal = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitDiverged = 3;
inline constexpr int kExitTolerance = 4;

// Gradient-check tolerances (also enforced by the acceptance suite).
inline constexpr double kBalanceTolerance = 1e-9;
inline constexpr double kFdTolerance = 1e-5;

// Trains one configuration; writes metrics.csv, summary.json and policy.json
// under out_dir.
int cmd_run(const std::filesystem::path& config_path,
            const std::filesystem::path& out_dir,
            std::optional<std::uint64_t> seed_override);

// Runs the methods x lrs x betas grid (cell seed = base seed + cell index),
// writes one CSV per cell plus sweep_summary.json with per-metric win
// fractions under strict inequality.
int cmd_sweep(const std::filesystem::path& config_path,
              const std::filesystem::path& out_dir, std::size_t workers,
              std::optional<std::uint64_t> seed_override);

// Random balance sweep + finite-difference report per method; writes JSON to
// out_path or stdout. Nonzero exit when any method breaches its tolerance.
int cmd_gradcheck(std::size_t n, std::uint64_t seed,
                  const std::vector<std::string>& methods,
                  const std::optional<std::filesystem::path>& out_path);

// Generates a dataset file.
int cmd_gen_data(std::uint64_t seed, std::size_t n_pairs, int vocab_size,
                 int len_min, int len_max, int good_token,
                 const std::string& split,
                 const std::filesystem::path& out_path);

}  // namespace preflab::cli
