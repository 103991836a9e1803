// Copyright 2026 The preflab authors
// SPDX-License-Identifier: Apache-2.0
//
// Offline preference-optimization loop over the toy tabular policy. The
// trainable policy is warm-started from a frozen uniform reference, batches
// minimize the mean pair loss, and evaluation snapshots log the training
// dynamics: losses, reward accuracy, reward and KL margins, the adaptive
// coefficient and clamp diagnostics, and the probability-space gradient
// magnitudes that expose the promote/suppress asymmetry.

#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "preflab/data.hpp"
#include "preflab/losses.hpp"
#include "preflab/policy.hpp"

namespace preflab::trainer {

enum class Optimizer : std::uint8_t { kSgd, kAdam };
enum class LrSchedule : std::uint8_t { kConstant, kCosineWarmup };

struct TrainConfig {
    double lr = 1e-2;
    Optimizer optimizer = Optimizer::kAdam;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    std::size_t epochs = 1;
    std::size_t batch_size = 32;
    std::uint64_t seed = 0;
    std::size_t eval_every = 10;   // optimizer steps between snapshots
    bool shuffle = true;
    LrSchedule lr_schedule = LrSchedule::kConstant;
    double warmup_frac = 0.1;      // cosine schedule only
    int context_order = 1;         // policy conditioning

    void validate() const;
};

struct StepMetrics {
    std::size_t step = 0;
    double train_loss = 0.0;
    double eval_loss = 0.0;
    double reward_accuracy = 0.0;      // strict r_w > r_l; ties count as incorrect
    double reward_margin_mean = 0.0;
    double kl_margin_mean = 0.0;
    double mean_beta_w_over_beta = 0.0;
    double clamp_rate = 0.0;
    double mean_abs_dPw = 0.0;
    double mean_abs_dPl = 0.0;
    // Mean of the method's in-space balance ratio over unclamped eval pairs;
    // NaN when every pair is clamped. Not part of the CSV contract.
    double balance_ratio_mean = 0.0;
};

struct TrainResult {
    policy::TabularPolicy policy;
    policy::TabularPolicy reference;
    std::vector<StepMetrics> metrics;
    std::size_t total_steps = 0;
};

class DivergenceError : public std::runtime_error {
public:
    DivergenceError(std::size_t step, std::size_t batch, const std::string& msg)
        : std::runtime_error(msg), step_(step), batch_(batch) {}
    std::size_t step() const { return step_; }
    std::size_t batch() const { return batch_; }

private:
    std::size_t step_;
    std::size_t batch_;
};

// Evaluation snapshot over eval_set; no parameters are updated. train_loss is
// left NaN (the training loop fills it in).
StepMetrics evaluate(const policy::TabularPolicy& pol,
                     const policy::TabularPolicy& ref,
                     const data::Dataset& eval_set,
                     const losses::LossSpec& spec);

// Trains a policy initialized from the uniform reference. Snapshots are
// recorded at step 0 (before any update), after every cfg.eval_every optimizer
// steps, and after the final step. Deterministic given the config; throws
// DivergenceError naming step and batch if a batch loss turns non-finite.
TrainResult train(const data::Dataset& train_set, const data::Dataset& eval_set,
                  const losses::LossSpec& spec, const TrainConfig& cfg);

inline constexpr const char* kMetricsCsvHeader =
    "step,train_loss,eval_loss,reward_accuracy,reward_margin_mean,"
    "kl_margin_mean,mean_beta_w_over_beta,clamp_rate,mean_abs_dPw,"
    "mean_abs_dPl";

// Fixed-column CSV (header above); numbers are rendered with round-trip
// precision, so identical runs produce byte-identical files.
void write_metrics_csv(const std::vector<StepMetrics>& metrics,
                       const std::filesystem::path& path);

}  // namespace preflab::trainer
