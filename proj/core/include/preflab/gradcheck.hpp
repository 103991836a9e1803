// Copyright 2026 The preflab authors
// SPDX-License-Identifier: Apache-2.0
//
// Analytic gradient-magnitude diagnostics for the loss family, plus a
// finite-difference oracle. The central quantities are the per-pair ratios
//
//   ratio_P = |dL/dP_w| / |dL/dP_l|      (probability space)
//   ratio_x = |dL/dx_w| / |dL/dx_l|      (probability-ratio space, x = P/R)
//
// and each method's own balanced quantity, which the adaptive variants drive
// to exactly 1 in the unclamped regime. All ratios are assembled in log space
// so they stay well-conditioned at sequence-level probability scales.

#pragma once

#include <cstddef>
#include <cstdint>

#include "preflab/losses.hpp"

namespace preflab::gradcheck {

struct ProbGradients {
    double d_logp_w = 0.0;  // dL/d logP_w, from reverse-mode autodiff
    double d_logp_l = 0.0;
    double d_prob_w = 0.0;  // dL/dP_w = dL/dlogP_w * exp(-logP_w)
    double d_prob_l = 0.0;
    bool overflow = false;  // exp(-logP) overflowed; log-space ratios remain valid
};

// Exact chain rule from log-prob gradients to probability-space gradients.
ProbGradients grads_wrt_probs(const losses::PairLogProbs& lp,
                              const losses::LossSpec& spec);

struct BalanceReport {
    double ratio_P = 0.0;
    double ratio_x = 0.0;
    double grad_logp_w = 0.0;
    double grad_logp_l = 0.0;
    // Max relative error of the two analytic log-prob gradients against
    // central finite differences with relative step 1e-6, taken on the loss
    // with the per-pair coefficient frozen at its center value (the function
    // the stop-gradient semantics differentiate). NaN when FD is skipped.
    double fd_max_rel_err = 0.0;
    // The method's own balanced quantity: ratio_x-style for the ratio-space
    // family (exponent-weighted for the stable variant), ratio_P-style for the
    // policy-space/CPO/SimPO family, and the odds-margin-term ratio_P for the
    // ORPO family. Equals 1 for adaptive methods when the clamp is inactive.
    // NaN when either balance gradient is zero or subnormal: such a pair
    // carries no measurable gradient, so its balance is undefined.
    double in_space_ratio = 0.0;
    bool clamped = false;
};

// Finite differences perturb the policy log-probs by h = 1e-6 * max(1, |logp|),
// so callers must leave that much headroom below 0 when with_fd is set.
BalanceReport balance_report(const losses::PairLogProbs& lp,
                             const losses::LossSpec& spec, bool with_fd = true);

struct SweepSummary {
    std::size_t n_samples = 0;
    std::size_t n_unclamped = 0;
    double clamp_rate = 0.0;
    // max |in_space_ratio - 1| over unclamped samples with finite ratios.
    double max_unclamped_deviation = 0.0;
    double fd_max_rel_err = 0.0;
};

// Samples n pairs with log-probs uniform in [-50, -0.1] and lengths uniform in
// [1, 64] (per sample, the draw order is logp_w_pol, logp_l_pol, logp_w_ref,
// logp_l_ref, len_w, len_l from a SplitMix64 stream seeded with `seed`), and
// aggregates balance_report over them. Throws std::invalid_argument if n == 0.
SweepSummary random_balance_sweep(std::size_t n, std::uint64_t seed,
                                  const losses::LossSpec& spec);

}  // namespace preflab::gradcheck
