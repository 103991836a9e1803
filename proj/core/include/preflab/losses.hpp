// Copyright 2026 The preflab authors
// SPDX-License-Identifier: Apache-2.0
//
// The pairwise preference-optimization loss family. Every method is a scalar
// expression over the four sequence log-probabilities of a preference pair;
// the self-adaptive variants replace the fixed coefficient on the chosen
// response with a per-pair coefficient derived from detached generation
// probabilities, clamped at a fixed ceiling for numerical stability.

#pragma once

#include <cstdint>
#include <optional>
#include <string_view>

#include "preflab/autodiff.hpp"

namespace preflab::losses {

// The four sequence log-probabilities of one preference pair, plus response
// lengths (prompt excluded). Policy values may be bound to differentiable
// nodes; reference values are always constants (the reference is frozen).
struct PairLogProbs {
    double logp_w_pol = 0.0;
    double logp_l_pol = 0.0;
    double logp_w_ref = 0.0;
    double logp_l_ref = 0.0;
    int len_w = 1;
    int len_l = 1;

    // Throws std::invalid_argument unless all log-probs are finite and <= 0
    // and both lengths are >= 1.
    void validate() const;
};

enum class Method : std::uint8_t {
    kDPO,
    kAdaDPO,
    kStableAdaDPO,
    kIPO,
    kAdaIPO,
    kSimPO,
    kAdaSimPO,
    kRDPO,
    kAdaRDPO,
    kCPO,
    kAdaCPO,
    kORPO,
    kAdaORPO,
};

inline constexpr Method kAllMethods[] = {
    Method::kDPO,  Method::kAdaDPO, Method::kStableAdaDPO,
    Method::kIPO,  Method::kAdaIPO, Method::kSimPO,
    Method::kAdaSimPO, Method::kRDPO, Method::kAdaRDPO,
    Method::kCPO,  Method::kAdaCPO, Method::kORPO,
    Method::kAdaORPO,
};

// Whether balance is imposed on gradients w.r.t. policy probabilities or
// probability ratios x = P/R. Applies to the DPO-family adaptive ratio; the
// other methods fix their own space.
enum class BalanceSpace : std::uint8_t { kPolicy, kRatio };

struct LossSpec {
    Method method = Method::kDPO;
    double beta = 0.1;
    double ceiling_C = 2.0;
    BalanceSpace balance_space = BalanceSpace::kRatio;
    double alpha_w = 1.0;          // adaptive-ratio exponent on the chosen terms
    double alpha_l = 1.0;          // same for the rejected terms
    double gamma = 0.0;            // SimPO target margin
    double tau = 0.1;              // IPO temperature
    double len_penalty_alpha = 0.0;  // R-DPO length penalty
    double k = 1.0;                // optional asymmetric scaling of the ratio

    void validate() const;
};

bool is_adaptive(Method m);
// AdaX -> X; StableAdaDPO -> DPO; base methods map to themselves.
Method base_method(Method m);
std::string_view method_name(Method m);
std::optional<Method> method_from_name(std::string_view name);

// Coefficient on the rejected-response term: 1 for the IPO family (IPO has no
// beta), spec.beta otherwise.
double beta_l(const LossSpec& spec);

struct AdaptiveCoefficient {
    double beta_w = 0.0;    // k * beta_l * min(exp(log_ratio), C); beta_l for base methods
    double log_ratio = 0.0; // method-specific detached log ratio; 0 for base methods
    bool clamped = false;   // raw ratio exp(log_ratio) reached the ceiling
};

// Detached per-pair coefficient. The log ratio is computed entirely in log
// space from lp's values; the ceiling clamp compares exp(log_ratio) against C
// directly, so a saturated clamp yields exactly k * beta_l * C (an overflowed
// exp saturates the same way through IEEE infinity).
AdaptiveCoefficient adaptive_coefficient(const PairLogProbs& lp, const LossSpec& spec);

// Effective adaptive-ratio exponents: the stable variant pins them to the
// reciprocal response lengths, the plain variants read them from the spec.
void effective_alphas(const PairLogProbs& lp, const LossSpec& spec,
                      double* alpha_w, double* alpha_l);

struct LossGraph {
    ad::Var loss;          // full loss node
    ad::Var balance_root;  // node whose gradients define the method's balance
                           // diagnostic; equals loss except for the ORPO
                           // family, where it is the odds-margin term alone
    AdaptiveCoefficient coef;
};

// Builds the method's loss on the tape. logp_w/logp_l are the differentiable
// policy bindings and must carry exactly lp.logp_w_pol / lp.logp_l_pol;
// reference log-probs and lengths enter as constants. For adaptive methods,
// the coefficient is constructed on the tape through a stop-gradient node, so
// backpropagation treats it as a per-pair constant.
LossGraph build_loss(ad::Tape& tape, ad::Var logp_w, ad::Var logp_l,
                     const PairLogProbs& lp, const LossSpec& spec);

// Identical loss with the coefficient injected as a plain constant instead of
// the on-tape stop-gradient construction. Oracle path for verifying the
// stop-gradient contract.
LossGraph build_loss_frozen(ad::Tape& tape, ad::Var logp_w, ad::Var logp_l,
                            const PairLogProbs& lp, const LossSpec& spec,
                            double beta_w);

// Loss value only (evaluated on a scratch tape).
double loss_value(const PairLogProbs& lp, const LossSpec& spec);

struct ImplicitRewards {
    double r_w = 0.0;
    double r_l = 0.0;
    double margin() const { return r_w - r_l; }
};

// Per-response implicit rewards (the two margin terms, excluding constant
// offsets such as gamma, the IPO target, or the R-DPO length penalty).
ImplicitRewards implicit_rewards(const PairLogProbs& lp, const LossSpec& spec);

}  // namespace preflab::losses
