// Copyright 2026 The preflab authors
// SPDX-License-Identifier: Apache-2.0
//
// Toy autoregressive tabular-softmax policy over a small vocabulary. Each
// context row holds unnormalized logits; conditioning is either a single
// shared context (order 0) or the previous token (order 1), with the prompt's
// last token seeding the first response position (context 0 when the prompt
// is empty). Tabular rows keep normalization brute-force checkable, which a
// neural toy policy would not.

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "preflab/autodiff.hpp"
#include "preflab/data.hpp"
#include "preflab/losses.hpp"

namespace preflab::policy {

struct TabularPolicy {
    int vocab_size = 0;
    int context_order = 1;       // 0 = unigram, 1 = bigram conditioning
    std::vector<double> logits;  // [num_contexts() x vocab_size], row-major

    int num_contexts() const { return context_order == 0 ? 1 : vocab_size; }

    double logit(int ctx, int tok) const {
        return logits[static_cast<std::size_t>(ctx) *
                          static_cast<std::size_t>(vocab_size) +
                      static_cast<std::size_t>(tok)];
    }
    double& logit(int ctx, int tok) {
        return logits[static_cast<std::size_t>(ctx) *
                          static_cast<std::size_t>(vocab_size) +
                      static_cast<std::size_t>(tok)];
    }

    // Zero logits, i.e. uniform next-token distributions.
    static TabularPolicy uniform(int vocab_size, int context_order);

    void validate() const;
};

// Sum of response-token log-probabilities under the policy (values only).
// Throws std::invalid_argument for an empty response or out-of-range tokens.
double sequence_logprob(const TabularPolicy& p, const std::vector<int>& prompt,
                        const std::vector<int>& response);

// Differentiable binding of one policy's logits on a tape. Row log-sum-exp
// nodes are memoized per context, so a batch shares them.
class PolicyOnTape {
public:
    PolicyOnTape(ad::Tape& tape, const TabularPolicy& p);

    ad::Var sequence_logprob(const std::vector<int>& prompt,
                             const std::vector<int>& response);

    // One param node per logit, row-major, aligned with TabularPolicy::logits.
    const std::vector<ad::Var>& logit_params() const { return params_; }

private:
    ad::Var row_logsumexp(int ctx);

    ad::Tape* tape_;
    const TabularPolicy* policy_;
    std::vector<ad::Var> params_;
    std::vector<std::optional<ad::Var>> lse_cache_;
};

// The four sequence log-probabilities and response lengths for a pair, with
// the reference side evaluated under `ref` (values only).
losses::PairLogProbs pair_logprobs(const TabularPolicy& pol,
                                   const TabularPolicy& ref,
                                   const data::PreferencePair& pair);

// Fixed-beta log-ratio margin beta * [(logPw - logRw) - (logPl - logRl)];
// no adaptive coefficient is involved.
double kl_margin(const TabularPolicy& pol, const TabularPolicy& ref,
                 const data::PreferencePair& pair, double beta);

// JSON checkpoint: {"vocab_size", "context_order", "logits" (row-major)}.
void save_policy(const TabularPolicy& p, const std::filesystem::path& path);
TabularPolicy load_policy(const std::filesystem::path& path);

// FNV-1a over the dimensions and raw logit bytes; used to assert that the
// reference policy is never touched by training.
std::uint64_t checksum(const TabularPolicy& p);

}  // namespace preflab::policy
