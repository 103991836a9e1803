// Copyright 2026 The preflab authors
// SPDX-License-Identifier: Apache-2.0

#include "preflab/policy.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace preflab::policy {

using json = nlohmann::ordered_json;

namespace {

void check_dims(const TabularPolicy& p) {
    if (p.vocab_size < 1) {
        throw std::invalid_argument("policy: vocab_size must be >= 1");
    }
    if (p.context_order != 0 && p.context_order != 1) {
        throw std::invalid_argument("policy: context_order must be 0 or 1");
    }
    const auto expected = static_cast<std::size_t>(p.num_contexts()) *
                          static_cast<std::size_t>(p.vocab_size);
    if (p.logits.size() != expected) {
        throw std::invalid_argument("policy: logits size does not match dims");
    }
}

void check_tokens(const TabularPolicy& p, const std::vector<int>& tokens,
                  const char* what) {
    for (int t : tokens) {
        if (t < 0 || t >= p.vocab_size) {
            throw std::invalid_argument(std::string("policy: token in ") + what +
                                        " outside the vocabulary");
        }
    }
}

int context_of(const TabularPolicy& p, int prev_token) {
    return p.context_order == 0 ? 0 : prev_token;
}

double row_logsumexp_value(const TabularPolicy& p, int ctx) {
    double m = p.logit(ctx, 0);
    for (int t = 1; t < p.vocab_size; ++t) {
        m = std::max(m, p.logit(ctx, t));
    }
    double s = 0.0;
    for (int t = 0; t < p.vocab_size; ++t) {
        s += std::exp(p.logit(ctx, t) - m);
    }
    return m + std::log(s);
}

}  // namespace

TabularPolicy TabularPolicy::uniform(int vocab_size, int context_order) {
    TabularPolicy p;
    p.vocab_size = vocab_size;
    p.context_order = context_order;
    p.logits.assign(static_cast<std::size_t>(p.num_contexts()) *
                        static_cast<std::size_t>(vocab_size),
                    0.0);
    check_dims(p);
    return p;
}

void TabularPolicy::validate() const {
    check_dims(*this);
    for (double v : logits) {
        if (!std::isfinite(v)) {
            throw std::invalid_argument("policy: non-finite logit");
        }
    }
}

double sequence_logprob(const TabularPolicy& p, const std::vector<int>& prompt,
                        const std::vector<int>& response) {
    check_dims(p);
    if (response.empty()) {
        throw std::invalid_argument("policy: response must be non-empty");
    }
    check_tokens(p, prompt, "prompt");
    check_tokens(p, response, "response");

    // Memoize per-row normalizers for this call; responses revisit contexts.
    std::vector<double> lse(static_cast<std::size_t>(p.num_contexts()),
                            std::numeric_limits<double>::quiet_NaN());
    int prev = prompt.empty() ? 0 : prompt.back();
    double total = 0.0;
    for (int tok : response) {
        const int ctx = context_of(p, prev);
        auto& cached = lse[static_cast<std::size_t>(ctx)];
        if (std::isnan(cached)) {
            cached = row_logsumexp_value(p, ctx);
        }
        total += p.logit(ctx, tok) - cached;
        prev = tok;
    }
    return total;
}

PolicyOnTape::PolicyOnTape(ad::Tape& tape, const TabularPolicy& p)
    : tape_(&tape), policy_(&p) {
    check_dims(p);
    params_.reserve(p.logits.size());
    for (double v : p.logits) {
        params_.push_back(tape.param(v));
    }
    lse_cache_.assign(static_cast<std::size_t>(p.num_contexts()), std::nullopt);
}

ad::Var PolicyOnTape::row_logsumexp(int ctx) {
    auto& cached = lse_cache_[static_cast<std::size_t>(ctx)];
    if (cached) {
        return *cached;
    }
    const TabularPolicy& p = *policy_;
    const std::size_t base = static_cast<std::size_t>(ctx) *
                             static_cast<std::size_t>(p.vocab_size);
    // Max-shift by the row max as a plain constant; the shift cancels in the
    // log-softmax values and leaves the gradients exact.
    double m = params_[base].value();
    for (int t = 1; t < p.vocab_size; ++t) {
        m = std::max(m, params_[base + static_cast<std::size_t>(t)].value());
    }
    ad::Var sum = exp(params_[base] - m);
    for (int t = 1; t < p.vocab_size; ++t) {
        sum = sum + exp(params_[base + static_cast<std::size_t>(t)] - m);
    }
    const ad::Var lse = m + log(sum);
    cached = lse;
    return lse;
}

ad::Var PolicyOnTape::sequence_logprob(const std::vector<int>& prompt,
                                       const std::vector<int>& response) {
    const TabularPolicy& p = *policy_;
    if (response.empty()) {
        throw std::invalid_argument("policy: response must be non-empty");
    }
    check_tokens(p, prompt, "prompt");
    check_tokens(p, response, "response");

    int prev = prompt.empty() ? 0 : prompt.back();
    std::optional<ad::Var> total;
    for (int tok : response) {
        const int ctx = context_of(p, prev);
        const std::size_t idx = static_cast<std::size_t>(ctx) *
                                    static_cast<std::size_t>(p.vocab_size) +
                                static_cast<std::size_t>(tok);
        const ad::Var term = params_[idx] - row_logsumexp(ctx);
        total = total ? (*total + term) : term;
        prev = tok;
    }
    return *total;
}

losses::PairLogProbs pair_logprobs(const TabularPolicy& pol,
                                   const TabularPolicy& ref,
                                   const data::PreferencePair& pair) {
    losses::PairLogProbs lp;
    lp.logp_w_pol = sequence_logprob(pol, pair.prompt, pair.chosen);
    lp.logp_l_pol = sequence_logprob(pol, pair.prompt, pair.rejected);
    lp.logp_w_ref = sequence_logprob(ref, pair.prompt, pair.chosen);
    lp.logp_l_ref = sequence_logprob(ref, pair.prompt, pair.rejected);
    lp.len_w = static_cast<int>(pair.chosen.size());
    lp.len_l = static_cast<int>(pair.rejected.size());
    return lp;
}

double kl_margin(const TabularPolicy& pol, const TabularPolicy& ref,
                 const data::PreferencePair& pair, double beta) {
    const losses::PairLogProbs lp = pair_logprobs(pol, ref, pair);
    return beta * ((lp.logp_w_pol - lp.logp_w_ref) -
                   (lp.logp_l_pol - lp.logp_l_ref));
}

void save_policy(const TabularPolicy& p, const std::filesystem::path& path) {
    p.validate();
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("policy: cannot open for writing: " +
                                 path.string());
    }
    json j;
    j["vocab_size"] = p.vocab_size;
    j["context_order"] = p.context_order;
    j["logits"] = p.logits;
    out << j.dump(2) << '\n';
    if (!out) {
        throw std::runtime_error("policy: write failed: " + path.string());
    }
}

TabularPolicy load_policy(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("policy: cannot open: " + path.string());
    }
    json j = json::parse(in, nullptr, /*allow_exceptions=*/false);
    if (j.is_discarded() || !j.is_object() || !j.contains("vocab_size") ||
        !j.contains("context_order") || !j.contains("logits") ||
        !j["logits"].is_array()) {
        throw std::runtime_error("policy: malformed checkpoint: " +
                                 path.string());
    }
    TabularPolicy p;
    p.vocab_size = j["vocab_size"].get<int>();
    p.context_order = j["context_order"].get<int>();
    p.logits = j["logits"].get<std::vector<double>>();
    p.validate();
    return p;
}

std::uint64_t checksum(const TabularPolicy& p) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    const auto mix = [&h](const void* bytes, std::size_t n) {
        const auto* b = static_cast<const unsigned char*>(bytes);
        for (std::size_t i = 0; i < n; ++i) {
            h ^= b[i];
            h *= 0x100000001b3ULL;
        }
    };
    mix(&p.vocab_size, sizeof(p.vocab_size));
    mix(&p.context_order, sizeof(p.context_order));
    for (double v : p.logits) {
        mix(&v, sizeof(v));
    }
    return h;
}

}  // namespace preflab::policy
