// Copyright 2026 The preflab authors
// SPDX-License-Identifier: Apache-2.0
//
// Synthetic preference datasets with a planted rule: within each pair, the
// chosen response contains strictly more occurrences of a designated "good"
// token than the rejected one. The planted rule makes reward accuracy a
// learnable, checkable signal at toy scale.

#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace preflab::data {

struct PreferencePair {
    std::vector<int> prompt;   // may be empty for unconditional tasks
    std::vector<int> chosen;   // y_w, non-empty
    std::vector<int> rejected; // y_l, non-empty, != chosen
};

struct Dataset {
    int vocab_size = 0;
    std::string split = "train";
    std::vector<PreferencePair> pairs;

    // Throws std::invalid_argument on any invariant violation: empty or equal
    // responses, or tokens outside [0, vocab_size).
    void validate() const;
};

struct GenParams {
    std::uint64_t seed = 0;
    std::size_t n_pairs = 0;
    int vocab_size = 0;
    int len_min = 1;
    int len_max = 1;
    int good_token = 0;
    std::string split = "train";
};

// Deterministic generation from a SplitMix64 stream seeded with params.seed.
// Per pair the draw order is: one prompt token, then length and tokens of
// response A, then length and tokens of response B; B is resampled in full
// while its good-token count ties with A's. The higher-count response becomes
// the chosen one. Lengths are uniform in [len_min, len_max] independently per
// response, so pairs have unequal lengths with high probability.
Dataset generate(const GenParams& params);

class ParseError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Line-delimited JSON: a header object {"vocab_size": V, "split": S} followed
// by one {"prompt": [...], "chosen": [...], "rejected": [...]} object per
// pair. Serialization is byte-deterministic for a given dataset.
void save(const Dataset& ds, const std::filesystem::path& path);

// Throws ParseError (malformed JSON / wrong structure, naming the line) or
// ValidationError (invariant violations such as out-of-range tokens, naming
// the line).
Dataset load(const std::filesystem::path& path);

}  // namespace preflab::data
