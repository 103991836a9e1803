// Copyright 2026 The preflab authors
// SPDX-License-Identifier: Apache-2.0

#include "preflab/data.hpp"

#include <algorithm>
#include <fstream>

#include <nlohmann/json.hpp>

#include "preflab/rng.hpp"

namespace preflab::data {

using json = nlohmann::ordered_json;

namespace {

void validate_tokens(const std::vector<int>& tokens, int vocab_size,
                     const char* what) {
    for (int t : tokens) {
        if (t < 0 || t >= vocab_size) {
            throw std::invalid_argument(std::string("dataset: token in ") +
                                        what + " outside [0, vocab_size)");
        }
    }
}

void validate_pair(const PreferencePair& p, int vocab_size) {
    if (p.chosen.empty() || p.rejected.empty()) {
        throw std::invalid_argument("dataset: responses must be non-empty");
    }
    if (p.chosen == p.rejected) {
        throw std::invalid_argument("dataset: chosen == rejected");
    }
    validate_tokens(p.prompt, vocab_size, "prompt");
    validate_tokens(p.chosen, vocab_size, "chosen");
    validate_tokens(p.rejected, vocab_size, "rejected");
}

int count_token(const std::vector<int>& tokens, int token) {
    return static_cast<int>(std::count(tokens.begin(), tokens.end(), token));
}

std::vector<int> sample_response(rng::SplitMix64& r, const GenParams& p) {
    const auto len = static_cast<std::size_t>(r.next_int(p.len_min, p.len_max));
    std::vector<int> tokens(len);
    for (auto& t : tokens) {
        t = static_cast<int>(r.next_below(static_cast<std::uint64_t>(p.vocab_size)));
    }
    return tokens;
}

json pair_to_json(const PreferencePair& p) {
    json j;
    j["prompt"] = p.prompt;
    j["chosen"] = p.chosen;
    j["rejected"] = p.rejected;
    return j;
}

std::vector<int> tokens_from_json(const json& j, const char* key,
                                  std::size_t line_no) {
    if (!j.contains(key) || !j[key].is_array()) {
        throw ParseError("dataset line " + std::to_string(line_no) +
                         ": missing integer array '" + key + "'");
    }
    std::vector<int> out;
    out.reserve(j[key].size());
    for (const auto& v : j[key]) {
        if (!v.is_number_integer()) {
            throw ParseError("dataset line " + std::to_string(line_no) +
                             ": non-integer token in '" + key + "'");
        }
        out.push_back(v.get<int>());
    }
    return out;
}

}  // namespace

void Dataset::validate() const {
    if (vocab_size < 2) {
        throw std::invalid_argument("dataset: vocab_size must be >= 2");
    }
    for (const PreferencePair& p : pairs) {
        validate_pair(p, vocab_size);
    }
}

Dataset generate(const GenParams& params) {
    if (params.vocab_size < 2) {
        throw std::invalid_argument("generate: vocab_size must be >= 2");
    }
    if (params.len_min < 1 || params.len_max < params.len_min) {
        throw std::invalid_argument("generate: need 1 <= len_min <= len_max");
    }
    if (params.good_token < 0 || params.good_token >= params.vocab_size) {
        throw std::invalid_argument("generate: good_token outside vocabulary");
    }

    rng::SplitMix64 r(params.seed);
    Dataset ds;
    ds.vocab_size = params.vocab_size;
    ds.split = params.split;
    ds.pairs.reserve(params.n_pairs);

    for (std::size_t i = 0; i < params.n_pairs; ++i) {
        PreferencePair pair;
        pair.prompt = {static_cast<int>(
            r.next_below(static_cast<std::uint64_t>(params.vocab_size)))};
        std::vector<int> a = sample_response(r, params);
        std::vector<int> b = sample_response(r, params);
        // Ties on the planted signal are broken by resampling the rejected
        // side until the counts differ.
        while (count_token(a, params.good_token) ==
               count_token(b, params.good_token)) {
            b = sample_response(r, params);
        }
        if (count_token(a, params.good_token) >
            count_token(b, params.good_token)) {
            pair.chosen = std::move(a);
            pair.rejected = std::move(b);
        } else {
            pair.chosen = std::move(b);
            pair.rejected = std::move(a);
        }
        ds.pairs.push_back(std::move(pair));
    }
    return ds;
}

void save(const Dataset& ds, const std::filesystem::path& path) {
    ds.validate();
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("dataset: cannot open for writing: " +
                                 path.string());
    }
    json header;
    header["vocab_size"] = ds.vocab_size;
    header["split"] = ds.split;
    out << header.dump() << '\n';
    for (const PreferencePair& p : ds.pairs) {
        out << pair_to_json(p).dump() << '\n';
    }
    if (!out) {
        throw std::runtime_error("dataset: write failed: " + path.string());
    }
}

Dataset load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("dataset: cannot open: " + path.string());
    }

    Dataset ds;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) {
            continue;
        }
        json j = json::parse(line, nullptr, /*allow_exceptions=*/false);
        if (j.is_discarded() || !j.is_object()) {
            throw ParseError("dataset line " + std::to_string(line_no) +
                             ": malformed JSON");
        }
        if (line_no == 1) {
            if (!j.contains("vocab_size") || !j["vocab_size"].is_number_integer() ||
                !j.contains("split") || !j["split"].is_string()) {
                throw ParseError(
                    "dataset line 1: header must carry vocab_size and split");
            }
            ds.vocab_size = j["vocab_size"].get<int>();
            ds.split = j["split"].get<std::string>();
            if (ds.vocab_size < 2) {
                throw ValidationError("dataset line 1: vocab_size must be >= 2");
            }
            continue;
        }
        PreferencePair p;
        p.prompt = tokens_from_json(j, "prompt", line_no);
        p.chosen = tokens_from_json(j, "chosen", line_no);
        p.rejected = tokens_from_json(j, "rejected", line_no);
        try {
            validate_pair(p, ds.vocab_size);
        } catch (const std::invalid_argument& e) {
            throw ValidationError("dataset line " + std::to_string(line_no) +
                                  ": " + e.what());
        }
        ds.pairs.push_back(std::move(p));
    }
    if (line_no == 0) {
        throw ParseError("dataset line 1: missing header");
    }
    return ds;
}

}  // namespace preflab::data
