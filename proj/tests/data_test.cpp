// Copyright 2026 The preflab authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>

#include "preflab/data.hpp"
#include "testutil.hpp"

using namespace preflab;
using data::Dataset;
using data::GenParams;

namespace {

GenParams base_params() {
    GenParams p;
    p.seed = 0;
    p.n_pairs = 200;
    p.vocab_size = 8;
    p.len_min = 2;
    p.len_max = 8;
    p.good_token = 0;
    return p;
}

int count_token(const std::vector<int>& v, int tok) {
    return static_cast<int>(std::count(v.begin(), v.end(), tok));
}

}  // namespace

TEST_CASE("generation is deterministic and serialization is byte-identical") {
    const Dataset a = data::generate(base_params());
    const Dataset b = data::generate(base_params());
    testutil::TempDir dir;
    data::save(a, dir / "a.jsonl");
    data::save(b, dir / "b.jsonl");
    const std::string bytes_a = testutil::read_file(dir / "a.jsonl");
    CHECK(bytes_a == testutil::read_file(dir / "b.jsonl"));
    CHECK(!bytes_a.empty());
}

TEST_CASE("planted rule: chosen strictly beats rejected on the good token") {
    const GenParams p = base_params();
    const Dataset ds = data::generate(p);
    REQUIRE(ds.pairs.size() == p.n_pairs);
    int unequal_lengths = 0;
    for (const data::PreferencePair& pair : ds.pairs) {
        CHECK(count_token(pair.chosen, p.good_token) >
              count_token(pair.rejected, p.good_token));
        CHECK(!pair.chosen.empty());
        CHECK(!pair.rejected.empty());
        CHECK(pair.chosen != pair.rejected);
        CHECK(pair.prompt.size() == 1);
        const auto in_range = [&](const std::vector<int>& v) {
            return std::all_of(v.begin(), v.end(), [&](int t) {
                return t >= 0 && t < p.vocab_size;
            });
        };
        CHECK(in_range(pair.prompt));
        CHECK(in_range(pair.chosen));
        CHECK(in_range(pair.rejected));
        CHECK(pair.chosen.size() >= static_cast<std::size_t>(p.len_min));
        CHECK(pair.chosen.size() <= static_cast<std::size_t>(p.len_max));
        if (pair.chosen.size() != pair.rejected.size()) {
            ++unequal_lengths;
        }
    }
    // Independent length draws: most pairs should differ in length.
    CHECK(unequal_lengths > static_cast<int>(p.n_pairs / 2));
}

TEST_CASE("small fixed generation satisfies all invariants") {
    GenParams p;
    p.seed = 0;
    p.n_pairs = 4;
    p.vocab_size = 4;
    p.len_min = 2;
    p.len_max = 6;
    p.good_token = 1;
    const Dataset ds = data::generate(p);
    CHECK(ds.pairs.size() == 4);
    CHECK_NOTHROW(ds.validate());
}

TEST_CASE("invalid generation parameters are rejected") {
    GenParams p = base_params();
    p.vocab_size = 1;
    CHECK_THROWS_AS(data::generate(p), std::invalid_argument);
    p = base_params();
    p.len_min = 0;
    CHECK_THROWS_AS(data::generate(p), std::invalid_argument);
    p = base_params();
    p.len_min = 5;
    p.len_max = 4;
    CHECK_THROWS_AS(data::generate(p), std::invalid_argument);
    p = base_params();
    p.good_token = 8;
    CHECK_THROWS_AS(data::generate(p), std::invalid_argument);
}

TEST_CASE("save/load round-trip is the identity") {
    GenParams p = base_params();
    p.n_pairs = 37;
    p.split = "eval";
    const Dataset ds = data::generate(p);
    testutil::TempDir dir;
    data::save(ds, dir / "ds.jsonl");
    const Dataset back = data::load(dir / "ds.jsonl");
    CHECK(back.vocab_size == ds.vocab_size);
    CHECK(back.split == "eval");
    REQUIRE(back.pairs.size() == ds.pairs.size());
    for (std::size_t i = 0; i < ds.pairs.size(); ++i) {
        CHECK(back.pairs[i].prompt == ds.pairs[i].prompt);
        CHECK(back.pairs[i].chosen == ds.pairs[i].chosen);
        CHECK(back.pairs[i].rejected == ds.pairs[i].rejected);
    }
}

TEST_CASE("malformed line is reported with its line number") {
    testutil::TempDir dir;
    const auto path = dir / "bad.jsonl";
    testutil::write_file(path,
                         "{\"vocab_size\":4,\"split\":\"train\"}\n"
                         "{\"prompt\":[0],\"chosen\":[1],\"rejected\":[2]}\n"
                         "not json at all\n");
    try {
        data::load(path);
        FAIL("expected ParseError");
    } catch (const data::ParseError& e) {
        CHECK(std::string(e.what()).find("line 3") != std::string::npos);
    }
}

TEST_CASE("vocabulary violation is reported with its line number") {
    testutil::TempDir dir;
    const auto path = dir / "bad.jsonl";
    testutil::write_file(path,
                         "{\"vocab_size\":4,\"split\":\"train\"}\n"
                         "{\"prompt\":[0],\"chosen\":[9],\"rejected\":[2]}\n");
    try {
        data::load(path);
        FAIL("expected ValidationError");
    } catch (const data::ValidationError& e) {
        CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
}

TEST_CASE("a header-only file is a valid empty dataset") {
    testutil::TempDir dir;
    const auto path = dir / "empty.jsonl";
    testutil::write_file(path, "{\"vocab_size\":4,\"split\":\"train\"}\n");
    const Dataset ds = data::load(path);
    CHECK(ds.vocab_size == 4);
    CHECK(ds.pairs.empty());

    // And an empty dataset saves and round-trips.
    data::save(ds, dir / "empty2.jsonl");
    CHECK(data::load(dir / "empty2.jsonl").pairs.empty());
}

TEST_CASE("a file without a header is rejected") {
    testutil::TempDir dir;
    const auto path = dir / "noheader.jsonl";
    testutil::write_file(path, "");
    CHECK_THROWS_AS(data::load(path), data::ParseError);
    testutil::write_file(path, "{\"prompt\":[0],\"chosen\":[1],\"rejected\":[2]}\n");
    CHECK_THROWS_AS(data::load(path), data::ParseError);
}
