// Copyright 2026 The preflab authors
// SPDX-License-Identifier: Apache-2.0
//
// preflab: a desk-scale laboratory for self-adaptive pairwise
// preference-optimization losses.
//
// Subcommands:
//   run        train one configuration, emit metrics CSV + JSON summary
//   sweep      run a methods x lrs x betas grid with win-fraction aggregation
//   gradcheck  verify gradient balance and the finite-difference oracle
//   gen-data   generate a synthetic preference dataset (JSONL)
//
// Exit codes: 0 success, 2 configuration/input error, 3 training divergence,
// 4 gradcheck tolerance breach, 1 unexpected internal error.

#include <CLI11.hpp>

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "commands.hpp"

int main(int argc, char** argv) {
    CLI::App app{"preflab: self-adaptive preference-optimization lab"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_path;
    std::uint64_t seed = 0;
    bool seed_set = false;
    std::size_t workers = 1;

    CLI::App* run = app.add_subcommand("run", "Train one configuration");
    run->add_option("--config", config_path, "JSON experiment config")
        ->required();
    run->add_option("--out", out_path, "Output directory")->required();
    run->add_option("--seed", seed, "Override train.seed")
        ->each([&](const std::string&) { seed_set = true; });

    CLI::App* sweep =
        app.add_subcommand("sweep", "Run an lr x beta x method grid");
    sweep->add_option("--config", config_path, "JSON sweep config")->required();
    sweep->add_option("--out", out_path, "Output directory")->required();
    sweep->add_option("--workers", workers, "Parallel cell workers")
        ->default_val(1);
    sweep->add_option("--seed", seed, "Override the base seed")
        ->each([&](const std::string&) { seed_set = true; });

    std::size_t gc_n = 1000;
    std::uint64_t gc_seed = 0;
    std::vector<std::string> gc_methods;
    std::string gc_out;
    CLI::App* gradcheck = app.add_subcommand(
        "gradcheck", "Verify gradient balance and finite differences");
    gradcheck->add_option("--n", gc_n, "Random pairs per method")
        ->default_val(1000);
    gradcheck->add_option("--seed", gc_seed, "Sampling seed")->default_val(0);
    gradcheck
        ->add_option("--methods", gc_methods,
                     "Methods to check (default: all 13)")
        ->delimiter(',');
    gradcheck->add_option("--out", gc_out, "JSON report path (default stdout)");

    std::uint64_t gd_seed = 0;
    std::size_t gd_n = 0;
    int gd_vocab = 0;
    int gd_len_min = 1;
    int gd_len_max = 1;
    int gd_good = 0;
    std::string gd_split = "train";
    CLI::App* gen =
        app.add_subcommand("gen-data", "Generate a synthetic dataset");
    gen->add_option("--seed", gd_seed, "Generator seed")->default_val(0);
    gen->add_option("--n-pairs", gd_n, "Number of preference pairs")
        ->required();
    gen->add_option("--vocab-size", gd_vocab, "Vocabulary size (>= 2)")
        ->required();
    gen->add_option("--len-min", gd_len_min, "Minimum response length")
        ->required();
    gen->add_option("--len-max", gd_len_max, "Maximum response length")
        ->required();
    gen->add_option("--good-token", gd_good, "Planted preference token")
        ->required();
    gen->add_option("--split", gd_split, "Split tag")->default_val("train");
    gen->add_option("--out", out_path, "Output JSONL path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {
            return app.exit(e);  // --help
        }
        std::cerr << e.what() << "\n";
        return preflab::cli::kExitConfig;
    }

    const std::optional<std::uint64_t> seed_override =
        seed_set ? std::optional<std::uint64_t>(seed) : std::nullopt;

    if (run->parsed()) {
        return preflab::cli::cmd_run(config_path, out_path, seed_override);
    }
    if (sweep->parsed()) {
        return preflab::cli::cmd_sweep(config_path, out_path, workers,
                                       seed_override);
    }
    if (gradcheck->parsed()) {
        return preflab::cli::cmd_gradcheck(
            gc_n, gc_seed, gc_methods,
            gc_out.empty() ? std::nullopt
                           : std::optional<std::filesystem::path>(gc_out));
    }
    if (gen->parsed()) {
        return preflab::cli::cmd_gen_data(gd_seed, gd_n, gd_vocab, gd_len_min,
                                          gd_len_max, gd_good, gd_split,
                                          out_path);
    }
    return preflab::cli::kExitConfig;
}
