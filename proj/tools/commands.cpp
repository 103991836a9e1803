// Copyright 2026 The preflab authors
// SPDX-License-Identifier: Apache-2.0

#include "commands.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <thread>

#include "config.hpp"
#include "preflab/gradcheck.hpp"
#include "preflab/trainer.hpp"

namespace preflab::cli {

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("cannot open for writing: " + path.string());
    }
    out << text;
    if (!out) {
        throw std::runtime_error("write failed: " + path.string());
    }
}

std::string format_g(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%g", v);
    return buf;
}

struct CellResult {
    bool ok = false;
    std::string error;
    std::string csv_name;
    trainer::StepMetrics final{};
};

struct Cell {
    std::size_t index = 0;
    losses::Method method{};
    double lr = 0.0;
    double beta = 0.0;
    std::uint64_t seed = 0;
};

// Per-metric comparison direction for win counting.
struct WinMetric {
    const char* name;
    bool lower_is_better;
    double (*get)(const trainer::StepMetrics&);
};

constexpr WinMetric kWinMetrics[] = {
    {"eval_loss", true, [](const trainer::StepMetrics& m) { return m.eval_loss; }},
    {"reward_accuracy", false,
     [](const trainer::StepMetrics& m) { return m.reward_accuracy; }},
    {"reward_margin_mean", false,
     [](const trainer::StepMetrics& m) { return m.reward_margin_mean; }},
    {"kl_margin_mean", false,
     [](const trainer::StepMetrics& m) { return m.kl_margin_mean; }},
};

int run_into_dir(const RunConfig& cfg, const data::Dataset& train_ds,
                 const data::Dataset& eval_ds,
                 const std::filesystem::path& out_dir) {
    const trainer::TrainResult result =
        trainer::train(train_ds, eval_ds, cfg.loss, cfg.train);

    trainer::write_metrics_csv(result.metrics, out_dir / "metrics.csv");
    policy::save_policy(result.policy, out_dir / "policy.json");

    json summary;
    summary["schema_version"] = kSchemaVersion;
    summary["method"] = std::string(losses::method_name(cfg.loss.method));
    summary["loss"] = loss_spec_to_json(cfg.loss);
    summary["train"] = train_config_to_json(cfg.train);
    summary["dataset"] = {{"vocab_size", train_ds.vocab_size},
                          {"train_pairs", train_ds.pairs.size()},
                          {"eval_pairs", eval_ds.pairs.size()}};
    summary["total_steps"] = result.total_steps;
    summary["final"] = metrics_to_json(result.metrics.back());
    json series = json::array();
    for (const trainer::StepMetrics& m : result.metrics) {
        series.push_back(metrics_to_json(m));
    }
    summary["series"] = series;
    write_text(out_dir / "summary.json", summary.dump(2) + "\n");
    return kExitOk;
}

}  // namespace

int cmd_run(const std::filesystem::path& config_path,
            const std::filesystem::path& out_dir,
            std::optional<std::uint64_t> seed_override) {
    RunConfig cfg;
    data::Dataset train_ds;
    data::Dataset eval_ds;
    try {
        cfg = parse_run_config(load_json_file(config_path));
        if (seed_override) {
            cfg.train.seed = *seed_override;
        }
        cfg.loss.validate();
        cfg.train.validate();
        train_ds = cfg.train_source.resolve();
        eval_ds = cfg.eval_source.resolve();
        std::filesystem::create_directories(out_dir);
    } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    }

    try {
        return run_into_dir(cfg, train_ds, eval_ds, out_dir);
    } catch (const trainer::DivergenceError& e) {
        std::cerr << "training diverged: " << e.what() << "\n";
        return kExitDiverged;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInternal;
    }
}

int cmd_sweep(const std::filesystem::path& config_path,
              const std::filesystem::path& out_dir, std::size_t workers,
              std::optional<std::uint64_t> seed_override) {
    SweepConfig cfg;
    data::Dataset train_ds;
    data::Dataset eval_ds;
    try {
        cfg = parse_sweep_config(load_json_file(config_path));
        if (seed_override) {
            cfg.train.seed = *seed_override;
        }
        train_ds = cfg.train_source.resolve();
        eval_ds = cfg.eval_source.resolve();
        std::filesystem::create_directories(out_dir);
    } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    }

    // Fixed cell order: methods (outer), then lrs, then betas. Matched
    // (lr, beta) cells share a seed across methods, so method comparisons see
    // identical data order and identical methods tie exactly.
    std::vector<Cell> cells;
    for (std::size_t mi = 0; mi < cfg.methods.size(); ++mi) {
        for (std::size_t li = 0; li < cfg.lrs.size(); ++li) {
            for (std::size_t bi = 0; bi < cfg.betas.size(); ++bi) {
                Cell c;
                c.index = cells.size();
                c.method = cfg.methods[mi];
                c.lr = cfg.lrs[li];
                c.beta = cfg.betas[bi];
                c.seed = cfg.train.seed + li * cfg.betas.size() + bi;
                cells.push_back(c);
            }
        }
    }

    std::vector<CellResult> results(cells.size());
    std::atomic<std::size_t> next{0};
    const auto run_cells = [&]() {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= cells.size()) {
                return;
            }
            const Cell& cell = cells[i];
            CellResult& res = results[i];
            char name[160];
            std::snprintf(name, sizeof(name), "cell_%03zu_%s_lr%s_beta%s.csv",
                          cell.index,
                          std::string(losses::method_name(cell.method)).c_str(),
                          format_g(cell.lr).c_str(),
                          format_g(cell.beta).c_str());
            res.csv_name = name;
            try {
                losses::LossSpec spec = cfg.loss;
                spec.method = cell.method;
                spec.beta = cell.beta;
                trainer::TrainConfig tc = cfg.train;
                tc.lr = cell.lr;
                tc.seed = cell.seed;
                spec.validate();
                tc.validate();
                const trainer::TrainResult r =
                    trainer::train(train_ds, eval_ds, spec, tc);
                trainer::write_metrics_csv(r.metrics, out_dir / res.csv_name);
                res.final = r.metrics.back();
                res.ok = true;
            } catch (const std::exception& e) {
                res.ok = false;
                res.error = e.what();
            }
        }
    };

    const std::size_t n_threads =
        std::max<std::size_t>(1, std::min(workers, cells.size()));
    if (n_threads == 1) {
        run_cells();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(n_threads);
        for (std::size_t t = 0; t < n_threads; ++t) {
            pool.emplace_back(run_cells);
        }
        for (std::thread& t : pool) {
            t.join();
        }
    }

    json summary;
    summary["schema_version"] = kSchemaVersion;
    summary["base_seed"] = cfg.train.seed;
    summary["loss"] = loss_spec_to_json(cfg.loss);
    summary["train"] = train_config_to_json(cfg.train);
    summary["grid"] = json::array();
    for (std::size_t i = 0; i < cells.size(); ++i) {
        json cell;
        cell["cell"] = cells[i].index;
        cell["method"] = std::string(losses::method_name(cells[i].method));
        cell["lr"] = cells[i].lr;
        cell["beta"] = cells[i].beta;
        cell["seed"] = cells[i].seed;
        cell["csv"] = results[i].csv_name;
        if (results[i].ok) {
            cell["final"] = metrics_to_json(results[i].final);
        } else {
            cell["error"] = results[i].error;
        }
        summary["grid"].push_back(cell);
    }

    // Win fractions across matched (lr, beta) cells, strict inequality.
    const std::size_t cells_per_method = cfg.lrs.size() * cfg.betas.size();
    const auto cell_at = [&](std::size_t mi, std::size_t k) -> const CellResult& {
        return results[mi * cells_per_method + k];
    };
    summary["win_fractions"] = json::array();
    for (std::size_t a = 0; a < cfg.methods.size(); ++a) {
        for (std::size_t b = 0; b < cfg.methods.size(); ++b) {
            if (a == b) {
                continue;
            }
            json entry;
            entry["method_a"] = std::string(losses::method_name(cfg.methods[a]));
            entry["method_b"] = std::string(losses::method_name(cfg.methods[b]));
            std::size_t compared = 0;
            json wins;
            for (const WinMetric& metric : kWinMetrics) {
                std::size_t won = 0;
                compared = 0;
                for (std::size_t k = 0; k < cells_per_method; ++k) {
                    const CellResult& ra = cell_at(a, k);
                    const CellResult& rb = cell_at(b, k);
                    if (!ra.ok || !rb.ok) {
                        continue;
                    }
                    ++compared;
                    const double va = metric.get(ra.final);
                    const double vb = metric.get(rb.final);
                    const bool win =
                        metric.lower_is_better ? (va < vb) : (va > vb);
                    if (win) {
                        ++won;
                    }
                }
                wins[metric.name] =
                    compared > 0
                        ? static_cast<double>(won) / static_cast<double>(compared)
                        : 0.0;
            }
            entry["cells_compared"] = compared;
            entry["wins"] = wins;
            summary["win_fractions"].push_back(entry);
        }
    }

    write_text(out_dir / "sweep_summary.json", summary.dump(2) + "\n");

    return kExitOk;
}

int cmd_gradcheck(std::size_t n, std::uint64_t seed,
                  const std::vector<std::string>& methods,
                  const std::optional<std::filesystem::path>& out_path) {
    std::vector<losses::Method> selected;
    try {
        if (n == 0) {
            throw ConfigError("gradcheck: n must be >= 1");
        }
        if (methods.empty()) {
            selected.assign(std::begin(losses::kAllMethods),
                            std::end(losses::kAllMethods));
        } else {
            for (const std::string& name : methods) {
                const auto m = losses::method_from_name(name);
                if (!m) {
                    throw ConfigError("gradcheck: unknown method '" + name + "'");
                }
                selected.push_back(*m);
            }
        }
    } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    }

    json report;
    report["schema_version"] = kSchemaVersion;
    report["n"] = n;
    report["seed"] = seed;
    report["tolerances"] = {{"balance", kBalanceTolerance},
                            {"fd", kFdTolerance}};
    report["methods"] = json::array();
    bool all_pass = true;
    for (losses::Method m : selected) {
        losses::LossSpec spec;
        spec.method = m;
        spec.beta = 0.1;
        spec.gamma = 0.5;
        spec.tau = 0.1;
        spec.len_penalty_alpha = 0.01;
        const gradcheck::SweepSummary s =
            gradcheck::random_balance_sweep(n, seed, spec);
        const bool adaptive = losses::is_adaptive(m);
        const bool balance_ok =
            !adaptive || s.max_unclamped_deviation < kBalanceTolerance;
        const bool fd_ok = s.fd_max_rel_err < kFdTolerance;
        const bool pass = balance_ok && fd_ok;
        all_pass = all_pass && pass;

        json entry;
        entry["method"] = std::string(losses::method_name(m));
        entry["adaptive"] = adaptive;
        entry["n_unclamped"] = s.n_unclamped;
        entry["clamp_rate"] = s.clamp_rate;
        entry["max_unclamped_deviation"] = s.max_unclamped_deviation;
        entry["fd_max_rel_err"] = s.fd_max_rel_err;
        entry["balance_asserted"] = adaptive;
        entry["pass"] = pass;
        report["methods"].push_back(entry);
    }
    report["pass"] = all_pass;

    try {
        if (out_path) {
            write_text(*out_path, report.dump(2) + "\n");
        } else {
            std::cout << report.dump(2) << "\n";
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInternal;
    }
    return all_pass ? kExitOk : kExitTolerance;
}

int cmd_gen_data(std::uint64_t seed, std::size_t n_pairs, int vocab_size,
                 int len_min, int len_max, int good_token,
                 const std::string& split,
                 const std::filesystem::path& out_path) {
    try {
        data::GenParams p;
        p.seed = seed;
        p.n_pairs = n_pairs;
        p.vocab_size = vocab_size;
        p.len_min = len_min;
        p.len_max = len_max;
        p.good_token = good_token;
        p.split = split;
        const data::Dataset ds = data::generate(p);
        if (out_path.has_parent_path()) {
            std::filesystem::create_directories(out_path.parent_path());
        }
        data::save(ds, out_path);
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInternal;
    }
    return kExitOk;
}

}  // namespace preflab::cli
