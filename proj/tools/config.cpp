// Copyright 2026 The preflab authors
// SPDX-License-Identifier: Apache-2.0

#include "config.hpp"

#include <fstream>
#include <initializer_list>
#include <string_view>

namespace preflab::cli {

namespace {

void expect_keys(const json& j, const char* ctx,
                 std::initializer_list<std::string_view> allowed) {
    if (!j.is_object()) {
        throw ConfigError(std::string(ctx) + ": expected a JSON object");
    }
    for (const auto& item : j.items()) {
        bool known = false;
        for (std::string_view k : allowed) {
            if (item.key() == k) {
                known = true;
                break;
            }
        }
        if (!known) {
            throw ConfigError(std::string(ctx) + ": unknown key '" + item.key() +
                              "'");
        }
    }
}

double get_number(const json& j, const char* ctx, const char* key,
                  double fallback) {
    if (!j.contains(key)) {
        return fallback;
    }
    if (!j[key].is_number()) {
        throw ConfigError(std::string(ctx) + "." + key + ": expected a number");
    }
    return j[key].get<double>();
}

std::int64_t get_integer(const json& j, const char* ctx, const char* key,
                         std::int64_t fallback) {
    if (!j.contains(key)) {
        return fallback;
    }
    if (!j[key].is_number_integer()) {
        throw ConfigError(std::string(ctx) + "." + key +
                          ": expected an integer");
    }
    return j[key].get<std::int64_t>();
}

bool get_bool(const json& j, const char* ctx, const char* key, bool fallback) {
    if (!j.contains(key)) {
        return fallback;
    }
    if (!j[key].is_boolean()) {
        throw ConfigError(std::string(ctx) + "." + key + ": expected a boolean");
    }
    return j[key].get<bool>();
}

std::string get_string(const json& j, const char* ctx, const char* key,
                       const std::string& fallback) {
    if (!j.contains(key)) {
        return fallback;
    }
    if (!j[key].is_string()) {
        throw ConfigError(std::string(ctx) + "." + key + ": expected a string");
    }
    return j[key].get<std::string>();
}

void check_schema_version(const json& j) {
    if (!j.contains("schema_version") ||
        !j["schema_version"].is_number_integer() ||
        j["schema_version"].get<int>() != kSchemaVersion) {
        throw ConfigError("config: schema_version must be " +
                          std::to_string(kSchemaVersion));
    }
}

data::GenParams parse_gen_params(const json& j, const char* ctx,
                                 const std::string& default_split) {
    expect_keys(j, ctx,
                {"seed", "n_pairs", "vocab_size", "len_min", "len_max",
                 "good_token", "split"});
    data::GenParams p;
    p.seed = static_cast<std::uint64_t>(get_integer(j, ctx, "seed", 0));
    p.n_pairs = static_cast<std::size_t>(get_integer(j, ctx, "n_pairs", 0));
    p.vocab_size = static_cast<int>(get_integer(j, ctx, "vocab_size", 0));
    p.len_min = static_cast<int>(get_integer(j, ctx, "len_min", 1));
    p.len_max = static_cast<int>(get_integer(j, ctx, "len_max", 1));
    p.good_token = static_cast<int>(get_integer(j, ctx, "good_token", 0));
    p.split = get_string(j, ctx, "split", default_split);
    return p;
}

DatasetSource parse_dataset_source(const json& j, const char* ctx,
                                   const std::string& default_split) {
    expect_keys(j, ctx, {"path", "generate"});
    DatasetSource src;
    if (j.contains("path") == j.contains("generate")) {
        throw ConfigError(std::string(ctx) +
                          ": exactly one of 'path' or 'generate' is required");
    }
    if (j.contains("path")) {
        if (!j["path"].is_string()) {
            throw ConfigError(std::string(ctx) + ".path: expected a string");
        }
        src.path = std::filesystem::path(j["path"].get<std::string>());
    } else {
        src.gen = parse_gen_params(j["generate"],
                                   (std::string(ctx) + ".generate").c_str(),
                                   default_split);
    }
    return src;
}

losses::LossSpec parse_loss_spec(const json& j, bool require_method,
                                 bool allow_beta) {
    expect_keys(j, "loss",
                {"method", "beta", "ceiling_C", "balance_space", "alpha_w",
                 "alpha_l", "gamma", "tau", "len_penalty_alpha", "k"});
    losses::LossSpec s;
    if (j.contains("method")) {
        const std::string name = get_string(j, "loss", "method", "");
        const auto m = losses::method_from_name(name);
        if (!m) {
            throw ConfigError("loss.method: unknown method '" + name + "'");
        }
        s.method = *m;
    } else if (require_method) {
        throw ConfigError("loss.method is required");
    }
    if (j.contains("beta") && !allow_beta) {
        throw ConfigError("loss.beta is swept via 'betas' and cannot be set");
    }
    s.beta = get_number(j, "loss", "beta", s.beta);
    s.ceiling_C = get_number(j, "loss", "ceiling_C", s.ceiling_C);
    const std::string space = get_string(j, "loss", "balance_space", "ratio");
    if (space == "ratio") {
        s.balance_space = losses::BalanceSpace::kRatio;
    } else if (space == "policy") {
        s.balance_space = losses::BalanceSpace::kPolicy;
    } else {
        throw ConfigError("loss.balance_space: expected 'ratio' or 'policy'");
    }
    s.alpha_w = get_number(j, "loss", "alpha_w", s.alpha_w);
    s.alpha_l = get_number(j, "loss", "alpha_l", s.alpha_l);
    s.gamma = get_number(j, "loss", "gamma", s.gamma);
    s.tau = get_number(j, "loss", "tau", s.tau);
    s.len_penalty_alpha =
        get_number(j, "loss", "len_penalty_alpha", s.len_penalty_alpha);
    s.k = get_number(j, "loss", "k", s.k);
    return s;
}

trainer::TrainConfig parse_train_config(const json& j, bool allow_lr) {
    expect_keys(j, "train",
                {"lr", "optimizer", "adam_beta1", "adam_beta2", "adam_eps",
                 "epochs", "batch_size", "seed", "eval_every", "shuffle",
                 "lr_schedule", "warmup_frac", "context_order"});
    trainer::TrainConfig c;
    if (j.contains("lr") && !allow_lr) {
        throw ConfigError("train.lr is swept via 'lrs' and cannot be set");
    }
    c.lr = get_number(j, "train", "lr", c.lr);
    const std::string opt = get_string(j, "train", "optimizer", "adam");
    if (opt == "sgd") {
        c.optimizer = trainer::Optimizer::kSgd;
    } else if (opt == "adam") {
        c.optimizer = trainer::Optimizer::kAdam;
    } else {
        throw ConfigError("train.optimizer: expected 'sgd' or 'adam'");
    }
    c.adam_beta1 = get_number(j, "train", "adam_beta1", c.adam_beta1);
    c.adam_beta2 = get_number(j, "train", "adam_beta2", c.adam_beta2);
    c.adam_eps = get_number(j, "train", "adam_eps", c.adam_eps);
    c.epochs = static_cast<std::size_t>(get_integer(j, "train", "epochs", 1));
    c.batch_size =
        static_cast<std::size_t>(get_integer(j, "train", "batch_size", 32));
    c.seed = static_cast<std::uint64_t>(get_integer(j, "train", "seed", 0));
    c.eval_every =
        static_cast<std::size_t>(get_integer(j, "train", "eval_every", 10));
    c.shuffle = get_bool(j, "train", "shuffle", true);
    const std::string sched = get_string(j, "train", "lr_schedule", "constant");
    if (sched == "constant") {
        c.lr_schedule = trainer::LrSchedule::kConstant;
    } else if (sched == "cosine_warmup") {
        c.lr_schedule = trainer::LrSchedule::kCosineWarmup;
    } else {
        throw ConfigError(
            "train.lr_schedule: expected 'constant' or 'cosine_warmup'");
    }
    c.warmup_frac = get_number(j, "train", "warmup_frac", c.warmup_frac);
    c.context_order =
        static_cast<int>(get_integer(j, "train", "context_order", 1));
    return c;
}

}  // namespace

data::Dataset DatasetSource::resolve() const {
    if (path) {
        return data::load(*path);
    }
    return data::generate(*gen);
}

json load_json_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ConfigError("config: cannot open file: " + path.string());
    }
    json j = json::parse(in, nullptr, /*allow_exceptions=*/false);
    if (j.is_discarded()) {
        throw ConfigError("config: malformed JSON in " + path.string());
    }
    return j;
}

RunConfig parse_run_config(const json& j) {
    expect_keys(j, "config",
                {"schema_version", "dataset", "eval_dataset", "loss", "train"});
    check_schema_version(j);
    if (!j.contains("dataset") || !j.contains("eval_dataset")) {
        throw ConfigError("config: 'dataset' and 'eval_dataset' are required");
    }
    RunConfig cfg;
    cfg.train_source = parse_dataset_source(j["dataset"], "dataset", "train");
    cfg.eval_source =
        parse_dataset_source(j["eval_dataset"], "eval_dataset", "eval");
    if (!j.contains("loss")) {
        throw ConfigError("config: 'loss' is required");
    }
    cfg.loss = parse_loss_spec(j["loss"], /*require_method=*/true,
                               /*allow_beta=*/true);
    cfg.train = j.contains("train")
                    ? parse_train_config(j["train"], /*allow_lr=*/true)
                    : trainer::TrainConfig{};
    return cfg;
}

SweepConfig parse_sweep_config(const json& j) {
    expect_keys(j, "config",
                {"schema_version", "dataset", "eval_dataset", "loss", "train",
                 "methods", "lrs", "betas"});
    check_schema_version(j);
    if (!j.contains("dataset") || !j.contains("eval_dataset")) {
        throw ConfigError("config: 'dataset' and 'eval_dataset' are required");
    }
    SweepConfig cfg;
    cfg.train_source = parse_dataset_source(j["dataset"], "dataset", "train");
    cfg.eval_source =
        parse_dataset_source(j["eval_dataset"], "eval_dataset", "eval");
    cfg.loss = j.contains("loss")
                   ? parse_loss_spec(j["loss"], /*require_method=*/false,
                                     /*allow_beta=*/false)
                   : losses::LossSpec{};
    cfg.train = j.contains("train")
                    ? parse_train_config(j["train"], /*allow_lr=*/false)
                    : trainer::TrainConfig{};

    if (!j.contains("methods") || !j["methods"].is_array() ||
        j["methods"].empty()) {
        throw ConfigError("config: 'methods' must be a non-empty array");
    }
    for (const auto& v : j["methods"]) {
        if (!v.is_string()) {
            throw ConfigError("config.methods: expected strings");
        }
        const auto m = losses::method_from_name(v.get<std::string>());
        if (!m) {
            throw ConfigError("config.methods: unknown method '" +
                              v.get<std::string>() + "'");
        }
        cfg.methods.push_back(*m);
    }
    const auto parse_list = [&](const char* key) {
        if (!j.contains(key) || !j[key].is_array() || j[key].empty()) {
            throw ConfigError(std::string("config: '") + key +
                              "' must be a non-empty array of numbers");
        }
        std::vector<double> out;
        for (const auto& v : j[key]) {
            if (!v.is_number()) {
                throw ConfigError(std::string("config.") + key +
                                  ": expected numbers");
            }
            out.push_back(v.get<double>());
        }
        return out;
    };
    cfg.lrs = parse_list("lrs");
    cfg.betas = parse_list("betas");
    return cfg;
}

json loss_spec_to_json(const losses::LossSpec& spec) {
    json j;
    j["method"] = std::string(losses::method_name(spec.method));
    j["beta"] = spec.beta;
    j["ceiling_C"] = spec.ceiling_C;
    j["balance_space"] =
        spec.balance_space == losses::BalanceSpace::kRatio ? "ratio" : "policy";
    j["alpha_w"] = spec.alpha_w;
    j["alpha_l"] = spec.alpha_l;
    j["gamma"] = spec.gamma;
    j["tau"] = spec.tau;
    j["len_penalty_alpha"] = spec.len_penalty_alpha;
    j["k"] = spec.k;
    return j;
}

json train_config_to_json(const trainer::TrainConfig& cfg) {
    json j;
    j["lr"] = cfg.lr;
    j["optimizer"] = cfg.optimizer == trainer::Optimizer::kSgd ? "sgd" : "adam";
    j["adam_beta1"] = cfg.adam_beta1;
    j["adam_beta2"] = cfg.adam_beta2;
    j["adam_eps"] = cfg.adam_eps;
    j["epochs"] = cfg.epochs;
    j["batch_size"] = cfg.batch_size;
    j["seed"] = cfg.seed;
    j["eval_every"] = cfg.eval_every;
    j["shuffle"] = cfg.shuffle;
    j["lr_schedule"] = cfg.lr_schedule == trainer::LrSchedule::kConstant
                           ? "constant"
                           : "cosine_warmup";
    j["warmup_frac"] = cfg.warmup_frac;
    j["context_order"] = cfg.context_order;
    return j;
}

json metrics_to_json(const trainer::StepMetrics& m) {
    json j;
    j["step"] = m.step;
    j["train_loss"] = m.train_loss;
    j["eval_loss"] = m.eval_loss;
    j["reward_accuracy"] = m.reward_accuracy;
    j["reward_margin_mean"] = m.reward_margin_mean;
    j["kl_margin_mean"] = m.kl_margin_mean;
    j["mean_beta_w_over_beta"] = m.mean_beta_w_over_beta;
    j["clamp_rate"] = m.clamp_rate;
    j["mean_abs_dPw"] = m.mean_abs_dPw;
    j["mean_abs_dPl"] = m.mean_abs_dPl;
    j["balance_ratio_mean"] = m.balance_ratio_mean;
    return j;
}

}  // namespace preflab::cli
