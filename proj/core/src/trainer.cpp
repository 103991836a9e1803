// Copyright 2026 The preflab authors
// SPDX-License-Identifier: Apache-2.0

#include "preflab/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>
#include <optional>

#include "preflab/gradcheck.hpp"
#include "preflab/rng.hpp"

namespace preflab::trainer {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

class OptimizerState {
public:
    OptimizerState(const TrainConfig& cfg, std::size_t n_params)
        : cfg_(cfg) {
        if (cfg.optimizer == Optimizer::kAdam) {
            m_.assign(n_params, 0.0);
            v_.assign(n_params, 0.0);
        }
    }

    void step(std::vector<double>& params, const std::vector<double>& grads,
              double lr) {
        if (cfg_.optimizer == Optimizer::kSgd) {
            for (std::size_t i = 0; i < params.size(); ++i) {
                params[i] -= lr * grads[i];
            }
            return;
        }
        ++t_;
        const double bc1 = 1.0 - std::pow(cfg_.adam_beta1, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(cfg_.adam_beta2, static_cast<double>(t_));
        for (std::size_t i = 0; i < params.size(); ++i) {
            m_[i] = cfg_.adam_beta1 * m_[i] + (1.0 - cfg_.adam_beta1) * grads[i];
            v_[i] = cfg_.adam_beta2 * v_[i] +
                    (1.0 - cfg_.adam_beta2) * grads[i] * grads[i];
            const double m_hat = m_[i] / bc1;
            const double v_hat = v_[i] / bc2;
            params[i] -= lr * m_hat / (std::sqrt(v_hat) + cfg_.adam_eps);
        }
    }

private:
    const TrainConfig& cfg_;
    std::vector<double> m_;
    std::vector<double> v_;
    std::size_t t_ = 0;
};

double scheduled_lr(const TrainConfig& cfg, std::size_t step,
                    std::size_t total_steps) {
    if (cfg.lr_schedule == LrSchedule::kConstant) {
        return cfg.lr;
    }
    const auto warmup = static_cast<std::size_t>(
        std::ceil(cfg.warmup_frac * static_cast<double>(total_steps)));
    const auto t = static_cast<double>(step);
    if (warmup > 0 && step <= warmup) {
        return cfg.lr * t / static_cast<double>(warmup);
    }
    const double denom = static_cast<double>(total_steps - warmup);
    const double progress =
        denom > 0.0 ? (t - static_cast<double>(warmup)) / denom : 1.0;
    return cfg.lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

double mean_train_loss(const policy::TabularPolicy& pol,
                       const policy::TabularPolicy& ref,
                       const data::Dataset& train_set,
                       const losses::LossSpec& spec) {
    double sum = 0.0;
    for (const data::PreferencePair& pair : train_set.pairs) {
        sum += losses::loss_value(policy::pair_logprobs(pol, ref, pair), spec);
    }
    return sum / static_cast<double>(train_set.pairs.size());
}

}  // namespace

void TrainConfig::validate() const {
    // lr == 0 is legal (a no-op optimizer), useful as a control.
    if (!(lr >= 0.0) || !std::isfinite(lr)) {
        throw std::invalid_argument("TrainConfig: lr must be finite and >= 0");
    }
    if (batch_size < 1) {
        throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
    }
    if (epochs < 1) {
        throw std::invalid_argument("TrainConfig: epochs must be >= 1");
    }
    if (eval_every < 1) {
        throw std::invalid_argument("TrainConfig: eval_every must be >= 1");
    }
    if (context_order != 0 && context_order != 1) {
        throw std::invalid_argument("TrainConfig: context_order must be 0 or 1");
    }
    if (!(warmup_frac >= 0.0) || !(warmup_frac < 1.0)) {
        throw std::invalid_argument("TrainConfig: warmup_frac must be in [0, 1)");
    }
}

StepMetrics evaluate(const policy::TabularPolicy& pol,
                     const policy::TabularPolicy& ref,
                     const data::Dataset& eval_set,
                     const losses::LossSpec& spec) {
    if (eval_set.pairs.empty()) {
        throw std::invalid_argument("evaluate: eval set must be non-empty");
    }

    StepMetrics m;
    m.train_loss = kNaN;
    const double bl = losses::beta_l(spec);
    double balance_sum = 0.0;
    std::size_t n_unclamped = 0;

    for (const data::PreferencePair& pair : eval_set.pairs) {
        const losses::PairLogProbs lp = policy::pair_logprobs(pol, ref, pair);
        m.eval_loss += losses::loss_value(lp, spec);

        const losses::ImplicitRewards rw = losses::implicit_rewards(lp, spec);
        m.reward_margin_mean += rw.margin();
        if (rw.r_w > rw.r_l) {
            m.reward_accuracy += 1.0;
        }
        m.kl_margin_mean += policy::kl_margin(pol, ref, pair, spec.beta);

        const losses::AdaptiveCoefficient coef =
            losses::adaptive_coefficient(lp, spec);
        m.mean_beta_w_over_beta += coef.beta_w / bl;
        if (coef.clamped) {
            m.clamp_rate += 1.0;
        }

        const gradcheck::BalanceReport br =
            gradcheck::balance_report(lp, spec, /*with_fd=*/false);
        const gradcheck::ProbGradients pg = gradcheck::grads_wrt_probs(lp, spec);
        m.mean_abs_dPw += std::fabs(pg.d_prob_w);
        m.mean_abs_dPl += std::fabs(pg.d_prob_l);
        if (!br.clamped && std::isfinite(br.in_space_ratio)) {
            balance_sum += br.in_space_ratio;
            ++n_unclamped;
        }
    }

    const auto n = static_cast<double>(eval_set.pairs.size());
    m.eval_loss /= n;
    m.reward_accuracy /= n;
    m.reward_margin_mean /= n;
    m.kl_margin_mean /= n;
    m.mean_beta_w_over_beta /= n;
    m.clamp_rate /= n;
    m.mean_abs_dPw /= n;
    m.mean_abs_dPl /= n;
    m.balance_ratio_mean =
        n_unclamped > 0 ? balance_sum / static_cast<double>(n_unclamped) : kNaN;
    return m;
}

TrainResult train(const data::Dataset& train_set, const data::Dataset& eval_set,
                  const losses::LossSpec& spec, const TrainConfig& cfg) {
    cfg.validate();
    spec.validate();
    train_set.validate();
    eval_set.validate();
    if (train_set.pairs.empty()) {
        throw std::invalid_argument("train: training set must be non-empty");
    }
    if (eval_set.pairs.empty()) {
        throw std::invalid_argument("train: eval set must be non-empty");
    }

    TrainResult result;
    result.reference =
        policy::TabularPolicy::uniform(train_set.vocab_size, cfg.context_order);
    result.policy = result.reference;  // warm start from the reference

    const std::size_t n_pairs = train_set.pairs.size();
    const std::size_t batches_per_epoch =
        (n_pairs + cfg.batch_size - 1) / cfg.batch_size;
    const std::size_t total_steps = cfg.epochs * batches_per_epoch;

    // Frozen reference log-probs, computed once.
    std::vector<double> ref_w(n_pairs);
    std::vector<double> ref_l(n_pairs);
    for (std::size_t i = 0; i < n_pairs; ++i) {
        const data::PreferencePair& pair = train_set.pairs[i];
        ref_w[i] = policy::sequence_logprob(result.reference, pair.prompt,
                                            pair.chosen);
        ref_l[i] = policy::sequence_logprob(result.reference, pair.prompt,
                                            pair.rejected);
    }

    OptimizerState opt(cfg, result.policy.logits.size());
    rng::SplitMix64 shuffle_rng(cfg.seed);
    std::vector<std::size_t> order(n_pairs);
    for (std::size_t i = 0; i < n_pairs; ++i) {
        order[i] = i;
    }

    const auto record = [&](std::size_t step, double train_loss) {
        StepMetrics m = evaluate(result.policy, result.reference, eval_set, spec);
        m.step = step;
        m.train_loss = train_loss;
        result.metrics.push_back(m);
    };

    record(0, mean_train_loss(result.policy, result.reference, train_set, spec));

    std::size_t step = 0;
    double loss_accum = 0.0;
    std::size_t loss_accum_batches = 0;
    std::vector<double> grads(result.policy.logits.size());

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        if (cfg.shuffle) {
            // Fisher-Yates with the SplitMix64 stream.
            for (std::size_t i = n_pairs; i-- > 1;) {
                const auto j =
                    static_cast<std::size_t>(shuffle_rng.next_below(i + 1));
                std::swap(order[i], order[j]);
            }
        }

        for (std::size_t b = 0; b < batches_per_epoch; ++b) {
            const std::size_t begin = b * cfg.batch_size;
            const std::size_t end = std::min(begin + cfg.batch_size, n_pairs);

            ad::Tape tape(1024);
            policy::PolicyOnTape pot(tape, result.policy);
            std::optional<ad::Var> batch_sum;
            for (std::size_t idx = begin; idx < end; ++idx) {
                const std::size_t i = order[idx];
                const data::PreferencePair& pair = train_set.pairs[i];
                const ad::Var w = pot.sequence_logprob(pair.prompt, pair.chosen);
                const ad::Var l =
                    pot.sequence_logprob(pair.prompt, pair.rejected);

                losses::PairLogProbs lp;
                lp.logp_w_pol = w.value();
                lp.logp_l_pol = l.value();
                lp.logp_w_ref = ref_w[i];
                lp.logp_l_ref = ref_l[i];
                lp.len_w = static_cast<int>(pair.chosen.size());
                lp.len_l = static_cast<int>(pair.rejected.size());

                const losses::LossGraph g = losses::build_loss(tape, w, l, lp, spec);
                batch_sum = batch_sum ? (*batch_sum + g.loss) : g.loss;
            }
            const ad::Var batch_loss =
                *batch_sum * (1.0 / static_cast<double>(end - begin));

            if (!std::isfinite(batch_loss.value())) {
                throw DivergenceError(
                    step + 1, b,
                    "train: non-finite loss at step " + std::to_string(step + 1) +
                        ", epoch " + std::to_string(epoch) + ", batch " +
                        std::to_string(b));
            }

            tape.backward(batch_loss);
            const std::vector<ad::Var>& params = pot.logit_params();
            for (std::size_t i = 0; i < params.size(); ++i) {
                grads[i] = params[i].grad();
            }

            ++step;
            opt.step(result.policy.logits, grads, scheduled_lr(cfg, step, total_steps));
            for (double v : result.policy.logits) {
                if (!std::isfinite(v)) {
                    throw DivergenceError(
                        step, b,
                        "train: non-finite parameters after step " +
                            std::to_string(step) + ", epoch " +
                            std::to_string(epoch) + ", batch " +
                            std::to_string(b));
                }
            }

            loss_accum += batch_loss.value();
            ++loss_accum_batches;
            if (step % cfg.eval_every == 0 || step == total_steps) {
                record(step,
                       loss_accum / static_cast<double>(loss_accum_batches));
                loss_accum = 0.0;
                loss_accum_batches = 0;
            }
        }
    }

    result.total_steps = step;
    return result;
}

void write_metrics_csv(const std::vector<StepMetrics>& metrics,
                       const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("metrics: cannot open for writing: " +
                                 path.string());
    }
    out << kMetricsCsvHeader << '\n';
    char buf[512];
    for (const StepMetrics& m : metrics) {
        std::snprintf(buf, sizeof(buf),
                      "%zu,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g",
                      m.step, m.train_loss, m.eval_loss, m.reward_accuracy,
                      m.reward_margin_mean, m.kl_margin_mean,
                      m.mean_beta_w_over_beta, m.clamp_rate, m.mean_abs_dPw,
                      m.mean_abs_dPl);
        out << buf << '\n';
    }
    if (!out) {
        throw std::runtime_error("metrics: write failed: " + path.string());
    }
}

}  // namespace preflab::trainer
