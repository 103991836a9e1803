// Copyright 2026 The preflab authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "preflab/losses.hpp"
#include "preflab/numeric.hpp"
#include "preflab/rng.hpp"

using namespace preflab;
using losses::AdaptiveCoefficient;
using losses::LossSpec;
using losses::Method;
using losses::PairLogProbs;

namespace {

// The running worked example: P_w = 0.10, P_l = 0.02, uniform reference 0.05.
PairLogProbs worked_example() {
    PairLogProbs lp;
    lp.logp_w_pol = std::log(0.10);
    lp.logp_l_pol = std::log(0.02);
    lp.logp_w_ref = std::log(0.05);
    lp.logp_l_ref = std::log(0.05);
    lp.len_w = 3;
    lp.len_l = 3;
    return lp;
}

LossSpec spec_for(Method m, double beta = 0.1) {
    LossSpec s;
    s.method = m;
    s.beta = beta;
    s.gamma = 0.5;
    s.tau = 0.1;
    s.len_penalty_alpha = 0.01;
    return s;
}

PairLogProbs random_pair(rng::SplitMix64& r) {
    PairLogProbs lp;
    lp.logp_w_pol = r.next_double(-50.0, -0.1);
    lp.logp_l_pol = r.next_double(-50.0, -0.1);
    lp.logp_w_ref = r.next_double(-50.0, -0.1);
    lp.logp_l_ref = r.next_double(-50.0, -0.1);
    lp.len_w = static_cast<int>(r.next_int(1, 64));
    lp.len_l = static_cast<int>(r.next_int(1, 64));
    return lp;
}

struct GradPair {
    double g_w;
    double g_l;
};

GradPair loss_grads(const PairLogProbs& lp, const LossSpec& spec) {
    ad::Tape t(64);
    const ad::Var pw = t.param(lp.logp_w_pol);
    const ad::Var pl = t.param(lp.logp_l_pol);
    const losses::LossGraph g = losses::build_loss(t, pw, pl, lp, spec);
    t.backward(g.loss);
    return {pw.grad(), pl.grad()};
}

}  // namespace

TEST_CASE("input validation") {
    PairLogProbs lp = worked_example();
    lp.logp_w_pol = 0.5;
    CHECK_THROWS_AS(lp.validate(), std::invalid_argument);
    lp = worked_example();
    lp.len_l = 0;
    CHECK_THROWS_AS(lp.validate(), std::invalid_argument);

    LossSpec s;
    s.beta = 0.0;
    CHECK_THROWS_AS(s.validate(), std::invalid_argument);
    s = LossSpec{};
    s.ceiling_C = 1.0;
    CHECK_THROWS_AS(s.validate(), std::invalid_argument);
    s = LossSpec{};
    s.method = Method::kIPO;
    s.tau = 0.0;
    CHECK_THROWS_AS(s.validate(), std::invalid_argument);
    s = LossSpec{};
    s.k = -1.0;
    CHECK_THROWS_AS(s.validate(), std::invalid_argument);
    // An infinite ceiling disables the clamp and is legal.
    s = LossSpec{};
    s.ceiling_C = std::numeric_limits<double>::infinity();
    CHECK_NOTHROW(s.validate());
}

TEST_CASE("method names round-trip") {
    for (Method m : losses::kAllMethods) {
        const auto parsed = losses::method_from_name(losses::method_name(m));
        REQUIRE(parsed.has_value());
        CHECK(*parsed == m);
    }
    CHECK(!losses::method_from_name("NotAMethod").has_value());
    CHECK(losses::base_method(Method::kStableAdaDPO) == Method::kDPO);
    CHECK(losses::base_method(Method::kAdaSimPO) == Method::kSimPO);
    CHECK(!losses::is_adaptive(Method::kDPO));
    CHECK(losses::is_adaptive(Method::kAdaORPO));
}

TEST_CASE("adaptive coefficient: worked example clamps 5.0 down to C") {
    const auto coef =
        losses::adaptive_coefficient(worked_example(), spec_for(Method::kAdaDPO));
    // Raw ratio (P_w R_l)/(P_l R_w) = 5, ceiling 2, so beta_w = 0.1 * 2.
    CHECK(std::exp(coef.log_ratio) == doctest::Approx(5.0).epsilon(1e-12));
    CHECK(coef.clamped);
    CHECK(coef.beta_w == 0.2);
}

TEST_CASE("adaptive coefficient: identity inputs give beta_w == beta") {
    PairLogProbs lp;
    lp.logp_w_pol = lp.logp_l_pol = -4.0;
    lp.logp_w_ref = lp.logp_l_ref = -3.5;
    lp.len_w = lp.len_l = 7;
    const auto coef = losses::adaptive_coefficient(lp, spec_for(Method::kAdaDPO));
    CHECK(!coef.clamped);
    CHECK(coef.beta_w == 0.1);
}

TEST_CASE("adaptive coefficient: stable variant matches the hand-computed fixture") {
    // Per-token policy averages -1.0 (len 10) vs -1.5 (len 20); reference
    // averages -1.2 vs -1.4. log_ratio = 2/10 + 2/20 = 0.3.
    PairLogProbs lp;
    lp.logp_w_pol = -10.0;
    lp.logp_l_pol = -30.0;
    lp.logp_w_ref = -12.0;
    lp.logp_l_ref = -28.0;
    lp.len_w = 10;
    lp.len_l = 20;
    const auto coef =
        losses::adaptive_coefficient(lp, spec_for(Method::kStableAdaDPO));
    CHECK(coef.log_ratio == doctest::Approx(0.3).epsilon(1e-14));
    CHECK(!coef.clamped);
    CHECK(std::fabs(coef.beta_w - 0.13498588075760032) <= 1e-12);
}

TEST_CASE("clamp saturation is exact for the whole ceiling grid") {
    PairLogProbs lp = worked_example();  // raw ratio 5
    for (double C : {1.5, 2.0, 2.5, 3.0, 4.0}) {
        LossSpec s = spec_for(Method::kAdaDPO);
        s.ceiling_C = C;
        const auto coef = losses::adaptive_coefficient(lp, s);
        CHECK(coef.clamped);
        CHECK(coef.beta_w == (s.k * s.beta) * C);
    }
    // Push the raw ratio above the larger ceilings too.
    lp.logp_w_pol = std::log(0.10);
    lp.logp_l_pol = -12.0;
    for (double C : {5.0, 10.0}) {
        LossSpec s = spec_for(Method::kAdaDPO);
        s.ceiling_C = C;
        const auto coef = losses::adaptive_coefficient(lp, s);
        CHECK(coef.clamped);
        CHECK(coef.beta_w == (s.k * s.beta) * C);
    }
}

TEST_CASE("an overflowing raw ratio still saturates to exactly k*beta*C") {
    PairLogProbs lp;
    lp.logp_w_pol = -0.5;
    lp.logp_l_pol = -1000.0;  // log ratio ~ +999.5; exp overflows to inf
    lp.logp_w_ref = lp.logp_l_ref = -1.0;
    lp.len_w = lp.len_l = 1;
    LossSpec s = spec_for(Method::kAdaCPO);
    const auto coef = losses::adaptive_coefficient(lp, s);
    CHECK(coef.clamped);
    CHECK(coef.beta_w == (s.k * s.beta) * s.ceiling_C);
}

TEST_CASE("no lower clamp: a sub-1 ratio shrinks beta_w") {
    PairLogProbs lp;
    lp.logp_w_pol = -6.0;
    lp.logp_l_pol = -5.0;
    lp.logp_w_ref = lp.logp_l_ref = -5.5;
    lp.len_w = lp.len_l = 4;
    const auto coef = losses::adaptive_coefficient(lp, spec_for(Method::kAdaDPO));
    CHECK(!coef.clamped);
    CHECK(coef.beta_w == doctest::Approx(0.1 * std::exp(-1.0)).epsilon(1e-14));
}

TEST_CASE("k scales the adaptive coefficient linearly") {
    PairLogProbs lp = worked_example();
    LossSpec s = spec_for(Method::kAdaDPO);
    s.k = 2.0;
    const auto coef = losses::adaptive_coefficient(lp, s);
    CHECK(coef.beta_w == 0.4);  // 2 * 0.1 * clamp(5 -> 2)
}

TEST_CASE("DPO loss at the worked example") {
    const double loss =
        losses::loss_value(worked_example(), spec_for(Method::kDPO));
    CHECK(loss == doctest::Approx(0.6159096593679522).epsilon(1e-14));
}

TEST_CASE("zero margin gives ln 2 for the sigmoid family") {
    PairLogProbs lp;
    lp.logp_w_pol = lp.logp_l_pol = -4.0;
    lp.logp_w_ref = lp.logp_l_ref = -4.0;
    lp.len_w = lp.len_l = 5;
    const double ln2 = 0.6931471805599453;
    for (Method m : {Method::kDPO, Method::kAdaDPO, Method::kStableAdaDPO,
                     Method::kCPO, Method::kAdaCPO, Method::kRDPO,
                     Method::kAdaRDPO}) {
        LossSpec s = spec_for(m);
        s.len_penalty_alpha = 0.0;
        CHECK(losses::loss_value(lp, s) == doctest::Approx(ln2).epsilon(1e-14));
    }
    // SimPO needs gamma = 0 for a zero margin.
    LossSpec s = spec_for(Method::kSimPO);
    s.gamma = 0.0;
    CHECK(losses::loss_value(lp, s) == doctest::Approx(ln2).epsilon(1e-14));
}

TEST_CASE("AdaDPO with zero exponents reproduces DPO exactly") {
    rng::SplitMix64 r(23);
    for (int i = 0; i < 100; ++i) {
        const PairLogProbs lp = random_pair(r);
        LossSpec ada = spec_for(Method::kAdaDPO);
        ada.alpha_w = 0.0;
        ada.alpha_l = 0.0;
        const LossSpec dpo = spec_for(Method::kDPO);

        CHECK(std::fabs(losses::loss_value(lp, ada) -
                        losses::loss_value(lp, dpo)) <= 1e-12);
        const GradPair ga = loss_grads(lp, ada);
        const GradPair gd = loss_grads(lp, dpo);
        CHECK(std::fabs(ga.g_w - gd.g_w) <= 1e-12);
        CHECK(std::fabs(ga.g_l - gd.g_l) <= 1e-12);
    }
}

TEST_CASE("exponent endpoints: alpha = 1/len reproduces the stable variant") {
    rng::SplitMix64 r(29);
    for (int i = 0; i < 50; ++i) {
        const PairLogProbs lp = random_pair(r);
        LossSpec ada = spec_for(Method::kAdaDPO);
        ada.alpha_w = 1.0 / static_cast<double>(lp.len_w);
        ada.alpha_l = 1.0 / static_cast<double>(lp.len_l);
        const LossSpec stable = spec_for(Method::kStableAdaDPO);
        CHECK(losses::loss_value(lp, ada) == losses::loss_value(lp, stable));
    }
}

TEST_CASE("ratio-1 inputs reduce every adaptive method to its base") {
    // Inputs crafted so each method's adaptive log-ratio is exactly 0.
    PairLogProbs lp;
    lp.logp_w_pol = lp.logp_l_pol = -3.0;
    lp.logp_w_ref = lp.logp_l_ref = -2.5;
    lp.len_w = lp.len_l = 6;

    for (Method m : {Method::kAdaDPO, Method::kStableAdaDPO, Method::kAdaIPO,
                     Method::kAdaSimPO, Method::kAdaRDPO, Method::kAdaCPO,
                     Method::kAdaORPO}) {
        const LossSpec ada = spec_for(m);
        const LossSpec base = spec_for(losses::base_method(m));
        const auto coef = losses::adaptive_coefficient(lp, ada);
        CHECK(std::fabs(coef.log_ratio) < 1e-14);
        CHECK(std::fabs(losses::loss_value(lp, ada) -
                        losses::loss_value(lp, base)) <= 1e-12);
    }
}

TEST_CASE("sigmoid-family losses are strictly decreasing in the margin") {
    rng::SplitMix64 r(31);
    // Moderate log-probs keep the frozen coefficient large enough that the
    // margin perturbation is resolvable at double precision.
    const auto moderate_pair = [&r]() {
        PairLogProbs lp;
        lp.logp_w_pol = r.next_double(-10.0, -0.1);
        lp.logp_l_pol = r.next_double(-10.0, -0.1);
        lp.logp_w_ref = r.next_double(-10.0, -0.1);
        lp.logp_l_ref = r.next_double(-10.0, -0.1);
        lp.len_w = static_cast<int>(r.next_int(1, 8));
        lp.len_l = static_cast<int>(r.next_int(1, 8));
        return lp;
    };
    for (Method m : {Method::kDPO, Method::kAdaDPO, Method::kSimPO,
                     Method::kRDPO, Method::kCPO, Method::kORPO}) {
        for (int i = 0; i < 20; ++i) {
            PairLogProbs lp = moderate_pair();
            const LossSpec s = spec_for(m);
            const double bw = losses::adaptive_coefficient(lp, s).beta_w;
            // Frozen coefficients isolate the link function: raising the
            // chosen log-prob raises the margin, so the loss must drop.
            PairLogProbs higher = lp;
            higher.logp_w_pol = lp.logp_w_pol * 0.5;  // closer to 0
            ad::Tape t1(64);
            const double lo = losses::build_loss_frozen(
                                  t1, t1.param(lp.logp_w_pol),
                                  t1.param(lp.logp_l_pol), lp, s, bw)
                                  .loss.value();
            ad::Tape t2(64);
            const double hi = losses::build_loss_frozen(
                                  t2, t2.param(higher.logp_w_pol),
                                  t2.param(higher.logp_l_pol), higher, s, bw)
                                  .loss.value();
            CHECK(hi < lo);
        }
    }
}

TEST_CASE("ORPO rejects probability exactly 1") {
    PairLogProbs lp;
    lp.logp_w_pol = 0.0;
    lp.logp_l_pol = -2.0;
    lp.logp_w_ref = lp.logp_l_ref = -1.0;
    lp.len_w = lp.len_l = 2;
    CHECK_THROWS_AS(losses::loss_value(lp, spec_for(Method::kORPO)),
                    std::domain_error);
    CHECK_THROWS_AS(losses::loss_value(lp, spec_for(Method::kAdaORPO)),
                    std::domain_error);
}

TEST_CASE("ORPO loss matches a scalar recomputation") {
    rng::SplitMix64 r(37);
    for (int i = 0; i < 50; ++i) {
        const PairLogProbs lp = random_pair(r);
        const LossSpec s = spec_for(Method::kORPO);
        const double ow = lp.logp_w_pol - num::log1m_exp(lp.logp_w_pol);
        const double ol = lp.logp_l_pol - num::log1m_exp(lp.logp_l_pol);
        const double expected =
            -(lp.logp_w_pol + num::log_sigmoid(s.beta * ow - s.beta * ol));
        CHECK(losses::loss_value(lp, s) ==
              doctest::Approx(expected).epsilon(1e-13));
    }
}

TEST_CASE("beta_w carries zero gradient (stop-gradient contract)") {
    rng::SplitMix64 r(41);
    for (int i = 0; i < 100; ++i) {
        PairLogProbs lp = random_pair(r);
        LossSpec s = spec_for(Method::kAdaDPO);
        s.beta = r.next_double(0.005, 0.5);
        s.ceiling_C = r.next_double(1.5, 10.0);

        ad::Tape t1(64);
        const ad::Var pw1 = t1.param(lp.logp_w_pol);
        const ad::Var pl1 = t1.param(lp.logp_l_pol);
        const losses::LossGraph g1 = losses::build_loss(t1, pw1, pl1, lp, s);
        t1.backward(g1.loss);

        ad::Tape t2(64);
        const ad::Var pw2 = t2.param(lp.logp_w_pol);
        const ad::Var pl2 = t2.param(lp.logp_l_pol);
        const losses::LossGraph g2 =
            losses::build_loss_frozen(t2, pw2, pl2, lp, s, g1.coef.beta_w);
        t2.backward(g2.loss);

        CHECK(g1.loss.value() == g2.loss.value());
        CHECK(std::fabs(pw1.grad() - pw2.grad()) <= 1e-12);
        CHECK(std::fabs(pl1.grad() - pl2.grad()) <= 1e-12);

        // Closed form: dL/dlogPw = -sigmoid(-delta) * beta_w.
        const double delta = g1.coef.beta_w * (lp.logp_w_pol - lp.logp_w_ref) -
                             s.beta * (lp.logp_l_pol - lp.logp_l_ref);
        CHECK(std::fabs(pw1.grad() - (-num::sigmoid(-delta) * g1.coef.beta_w)) <=
              1e-12);
    }
}

TEST_CASE("without stop-gradient the coefficient would leak gradient") {
    PairLogProbs lp;
    lp.logp_w_pol = -2.0;
    lp.logp_l_pol = -2.5;
    lp.logp_w_ref = -2.2;
    lp.logp_l_ref = -2.4;
    lp.len_w = lp.len_l = 3;
    const LossSpec s = spec_for(Method::kAdaDPO);

    // Leaky construction: same expression, no stop_gradient.
    ad::Tape t(64);
    const ad::Var pw = t.param(lp.logp_w_pol);
    const ad::Var pl = t.param(lp.logp_l_pol);
    const ad::Var lr = (pw - lp.logp_w_ref) - (pl - lp.logp_l_ref);
    const ad::Var bw = s.beta * clamp_max(exp(lr), s.ceiling_C);
    const ad::Var leaky =
        -log_sigmoid(bw * (pw - lp.logp_w_ref) - s.beta * (pl - lp.logp_l_ref));
    t.backward(leaky);
    const double leaky_grad = pw.grad();

    const GradPair proper = loss_grads(lp, s);
    CHECK(std::fabs(leaky_grad - proper.g_w) > 1e-6);
}

TEST_CASE("on-tape coefficient value matches the detached computation bitwise") {
    rng::SplitMix64 r(43);
    for (Method m : losses::kAllMethods) {
        if (!losses::is_adaptive(m)) {
            continue;
        }
        for (int i = 0; i < 50; ++i) {
            const PairLogProbs lp = random_pair(r);
            LossSpec s = spec_for(m);
            if (i % 2 == 1) {
                s.balance_space = losses::BalanceSpace::kPolicy;
                s.alpha_w = r.next_double(0.0, 2.0);
                s.alpha_l = r.next_double(0.0, 2.0);
                s.k = r.next_double(0.5, 2.0);
            }
            ad::Tape t(64);
            const losses::LossGraph g = losses::build_loss(
                t, t.param(lp.logp_w_pol), t.param(lp.logp_l_pol), lp, s);
            const auto coef = losses::adaptive_coefficient(lp, s);
            CHECK(g.coef.beta_w == coef.beta_w);
            CHECK(g.coef.clamped == coef.clamped);
        }
    }
}

TEST_CASE("implicit rewards at the worked example") {
    const PairLogProbs lp = worked_example();
    const auto dpo = losses::implicit_rewards(lp, spec_for(Method::kDPO));
    CHECK(dpo.r_w == doctest::Approx(0.06931471805599454).epsilon(1e-14));
    CHECK(dpo.r_l == doctest::Approx(-0.09162907318741552).epsilon(1e-14));
    CHECK(dpo.margin() == doctest::Approx(0.16094379124341007).epsilon(1e-14));

    const auto ada = losses::implicit_rewards(lp, spec_for(Method::kAdaDPO));
    CHECK(ada.r_w == doctest::Approx(0.13862943611198908).epsilon(1e-14));
    CHECK(ada.margin() == doctest::Approx(0.2302585092994046).epsilon(1e-14));
}

TEST_CASE("implicit rewards vanish when policy equals reference") {
    PairLogProbs lp;
    lp.logp_w_pol = lp.logp_w_ref = -4.2;
    lp.logp_l_pol = lp.logp_l_ref = -5.1;
    lp.len_w = 2;
    lp.len_l = 9;
    for (Method m : {Method::kDPO, Method::kAdaDPO, Method::kRDPO}) {
        const auto rw = losses::implicit_rewards(lp, spec_for(m));
        CHECK(rw.r_w == 0.0);
        CHECK(rw.r_l == 0.0);
    }
}

TEST_CASE("SimPO rewards are length-normalized") {
    PairLogProbs lp;
    lp.logp_w_pol = -6.0;
    lp.logp_l_pol = -9.0;
    lp.logp_w_ref = -5.0;
    lp.logp_l_ref = -5.0;
    lp.len_w = 3;
    lp.len_l = 9;
    const auto rw = losses::implicit_rewards(lp, spec_for(Method::kSimPO));
    CHECK(rw.r_w == doctest::Approx((0.1 / 3.0) * -6.0).epsilon(1e-14));
    CHECK(rw.r_l == doctest::Approx((0.1 / 9.0) * -9.0).epsilon(1e-14));
}
