#include "gladius/baselines.hpp"
#include "gladius/evaluation.hpp"
#include "gladius/experiment.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace gladius;

namespace {

double rosenbrock(const std::array<double, 2>& x) {
    return 100.0 * (x[1] - x[0] * x[0]) * (x[1] - x[0] * x[0]) + (1.0 - x[0]) * (1.0 - x[0]);
}

TransitionDataset with_env(std::vector<TransitionRecord> records, const BusEngineConfig& env) {
    TransitionDataset d;
    d.records = std::move(records);
    d.meta.env = env;
    d.meta.config_hash = env_hash(env);
    return d;
}

/// Tabulates a model's Q over every mileage.
QTable q_table(const TrainedModel& model, int max_mileage) {
    QTable q{Table(static_cast<std::size_t>(max_mileage), 2)};
    for (int m = 1; m <= max_mileage; ++m) {
        const auto row = predict_q(model, std::vector<StateAction>{{{m}, 0}, {{m}, 1}});
        q.values(static_cast<std::size_t>(m - 1), 0) = row[0];
        q.values(static_cast<std::size_t>(m - 1), 1) = row[1];
    }
    return q;
}

}  // namespace

TEST(NelderMead, MinimisesRosenbrock) {
    NelderMeadOptions opt;
    opt.tolerance = 1e-9;
    opt.max_iterations = 10000;
    const auto r = nelder_mead_2d(rosenbrock, {-1.2, 1.0}, opt);
    EXPECT_NEAR(r.x[0], 1.0, 1e-4);
    EXPECT_NEAR(r.x[1], 1.0, 1e-4);
    EXPECT_LT(r.value, 1e-8);
}

TEST(NelderMead, StaysInsideTheBox) {
    NelderMeadOptions opt;
    opt.lower = {2.0, -1.0};
    const auto r = nelder_mead_2d(rosenbrock, {3.0, 3.0}, opt);
    EXPECT_GE(r.x[0], 2.0);
    EXPECT_NEAR(r.x[0], 2.0, 1e-5);
    EXPECT_NEAR(r.x[1], 4.0, 1e-3);
}

TEST(NelderMead, IterationCapIsAnError) {
    NelderMeadOptions opt;
    opt.max_iterations = 3;
    EXPECT_THROW(nelder_mead_2d(rosenbrock, {-1.2, 1.0}, opt), ConvergenceError);
}

class BusEngineBaselines : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        cfg_ = new ExperimentConfig;
        const auto data = generate_dataset(*cfg_);
        auto [train, test] = split_by_trajectory(data);
        train_ = new TransitionDataset(std::move(train));
        test_ = new TransitionDataset(std::move(test));
        nfxp_ = new NfxpResult(nfxp_fit(*train_, cfg_->env));
        TrainingConfig tc = cfg_->training;
        tc.discount = cfg_->env.discount;
        gladius_ = new TrainedModel(gladius_train(*train_, bus_anchor(cfg_->env), tc));
        bc_ = new TrainedModel(bc_fit(*train_, tc));
    }
    static void TearDownTestSuite() {
        delete cfg_;
        delete train_;
        delete test_;
        delete nfxp_;
        delete gladius_;
        delete bc_;
    }
    static ExperimentConfig* cfg_;
    static TransitionDataset *train_, *test_;
    static NfxpResult* nfxp_;
    static TrainedModel *gladius_, *bc_;
};

ExperimentConfig* BusEngineBaselines::cfg_;
TransitionDataset *BusEngineBaselines::train_, *BusEngineBaselines::test_;
NfxpResult* BusEngineBaselines::nfxp_;
TrainedModel *BusEngineBaselines::gladius_, *BusEngineBaselines::bc_;

TEST_F(BusEngineBaselines, NfxpRecoversTheta) {
    EXPECT_NEAR(nfxp_->theta_hat[0], 1.0, 0.05);
    EXPECT_NEAR(nfxp_->theta_hat[1], 5.0, 0.25);
    EXPECT_FALSE(nfxp_->flat_likelihood);
    EXPECT_GE(nfxp_->neg_log_likelihood, 0.0);
    EXPECT_LE(mape(nfxp_rewards(*nfxp_, test_->records), true_rewards({}, test_->records)), 2.0);
}

TEST_F(BusEngineBaselines, NfxpGradientVanishesAtEstimate) {
    const auto counts = detail::choice_counts(*train_, 20, 2);
    const double h = 1e-4;
    double norm2 = 0.0;
    for (std::size_t i = 0; i < 2; ++i) {
        auto plus = nfxp_->theta_hat, minus = nfxp_->theta_hat;
        plus[i] += h;
        minus[i] -= h;
        const double g = (nfxp_neg_log_likelihood(counts, cfg_->env, plus) -
                          nfxp_neg_log_likelihood(counts, cfg_->env, minus)) / (2 * h);
        norm2 += g * g;
    }
    EXPECT_LT(std::sqrt(norm2), 1e-4);
    EXPECT_NEAR(nfxp_neg_log_likelihood(counts, cfg_->env, nfxp_->theta_hat), nfxp_->neg_log_likelihood, 1e-9);
}

TEST_F(BusEngineBaselines, BehavioralCloningRewardsAreFarOff) {
    const auto truth = true_rewards({}, test_->records);
    const double bc = mape(recover_rewards(*bc_, test_->records), truth);
    const double gl = mape(recover_rewards(*gladius_, test_->records), truth);
    EXPECT_GE(bc, 10.0 * gl);
    EXPECT_GE(bc, 40.0);
    EXPECT_FALSE(bc_->zeta_net.has_value());
}

TEST_F(BusEngineBaselines, BehavioralCloningMatchesThePolicyAtLeastAsWell) {
    const auto counts = detail::choice_counts(*train_, 20, 2);
    const auto kl = [&](const TrainedModel& model) {
        const auto pi = soft_policy(q_table(model, 20));
        double total = 0.0, weight = 0.0;
        for (std::size_t s = 0; s < 20; ++s) {
            const double n = counts(s, 0) + counts(s, 1);
            if (n < 500) continue;
            for (std::size_t a = 0; a < 2; ++a)
                if (counts(s, a) > 0) total += counts(s, a) * std::log(counts(s, a) / n / pi.probs(s, a));
            weight += n;
        }
        return total / weight;
    };
    EXPECT_LE(kl(*bc_), kl(*gladius_) + 0.05);
}

TEST_F(BusEngineBaselines, BehavioralCloningLeavesBellmanResidual) {
    const auto mdp = oracle_mdp(cfg_->env);
    const auto mean_anchor_be = [&](const TrainedModel& model) {
        const auto res = bellman_residual(mdp, q_table(model, 20));
        double total = 0.0, n = 0.0;
        for (const auto& r : train_->records) {
            if (r.action != 1) continue;
            const double e = res(static_cast<std::size_t>(r.mileage() - 1), 1);
            total += e * e;
            n += 1.0;
        }
        return total / n;
    };
    EXPECT_GT(mean_anchor_be(*bc_), mean_anchor_be(*gladius_));
}

TEST(Nfxp, RecoversOtherParameters) {
    ExperimentConfig cfg;
    cfg.env.theta_maintain = 2.0;
    cfg.env.theta_replace = 7.0;
    const auto data = generate_dataset(cfg);
    const auto fit = nfxp_fit(data, cfg.env);
    EXPECT_NEAR(fit.theta_hat[0], 2.0, 0.1);
    EXPECT_NEAR(fit.theta_hat[1], 7.0, 0.35);
    EXPECT_FALSE(fit.flat_likelihood);
}

TEST(Nfxp, FlagsDegenerateData) {
    BusEngineConfig env;
    std::vector<TransitionRecord> records;
    for (int m = 1; m < 20; ++m) records.push_back({0, m - 1, {m}, 0, {m + 1}});
    const auto fit = nfxp_fit(with_env(records, env), env);
    EXPECT_TRUE(std::isfinite(fit.theta_hat[0]));
    EXPECT_TRUE(std::isfinite(fit.theta_hat[1]));
    EXPECT_TRUE(fit.flat_likelihood);
}

TEST(Nfxp, RejectsBadInput) {
    BusEngineConfig env;
    EXPECT_THROW(nfxp_fit(with_env({}, env), env), InvalidArgument);
    EXPECT_THROW(nfxp_fit(with_env({{0, 0, {1, 3}, 0, {2, 3}}}, env), env), InvalidArgument);
    EXPECT_THROW(nfxp_fit(with_env({{0, 0, {25}, 0, {26}}}, env), env), InvalidArgument);
}

TEST(BehavioralCloning, SingleStateMatchesFrequencies) {
    BusEngineConfig env;
    std::vector<TransitionRecord> records;
    for (int i = 0; i < 40; ++i) records.push_back({0, i, {1}, i < 30 ? 0 : 1, {i < 30 ? 2 : 1}});
    TrainingConfig tc;
    tc.epochs = 3000;
    const auto model = bc_fit(with_env(records, env), tc);
    const auto q = predict_q(model, std::vector<StateAction>{{{1}, 0}, {{1}, 1}});
    EXPECT_NEAR(q[1] - q[0], std::log(10.0 / 30.0), 1e-3);
}
