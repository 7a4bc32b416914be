#pragma once

#include "gladius/baselines.hpp"
#include "gladius/dataset.hpp"
#include "gladius/errors.hpp"
#include "gladius/mdp.hpp"
#include "gladius/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <fstream>
#include <functional>
#include <mutex>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

namespace gladius {

/// Mean absolute percentage error, (100 / N) * sum |(est - truth) / truth|.
inline double mape(std::span<const double> estimates, std::span<const double> truths) {
    if (estimates.size() != truths.size()) throw InvalidArgument("mape: length mismatch");
    if (truths.empty()) throw InvalidArgument("mape: no samples");
    double sum = 0.0;
    for (std::size_t i = 0; i < truths.size(); ++i) {
        if (truths[i] == 0.0) throw InvalidArgument("mape: zero truth at sample " + std::to_string(i));
        sum += std::abs((estimates[i] - truths[i]) / truths[i]);
    }
    return 100.0 * sum / static_cast<double>(truths.size());
}

/// Per-record estimates r̂ and Q̂ for an evaluation set.
struct Predictions {
    std::vector<double> reward;
    std::vector<double> q;  // empty when the method has no Q estimate
};

inline std::vector<StateAction> state_actions(const std::vector<TransitionRecord>& records) {
    std::vector<StateAction> out;
    out.reserve(records.size());
    for (const auto& r : records) out.push_back({r.state, r.action});
    return out;
}

inline Predictions predict(const TrainedModel& model, const std::vector<TransitionRecord>& records) {
    return {recover_rewards(model, records), predict_q(model, state_actions(records))};
}

/// NFXP: rewards from theta-hat, Q from soft value iteration on the fitted reward table.
inline Predictions predict(const NfxpResult& fit, const BusEngineConfig& env,
                           const std::vector<TransitionRecord>& records) {
    Predictions out{nfxp_rewards(fit, records), {}};
    const auto q = soft_value_iteration(bus_engine_with_theta(env, fit.theta_hat[0], fit.theta_hat[1]), 1e-10,
                                        100000);
    for (const auto& r : records)
        out.q.push_back(q.values(static_cast<std::size_t>(r.mileage() - 1), static_cast<std::size_t>(r.action)));
    return out;
}

/// Oracle: r = Q*(s,a) - beta * E[V*(s')] through the known kernel (recovers the reward table
/// up to the solver tolerance).
inline Predictions predict_oracle(const TabularMDP& mdp, const QTable& q_star,
                                  const std::vector<TransitionRecord>& records) {
    const auto v = state_value(q_star);
    Predictions out;
    for (const auto& r : records) {
        const auto s = static_cast<std::size_t>(r.mileage() - 1);
        const auto a = static_cast<std::size_t>(r.action);
        const auto next = mdp.next_distribution(s, a);
        double ev = 0.0;
        for (std::size_t sp = 0; sp < next.size(); ++sp) ev += next[sp] * v[sp];
        out.reward.push_back(q_star.values(s, a) - mdp.discount() * ev);
        out.q.push_back(q_star.values(s, a));
    }
    return out;
}

/// One (mileage, action) cell of the per-state table.
struct StateCell {
    int mileage = 0;
    int action = 0;
    double r_hat = 0.0;  // mean over visits; NaN when never visited
    double q_hat = 0.0;
    double r_true = 0.0;
    double q_true = 0.0;
    std::size_t visits = 0;
};

/// Mileage x action grid of mean estimates, ground truth and visit counts over `records`.
/// `oracle_q` rows index mileage - 1.
inline std::vector<StateCell> per_state_report(const Predictions& pred, const std::vector<TransitionRecord>& records,
                                               const QTable& oracle_q, const TabularMDP& mdp) {
    if (pred.reward.size() != records.size() || (!pred.q.empty() && pred.q.size() != records.size()))
        throw InvalidArgument("per_state_report: predictions do not match the records");
    check_dimensions(mdp, oracle_q);
    const auto ns = mdp.n_states(), na = mdp.n_actions();
    std::vector<StateCell> cells(ns * na);
    std::vector<double> q_sum(ns * na, 0.0), r_sum(ns * na, 0.0);
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto s = static_cast<std::size_t>(records[i].mileage() - 1);
        const auto a = static_cast<std::size_t>(records[i].action);
        if (s >= ns || a >= na) throw InvalidArgument("per_state_report: record outside the model's domain");
        auto& c = cells[s * na + a];
        ++c.visits;
        r_sum[s * na + a] += pred.reward[i];
        if (!pred.q.empty()) q_sum[s * na + a] += pred.q[i];
    }
    for (std::size_t s = 0; s < ns; ++s) {
        for (std::size_t a = 0; a < na; ++a) {
            auto& c = cells[s * na + a];
            c.mileage = static_cast<int>(s) + 1;
            c.action = static_cast<int>(a);
            c.r_true = mdp.reward(s, a);
            c.q_true = oracle_q.values(s, a);
            const double n = static_cast<double>(c.visits);
            c.r_hat = c.visits ? r_sum[s * na + a] / n : std::nan("");
            c.q_hat = c.visits && !pred.q.empty() ? q_sum[s * na + a] / n : std::nan("");
        }
    }
    return cells;
}

inline std::string format_per_state_table(const std::vector<StateCell>& cells) {
    std::ostringstream out;
    char line[160];
    std::snprintf(line, sizeof line, "%7s %6s %10s %10s %10s %10s %8s\n", "mileage", "action", "r_hat", "r_true",
                  "q_hat", "q_true", "visits");
    out << line;
    for (const auto& c : cells) {
        std::snprintf(line, sizeof line, "%7d %6d %10.3f %10.3f %10.3f %10.3f %8zu\n", c.mileage, c.action, c.r_hat,
                      c.r_true, c.q_hat, c.q_true, c.visits);
        out << line;
    }
    return out.str();
}

struct RunReport {
    std::string method;
    std::int64_t n_traj = 0;
    int n_dummy = 0;
    std::uint64_t seed = 0;
    double mape_r = 0.0;
    std::optional<double> mape_q;
    double wall_secs = 0.0;
    std::size_t eval_size = 0;
    std::vector<StateCell> cells;  // by mileage; dummies are averaged over
};

/// Truth r_i from the generator's reward table for every record.
inline std::vector<double> true_rewards(const BusEngineConfig& env, const std::vector<TransitionRecord>& records) {
    std::vector<double> out;
    out.reserve(records.size());
    for (const auto& r : records) out.push_back(env.reward(r.mileage(), static_cast<std::size_t>(r.action)));
    return out;
}

/// Fills the metric fields and the per-state grid of a report from predictions on `records`.
inline RunReport make_report(std::string method, const TransitionDataset& data, const Predictions& pred,
                             const std::vector<TransitionRecord>& records, const BusEngineConfig& env,
                             const QTable& oracle_q) {
    BusEngineConfig plain = env;
    plain.n_dummy = 0;
    const auto mdp = build_bus_engine(plain);
    RunReport rep;
    rep.method = std::move(method);
    rep.n_traj = data.meta.n_traj;
    rep.n_dummy = data.meta.n_dummy;
    rep.seed = data.meta.seed;
    rep.eval_size = records.size();
    rep.mape_r = mape(pred.reward, true_rewards(env, records));
    if (!pred.q.empty()) {
        std::vector<double> q_true;
        for (const auto& r : records)
            q_true.push_back(oracle_q.values(static_cast<std::size_t>(r.mileage() - 1),
                                             static_cast<std::size_t>(r.action)));
        rep.mape_q = mape(pred.q, q_true);
    }
    rep.cells = per_state_report(pred, records, oracle_q, mdp);
    return rep;
}

inline constexpr const char* kReportHeader = "method,n_traj,n_dummy,seed,mape_r,mape_q,wall_secs";

inline std::string to_csv_row(const RunReport& r) {
    char buf[96];
    std::ostringstream out;
    out << r.method << ',' << r.n_traj << ',' << r.n_dummy << ',' << r.seed << ',';
    std::snprintf(buf, sizeof buf, "%.6f", r.mape_r);
    out << buf << ',';
    if (r.mape_q) {
        std::snprintf(buf, sizeof buf, "%.6f", *r.mape_q);
        out << buf;
    }
    std::snprintf(buf, sizeof buf, ",%.3f", r.wall_secs);
    out << buf;
    return out.str();
}

inline void write_report_csv(const std::vector<RunReport>& reports, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open report for writing", path);
    out << kReportHeader << '\n';
    for (const auto& r : reports) out << to_csv_row(r) << '\n';
    if (!out) throw IoError("failed while writing report", path);
}

inline std::string format_report_table(const std::vector<RunReport>& reports) {
    std::ostringstream out;
    char line[160];
    std::snprintf(line, sizeof line, "%-12s %7s %7s %6s %9s %9s %9s\n", "method", "n_traj", "n_dummy", "seed",
                  "mape_r", "mape_q", "secs");
    out << line;
    for (const auto& r : reports) {
        char q[16] = "-";
        if (r.mape_q) std::snprintf(q, sizeof q, "%.3f", *r.mape_q);
        std::snprintf(line, sizeof line, "%-12s %7lld %7d %6llu %9.3f %9s %9.2f\n", r.method.c_str(),
                      static_cast<long long>(r.n_traj), r.n_dummy, static_cast<unsigned long long>(r.seed), r.mape_r,
                      q, r.wall_secs);
        out << line;
    }
    return out.str();
}

// ---------------------------------------------------------------------------
// Seed sweeps

struct SweepSummary {
    std::size_t n = 0;
    double mean = 0.0;
    double se = 0.0;  // sample standard deviation / sqrt(n)
};

inline SweepSummary summarize(std::span<const double> values) {
    if (values.size() < 2) throw InvalidArgument("summarize: need at least two values");
    const double n = static_cast<double>(values.size());
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= n;
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    return {values.size(), mean, std::sqrt(ss / (n - 1.0) / n)};
}

/// Runs `task` once per seed on up to `jobs` threads. Results keep the order of `seeds`.
/// The first exception thrown by any task is rethrown after all workers finish.
inline std::vector<RunReport> seed_sweep(const std::function<RunReport(std::uint64_t)>& task,
                                         const std::vector<std::uint64_t>& seeds, std::size_t jobs = 1) {
    if (seeds.size() < 2) throw InvalidArgument("seed_sweep: need at least two seeds");
    std::vector<RunReport> out(seeds.size());
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    const auto worker = [&] {
        for (std::size_t i; (i = next.fetch_add(1)) < seeds.size();) {
            try {
                out[i] = task(seeds[i]);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!error) error = std::current_exception();
            }
        }
    };
    jobs = std::max<std::size_t>(1, std::min(jobs, seeds.size()));
    std::vector<std::thread> pool;
    for (std::size_t j = 1; j < jobs; ++j) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
    return out;
}

inline SweepSummary summarize_mape(const std::vector<RunReport>& reports) {
    std::vector<double> v;
    for (const auto& r : reports) v.push_back(r.mape_r);
    return summarize(v);
}

}  // namespace gladius
