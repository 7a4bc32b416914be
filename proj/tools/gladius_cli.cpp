// gladius: oracle | generate | train | evaluate | sweep on the bus-engine benchmark.

#include "gladius/checkpoint.hpp"
#include "gladius/experiment.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

namespace fs = std::filesystem;
using namespace gladius;

namespace {

enum ExitCode { kOk = 0, kConfigError = 2, kConvergenceError = 3, kIoError = 4 };

struct Overrides {
    std::string config_path;
    std::optional<std::int64_t> n_traj, horizon;
    std::optional<int> n_dummy;
    std::optional<std::size_t> epochs, batch_size, jobs, n_seeds;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> method, optimizer, output_dir;
    std::optional<double> tolerance;
    bool eval_on_train = false;
    std::string data_path, checkpoint_path;
};

void add_common(CLI::App& cmd, Overrides& o) {
    cmd.add_option("--config", o.config_path, "JSON experiment config");
    cmd.add_option("--n-traj", o.n_traj, "number of trajectories");
    cmd.add_option("--horizon", o.horizon, "periods per trajectory");
    cmd.add_option("--n-dummy", o.n_dummy, "irrelevant state dimensions");
    cmd.add_option("--epochs", o.epochs, "training iterations");
    cmd.add_option("--batch-size", o.batch_size, "minibatch size");
    cmd.add_option("--seed", o.seed, "data and training seed");
    cmd.add_option("--method", o.method, "gladius | gladius_det | bc | nfxp | oracle");
    cmd.add_option("--optimizer", o.optimizer, "adam | sgd");
    cmd.add_option("--jobs", o.jobs, "parallel workers for sweeps");
    cmd.add_option("--n-seeds", o.n_seeds, "seeds per sweep");
    cmd.add_option("--tolerance", o.tolerance, "soft value iteration tolerance");
    cmd.add_option("--output-dir", o.output_dir, "artifact directory (also GLADIUS_OUT)");
    cmd.add_flag("--eval-on-train", o.eval_on_train, "evaluate on training trajectories");
    cmd.add_option("--data", o.data_path, "dataset path (default <output-dir>/dataset.jsonl)");
    cmd.add_option("--checkpoint", o.checkpoint_path, "checkpoint path (default <output-dir>/checkpoint_<method>.json)");
}

ExperimentConfig resolve(const Overrides& o) {
    ExperimentConfig cfg = o.config_path.empty() ? ExperimentConfig{} : load_config(o.config_path);
    if (const char* env = std::getenv("GLADIUS_OUT"); env && *env) cfg.output_dir = env;
    if (o.n_traj) cfg.data.n_traj = *o.n_traj;
    if (o.horizon) cfg.data.horizon = *o.horizon;
    if (o.n_dummy) cfg.env.n_dummy = *o.n_dummy;
    if (o.epochs) cfg.training.epochs = *o.epochs;
    if (o.batch_size) cfg.training.batch_size = *o.batch_size;
    if (o.seed) cfg.data.seed = cfg.training.seed = *o.seed;
    if (o.method) cfg.method = method_from_string(*o.method);
    if (o.optimizer) cfg.training.optimizer = optimizer_from_string(*o.optimizer);
    if (o.jobs) cfg.jobs = *o.jobs;
    if (o.n_seeds) cfg.n_seeds = *o.n_seeds;
    if (o.tolerance) cfg.oracle_tolerance = *o.tolerance;
    if (o.output_dir) cfg.output_dir = *o.output_dir;
    if (o.eval_on_train) cfg.data.eval_on_train = true;
    cfg.validate();
    return cfg;
}

fs::path out_dir(const ExperimentConfig& cfg) {
    fs::path dir(cfg.output_dir);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory (" + ec.message() + ")", dir.string());
    return dir;
}

std::string data_path(const Overrides& o, const ExperimentConfig& cfg) {
    return o.data_path.empty() ? (fs::path(cfg.output_dir) / "dataset.jsonl").string() : o.data_path;
}

std::string checkpoint_path(const Overrides& o, const ExperimentConfig& cfg) {
    return o.checkpoint_path.empty()
               ? (fs::path(cfg.output_dir) / ("checkpoint_" + std::string(to_string(cfg.method)) + ".json")).string()
               : o.checkpoint_path;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open for writing", path.string());
    out << text;
    if (!out) throw IoError("failed while writing", path.string());
}

void write_grid(const fs::path& path, const Table& t, const char* c0, const char* c1) {
    std::ostringstream s;
    s.precision(17);
    s << "mileage," << c0 << ',' << c1 << '\n';
    for (std::size_t i = 0; i < t.rows(); ++i) s << i + 1 << ',' << t(i, 0) << ',' << t(i, 1) << '\n';
    write_text(path, s.str());
}

int cmd_oracle(const Overrides& o) {
    const auto cfg = resolve(o);
    const auto dir = out_dir(cfg);
    const auto mdp = oracle_mdp(cfg.env);
    SoftValueIterationStats stats;
    const auto q = soft_value_iteration(mdp, cfg.oracle_tolerance, cfg.oracle_max_iters, &stats);
    write_grid(dir / "q_star.csv", q.values, "maintain", "replace");
    write_grid(dir / "policy.csv", soft_policy(q).probs, "maintain", "replace");
    write_grid(dir / "reward.csv", mdp.rewards(), "maintain", "replace");
    std::printf("soft value iteration: %zu iterations, residual %.3g\n", stats.iterations, stats.residual);
    std::printf("Q*(1, maintain) = %.3f  Q*(1, replace) = %.3f\n", q.values(0, 0), q.values(0, 1));
    std::printf("wrote %s\n", (dir / "q_star.csv").c_str());
    return kOk;
}

int cmd_generate(const Overrides& o) {
    const auto cfg = resolve(o);
    out_dir(cfg);
    const auto path = data_path(o, cfg);
    const auto data = generate_dataset(cfg);
    write_dataset(data, path);
    std::printf("wrote %zu records (%lld trajectories, %d dummies) to %s\n", data.records.size(),
                static_cast<long long>(data.meta.n_traj), data.meta.n_dummy, path.c_str());
    return kOk;
}

/// The dataset must come from the environment described by the current config.
void check_env(const TransitionDataset& data, const ExperimentConfig& cfg, const std::string& path) {
    const auto expected = env_hash(cfg.env);
    if (data.meta.config_hash != expected)
        throw InvalidArgument("dataset " + path + " was generated for environment " + data.meta.config_hash +
                              ", config describes " + expected);
}

int cmd_train(const Overrides& o) {
    const auto cfg = resolve(o);
    const auto dir = out_dir(cfg);
    const auto dpath = data_path(o, cfg);
    const auto data = read_dataset(dpath);
    check_env(data, cfg, dpath);
    auto [train, test] = split_by_trajectory(data, cfg.data.split);
    const auto ck = train_method(cfg, train);
    const auto cpath = checkpoint_path(o, cfg);
    write_checkpoint(ck, cpath);
    if (ck.model) write_loss_history(ck.model->history, (dir / ("losses_" + ck.method + ".csv")).string());
    if (ck.nfxp) {
        std::printf("theta_hat = (%.4f, %.4f), mean NLL %.6f\n", ck.nfxp->theta_hat[0], ck.nfxp->theta_hat[1],
                    ck.nfxp->neg_log_likelihood);
        if (ck.nfxp->flat_likelihood) std::fprintf(stderr, "warning: likelihood is flat, theta is not identified\n");
    }
    if (ck.model && ck.model->batches_without_anchor > 0)
        std::fprintf(stderr, "warning: %zu batches held no anchor-action record\n", ck.model->batches_without_anchor);
    std::printf("trained %s on %zu records, wrote %s\n", ck.method.c_str(), train.records.size(), cpath.c_str());
    return kOk;
}

int cmd_evaluate(const Overrides& o) {
    const auto cfg = resolve(o);
    const auto dir = out_dir(cfg);
    const auto dpath = data_path(o, cfg);
    const auto cpath = checkpoint_path(o, cfg);
    const auto data = read_dataset(dpath);
    check_env(data, cfg, dpath);
    const auto ck = read_checkpoint(cpath);
    if (ck.config_hash != data.meta.config_hash)
        throw InvalidArgument("checkpoint " + cpath + " was trained for environment " + ck.config_hash +
                              ", dataset " + dpath + " is " + data.meta.config_hash);
    const auto start = std::chrono::steady_clock::now();
    const auto q_star = oracle_q(cfg);
    auto rep = evaluate_checkpoint(ck, cfg, data, q_star);
    rep.wall_secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    write_report_csv({rep}, (dir / ("report_" + ck.method + ".csv")).string());
    const auto table = format_per_state_table(rep.cells);
    write_text(dir / ("per_state_" + ck.method + ".txt"), table);
    std::cout << table << '\n' << format_report_table({rep});
    return kOk;
}

int cmd_sweep(const Overrides& o) {
    const auto cfg = resolve(o);
    const auto dir = out_dir(cfg);
    const auto reports = run_sweep(cfg);
    write_report_csv(reports, (dir / ("sweep_" + std::string(to_string(cfg.method)) + ".csv")).string());
    const auto s = summarize_mape(reports);
    std::cout << format_report_table(reports);
    std::printf("%s: mape_r mean %.3f  se %.3f  (n=%zu)\n", to_string(cfg.method), s.mean, s.se, s.n);
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Reward recovery on the bus-engine benchmark"};
    app.require_subcommand(1);
    Overrides o;
    int (*run)(const Overrides&) = nullptr;
    const std::pair<const char*, int (*)(const Overrides&)> commands[] = {
        {"oracle", cmd_oracle}, {"generate", cmd_generate}, {"train", cmd_train},
        {"evaluate", cmd_evaluate}, {"sweep", cmd_sweep}};
    const char* help[] = {"soft value iteration ground truth", "sample expert trajectories",
                          "fit one method on the training split", "report reward MAPE on the evaluation split",
                          "generate, train and evaluate over several seeds"};
    for (std::size_t i = 0; i < std::size(commands); ++i) {
        auto* cmd = app.add_subcommand(commands[i].first, help[i]);
        add_common(*cmd, o);
        cmd->callback([&run, f = commands[i].second] { run = f; });
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kConfigError;
    }

    try {
        return run(o);
    } catch (const InvalidArgument& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kConfigError;
    } catch (const ConvergenceError& e) {
        std::fprintf(stderr, "convergence error: %s\n", e.what());
        return kConvergenceError;
    } catch (const DivergenceError& e) {
        std::fprintf(stderr, "divergence: %s\n", e.what());
        return kConvergenceError;
    } catch (const IoError& e) {
        std::fprintf(stderr, "i/o error: %s\n", e.what());
        return kIoError;
    } catch (const std::exception& e) {
        // ParseError, VersionError, ValidationError: the artifact on disk is unusable.
        std::fprintf(stderr, "error reading artifact: %s\n", e.what());
        return kIoError;
    }
}
