// Command-line driver: simulate | evaluate | inspect-memory | gen-synthetic
// | gradcheck. Exit codes: 0 success, 1 runtime failure, 2 usage/config
// error.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"

#include "fedpm/federation.hpp"
#include "fedpm/gradcheck.hpp"
#include "fedpm/memory_server.hpp"
#include "fedpm/serialize.hpp"
#include "fedpm/synthetic.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

std::string resolve_output_root(const std::string& flag_value) {
    if (!flag_value.empty()) return flag_value;
    if (const char* env = std::getenv("FEDPM_OUTPUT_ROOT"); env && *env) return env;
    return "runs";
}

int cmd_simulate(const std::string& config_path, const std::vector<std::string>& overrides,
                 const std::string& output_flag) {
    fedpm::RunConfig config;
    try {
        config = fedpm::load_run_config(config_path, overrides);
    } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitUsage;
    }

    const std::string root = resolve_output_root(output_flag);
    try {
        fedpm::Simulation sim(config);
        const fedpm::SimulationResult result = sim.run(root, {}, &std::cout);
        std::cout << "\nbest round " << result.best_round << "  avg_val_loss "
                  << result.best_val_loss << "  (" << result.rounds_run << " rounds)\n";
        std::cout << fedpm::summary_to_csv(result);
        std::cout << "outputs in " << root << "/" << config.run_id << "\n";
        return kExitOk;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
}

int cmd_evaluate(const std::string& config_path, const std::vector<std::string>& overrides,
                 const std::string& checkpoint_dir) {
    try {
        const fedpm::RunConfig config = fedpm::load_run_config(config_path, overrides);
        std::cout << "domain,horizon,test_mse,test_mae\n";
        for (const fedpm::DatasetManifest& manifest : config.datasets) {
            const std::string path = checkpoint_dir + "/" + manifest.name + ".ckpt";
            const fedpm::ClientCheckpoint ckpt = fedpm::read_checkpoint(path);
            const fedpm::ClientState client = fedpm::ClientState::restore(ckpt);

            fedpm::TimeSeriesDataset ds = fedpm::load_csv(manifest.path);
            const fedpm::SplitViews views = fedpm::split(
                ds, fedpm::SplitBoundaries{manifest.train_end, manifest.val_end});
            const auto instances = fedpm::make_instances(
                views.test, manifest.lookback, manifest.horizon, config.eval_stride);
            const fedpm::EvalMetrics metrics =
                client.evaluate(instances, config.eval_raw_scale);
            std::printf("%s,%zu,%.10g,%.10g\n", manifest.name.c_str(), manifest.horizon,
                        metrics.mse, metrics.mae);
        }
        return kExitOk;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
}

int cmd_inspect(const std::string& checkpoint_path, const std::string& csv_out,
                std::size_t limit) {
    try {
        const fedpm::ClientCheckpoint ckpt = fedpm::read_checkpoint(checkpoint_path);
        const fedpm::ClientState client = fedpm::ClientState::restore(ckpt);
        const fedpm::PrototypeMemory& memory = client.memory();
        const std::size_t m = memory.size();
        const std::size_t horizon = client.config().horizon;

        // Decoded time-domain pattern of each prototype: the prototype
        // repeated across all patch positions, run through decoder and head
        // on the normalized scale.
        std::vector<std::vector<double>> patterns(m);
        for (std::size_t i = 0; i < m; ++i) {
            fedpm::Matrix rows(client.config().patch_count(), memory.dim());
            for (std::size_t b = 0; b < rows.rows; ++b)
                for (std::size_t j = 0; j < memory.dim(); ++j)
                    rows(b, j) = memory.vectors(i, j);
            patterns[i] = client.decode_and_project(rows, 0.0, 1.0);
        }

        std::vector<double> max_sim(m, 0.0);
        double pair_max = -1.0, pair_sum = 0.0;
        std::size_t pair_count = 0;
        for (std::size_t i = 0; i < m; ++i) {
            double best = -1.0;
            for (std::size_t j = 0; j < m; ++j) {
                if (i == j) continue;
                const double sim = fedpm::cosine_similarity(
                    memory.vectors.row(i), memory.vectors.row(j), memory.dim());
                best = std::max(best, sim);
                if (j > i) {
                    pair_max = std::max(pair_max, sim);
                    pair_sum += sim;
                    ++pair_count;
                }
            }
            max_sim[i] = best;
        }

        std::int64_t total_usage = 0;
        std::size_t shared = 0, personalized = 0, fresh = 0;
        for (std::size_t i = 0; i < m; ++i) {
            total_usage += memory.usage[i];
            switch (memory.provenance[i]) {
                case fedpm::Provenance::shared: ++shared; break;
                case fedpm::Provenance::personalized: ++personalized; break;
                case fedpm::Provenance::fresh: ++fresh; break;
            }
        }

        std::cout << "domain " << ckpt.domain_id << "  M " << m << "  D " << memory.dim()
                  << "\n";
        std::cout << "provenance: shared " << shared << ", personalized " << personalized
                  << ", fresh " << fresh << "\n";
        std::cout << "usage total " << total_usage << "\n";
        if (pair_count > 0)
            std::cout << "pairwise cosine: mean "
                      << pair_sum / static_cast<double>(pair_count) << ", max " << pair_max
                      << "\n";
        std::cout << "slot,provenance,usage,max_sim\n";
        for (std::size_t i = 0; i < std::min(limit, m); ++i)
            std::printf("%zu,%s,%lld,%.4f\n", i,
                        fedpm::provenance_name(memory.provenance[i]),
                        static_cast<long long>(memory.usage[i]), max_sim[i]);

        if (!csv_out.empty()) {
            std::ofstream out(csv_out);
            if (!out.is_open()) throw std::runtime_error("cannot write " + csv_out);
            out << "slot,provenance,usage,max_sim";
            for (std::size_t f = 0; f < horizon; ++f) out << ",pattern_" << f;
            out << "\n";
            for (std::size_t i = 0; i < m; ++i) {
                out << i << ',' << fedpm::provenance_name(memory.provenance[i]) << ','
                    << memory.usage[i] << ',' << max_sim[i];
                char buf[32];
                for (double v : patterns[i]) {
                    std::snprintf(buf, sizeof(buf), ",%.10g", v);
                    out << buf;
                }
                out << "\n";
            }
            std::cout << "full dump in " << csv_out << "\n";
        }
        return kExitOk;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
}

int cmd_gen_synthetic(const fedpm::SyntheticSpec& spec, const std::string& out_dir,
                      bool emit_config) {
    try {
        namespace fs = std::filesystem;
        fs::create_directories(out_dir);
        const auto domains = fedpm::generate_synthetic(spec);
        for (const auto& domain : domains) {
            const std::string base = out_dir + "/" + domain.data.name;
            fedpm::write_csv(domain.data, base + ".csv");
            std::ofstream schedule(base + ".schedule.json");
            schedule << fedpm::schedule_to_json(domain.schedule) << "\n";
            std::cout << "wrote " << base << ".csv (" << domain.data.length() << " rows, "
                      << domain.data.channels() << " channel(s))\n";
        }
        if (emit_config) {
            // ready-to-run config with a 70/15/15 split; window sizes shrink
            // with the series so the validation split always fits
            const std::size_t train_end = spec.length * 70 / 100;
            const std::size_t val_end = spec.length * 85 / 100;
            const std::size_t val_size = val_end - train_end;
            std::size_t lookback = std::min<std::size_t>(96, val_size * 3 / 5 / 4 * 4);
            lookback = std::max<std::size_t>(lookback, 8);
            std::size_t horizon = std::min<std::size_t>(24, val_size / 4);
            horizon = std::max<std::size_t>(horizon, 1);
            std::string json = "{\n  \"datasets\": [\n";
            for (std::size_t n = 0; n < domains.size(); ++n) {
                json += "    {\"name\": \"" + domains[n].data.name + "\", \"path\": \"" +
                        out_dir + "/" + domains[n].data.name + ".csv\", \"train_end\": " +
                        std::to_string(train_end) + ", \"val_end\": " +
                        std::to_string(val_end) + ", \"lookback\": " +
                        std::to_string(lookback) + ", \"horizon\": " +
                        std::to_string(horizon) + "}";
                json += n + 1 < domains.size() ? ",\n" : "\n";
            }
            json += "  ],\n  \"rounds\": 20,\n  \"memory_size\": 64,\n  \"latent_dim\": 32,"
                    "\n  \"learning_rate\": 0.001,\n  \"local_epochs\": 2,"
                    "\n  \"train_stride\": 2,\n  \"seed\": 1\n}\n";
            std::ofstream config(out_dir + "/config.json");
            config << json;
            std::cout << "wrote " << out_dir << "/config.json\n";
        }
        return kExitOk;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
}

int cmd_gradcheck(std::uint64_t seed, std::size_t trials, double tolerance,
                  const std::string& corrupt) {
    if (trials == 0) {
        std::cerr << "usage error: trials must be >= 1\n";
        return kExitUsage;
    }
    try {
        const fedpm::GradCheckReport report =
            fedpm::run_gradient_checks(seed, trials, tolerance, corrupt);
        std::cout << report.to_string();
        return report.pass ? kExitOk : kExitRuntime;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"federated prototypical-memory forecasting simulator"};
    app.require_subcommand(1);

    std::string config_path, output_flag, checkpoint_dir, checkpoint_path, csv_out, out_dir;
    std::vector<std::string> overrides;
    std::size_t inspect_limit = 16;

    auto* simulate = app.add_subcommand("simulate", "run a federated simulation");
    simulate->add_option("--config", config_path, "run config (json)")->required();
    simulate->add_option("--set", overrides, "override config entries, key=value");
    simulate->add_option("--output", output_flag,
                         "output root (default $FEDPM_OUTPUT_ROOT or ./runs)");

    auto* evaluate = app.add_subcommand("evaluate", "evaluate stored checkpoints on test");
    evaluate->add_option("--config", config_path, "run config (json)")->required();
    evaluate->add_option("--set", overrides, "override config entries, key=value");
    evaluate->add_option("--checkpoints", checkpoint_dir, "directory with <domain>.ckpt")
        ->required();

    auto* inspect = app.add_subcommand("inspect-memory", "dump a checkpoint's codebook");
    inspect->add_option("--checkpoint", checkpoint_path, "client checkpoint file")
        ->required();
    inspect->add_option("--csv", csv_out, "write the full per-slot dump here");
    inspect->add_option("--limit", inspect_limit, "stdout rows (default 16)");

    fedpm::SyntheticSpec spec;
    bool no_config = false;
    auto* gen = app.add_subcommand("gen-synthetic", "generate multi-domain synthetic data");
    gen->add_option("--out", out_dir, "output directory")->required();
    gen->add_option("--domains", spec.domains, "domain count (default 3)");
    gen->add_option("--length", spec.length, "steps per domain (default 2000)");
    gen->add_option("--channels", spec.channels, "channels per domain (default 1)");
    gen->add_option("--regimes", spec.regimes, "regime templates per domain (default 3)");
    gen->add_option("--min-segment", spec.min_segment, "regime dwell minimum");
    gen->add_option("--max-segment", spec.max_segment, "regime dwell maximum");
    gen->add_option("--noise", spec.noise_scale, "gaussian noise scale (default 0.1)");
    gen->add_option("--regime-amplitude", spec.regime_amplitude,
                    "regime component amplitude (default 0.6)");
    gen->add_option("--seed", spec.seed, "generator seed");
    gen->add_flag("--shared-regimes", spec.shared_regimes,
                  "one regime vocabulary across domains (schedules stay per-domain)");
    gen->add_flag("--no-config", no_config, "skip writing the quick-start config");

    std::uint64_t gc_seed = 1;
    std::size_t gc_trials = 20;
    double gc_tol = 1e-4;
    std::string gc_corrupt;
    auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient audit");
    gradcheck->add_option("--seed", gc_seed, "rng seed (default 1)");
    gradcheck->add_option("--trials", gc_trials, "random configurations (default 20)");
    gradcheck->add_option("--tolerance", gc_tol, "max scaled error (default 1e-4)");
    gradcheck->add_option("--corrupt", gc_corrupt,
                          "negative control: corrupt this gradient group")
        ->group("");  // hidden

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    if (simulate->parsed()) return cmd_simulate(config_path, overrides, output_flag);
    if (evaluate->parsed()) return cmd_evaluate(config_path, overrides, checkpoint_dir);
    if (inspect->parsed()) return cmd_inspect(checkpoint_path, csv_out, inspect_limit);
    if (gen->parsed()) return cmd_gen_synthetic(spec, out_dir, !no_config);
    if (gradcheck->parsed()) return cmd_gradcheck(gc_seed, gc_trials, gc_tol, gc_corrupt);
    return kExitUsage;
}
