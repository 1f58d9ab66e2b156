#include "fedpm/federation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "json.hpp"

#include "fedpm/serialize.hpp"

namespace fedpm {

namespace {

// Stream purposes for seed derivation; values are arbitrary but frozen.
constexpr std::uint64_t kMemoryInit = 1;
constexpr std::uint64_t kModelInit = 2;
constexpr std::uint64_t kShuffle = 3;
constexpr std::uint64_t kNoise = 4;
constexpr std::uint64_t kFreshFill = 5;
constexpr std::uint64_t kUploadShuffle = 6;

std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> path) {
    std::uint64_t s = master;
    for (std::uint64_t p : path) s = mix_seed(s ^ p);
    return mix_seed(s);
}

}  // namespace

const char* mode_name(AggregationMode mode) {
    switch (mode) {
        case AggregationMode::fedpm: return "fedpm";
        case AggregationMode::average: return "average";
        case AggregationMode::local_only: return "local_only";
        case AggregationMode::global_only: return "global_only";
    }
    return "unknown";
}

const char* noise_name(NoiseKind kind) {
    switch (kind) {
        case NoiseKind::none: return "none";
        case NoiseKind::gaussian: return "gaussian";
        case NoiseKind::laplace: return "laplace";
        case NoiseKind::exponential: return "exponential";
    }
    return "unknown";
}

AggregationMode mode_from_name(const std::string& name) {
    if (name == "fedpm") return AggregationMode::fedpm;
    if (name == "average") return AggregationMode::average;
    if (name == "local_only") return AggregationMode::local_only;
    if (name == "global_only") return AggregationMode::global_only;
    throw std::invalid_argument("unknown mode: '" + name + "'");
}

NoiseKind noise_from_name(const std::string& name) {
    if (name == "none") return NoiseKind::none;
    if (name == "gaussian") return NoiseKind::gaussian;
    if (name == "laplace") return NoiseKind::laplace;
    if (name == "exponential") return NoiseKind::exponential;
    throw std::invalid_argument("unknown noise kind: '" + name + "'");
}

PrototypeMemory inject_noise(const PrototypeMemory& memory, const NoiseSpec& spec, Rng& rng) {
    PrototypeMemory out = memory;
    switch (spec.kind) {
        case NoiseKind::none:
            break;
        case NoiseKind::gaussian:
            for (double& v : out.vectors.data) v += rng.normal(spec.mu, spec.lambda);
            break;
        case NoiseKind::laplace:
            for (double& v : out.vectors.data) v += rng.laplace(spec.mu, spec.lambda);
            break;
        case NoiseKind::exponential:
            for (double& v : out.vectors.data) v += rng.exponential(spec.lambda);
            break;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Config parsing
// ---------------------------------------------------------------------------

namespace {

void require_keys(const nlohmann::json& j, const std::vector<std::string>& allowed,
                  const std::string& where) {
    for (const auto& item : j.items()) {
        if (std::find(allowed.begin(), allowed.end(), item.key()) == allowed.end())
            throw std::invalid_argument("unknown config key '" + item.key() + "' in " + where);
    }
}

DatasetManifest parse_manifest(const nlohmann::json& j) {
    require_keys(j,
                 {"name", "path", "train_end", "val_end", "lookback", "horizon", "patch_len",
                  "batch_size"},
                 "dataset manifest");
    DatasetManifest m;
    m.name = j.at("name").get<std::string>();
    if (j.contains("path")) m.path = j.at("path").get<std::string>();
    m.train_end = j.at("train_end").get<std::size_t>();
    m.val_end = j.at("val_end").get<std::size_t>();
    if (j.contains("lookback")) m.lookback = j.at("lookback").get<std::size_t>();
    if (j.contains("horizon")) m.horizon = j.at("horizon").get<std::size_t>();
    if (j.contains("patch_len")) m.patch_len = j.at("patch_len").get<std::size_t>();
    if (j.contains("batch_size")) m.batch_size = j.at("batch_size").get<std::size_t>();
    return m;
}

RunConfig parse_run_config(const nlohmann::json& j) {
    require_keys(j,
                 {"datasets", "rounds", "local_epochs", "patience", "gamma", "delta", "beta",
                  "learning_rate", "memory_size", "latent_dim", "mode", "noise",
                  "few_shot_fraction", "seed", "train_stride", "eval_stride",
                  "usage_final_epoch_only", "eval_raw_scale", "shuffle_upload_rows",
                  "parallel_clients", "dump_round_artifacts", "run_id"},
                 "run config");
    RunConfig cfg;
    if (!j.contains("datasets") || !j.at("datasets").is_array() || j.at("datasets").empty())
        throw std::invalid_argument("config requires a non-empty 'datasets' array");
    for (const auto& m : j.at("datasets")) cfg.datasets.push_back(parse_manifest(m));

    auto get = [&j](const char* key, auto& target) {
        if (j.contains(key)) target = j.at(key).get<std::decay_t<decltype(target)>>();
    };
    get("rounds", cfg.rounds);
    get("local_epochs", cfg.local_epochs);
    get("patience", cfg.patience);
    get("gamma", cfg.gamma);
    get("delta", cfg.delta);
    get("beta", cfg.beta);
    get("learning_rate", cfg.learning_rate);
    get("memory_size", cfg.memory_size);
    get("latent_dim", cfg.latent_dim);
    get("few_shot_fraction", cfg.few_shot_fraction);
    get("seed", cfg.seed);
    get("train_stride", cfg.train_stride);
    get("eval_stride", cfg.eval_stride);
    get("usage_final_epoch_only", cfg.usage_final_epoch_only);
    get("eval_raw_scale", cfg.eval_raw_scale);
    get("shuffle_upload_rows", cfg.shuffle_upload_rows);
    get("parallel_clients", cfg.parallel_clients);
    get("dump_round_artifacts", cfg.dump_round_artifacts);
    get("run_id", cfg.run_id);
    if (j.contains("mode")) cfg.mode = mode_from_name(j.at("mode").get<std::string>());
    if (j.contains("noise")) {
        const auto& n = j.at("noise");
        require_keys(n, {"kind", "mu", "lambda"}, "noise spec");
        cfg.noise.kind = noise_from_name(n.at("kind").get<std::string>());
        if (n.contains("mu")) cfg.noise.mu = n.at("mu").get<double>();
        if (n.contains("lambda")) cfg.noise.lambda = n.at("lambda").get<double>();
    }

    if (cfg.rounds == 0 || cfg.local_epochs == 0 || cfg.patience == 0)
        throw std::invalid_argument("rounds, local_epochs and patience must be >= 1");
    if (!(cfg.gamma > 0.0) || cfg.gamma > 1.0)
        throw std::invalid_argument("gamma must lie in (0, 1]");
    if (!(cfg.few_shot_fraction > 0.0) || cfg.few_shot_fraction > 1.0)
        throw std::invalid_argument("few_shot_fraction must lie in (0, 1]");
    if (cfg.memory_size == 0 || cfg.latent_dim == 0)
        throw std::invalid_argument("memory_size and latent_dim must be >= 1");
    if (cfg.train_stride == 0 || cfg.eval_stride == 0)
        throw std::invalid_argument("strides must be >= 1");
    return cfg;
}

nlohmann::json parse_override_value(const std::string& text) {
    if (text == "true") return true;
    if (text == "false") return false;
    try {
        std::size_t used = 0;
        if (text.find_first_of(".eE") == std::string::npos) {
            const long long v = std::stoll(text, &used);
            if (used == text.size()) return v;
        } else {
            const double v = std::stod(text, &used);
            if (used == text.size()) return v;
        }
    } catch (const std::exception&) {
    }
    return text;
}

void apply_override(nlohmann::json& j, const std::string& spec) {
    const std::size_t eq = spec.find('=');
    if (eq == std::string::npos || eq == 0)
        throw std::invalid_argument("override must be key=value, got '" + spec + "'");
    const std::string key = spec.substr(0, eq);
    const nlohmann::json value = parse_override_value(spec.substr(eq + 1));

    nlohmann::json* node = &j;
    std::size_t pos = 0;
    while (true) {
        const std::size_t dot = key.find('.', pos);
        const std::string part = key.substr(pos, dot - pos);
        if (dot == std::string::npos) {
            (*node)[part] = value;
            break;
        }
        node = &(*node)[part];
        pos = dot + 1;
    }
}

}  // namespace

RunConfig parse_run_config_text(const std::string& json_text,
                                const std::vector<std::string>& overrides) {
    nlohmann::json j = nlohmann::json::parse(json_text);
    for (const std::string& o : overrides) apply_override(j, o);
    return parse_run_config(j);
}

RunConfig load_run_config(const std::string& path, const std::vector<std::string>& overrides) {
    std::ifstream in(path);
    if (!in.is_open()) throw std::invalid_argument("cannot open config: " + path);
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse_run_config_text(buffer.str(), overrides);
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

std::string report_to_json_line(const RoundReport& report) {
    nlohmann::json j;
    j["round"] = report.round;
    j["avg_val_loss"] = report.avg_val_loss;
    j["shared"] = report.shared_count;
    j["clusters"] = report.cluster_count;
    j["edges"] = report.edge_count;
    nlohmann::json domains = nlohmann::json::array();
    for (const DomainRoundReport& d : report.domains) {
        nlohmann::json e;
        e["name"] = d.domain;
        e["train_total"] = d.train_loss.total;
        e["train_pred"] = d.train_loss.prediction;
        e["train_commit"] = d.train_loss.commitment;
        e["train_code"] = d.train_loss.codebook;
        e["val_mse"] = d.val_mse;
        e["val_mae"] = d.val_mae;
        e["upload_bytes"] = d.upload_bytes;
        e["download_bytes"] = d.download_bytes;
        e["personalized"] = d.personalized;
        e["fresh"] = d.fresh;
        domains.push_back(e);
    }
    j["domains"] = domains;
    return j.dump();
}

std::string summary_to_csv(const SimulationResult& result) {
    std::ostringstream out;
    out << "domain,horizon,test_mse,test_mae,upload_bytes_per_round,model_parameters,"
           "payload_ratio\n";
    char buf[64];
    for (const DomainTestResult& d : result.test) {
        const double ratio =
            d.model_parameters > 0
                ? static_cast<double>(d.upload_bytes_per_round) /
                      (static_cast<double>(d.model_parameters) * sizeof(double))
                : 0.0;
        out << d.domain << ',' << d.horizon << ',';
        std::snprintf(buf, sizeof(buf), "%.10g", d.test_mse);
        out << buf << ',';
        std::snprintf(buf, sizeof(buf), "%.10g", d.test_mae);
        out << buf << ',' << d.upload_bytes_per_round << ',' << d.model_parameters << ',';
        std::snprintf(buf, sizeof(buf), "%.6g", ratio);
        out << buf << '\n';
    }
    return out.str();
}

// ---------------------------------------------------------------------------
// Simulation
// ---------------------------------------------------------------------------

Simulation::Simulation(RunConfig config) : config_(std::move(config)) {
    datasets_.reserve(config_.datasets.size());
    for (const DatasetManifest& m : config_.datasets) {
        if (m.path.empty())
            throw std::invalid_argument("dataset '" + m.name + "' has no path");
        TimeSeriesDataset ds = load_csv(m.path);
        ds.name = m.name;
        datasets_.push_back(std::move(ds));
    }
    prepare();
}

Simulation::Simulation(RunConfig config, std::vector<TimeSeriesDataset> datasets)
    : config_(std::move(config)), datasets_(std::move(datasets)) {
    if (datasets_.size() != config_.datasets.size())
        throw std::invalid_argument("dataset count does not match manifest count");
    prepare();
}

void Simulation::prepare() {
    const std::size_t n_domains = config_.datasets.size();
    clients_.reserve(n_domains);
    train_instances_.resize(n_domains);
    val_instances_.resize(n_domains);
    test_instances_.resize(n_domains);

    for (std::size_t n = 0; n < n_domains; ++n) {
        const DatasetManifest& m = config_.datasets[n];
        const SplitViews views =
            split(datasets_[n], SplitBoundaries{m.train_end, m.val_end});
        SeriesView train_view = views.train;
        if (config_.few_shot_fraction < 1.0)
            train_view = few_shot_subset(train_view, config_.few_shot_fraction);

        train_instances_[n] =
            make_instances(train_view, m.lookback, m.horizon, config_.train_stride);
        val_instances_[n] =
            make_instances(views.val, m.lookback, m.horizon, config_.eval_stride);
        test_instances_[n] =
            make_instances(views.test, m.lookback, m.horizon, config_.eval_stride);

        ModelConfig model;
        model.patch_len = m.patch_len;
        model.lookback = m.lookback;
        model.horizon = m.horizon;
        model.latent_dim = config_.latent_dim;
        model.beta = config_.beta;
        model.learning_rate = config_.learning_rate;
        model.batch_size = m.batch_size;

        // One random global memory and one model init, broadcast to every
        // domain; averaging and alignment assume index correspondence and
        // comparable latent spaces at round 1.
        PrototypeMemory memory =
            init_memory(config_.memory_size, config_.latent_dim,
                        derive_seed(config_.seed, {kMemoryInit}), m.name);
        clients_.emplace_back(m.name, model, std::move(memory),
                              derive_seed(config_.seed, {kModelInit}));
    }
}

RoundReport Simulation::run_round(std::size_t round, ServerOutcome* outcome_out,
                                  std::vector<ClientCheckpoint>* validated_out) {
    const std::size_t n_domains = clients_.size();
    RoundReport report;
    report.round = round;
    report.domains.resize(n_domains);

    // Local training and validation, one independent worker per client.
    // Validation happens on the freshly trained state (pre-upload): that is
    // the checkpoint candidate this round contributes.
    auto train_one = [&](std::size_t n) {
        Rng shuffle_rng = Rng::derive(config_.seed, {kShuffle, round, n});
        const RoundStats stats =
            clients_[n].train_round(train_instances_[n], config_.local_epochs, shuffle_rng,
                                    config_.usage_final_epoch_only);
        report.domains[n].domain = clients_[n].domain_id();
        report.domains[n].train_loss = stats.mean_loss;
        const EvalMetrics val =
            clients_[n].evaluate(val_instances_[n], config_.eval_raw_scale);
        report.domains[n].val_mse = val.mse;
        report.domains[n].val_mae = val.mae;
    };
    if (config_.parallel_clients && n_domains > 1) {
        std::vector<std::thread> workers;
        std::vector<std::exception_ptr> errors(n_domains);
        for (std::size_t n = 0; n < n_domains; ++n)
            workers.emplace_back([&, n] {
                try {
                    train_one(n);
                } catch (...) {
                    errors[n] = std::current_exception();
                }
            });
        for (auto& w : workers) w.join();
        for (const auto& e : errors)
            if (e) std::rethrow_exception(e);
    } else {
        for (std::size_t n = 0; n < n_domains; ++n) train_one(n);
    }

    if (validated_out) {
        validated_out->clear();
        for (const ClientState& c : clients_) validated_out->push_back(c.snapshot());
    }

    // Upload phase: value copies, optional noise and row shuffling, byte
    // accounting measured on the actual wire buffer.
    if (config_.mode != AggregationMode::local_only) {
        std::vector<PrototypeMemory> uploads;
        uploads.reserve(n_domains);
        for (std::size_t n = 0; n < n_domains; ++n) {
            PrototypeMemory upload = clients_[n].memory();
            if (config_.noise.kind != NoiseKind::none) {
                Rng noise_rng = Rng::derive(config_.seed, {kNoise, round, n});
                upload = inject_noise(upload, config_.noise, noise_rng);
            }
            if (config_.shuffle_upload_rows) {
                Rng perm_rng = Rng::derive(config_.seed, {kUploadShuffle, round, n});
                std::vector<std::size_t> perm(upload.size());
                std::iota(perm.begin(), perm.end(), 0);
                perm_rng.shuffle(perm);
                PrototypeMemory shuffled = upload;
                for (std::size_t i = 0; i < perm.size(); ++i) {
                    std::copy(upload.vectors.row(perm[i]),
                              upload.vectors.row(perm[i]) + upload.dim(),
                              shuffled.vectors.row(i));
                    shuffled.usage[i] = upload.usage[perm[i]];
                    shuffled.provenance[i] = upload.provenance[perm[i]];
                }
                upload = std::move(shuffled);
            }
            report.domains[n].upload_bytes = encode_payload(upload).size();
            uploads.push_back(std::move(upload));
        }

        Rng fresh_rng = Rng::derive(config_.seed, {kFreshFill, round});
        std::vector<PrototypeMemory> downloads(n_domains);
        switch (config_.mode) {
            case AggregationMode::fedpm: {
                ServerOutcome outcome =
                    cross_domain_update(uploads, config_.gamma, config_.delta, fresh_rng);
                report.shared_count = outcome.shared_prototypes.rows;
                report.cluster_count = outcome.cluster_count;
                report.edge_count = outcome.edge_count;
                for (std::size_t n = 0; n < n_domains; ++n) {
                    report.domains[n].personalized = outcome.composition[n].personalized;
                    report.domains[n].fresh = outcome.composition[n].fresh;
                    downloads[n] = outcome.global_memories[n];
                }
                if (outcome_out) *outcome_out = std::move(outcome);
                break;
            }
            case AggregationMode::global_only: {
                // Shared capacity opened to the whole memory, no
                // personalized completion; fresh rows cover the deficit.
                ServerOutcome outcome = cross_domain_update(uploads, 1.0, config_.delta,
                                                            fresh_rng, false);
                report.shared_count = outcome.shared_prototypes.rows;
                report.cluster_count = outcome.cluster_count;
                report.edge_count = outcome.edge_count;
                for (std::size_t n = 0; n < n_domains; ++n) {
                    report.domains[n].personalized = 0;
                    report.domains[n].fresh = outcome.composition[n].fresh;
                    downloads[n] = outcome.global_memories[n];
                }
                if (outcome_out) *outcome_out = std::move(outcome);
                break;
            }
            case AggregationMode::average: {
                const PrototypeMemory averaged = aggregate_average(uploads);
                for (std::size_t n = 0; n < n_domains; ++n) {
                    downloads[n] = averaged;
                    downloads[n].domain_id = clients_[n].domain_id();
                }
                break;
            }
            case AggregationMode::local_only:
                break;
        }

        for (std::size_t n = 0; n < n_domains; ++n) {
            report.domains[n].download_bytes = encode_payload(downloads[n]).size();
            clients_[n].install_memory(std::move(downloads[n]));
        }
    }

    double sum_val = 0.0;
    for (const DomainRoundReport& d : report.domains) sum_val += d.val_mse;
    report.avg_val_loss = sum_val / static_cast<double>(n_domains);
    return report;
}

SimulationResult Simulation::run(const std::string& output_root,
                                 const RoundObserver& observer, std::ostream* progress) {
    SimulationResult result;
    std::vector<ClientCheckpoint> best;
    double best_val = std::numeric_limits<double>::infinity();
    std::size_t best_round = 0;
    std::size_t since_best = 0;

    std::vector<ClientCheckpoint> validated;
    for (std::size_t round = 1; round <= config_.rounds; ++round) {
        const auto start = std::chrono::steady_clock::now();
        ServerOutcome outcome;
        const bool has_outcome = config_.mode == AggregationMode::fedpm ||
                                 config_.mode == AggregationMode::global_only;
        RoundReport report =
            run_round(round, has_outcome ? &outcome : nullptr, &validated);
        report.wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

        if (config_.dump_round_artifacts && has_outcome) {
            nlohmann::json art;
            art["round"] = round;
            nlohmann::json clusters = nlohmann::json::array();
            for (std::size_t c = 0; c < outcome.clusters.size(); ++c) {
                nlohmann::json members = nlohmann::json::array();
                for (const ProtoId& p : outcome.clusters[c])
                    members.push_back({{"domain", p.domain}, {"slot", p.slot}});
                clusters.push_back({{"members", members},
                                    {"cardinality", outcome.clusters[c].size()}});
            }
            art["clusters"] = clusters;
            art["selected"] = outcome.selected_clusters;
            nlohmann::json scores;
            for (std::size_t n = 0; n < outcome.scored_candidates.size(); ++n) {
                nlohmann::json rows = nlohmann::json::array();
                for (const PersonalizedCandidate& c : outcome.scored_candidates[n])
                    rows.push_back({{"slot", c.slot}, {"freq", c.freq}, {"score", c.score}});
                scores[clients_[n].domain_id()] = rows;
            }
            art["scores"] = scores;
            artifact_lines_.push_back(art.dump());
        }

        if (observer) observer(report, has_outcome ? &outcome : nullptr, clients_);
        if (progress)
            *progress << "round " << round << "  avg_val_loss " << report.avg_val_loss
                      << "  K " << report.shared_count << "  (" << report.wall_seconds
                      << " s)\n";

        result.reports.push_back(report);

        if (report.avg_val_loss < best_val) {
            best_val = report.avg_val_loss;
            best_round = round;
            since_best = 0;
            best = validated;  // the state validation actually scored
        } else {
            ++since_best;
        }
        if (since_best >= config_.patience) break;
    }

    result.best_round = best_round;
    result.best_val_loss = best_val;
    result.rounds_run = result.reports.size();

    // Test evaluation on the restored best-round state.
    std::vector<ClientState> best_clients;
    best_clients.reserve(best.size());
    for (const ClientCheckpoint& ckpt : best) best_clients.push_back(ClientState::restore(ckpt));
    for (std::size_t n = 0; n < best_clients.size(); ++n) {
        const EvalMetrics metrics =
            best_clients[n].evaluate(test_instances_[n], config_.eval_raw_scale);
        DomainTestResult t;
        t.domain = best_clients[n].domain_id();
        t.horizon = config_.datasets[n].horizon;
        t.test_mse = metrics.mse;
        t.test_mae = metrics.mae;
        t.model_parameters = best_clients[n].parameter_count();
        t.upload_bytes_per_round =
            config_.mode == AggregationMode::local_only
                ? 0
                : payload_size(config_.memory_size, config_.latent_dim);
        result.test.push_back(t);
    }

    if (!output_root.empty()) write_outputs(output_root, result, best);
    return result;
}

void Simulation::write_outputs(const std::string& output_root,
                               const SimulationResult& result,
                               const std::vector<ClientCheckpoint>& best) const {
    namespace fs = std::filesystem;
    const fs::path run_dir = fs::path(output_root) / config_.run_id;
    fs::create_directories(run_dir);

    std::ofstream reports(run_dir / "reports.jsonl");
    if (!reports.is_open())
        throw std::runtime_error("cannot write " + (run_dir / "reports.jsonl").string());
    for (const RoundReport& r : result.reports) reports << report_to_json_line(r) << "\n";
    reports.close();

    std::ofstream summary(run_dir / "summary.csv");
    summary << summary_to_csv(result);
    summary.close();

    if (!best.empty()) {
        char round_name[32];
        std::snprintf(round_name, sizeof(round_name), "round_%03zu", result.best_round);
        const fs::path ckpt_dir = run_dir / "checkpoints" / round_name;
        fs::create_directories(ckpt_dir);
        for (const ClientCheckpoint& ckpt : best)
            write_checkpoint((ckpt_dir / (ckpt.domain_id + ".ckpt")).string(), ckpt);
    }

    if (!artifact_lines_.empty()) {
        const fs::path art_dir = run_dir / "artifacts";
        fs::create_directories(art_dir);
        std::size_t round = 0;
        for (const std::string& line : artifact_lines_) {
            char name[32];
            std::snprintf(name, sizeof(name), "round_%03zu.json", ++round);
            std::ofstream out(art_dir / name);
            out << line << "\n";
        }
    }
}

}  // namespace fedpm
