#ifndef FEDPM_FEDERATION_HPP
#define FEDPM_FEDERATION_HPP

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "fedpm/dataset.hpp"
#include "fedpm/forecaster.hpp"
#include "fedpm/memory_server.hpp"
#include "fedpm/prototype_memory.hpp"

namespace fedpm {

enum class AggregationMode { fedpm, average, local_only, global_only };
enum class NoiseKind { none, gaussian, laplace, exponential };

const char* mode_name(AggregationMode mode);
const char* noise_name(NoiseKind kind);
AggregationMode mode_from_name(const std::string& name);
NoiseKind noise_from_name(const std::string& name);

struct NoiseSpec {
    NoiseKind kind = NoiseKind::none;
    double mu = 0.0;      // location (ignored for exponential)
    double lambda = 1.0;  // scale
};

/// One entry of the run config's dataset manifest.
struct DatasetManifest {
    std::string name;
    std::string path;  // may be empty when datasets are provided in memory
    std::size_t train_end = 0;
    std::size_t val_end = 0;
    std::size_t lookback = 96;
    std::size_t horizon = 96;
    std::size_t patch_len = 4;
    std::size_t batch_size = 32;
};

/**
 * Full experiment description. Defaults encode the reference
 * hyperparameters; `simulate` needs no overrides beyond the manifest.
 */
struct RunConfig {
    std::vector<DatasetManifest> datasets;
    std::size_t rounds = 100;       // T
    std::size_t local_epochs = 5;   // E
    std::size_t patience = 10;      // early-stopping rounds
    double gamma = 0.95;
    double delta = 0.7;
    double beta = 0.25;
    double learning_rate = 1e-5;
    std::size_t memory_size = 256;  // M
    std::size_t latent_dim = 64;    // D
    AggregationMode mode = AggregationMode::fedpm;
    NoiseSpec noise;
    double few_shot_fraction = 1.0;
    std::uint64_t seed = 0;
    std::size_t train_stride = 1;
    std::size_t eval_stride = 1;
    bool usage_final_epoch_only = false;
    bool eval_raw_scale = false;
    bool shuffle_upload_rows = false;  // permute rows before upload (ablation probe)
    bool parallel_clients = true;
    bool dump_round_artifacts = false;
    std::string run_id = "run";
};

RunConfig load_run_config(const std::string& path,
                          const std::vector<std::string>& overrides = {});
RunConfig parse_run_config_text(const std::string& json_text,
                                const std::vector<std::string>& overrides = {});

struct DomainRoundReport {
    std::string domain;
    LossBreakdown train_loss;
    double val_mse = 0.0;
    double val_mae = 0.0;
    std::size_t upload_bytes = 0;
    std::size_t download_bytes = 0;
    std::size_t personalized = 0;
    std::size_t fresh = 0;
};

struct RoundReport {
    std::size_t round = 0;
    std::vector<DomainRoundReport> domains;
    double avg_val_loss = 0.0;       // mean validation MSE across clients
    std::size_t shared_count = 0;    // K
    std::size_t cluster_count = 0;
    std::size_t edge_count = 0;
    double wall_seconds = 0.0;       // console-only; never serialized
};

/// Canonical line-delimited JSON form of a report (timing excluded so that
/// identical runs produce identical streams).
std::string report_to_json_line(const RoundReport& report);

struct DomainTestResult {
    std::string domain;
    std::size_t horizon = 0;
    double test_mse = 0.0;
    double test_mae = 0.0;
    std::size_t model_parameters = 0;
    std::size_t upload_bytes_per_round = 0;
};

struct SimulationResult {
    std::vector<RoundReport> reports;
    std::size_t best_round = 0;
    double best_val_loss = 0.0;
    std::size_t rounds_run = 0;
    std::vector<DomainTestResult> test;
};

/// Add elementwise noise to the prototype vectors (usage untouched).
PrototypeMemory inject_noise(const PrototypeMemory& memory, const NoiseSpec& spec, Rng& rng);

/// Invoked after each round's aggregation and validation. `outcome` is null
/// in modes without a server phase.
using RoundObserver =
    std::function<void(const RoundReport&, const ServerOutcome* outcome,
                       const std::vector<ClientState>& clients)>;

/**
 * Drives the whole federated loop: local rounds, upload with optional
 * noise, server memory update per mode, early stopping on the
 * client-averaged validation loss, best-round checkpointing and final test
 * evaluation. All randomness derives from config.seed; two runs with the
 * same config produce bitwise-identical artifacts.
 */
class Simulation {
public:
    explicit Simulation(RunConfig config);                                  // loads from paths
    Simulation(RunConfig config, std::vector<TimeSeriesDataset> datasets);  // in-memory

    /// Runs to completion. When output_root is non-empty, writes
    /// {output_root}/{run_id}/reports.jsonl, summary.csv and the best
    /// round's checkpoints. `progress`, when given, receives one console
    /// line per round.
    SimulationResult run(const std::string& output_root = {},
                         const RoundObserver& observer = {},
                         std::ostream* progress = nullptr);

    const std::vector<ClientState>& clients() const { return clients_; }

private:
    void prepare();
    RoundReport run_round(std::size_t round, ServerOutcome* outcome_out,
                          std::vector<ClientCheckpoint>* validated_out);
    void write_outputs(const std::string& output_root, const SimulationResult& result,
                       const std::vector<ClientCheckpoint>& best) const;

    RunConfig config_;
    std::vector<TimeSeriesDataset> datasets_;
    std::vector<ClientState> clients_;
    std::vector<std::vector<ForecastInstance>> train_instances_;
    std::vector<std::vector<ForecastInstance>> val_instances_;
    std::vector<std::vector<ForecastInstance>> test_instances_;
    std::vector<std::string> artifact_lines_;
};

std::string summary_to_csv(const SimulationResult& result);

}  // namespace fedpm

#endif  // FEDPM_FEDERATION_HPP
