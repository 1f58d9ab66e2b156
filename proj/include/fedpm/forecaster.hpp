#ifndef FEDPM_FORECASTER_HPP
#define FEDPM_FORECASTER_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "fedpm/dataset.hpp"
#include "fedpm/matrix.hpp"
#include "fedpm/prototype_memory.hpp"
#include "fedpm/rng.hpp"

namespace fedpm {

/**
 * Per-client architecture and optimizer settings. The encoder is a linear
 * patch embedding followed by position-wise MLP blocks (residual,
 * D -> 2D -> D, tanh); the decoder mirrors it with one block and a
 * flatten-and-project head. The block stack is deliberately simple so every
 * gradient is hand-derivable and cheap to verify by finite differences.
 */
struct ModelConfig {
    std::size_t patch_len = 4;
    std::size_t lookback = 96;
    std::size_t horizon = 96;
    std::size_t latent_dim = 64;
    std::size_t encoder_blocks = 2;
    std::size_t decoder_blocks = 1;
    double beta = 0.25;            // weight of the commitment term
    double learning_rate = 1e-5;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    std::size_t batch_size = 32;
    bool bypass_quantizer = false;  // diagnostic: feed Z to the decoder unquantized

    std::size_t hidden_dim() const { return 2 * latent_dim; }
    std::size_t patch_count() const;
};

/// Smooth L1 with the transition at |d| = 1.
double smooth_l1(double diff);
double smooth_l1_grad(double diff);
/// Mean Smooth L1 over a prediction/target pair of equal length.
double prediction_loss(const std::vector<double>& predicted, const std::vector<double>& target);

struct LossBreakdown {
    double total = 0.0;
    double prediction = 0.0;
    double commitment = 0.0;
    double codebook = 0.0;
};

/// Everything the backward pass needs from one forward evaluation.
struct ForwardTrace {
    PatchSequence patches;
    Matrix embed_out;                  // B x D
    std::vector<Matrix> enc_inputs;    // per block, B x D
    std::vector<Matrix> enc_hidden;    // per block, B x 2D (tanh outputs)
    Matrix latents;                    // Z, B x D
    QuantizationResult quant;
    Matrix dec_input;                  // Zq, or Z when the quantizer is bypassed
    std::vector<Matrix> dec_inputs;
    std::vector<Matrix> dec_hidden;
    Matrix dec_out;                    // B x D
    std::vector<double> projected;     // F, pre de-normalization
    std::vector<double> prediction;    // F, de-normalized
};

/// Flat gradient of one step: encoder/decoder parameters plus the full
/// codebook gradient (rows that were not retrieved stay exactly zero).
struct Gradients {
    std::vector<double> params;
    Matrix memory_rows;
};

/// Named contiguous range within the flat parameter vector.
struct ParamGroup {
    std::string name;
    std::size_t offset = 0;
    std::size_t size = 0;
};

struct RoundStats {
    LossBreakdown mean_loss;   // averaged over optimizer steps
    std::size_t steps = 0;
    std::vector<std::int64_t> usage_snapshot;
};

struct EvalMetrics {
    double mse = 0.0;
    double mae = 0.0;
    std::size_t instances = 0;
};

struct ClientCheckpoint {
    std::string domain_id;
    ModelConfig config;
    std::vector<double> params;
    std::vector<double> adam_m;
    std::vector<double> adam_v;
    std::int64_t adam_step = 0;
    PrototypeMemory memory;
    std::vector<double> memory_adam_m;
    std::vector<double> memory_adam_v;
    std::int64_t memory_adam_step = 0;
};

/**
 * One domain's trainable state: encoder, decoder, prototype memory and
 * Adam moments. Single-owner mutable; clients never share state.
 *
 * Gradient routing follows the straight-through discipline: the prediction
 * loss reaches the encoder through the quantizer unchanged, the commitment
 * term reaches only the encoder, the codebook term reaches only the
 * retrieved prototype rows, and the decoder sees the prediction term alone.
 */
class ClientState {
public:
    ClientState(std::string domain_id, ModelConfig config, PrototypeMemory memory,
                std::uint64_t param_seed);

    const std::string& domain_id() const { return domain_id_; }
    const ModelConfig& config() const { return config_; }
    const PrototypeMemory& memory() const { return memory_; }
    PrototypeMemory& memory() { return memory_; }

    /// Replace the codebook with a freshly issued global memory. Usage and
    /// the memory's optimizer moments start over; encoder/decoder state is
    /// untouched.
    void install_memory(PrototypeMemory memory);

    Matrix encode(const PatchSequence& patches) const;
    std::vector<double> decode_and_project(const Matrix& dec_input, double norm_mean,
                                           double norm_std) const;

    ForwardTrace forward(const ForecastInstance& instance, bool record_usage);
    ForwardTrace forward_eval(const ForecastInstance& instance) const;

    LossBreakdown total_loss(const ForwardTrace& trace, const ForecastInstance& instance) const;

    Gradients compute_gradients(const ForwardTrace& trace,
                                const ForecastInstance& instance) const;

    LossBreakdown backward_and_step(const ForecastInstance& instance);

    /// Mean-of-batch gradients, one Adam step. Usage is recorded for every
    /// instance in the batch.
    LossBreakdown step_batch(const std::vector<ForecastInstance>& instances,
                             const std::vector<std::size_t>& batch);

    /// E epochs of minibatch training in seeded shuffled order. Usage is
    /// reset once at round start, or per epoch when only the final epoch's
    /// counts are wanted.
    RoundStats train_round(const std::vector<ForecastInstance>& instances, std::size_t epochs,
                           Rng& shuffle_rng, bool usage_final_epoch_only = false);

    /// Normalized-scale MSE/MAE by default; raw scale on request.
    EvalMetrics evaluate(const std::vector<ForecastInstance>& instances,
                         bool raw_scale = false) const;

    std::vector<double>& parameters() { return params_; }
    const std::vector<double>& parameters() const { return params_; }
    const std::vector<ParamGroup>& parameter_groups() const { return groups_; }
    std::size_t parameter_count() const { return params_.size(); }

    ClientCheckpoint snapshot() const;
    static ClientState restore(const ClientCheckpoint& checkpoint);

private:
    struct LinearSpec {
        std::size_t w_offset = 0;
        std::size_t b_offset = 0;
        std::size_t in = 0;
        std::size_t out = 0;
    };

    void build_layout();
    void init_params(std::uint64_t seed);
    void apply_adam(const Gradients& grads);
    void block_forward(const LinearSpec& expand, const LinearSpec& project, const Matrix& in,
                       Matrix& hidden, Matrix& out) const;
    void block_backward(const LinearSpec& expand, const LinearSpec& project, const Matrix& in,
                        const Matrix& hidden, const Matrix& d_out, std::vector<double>& grad,
                        Matrix& d_in) const;
    void check_finite(const Matrix& m, const std::string& layer) const;

    std::string domain_id_;
    ModelConfig config_;
    PrototypeMemory memory_;

    std::vector<double> params_;
    std::vector<ParamGroup> groups_;
    LinearSpec embed_;
    std::vector<LinearSpec> enc_expand_, enc_project_;
    std::vector<LinearSpec> dec_expand_, dec_project_;
    LinearSpec head_;

    std::vector<double> adam_m_, adam_v_;
    std::int64_t adam_step_ = 0;
    std::vector<double> mem_adam_m_, mem_adam_v_;
    std::int64_t mem_adam_step_ = 0;
};

}  // namespace fedpm

#endif  // FEDPM_FORECASTER_HPP
