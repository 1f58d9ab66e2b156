#include "fedpm/forecaster.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <stdexcept>

namespace fedpm {

std::size_t ModelConfig::patch_count() const {
    return (lookback - patch_len + patch_len - 1) / patch_len + 1;
}

double smooth_l1(double diff) {
    const double a = std::fabs(diff);
    return a < 1.0 ? 0.5 * diff * diff : a - 0.5;
}

double smooth_l1_grad(double diff) {
    const double a = std::fabs(diff);
    return a < 1.0 ? diff : (diff > 0.0 ? 1.0 : -1.0);
}

double prediction_loss(const std::vector<double>& predicted, const std::vector<double>& target) {
    if (predicted.size() != target.size())
        throw std::invalid_argument("prediction_loss: length mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < predicted.size(); ++i)
        acc += smooth_l1(predicted[i] - target[i]);
    return acc / static_cast<double>(predicted.size());
}

ClientState::ClientState(std::string domain_id, ModelConfig config, PrototypeMemory memory,
                         std::uint64_t param_seed)
    : domain_id_(std::move(domain_id)), config_(config), memory_(std::move(memory)) {
    if (memory_.dim() != config_.latent_dim)
        throw std::invalid_argument("memory dimension does not match latent dimension");
    if (config_.patch_len == 0 || config_.patch_len > config_.lookback)
        throw std::invalid_argument("invalid patch length for lookback");
    build_layout();
    init_params(param_seed);
    adam_m_.assign(params_.size(), 0.0);
    adam_v_.assign(params_.size(), 0.0);
    mem_adam_m_.assign(memory_.size() * memory_.dim(), 0.0);
    mem_adam_v_.assign(memory_.size() * memory_.dim(), 0.0);
}

void ClientState::build_layout() {
    const std::size_t s = config_.patch_len;
    const std::size_t d = config_.latent_dim;
    const std::size_t h = config_.hidden_dim();
    const std::size_t b = config_.patch_count();
    const std::size_t f = config_.horizon;

    std::size_t offset = 0;
    auto add_linear = [&offset](std::size_t in, std::size_t out) {
        LinearSpec spec;
        spec.in = in;
        spec.out = out;
        spec.w_offset = offset;
        offset += in * out;
        spec.b_offset = offset;
        offset += out;
        return spec;
    };
    auto add_group = [this](const std::string& name, std::size_t begin, std::size_t end) {
        groups_.push_back(ParamGroup{name, begin, end - begin});
    };

    std::size_t begin = offset;
    embed_ = add_linear(s, d);
    add_group("encoder.patch_embed", begin, offset);

    for (std::size_t k = 0; k < config_.encoder_blocks; ++k) {
        begin = offset;
        enc_expand_.push_back(add_linear(d, h));
        enc_project_.push_back(add_linear(h, d));
        add_group("encoder.block" + std::to_string(k), begin, offset);
    }
    for (std::size_t k = 0; k < config_.decoder_blocks; ++k) {
        begin = offset;
        dec_expand_.push_back(add_linear(d, h));
        dec_project_.push_back(add_linear(h, d));
        add_group("decoder.block" + std::to_string(k), begin, offset);
    }
    begin = offset;
    head_ = add_linear(b * d, f);
    add_group("decoder.head", begin, offset);

    params_.assign(offset, 0.0);
}

void ClientState::init_params(std::uint64_t seed) {
    Rng rng(seed);
    auto init_linear = [this, &rng](const LinearSpec& spec) {
        const double scale = 1.0 / std::sqrt(static_cast<double>(spec.in));
        for (std::size_t i = 0; i < spec.in * spec.out; ++i)
            params_[spec.w_offset + i] = rng.uniform(-scale, scale);
        // biases stay zero
    };
    init_linear(embed_);
    for (std::size_t k = 0; k < enc_expand_.size(); ++k) {
        init_linear(enc_expand_[k]);
        init_linear(enc_project_[k]);
    }
    for (std::size_t k = 0; k < dec_expand_.size(); ++k) {
        init_linear(dec_expand_[k]);
        init_linear(dec_project_[k]);
    }
    init_linear(head_);
}

void ClientState::install_memory(PrototypeMemory memory) {
    if (memory.dim() != config_.latent_dim || memory.size() != memory_.size())
        throw std::invalid_argument("install_memory: shape mismatch");
    memory_ = std::move(memory);
    memory_.reset_usage();
    mem_adam_m_.assign(memory_.size() * memory_.dim(), 0.0);
    mem_adam_v_.assign(memory_.size() * memory_.dim(), 0.0);
    mem_adam_step_ = 0;
}

void ClientState::check_finite(const Matrix& m, const std::string& layer) const {
    if (!m.all_finite())
        throw std::runtime_error("non-finite values after " + layer + " (domain " +
                                 domain_id_ + ")");
}

void ClientState::block_forward(const LinearSpec& expand, const LinearSpec& project,
                                const Matrix& in, Matrix& hidden, Matrix& out) const {
    const std::size_t rows = in.rows;
    const std::size_t d = expand.in;
    const std::size_t h = expand.out;
    const double* w1 = params_.data() + expand.w_offset;
    const double* b1 = params_.data() + expand.b_offset;
    const double* w2 = params_.data() + project.w_offset;
    const double* b2 = params_.data() + project.b_offset;

    hidden = Matrix(rows, h);
    out = in;
    for (std::size_t r = 0; r < rows; ++r) {
        double* hid = hidden.row(r);
        std::memcpy(hid, b1, h * sizeof(double));
        const double* x = in.row(r);
        for (std::size_t i = 0; i < d; ++i) {
            const double xi = x[i];
            const double* w1_row = w1 + i * h;
            for (std::size_t j = 0; j < h; ++j) hid[j] += xi * w1_row[j];
        }
        for (std::size_t j = 0; j < h; ++j) hid[j] = std::tanh(hid[j]);

        double* o = out.row(r);
        for (std::size_t j = 0; j < h; ++j) {
            const double g = hid[j];
            const double* w2_row = w2 + j * d;
            for (std::size_t i = 0; i < d; ++i) o[i] += g * w2_row[i];
        }
        for (std::size_t i = 0; i < d; ++i) o[i] += b2[i];
    }
}

void ClientState::block_backward(const LinearSpec& expand, const LinearSpec& project,
                                 const Matrix& in, const Matrix& hidden, const Matrix& d_out,
                                 std::vector<double>& grad, Matrix& d_in) const {
    const std::size_t rows = in.rows;
    const std::size_t d = expand.in;
    const std::size_t h = expand.out;
    const double* w1 = params_.data() + expand.w_offset;
    const double* w2 = params_.data() + project.w_offset;
    double* g_w1 = grad.data() + expand.w_offset;
    double* g_b1 = grad.data() + expand.b_offset;
    double* g_w2 = grad.data() + project.w_offset;
    double* g_b2 = grad.data() + project.b_offset;

    d_in = d_out;  // residual path
    std::vector<double> d_act(h);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* dy = d_out.row(r);
        const double* hid = hidden.row(r);
        const double* x = in.row(r);

        // through the projection and the tanh
        for (std::size_t j = 0; j < h; ++j) {
            const double* w2_row = w2 + j * d;
            double acc = 0.0;
            for (std::size_t i = 0; i < d; ++i) acc += dy[i] * w2_row[i];
            d_act[j] = acc * (1.0 - hid[j] * hid[j]);
        }
        for (std::size_t j = 0; j < h; ++j) {
            const double g = hid[j];
            double* g_w2_row = g_w2 + j * d;
            for (std::size_t i = 0; i < d; ++i) g_w2_row[i] += g * dy[i];
        }
        for (std::size_t i = 0; i < d; ++i) g_b2[i] += dy[i];

        for (std::size_t i = 0; i < d; ++i) {
            const double xi = x[i];
            double* g_w1_row = g_w1 + i * h;
            for (std::size_t j = 0; j < h; ++j) g_w1_row[j] += xi * d_act[j];
        }
        for (std::size_t j = 0; j < h; ++j) g_b1[j] += d_act[j];

        double* dx = d_in.row(r);
        for (std::size_t i = 0; i < d; ++i) {
            const double* w1_row = w1 + i * h;
            double acc = 0.0;
            for (std::size_t j = 0; j < h; ++j) acc += d_act[j] * w1_row[j];
            dx[i] += acc;
        }
    }
}

Matrix ClientState::encode(const PatchSequence& patches) const {
    if (patches.patch_len != config_.patch_len)
        throw std::invalid_argument("encode: patch length mismatch");
    const std::size_t rows = patches.count();
    const std::size_t s = config_.patch_len;
    const std::size_t d = config_.latent_dim;
    const double* we = params_.data() + embed_.w_offset;
    const double* be = params_.data() + embed_.b_offset;

    Matrix tokens(rows, d);
    for (std::size_t r = 0; r < rows; ++r) {
        double* t = tokens.row(r);
        std::memcpy(t, be, d * sizeof(double));
        const double* x = patches.patches.row(r);
        for (std::size_t i = 0; i < s; ++i) {
            const double xi = x[i];
            const double* we_row = we + i * d;
            for (std::size_t j = 0; j < d; ++j) t[j] += xi * we_row[j];
        }
    }
    check_finite(tokens, "encoder.patch_embed");

    Matrix current = tokens;
    for (std::size_t k = 0; k < enc_expand_.size(); ++k) {
        Matrix hidden, out;
        block_forward(enc_expand_[k], enc_project_[k], current, hidden, out);
        check_finite(out, "encoder.block" + std::to_string(k));
        current = std::move(out);
    }
    return current;
}

std::vector<double> ClientState::decode_and_project(const Matrix& dec_input, double norm_mean,
                                                    double norm_std) const {
    Matrix current = dec_input;
    for (std::size_t k = 0; k < dec_expand_.size(); ++k) {
        Matrix hidden, out;
        block_forward(dec_expand_[k], dec_project_[k], current, hidden, out);
        check_finite(out, "decoder.block" + std::to_string(k));
        current = std::move(out);
    }

    const std::size_t flat = current.rows * current.cols;
    if (flat != head_.in) throw std::invalid_argument("decode_and_project: shape mismatch");
    const std::size_t f = config_.horizon;
    const double* wh = params_.data() + head_.w_offset;
    const double* bh = params_.data() + head_.b_offset;

    std::vector<double> projected(bh, bh + f);
    for (std::size_t i = 0; i < flat; ++i) {
        const double xi = current.data[i];
        const double* wh_row = wh + i * f;
        for (std::size_t j = 0; j < f; ++j) projected[j] += xi * wh_row[j];
    }
    std::vector<double> prediction(f);
    for (std::size_t j = 0; j < f; ++j) prediction[j] = projected[j] * norm_std + norm_mean;
    for (double v : prediction)
        if (!std::isfinite(v))
            throw std::runtime_error("non-finite values after decoder.head (domain " +
                                     domain_id_ + ")");
    return prediction;
}

ForwardTrace ClientState::forward(const ForecastInstance& instance, bool record_usage) {
    if (instance.lookback.size() != config_.lookback ||
        instance.target.size() != config_.horizon)
        throw std::invalid_argument("forward: instance dimensions do not match client config");

    ForwardTrace trace;
    trace.patches = patchify(instance.lookback, config_.patch_len);

    // Re-run the encoder keeping per-block caches for the backward pass.
    const std::size_t rows = trace.patches.count();
    const std::size_t s = config_.patch_len;
    const std::size_t d = config_.latent_dim;
    const double* we = params_.data() + embed_.w_offset;
    const double* be = params_.data() + embed_.b_offset;
    trace.embed_out = Matrix(rows, d);
    for (std::size_t r = 0; r < rows; ++r) {
        double* t = trace.embed_out.row(r);
        std::memcpy(t, be, d * sizeof(double));
        const double* x = trace.patches.patches.row(r);
        for (std::size_t i = 0; i < s; ++i) {
            const double xi = x[i];
            const double* we_row = we + i * d;
            for (std::size_t j = 0; j < d; ++j) t[j] += xi * we_row[j];
        }
    }
    check_finite(trace.embed_out, "encoder.patch_embed");

    Matrix current = trace.embed_out;
    for (std::size_t k = 0; k < enc_expand_.size(); ++k) {
        trace.enc_inputs.push_back(current);
        Matrix hidden, out;
        block_forward(enc_expand_[k], enc_project_[k], current, hidden, out);
        check_finite(out, "encoder.block" + std::to_string(k));
        trace.enc_hidden.push_back(std::move(hidden));
        current = std::move(out);
    }
    trace.latents = std::move(current);

    if (config_.bypass_quantizer) {
        trace.quant.indices.assign(rows, 0);
        trace.quant.quantized = trace.latents;
        trace.dec_input = trace.latents;
    } else {
        trace.quant = record_usage
                          ? retrieve_batch(memory_, trace.latents, true)
                          : retrieve_batch(static_cast<const PrototypeMemory&>(memory_),
                                           trace.latents);
        trace.dec_input = trace.quant.quantized;
    }

    Matrix dec_current = trace.dec_input;
    for (std::size_t k = 0; k < dec_expand_.size(); ++k) {
        trace.dec_inputs.push_back(dec_current);
        Matrix hidden, out;
        block_forward(dec_expand_[k], dec_project_[k], dec_current, hidden, out);
        check_finite(out, "decoder.block" + std::to_string(k));
        trace.dec_hidden.push_back(std::move(hidden));
        dec_current = std::move(out);
    }
    trace.dec_out = std::move(dec_current);

    const std::size_t flat = trace.dec_out.rows * trace.dec_out.cols;
    const std::size_t f = config_.horizon;
    const double* wh = params_.data() + head_.w_offset;
    const double* bh = params_.data() + head_.b_offset;
    trace.projected.assign(bh, bh + f);
    for (std::size_t i = 0; i < flat; ++i) {
        const double xi = trace.dec_out.data[i];
        const double* wh_row = wh + i * f;
        for (std::size_t j = 0; j < f; ++j) trace.projected[j] += xi * wh_row[j];
    }
    trace.prediction.resize(f);
    for (std::size_t j = 0; j < f; ++j)
        trace.prediction[j] = trace.projected[j] * instance.norm_std + instance.norm_mean;
    for (double v : trace.prediction)
        if (!std::isfinite(v))
            throw std::runtime_error("non-finite values after decoder.head (domain " +
                                     domain_id_ + ")");
    return trace;
}

ForwardTrace ClientState::forward_eval(const ForecastInstance& instance) const {
    // record_usage=false leaves all members untouched
    return const_cast<ClientState*>(this)->forward(instance, false);
}

LossBreakdown ClientState::total_loss(const ForwardTrace& trace,
                                      const ForecastInstance& instance) const {
    LossBreakdown loss;
    loss.prediction = prediction_loss(trace.prediction, instance.target);
    loss.commitment = commitment_loss(trace.latents, trace.quant.quantized);
    loss.codebook = codebook_loss(trace.latents, trace.quant.quantized);
    loss.total = loss.prediction + config_.beta * loss.commitment + loss.codebook;
    return loss;
}

Gradients ClientState::compute_gradients(const ForwardTrace& trace,
                                         const ForecastInstance& instance) const {
    const std::size_t b = trace.latents.rows;
    const std::size_t d = config_.latent_dim;
    const std::size_t f = config_.horizon;
    const double inv_elems = 1.0 / static_cast<double>(b * d);

    Gradients grads;
    grads.params.assign(params_.size(), 0.0);
    grads.memory_rows = Matrix(memory_.size(), d, 0.0);

    // prediction loss -> de-normalized output -> head
    std::vector<double> d_proj(f);
    for (std::size_t j = 0; j < f; ++j) {
        const double diff = trace.prediction[j] - instance.target[j];
        d_proj[j] = smooth_l1_grad(diff) / static_cast<double>(f) * instance.norm_std;
    }

    const std::size_t flat = trace.dec_out.rows * trace.dec_out.cols;
    const double* wh = params_.data() + head_.w_offset;
    double* g_wh = grads.params.data() + head_.w_offset;
    double* g_bh = grads.params.data() + head_.b_offset;
    Matrix d_dec_out(trace.dec_out.rows, trace.dec_out.cols);
    for (std::size_t i = 0; i < flat; ++i) {
        const double xi = trace.dec_out.data[i];
        const double* wh_row = wh + i * f;
        double* g_wh_row = g_wh + i * f;
        double acc = 0.0;
        for (std::size_t j = 0; j < f; ++j) {
            g_wh_row[j] += xi * d_proj[j];
            acc += wh_row[j] * d_proj[j];
        }
        d_dec_out.data[i] = acc;
    }
    for (std::size_t j = 0; j < f; ++j) g_bh[j] += d_proj[j];

    // decoder blocks, last to first
    Matrix d_current = std::move(d_dec_out);
    for (std::size_t k = dec_expand_.size(); k-- > 0;) {
        Matrix d_in;
        block_backward(dec_expand_[k], dec_project_[k], trace.dec_inputs[k],
                       trace.dec_hidden[k], d_current, grads.params, d_in);
        d_current = std::move(d_in);
    }

    // d_current is now dL_pred / d(dec_input). Straight-through: copy it to
    // the latents verbatim; add the commitment pull on the encoder side.
    Matrix d_latents = std::move(d_current);
    if (!config_.bypass_quantizer) {
        for (std::size_t i = 0; i < d_latents.data.size(); ++i)
            d_latents.data[i] += config_.beta * 2.0 * inv_elems *
                                 (trace.latents.data[i] - trace.quant.quantized.data[i]);
        // codebook term: only retrieved rows move
        for (std::size_t r = 0; r < b; ++r) {
            const std::size_t idx = trace.quant.indices[r];
            double* g_row = grads.memory_rows.row(idx);
            const double* z = trace.latents.row(r);
            const double* zq = trace.quant.quantized.row(r);
            for (std::size_t j = 0; j < d; ++j)
                g_row[j] += 2.0 * inv_elems * (zq[j] - z[j]);
        }
    }

    // encoder blocks, last to first
    for (std::size_t k = enc_expand_.size(); k-- > 0;) {
        Matrix d_in;
        block_backward(enc_expand_[k], enc_project_[k], trace.enc_inputs[k],
                       trace.enc_hidden[k], d_latents, grads.params, d_in);
        d_latents = std::move(d_in);
    }

    // patch embedding
    const std::size_t s = config_.patch_len;
    double* g_we = grads.params.data() + embed_.w_offset;
    double* g_be = grads.params.data() + embed_.b_offset;
    for (std::size_t r = 0; r < b; ++r) {
        const double* x = trace.patches.patches.row(r);
        const double* dt = d_latents.row(r);
        for (std::size_t i = 0; i < s; ++i) {
            const double xi = x[i];
            double* g_we_row = g_we + i * d;
            for (std::size_t j = 0; j < d; ++j) g_we_row[j] += xi * dt[j];
        }
        for (std::size_t j = 0; j < d; ++j) g_be[j] += dt[j];
    }

    return grads;
}

void ClientState::apply_adam(const Gradients& grads) {
    for (double g : grads.params)
        if (!std::isfinite(g))
            throw std::runtime_error("non-finite gradient; step aborted (domain " +
                                     domain_id_ + ")");
    for (double g : grads.memory_rows.data)
        if (!std::isfinite(g))
            throw std::runtime_error("non-finite memory gradient; step aborted (domain " +
                                     domain_id_ + ")");

    const double b1 = config_.adam_beta1;
    const double b2 = config_.adam_beta2;
    const double lr = config_.learning_rate;
    const double eps = config_.adam_eps;

    ++adam_step_;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(adam_step_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(adam_step_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
        const double g = grads.params[i];
        adam_m_[i] = b1 * adam_m_[i] + (1.0 - b1) * g;
        adam_v_[i] = b2 * adam_v_[i] + (1.0 - b2) * g * g;
        params_[i] -= lr * (adam_m_[i] / c1) / (std::sqrt(adam_v_[i] / c2) + eps);
    }

    ++mem_adam_step_;
    const double mc1 = 1.0 - std::pow(b1, static_cast<double>(mem_adam_step_));
    const double mc2 = 1.0 - std::pow(b2, static_cast<double>(mem_adam_step_));
    for (std::size_t i = 0; i < grads.memory_rows.data.size(); ++i) {
        const double g = grads.memory_rows.data[i];
        mem_adam_m_[i] = b1 * mem_adam_m_[i] + (1.0 - b1) * g;
        mem_adam_v_[i] = b2 * mem_adam_v_[i] + (1.0 - b2) * g * g;
        memory_.vectors.data[i] -=
            lr * (mem_adam_m_[i] / mc1) / (std::sqrt(mem_adam_v_[i] / mc2) + eps);
    }
}

LossBreakdown ClientState::backward_and_step(const ForecastInstance& instance) {
    ForwardTrace trace = forward(instance, true);
    const LossBreakdown loss = total_loss(trace, instance);
    Gradients grads = compute_gradients(trace, instance);
    apply_adam(grads);
    return loss;
}

LossBreakdown ClientState::step_batch(const std::vector<ForecastInstance>& instances,
                                      const std::vector<std::size_t>& batch) {
    if (batch.empty()) throw std::invalid_argument("step_batch: empty batch");
    Gradients acc;
    acc.params.assign(params_.size(), 0.0);
    acc.memory_rows = Matrix(memory_.size(), memory_.dim(), 0.0);
    LossBreakdown mean_loss;

    for (std::size_t idx : batch) {
        const ForecastInstance& inst = instances[idx];
        ForwardTrace trace = forward(inst, true);
        const LossBreakdown loss = total_loss(trace, inst);
        mean_loss.total += loss.total;
        mean_loss.prediction += loss.prediction;
        mean_loss.commitment += loss.commitment;
        mean_loss.codebook += loss.codebook;
        const Gradients grads = compute_gradients(trace, inst);
        for (std::size_t i = 0; i < acc.params.size(); ++i) acc.params[i] += grads.params[i];
        for (std::size_t i = 0; i < acc.memory_rows.data.size(); ++i)
            acc.memory_rows.data[i] += grads.memory_rows.data[i];
    }

    const double inv = 1.0 / static_cast<double>(batch.size());
    for (double& g : acc.params) g *= inv;
    for (double& g : acc.memory_rows.data) g *= inv;
    mean_loss.total *= inv;
    mean_loss.prediction *= inv;
    mean_loss.commitment *= inv;
    mean_loss.codebook *= inv;

    apply_adam(acc);
    return mean_loss;
}

RoundStats ClientState::train_round(const std::vector<ForecastInstance>& instances,
                                    std::size_t epochs, Rng& shuffle_rng,
                                    bool usage_final_epoch_only) {
    if (epochs == 0) throw std::invalid_argument("train_round: epochs must be >= 1");
    if (instances.empty()) throw std::invalid_argument("train_round: no instances");

    // a round starts over on the codebook: fresh counts, fresh moments
    memory_.reset_usage();
    mem_adam_m_.assign(mem_adam_m_.size(), 0.0);
    mem_adam_v_.assign(mem_adam_v_.size(), 0.0);
    mem_adam_step_ = 0;
    RoundStats stats;
    std::vector<std::size_t> order(instances.size());
    std::iota(order.begin(), order.end(), 0);

    for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
        if (usage_final_epoch_only) memory_.reset_usage();
        shuffle_rng.shuffle(order);
        for (std::size_t start = 0; start < order.size(); start += config_.batch_size) {
            const std::size_t stop = std::min(order.size(), start + config_.batch_size);
            std::vector<std::size_t> batch(order.begin() + start, order.begin() + stop);
            const LossBreakdown loss = step_batch(instances, batch);
            stats.mean_loss.total += loss.total;
            stats.mean_loss.prediction += loss.prediction;
            stats.mean_loss.commitment += loss.commitment;
            stats.mean_loss.codebook += loss.codebook;
            ++stats.steps;
        }
    }

    if (stats.steps > 0) {
        const double inv = 1.0 / static_cast<double>(stats.steps);
        stats.mean_loss.total *= inv;
        stats.mean_loss.prediction *= inv;
        stats.mean_loss.commitment *= inv;
        stats.mean_loss.codebook *= inv;
    }
    stats.usage_snapshot = memory_.usage;
    return stats;
}

EvalMetrics ClientState::evaluate(const std::vector<ForecastInstance>& instances,
                                  bool raw_scale) const {
    if (instances.empty()) throw std::invalid_argument("evaluate: empty instance set");
    EvalMetrics metrics;
    double se = 0.0, ae = 0.0;
    std::size_t n = 0;
    for (const ForecastInstance& inst : instances) {
        const ForwardTrace trace = forward_eval(inst);
        for (std::size_t j = 0; j < inst.target.size(); ++j) {
            double diff = trace.prediction[j] - inst.target[j];
            if (!raw_scale) diff /= inst.norm_std;
            se += diff * diff;
            ae += std::fabs(diff);
            ++n;
        }
    }
    metrics.mse = se / static_cast<double>(n);
    metrics.mae = ae / static_cast<double>(n);
    metrics.instances = instances.size();
    return metrics;
}

ClientCheckpoint ClientState::snapshot() const {
    ClientCheckpoint ckpt;
    ckpt.domain_id = domain_id_;
    ckpt.config = config_;
    ckpt.params = params_;
    ckpt.adam_m = adam_m_;
    ckpt.adam_v = adam_v_;
    ckpt.adam_step = adam_step_;
    ckpt.memory = memory_;
    ckpt.memory_adam_m = mem_adam_m_;
    ckpt.memory_adam_v = mem_adam_v_;
    ckpt.memory_adam_step = mem_adam_step_;
    return ckpt;
}

ClientState ClientState::restore(const ClientCheckpoint& ckpt) {
    ClientState client(ckpt.domain_id, ckpt.config, ckpt.memory, 0);
    if (client.params_.size() != ckpt.params.size())
        throw std::invalid_argument("restore: parameter count mismatch");
    client.params_ = ckpt.params;
    client.adam_m_ = ckpt.adam_m;
    client.adam_v_ = ckpt.adam_v;
    client.adam_step_ = ckpt.adam_step;
    client.mem_adam_m_ = ckpt.memory_adam_m;
    client.mem_adam_v_ = ckpt.memory_adam_v;
    client.mem_adam_step_ = ckpt.memory_adam_step;
    return client;
}

}  // namespace fedpm
