#include "fedpm/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "fedpm/rng.hpp"

namespace fedpm {

namespace {

constexpr double kStep = 1e-5;
constexpr double kErrorFloor = 1e-4;  // below this magnitude errors are absolute

double scaled_error(double analytic, double numeric) {
    const double denom = std::max({std::fabs(analytic), std::fabs(numeric), kErrorFloor});
    return std::fabs(analytic - numeric) / denom;
}

}  // namespace

double routed_probe_loss(const ClientState& client, const ForecastInstance& instance,
                         const FrozenQuantization& frozen) {
    const ModelConfig& cfg = client.config();
    const PatchSequence patches = patchify(instance.lookback, cfg.patch_len);
    const Matrix latents = client.encode(patches);

    // Straight-through composite: the decoder input moves one-for-one with
    // the latents around the frozen quantized point.
    Matrix dec_input = latents;
    for (std::size_t i = 0; i < dec_input.data.size(); ++i)
        dec_input.data[i] += frozen.base_quantized.data[i] - frozen.base_latents.data[i];

    const std::vector<double> prediction =
        client.decode_and_project(dec_input, instance.norm_mean, instance.norm_std);
    const double pred = prediction_loss(prediction, instance.target);

    const double commit = mean_squared_diff(latents, frozen.base_quantized);

    Matrix quantized_now(frozen.indices.size(), client.memory().dim());
    for (std::size_t b = 0; b < frozen.indices.size(); ++b) {
        const double* row = client.memory().vectors.row(frozen.indices[b]);
        std::copy(row, row + client.memory().dim(), quantized_now.row(b));
    }
    const double code = mean_squared_diff(frozen.base_latents, quantized_now);

    return pred + cfg.beta * commit + code;
}

std::string GradCheckReport::to_string() const {
    std::ostringstream out;
    out << "gradient check over " << trials << " trial(s):\n";
    for (const GroupCheck& g : groups) {
        out << "  " << (g.pass ? "ok   " : "FAIL ") << g.name << "  max scaled error "
            << g.max_scaled_error << "  (" << g.checked << " params)\n";
    }
    out << "  " << (unselected_rows_zero ? "ok   " : "FAIL ")
        << "unselected prototype rows have exactly zero gradient\n";
    out << "  " << (decoder_invariant ? "ok   " : "FAIL ")
        << "decoder gradients invariant to the memory loss terms\n";
    out << (pass ? "PASS" : "FAIL") << "\n";
    return out.str();
}

GradCheckReport run_gradient_checks(std::uint64_t seed, std::size_t trials, double tolerance,
                                    const std::string& corrupt_group) {
    GradCheckReport report;
    report.trials = trials;
    Rng rng(seed);

    auto group_index = [&report](const std::string& name) {
        for (std::size_t i = 0; i < report.groups.size(); ++i)
            if (report.groups[i].name == name) return i;
        report.groups.push_back(GroupCheck{name, 0.0, 0, true});
        return report.groups.size() - 1;
    };

    for (std::size_t trial = 0; trial < trials; ++trial) {
        const std::size_t patch_len = 2 + rng.below(3);   // S in [2,4]
        const std::size_t patch_count = 1 + rng.below(4); // B in [1,4]
        std::size_t lookback = patch_len * patch_count;
        if (patch_count > 1 && rng.below(2) == 0) --lookback;  // pad the last patch
        ModelConfig cfg;
        cfg.patch_len = patch_len;
        cfg.lookback = lookback;
        cfg.horizon = 1 + rng.below(3);                   // F in [1,3]
        cfg.latent_dim = 2 + rng.below(5);                // D in [2,6]
        cfg.beta = 0.25;
        const std::size_t memory_size = 2 + rng.below(7); // M in [2,8]

        PrototypeMemory memory =
            init_memory(memory_size, cfg.latent_dim, rng.next_u64(), "gradcheck");
        // Spread the prototypes so retrieval picks varied rows.
        for (double& v : memory.vectors.data) v = rng.normal(0.0, 1.0);

        ClientState client("gradcheck", cfg, std::move(memory), rng.next_u64());

        ForecastInstance inst;
        std::vector<double> raw(cfg.lookback);
        for (double& v : raw) v = rng.normal(0.0, 1.0);
        inst.lookback = normalize(raw, inst.norm_mean, inst.norm_std);
        inst.target.resize(cfg.horizon);
        for (double& v : inst.target) v = rng.normal(0.0, 1.0);

        ForwardTrace trace = client.forward(inst, false);
        FrozenQuantization frozen{trace.quant.indices, trace.latents, trace.quant.quantized};

        Gradients analytic = client.compute_gradients(trace, inst);

        // Decoder invariance: a twin client with beta = 0 (identical
        // parameters by construction) must produce bitwise-equal decoder
        // gradients; the memory terms never reach the decoder.
        {
            ClientCheckpoint twin_state = client.snapshot();
            twin_state.config.beta = 0.0;
            ClientState twin = ClientState::restore(twin_state);
            ForwardTrace twin_trace = twin.forward(inst, false);
            const Gradients twin_grads = twin.compute_gradients(twin_trace, inst);
            for (const ParamGroup& group : client.parameter_groups()) {
                if (group.name.rfind("decoder.", 0) != 0) continue;
                for (std::size_t i = group.offset; i < group.offset + group.size; ++i)
                    if (analytic.params[i] != twin_grads.params[i])
                        report.decoder_invariant = false;
            }
        }

        if (!corrupt_group.empty()) {
            if (corrupt_group == "memory") {
                for (std::size_t b : frozen.indices)
                    for (std::size_t j = 0; j < cfg.latent_dim; ++j)
                        analytic.memory_rows(b, j) += 1e-2;
            } else {
                for (const ParamGroup& group : client.parameter_groups())
                    if (group.name == corrupt_group)
                        for (std::size_t i = group.offset; i < group.offset + group.size; ++i)
                            analytic.params[i] += 1e-2;
            }
        }

        // Central differences over every encoder/decoder parameter.
        for (const ParamGroup& group : client.parameter_groups()) {
            GroupCheck& check = report.groups[group_index(group.name)];
            for (std::size_t i = group.offset; i < group.offset + group.size; ++i) {
                const double saved = client.parameters()[i];
                client.parameters()[i] = saved + kStep;
                const double up = routed_probe_loss(client, inst, frozen);
                client.parameters()[i] = saved - kStep;
                const double down = routed_probe_loss(client, inst, frozen);
                client.parameters()[i] = saved;
                const double numeric = (up - down) / (2.0 * kStep);
                const double err = scaled_error(analytic.params[i], numeric);
                check.max_scaled_error = std::max(check.max_scaled_error, err);
                ++check.checked;
            }
        }

        // And over every memory entry, selected or not.
        {
            GroupCheck& check = report.groups[group_index("memory")];
            std::vector<bool> selected(client.memory().size(), false);
            for (std::size_t idx : frozen.indices) selected[idx] = true;
            for (std::size_t r = 0; r < client.memory().size(); ++r) {
                for (std::size_t j = 0; j < client.memory().dim(); ++j) {
                    double& cell = client.memory().vectors(r, j);
                    const double saved = cell;
                    cell = saved + kStep;
                    const double up = routed_probe_loss(client, inst, frozen);
                    cell = saved - kStep;
                    const double down = routed_probe_loss(client, inst, frozen);
                    cell = saved;
                    const double numeric = (up - down) / (2.0 * kStep);
                    const double err = scaled_error(analytic.memory_rows(r, j), numeric);
                    check.max_scaled_error = std::max(check.max_scaled_error, err);
                    ++check.checked;
                    if (!selected[r] && analytic.memory_rows(r, j) != 0.0)
                        report.unselected_rows_zero = false;
                }
            }
        }
    }

    report.pass = report.unselected_rows_zero && report.decoder_invariant;
    for (GroupCheck& g : report.groups) {
        g.pass = g.max_scaled_error < tolerance;
        report.pass = report.pass && g.pass;
    }
    return report;
}

}  // namespace fedpm
