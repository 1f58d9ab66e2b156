#ifndef FEDPM_GRADCHECK_HPP
#define FEDPM_GRADCHECK_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "fedpm/forecaster.hpp"

namespace fedpm {

/// Stop-gradient snapshot taken at the evaluation point: quantization
/// indices plus the latents/quantized values the sg() terms hold fixed.
struct FrozenQuantization {
    std::vector<std::size_t> indices;
    Matrix base_latents;
    Matrix base_quantized;
};

/**
 * The loss the finite-difference checker probes: the composite objective
 * with the stop-gradient and straight-through semantics made explicit as
 * constants, evaluated at the client's current (possibly perturbed)
 * parameters and memory. Its exact derivative is the routed gradient, so
 * central differences of this function are the independent oracle for
 * compute_gradients. Uses only forward evaluation.
 */
double routed_probe_loss(const ClientState& client, const ForecastInstance& instance,
                         const FrozenQuantization& frozen);

struct GroupCheck {
    std::string name;
    double max_scaled_error = 0.0;
    std::size_t checked = 0;
    bool pass = true;
};

struct GradCheckReport {
    std::vector<GroupCheck> groups;
    bool unselected_rows_zero = true;   // analytic grads of unretrieved rows are exactly 0
    bool decoder_invariant = true;      // decoder grads unchanged by the memory terms
    bool pass = false;
    std::size_t trials = 0;

    std::string to_string() const;
};

/**
 * Runs `trials` random tiny configurations (B<=4, D<=6, M<=8, F<=3) and
 * compares every analytic gradient against central finite differences of
 * routed_probe_loss with h = 1e-5. Scaled error is |a-n| / max(|a|,|n|,1e-4).
 * `corrupt_group`, when non-empty, perturbs that group's analytic gradients
 * before comparison — a negative control that must make the check fail.
 */
GradCheckReport run_gradient_checks(std::uint64_t seed, std::size_t trials,
                                    double tolerance = 1e-4,
                                    const std::string& corrupt_group = {});

}  // namespace fedpm

#endif  // FEDPM_GRADCHECK_HPP
