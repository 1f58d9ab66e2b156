#ifndef FEDPM_PROTOTYPE_MEMORY_HPP
#define FEDPM_PROTOTYPE_MEMORY_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "fedpm/matrix.hpp"
#include "fedpm/rng.hpp"

namespace fedpm {

/// Where a memory slot came from in the last server update.
enum class Provenance : std::uint8_t { fresh = 0, shared = 1, personalized = 2 };

const char* provenance_name(Provenance p);

/**
 * Discrete prototype codebook of one domain: M prototype vectors of
 * dimension D plus per-slot usage counts accumulated over a local round.
 */
struct PrototypeMemory {
    Matrix vectors;                    // M x D
    std::vector<std::int64_t> usage;   // assignment counts, reset each round
    std::vector<Provenance> provenance;
    std::string domain_id;

    std::size_t size() const { return vectors.rows; }
    std::size_t dim() const { return vectors.cols; }

    void reset_usage() { usage.assign(usage.size(), 0); }
};

/// Per-patch nearest-prototype assignment. quantized rows are bitwise
/// copies of the chosen memory rows.
struct QuantizationResult {
    std::vector<std::size_t> indices;  // one per patch, in [0, M)
    Matrix quantized;                  // patches x D
};

/// Rows i.i.d. uniform in (-1/sqrt(D), 1/sqrt(D)); usage zero, slots fresh.
PrototypeMemory init_memory(std::size_t size, std::size_t dim, std::uint64_t seed,
                            std::string domain_id = {});

/// Fill a single row from the same distribution init_memory uses.
void fill_fresh_row(double* row, std::size_t dim, Rng& rng);

/**
 * Nearest prototype by Euclidean distance, ties broken by the smallest
 * index. Does not touch usage counts.
 */
std::size_t retrieve_index(const PrototypeMemory& memory, const double* z);
std::pair<std::size_t, std::vector<double>> retrieve(const PrototypeMemory& memory,
                                                     const std::vector<double>& z);

/// Row-wise retrieval over a batch of latents; optionally counts each
/// assignment into memory.usage.
QuantizationResult retrieve_batch(PrototypeMemory& memory, const Matrix& latents,
                                  bool record_usage);
QuantizationResult retrieve_batch(const PrototypeMemory& memory, const Matrix& latents);

/// Mean over elements of (Z - Zq)^2; gradient flows to Z only.
double commitment_loss(const Matrix& latents, const Matrix& quantized);

/// Mean over elements of (Z - Zq)^2; gradient flows to the selected rows only.
double codebook_loss(const Matrix& latents, const Matrix& quantized);

}  // namespace fedpm

#endif  // FEDPM_PROTOTYPE_MEMORY_HPP
