#include "fedpm/prototype_memory.hpp"

#include <cmath>
#include <cstring>
#include <limits>
#include <stdexcept>

namespace fedpm {

const char* provenance_name(Provenance p) {
    switch (p) {
        case Provenance::fresh: return "fresh";
        case Provenance::shared: return "shared";
        case Provenance::personalized: return "personalized";
    }
    return "unknown";
}

void fill_fresh_row(double* row, std::size_t dim, Rng& rng) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(dim));
    for (std::size_t j = 0; j < dim; ++j) row[j] = rng.uniform(-scale, scale);
}

PrototypeMemory init_memory(std::size_t size, std::size_t dim, std::uint64_t seed,
                            std::string domain_id) {
    if (size == 0 || dim == 0)
        throw std::invalid_argument("memory size and dimension must be >= 1");
    PrototypeMemory memory;
    memory.domain_id = std::move(domain_id);
    memory.vectors = Matrix(size, dim);
    memory.usage.assign(size, 0);
    memory.provenance.assign(size, Provenance::fresh);
    Rng rng(seed);
    for (std::size_t i = 0; i < size; ++i) fill_fresh_row(memory.vectors.row(i), dim, rng);
    return memory;
}

std::size_t retrieve_index(const PrototypeMemory& memory, const double* z) {
    const std::size_t dim = memory.dim();
    for (std::size_t j = 0; j < dim; ++j)
        if (!std::isfinite(z[j])) throw std::invalid_argument("retrieve: non-finite query");

    std::size_t best = 0;
    double best_dist = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < memory.size(); ++i) {
        const double* e = memory.vectors.row(i);
        double dist = 0.0;
        for (std::size_t j = 0; j < dim; ++j) {
            const double d = z[j] - e[j];
            dist += d * d;
        }
        if (dist < best_dist) {  // strict: ties keep the smallest index
            best_dist = dist;
            best = i;
        }
    }
    return best;
}

std::pair<std::size_t, std::vector<double>> retrieve(const PrototypeMemory& memory,
                                                     const std::vector<double>& z) {
    if (z.size() != memory.dim())
        throw std::invalid_argument("retrieve: query dimension mismatch");
    const std::size_t index = retrieve_index(memory, z.data());
    const double* row = memory.vectors.row(index);
    return {index, std::vector<double>(row, row + memory.dim())};
}

QuantizationResult retrieve_batch(PrototypeMemory& memory, const Matrix& latents,
                                  bool record_usage) {
    QuantizationResult result =
        retrieve_batch(static_cast<const PrototypeMemory&>(memory), latents);
    if (record_usage)
        for (std::size_t idx : result.indices) ++memory.usage[idx];
    return result;
}

QuantizationResult retrieve_batch(const PrototypeMemory& memory, const Matrix& latents) {
    if (latents.cols != memory.dim())
        throw std::invalid_argument("retrieve_batch: latent dimension mismatch");
    QuantizationResult result;
    result.indices.resize(latents.rows);
    result.quantized = Matrix(latents.rows, memory.dim());
    for (std::size_t b = 0; b < latents.rows; ++b) {
        const std::size_t idx = retrieve_index(memory, latents.row(b));
        result.indices[b] = idx;
        std::memcpy(result.quantized.row(b), memory.vectors.row(idx),
                    memory.dim() * sizeof(double));
    }
    return result;
}

double commitment_loss(const Matrix& latents, const Matrix& quantized) {
    return mean_squared_diff(latents, quantized);
}

double codebook_loss(const Matrix& latents, const Matrix& quantized) {
    return mean_squared_diff(latents, quantized);
}

}  // namespace fedpm
