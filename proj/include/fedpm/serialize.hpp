#ifndef FEDPM_SERIALIZE_HPP
#define FEDPM_SERIALIZE_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "fedpm/forecaster.hpp"
#include "fedpm/prototype_memory.hpp"

namespace fedpm {

/**
 * The bytes a client actually puts on the wire each round: M*D prototype
 * doubles followed by M usage counts, little-endian. This buffer's length
 * is what communication accounting reports.
 */
std::vector<std::uint8_t> encode_payload(const PrototypeMemory& memory);
PrototypeMemory decode_payload(const std::vector<std::uint8_t>& bytes, std::size_t size,
                               std::size_t dim, std::string domain_id);

/// Exact wire size of one memory transfer.
std::size_t payload_size(std::size_t size, std::size_t dim);

/// Self-describing JSON record {domain_id, M, D, vectors, usage, provenance}.
std::string memory_to_json(const PrototypeMemory& memory);
PrototypeMemory memory_from_json(const std::string& text);

/// Versioned binary checkpoint of one client (parameters, optimizer
/// moments, memory). Byte-stable for identical state.
void write_checkpoint(const std::string& path, const ClientCheckpoint& checkpoint);
ClientCheckpoint read_checkpoint(const std::string& path);

}  // namespace fedpm

#endif  // FEDPM_SERIALIZE_HPP
