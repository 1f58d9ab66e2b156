#ifndef FEDPM_MEMORY_SERVER_HPP
#define FEDPM_MEMORY_SERVER_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "fedpm/matrix.hpp"
#include "fedpm/prototype_memory.hpp"
#include "fedpm/rng.hpp"

namespace fedpm {

/// Identifies one prototype slot of one uploaded memory.
struct ProtoId {
    std::size_t domain = 0;
    std::size_t slot = 0;
};

inline bool operator==(const ProtoId& a, const ProtoId& b) {
    return a.domain == b.domain && a.slot == b.slot;
}
inline bool operator<(const ProtoId& a, const ProtoId& b) {
    return a.domain != b.domain ? a.domain < b.domain : a.slot < b.slot;
}

/**
 * Undirected similarity graph over all uploaded prototypes. Edges connect
 * cross-domain pairs (never two slots of the same domain) whose cosine
 * similarity strictly exceeds the threshold.
 */
struct SimilarityGraph {
    std::size_t num_domains = 0;
    std::size_t memory_size = 0;
    std::vector<std::vector<std::size_t>> adjacency;  // flat node id -> neighbors
    std::size_t edge_count = 0;

    std::size_t node_count() const { return num_domains * memory_size; }
    std::size_t node_id(const ProtoId& p) const { return p.domain * memory_size + p.slot; }
    ProtoId proto_of(std::size_t node) const {
        return ProtoId{node / memory_size, node % memory_size};
    }
};

/// Connected components with >= 2 nodes, in BFS discovery order, plus the
/// per-domain pools of nodes that ended up isolated.
struct ClusterSet {
    std::vector<std::vector<ProtoId>> clusters;
    std::vector<std::vector<std::size_t>> singletons;  // per domain, slot indices
};

struct SharedSelection {
    Matrix prototypes;                       // K x D centroids
    std::vector<std::size_t> source_clusters;
    std::size_t capacity = 0;                // floor(gamma * M)
    std::vector<std::size_t> demoted;        // cluster indices beyond top-K
};

/// Candidate for a personalized slot, carried with the stats Eq.-style
/// scoring needs.
struct PersonalizedCandidate {
    std::size_t slot = 0;
    std::vector<double> vector;
    std::int64_t freq = 0;
    double score = 0.0;
};

struct PersonalizedSelection {
    std::vector<PersonalizedCandidate> chosen;  // at most quota entries
};

/// Per-domain outcome of one server-side memory update.
struct DomainComposition {
    std::size_t shared = 0;
    std::size_t personalized = 0;
    std::size_t fresh = 0;
};

struct ServerOutcome {
    std::vector<PrototypeMemory> global_memories;  // one per domain, |rows| == M
    Matrix shared_prototypes;                      // K x D
    std::size_t cluster_count = 0;
    std::size_t edge_count = 0;
    std::vector<DomainComposition> composition;
    std::vector<std::vector<ProtoId>> clusters;          // discovery order
    std::vector<std::size_t> selected_clusters;          // indices into clusters
    std::vector<std::vector<PersonalizedCandidate>> scored_candidates;  // per domain
};

/// Cosine of two equal-length vectors; 0 when either norm is ~zero.
double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b);
double cosine_similarity(const double* a, const double* b, std::size_t dim);

SimilarityGraph build_graph(const std::vector<PrototypeMemory>& memories, double threshold);

/// BFS from nodes in ascending (domain, slot) order.
ClusterSet connected_components(const SimilarityGraph& graph);

std::vector<double> cluster_centroid(const std::vector<ProtoId>& cluster,
                                     const std::vector<PrototypeMemory>& memories);

/// Top-K clusters by (cardinality desc, discovery asc) with K capped at
/// floor(gamma * M); the rest are demoted back to their owners' pools.
SharedSelection select_shared(const ClusterSet& clusters,
                              const std::vector<PrototypeMemory>& memories, double gamma,
                              std::size_t memory_size);

/**
 * Utility-diversity score: usage frequency normalized by the pool maximum,
 * minus the largest cosine similarity to any other domain's pooled
 * prototype. Zero utility when the pool never fired; zero penalty when no
 * other pool exists.
 */
double utility_diversity_score(const std::vector<double>& prototype, std::int64_t freq,
                               std::int64_t max_freq,
                               const std::vector<const double*>& other_pool, std::size_t dim);

/// Rank a domain's pooled candidates by score (ties by slot) and keep the
/// quota best. Scores for the full pool are returned for inspection.
PersonalizedSelection select_personalized(std::vector<PersonalizedCandidate> pool,
                                          std::size_t quota,
                                          std::vector<PersonalizedCandidate>* scored_out);

/**
 * Whole server phase: graph, BFS clusters, centroid pooling, capacity-capped
 * shared selection and per-domain personalized completion. Every emitted
 * memory has exactly M rows (fresh random rows cover any deficit) and zeroed
 * usage. Shared rows are bitwise identical across domains. With
 * `personalized` false the quota is zero and fresh rows fill everything
 * beyond the shared block (the global-only ablation).
 */
ServerOutcome cross_domain_update(const std::vector<PrototypeMemory>& memories, double gamma,
                                  double delta, Rng& fresh_rng, bool personalized = true);

/// Index-wise mean of the uploaded memories (the "average" ablation).
PrototypeMemory aggregate_average(const std::vector<PrototypeMemory>& memories);

}  // namespace fedpm

#endif  // FEDPM_MEMORY_SERVER_HPP
