#include "fedpm/memory_server.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <deque>
#include <stdexcept>

namespace fedpm {

namespace {
constexpr double kNormFloor = 1e-12;
}

double cosine_similarity(const double* a, const double* b, std::size_t dim) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < dim; ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    na = std::sqrt(na);
    nb = std::sqrt(nb);
    if (na < kNormFloor || nb < kNormFloor) return 0.0;
    return dot / (na * nb);
}

double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size())
        throw std::invalid_argument("cosine_similarity: dimension mismatch");
    return cosine_similarity(a.data(), b.data(), a.size());
}

SimilarityGraph build_graph(const std::vector<PrototypeMemory>& memories, double threshold) {
    if (memories.size() < 2)
        throw std::invalid_argument("build_graph: need at least two memories");
    const std::size_t m = memories[0].size();
    const std::size_t d = memories[0].dim();
    for (const auto& mem : memories)
        if (mem.size() != m || mem.dim() != d)
            throw std::invalid_argument("build_graph: memory shape mismatch");

    SimilarityGraph graph;
    graph.num_domains = memories.size();
    graph.memory_size = m;
    graph.adjacency.assign(graph.node_count(), {});

    // Precomputed norms keep the pairwise sweep at one dot product per pair.
    std::vector<std::vector<double>> norms(memories.size(), std::vector<double>(m));
    for (std::size_t n = 0; n < memories.size(); ++n)
        for (std::size_t i = 0; i < m; ++i) {
            const double* row = memories[n].vectors.row(i);
            double acc = 0.0;
            for (std::size_t j = 0; j < d; ++j) acc += row[j] * row[j];
            norms[n][i] = std::sqrt(acc);
        }

    for (std::size_t a = 0; a < memories.size(); ++a) {
        for (std::size_t b = a + 1; b < memories.size(); ++b) {
            for (std::size_t i = 0; i < m; ++i) {
                const double* ra = memories[a].vectors.row(i);
                if (norms[a][i] < kNormFloor) continue;
                for (std::size_t j = 0; j < m; ++j) {
                    if (norms[b][j] < kNormFloor) continue;
                    const double* rb = memories[b].vectors.row(j);
                    double dot = 0.0;
                    for (std::size_t k = 0; k < d; ++k) dot += ra[k] * rb[k];
                    const double sim = dot / (norms[a][i] * norms[b][j]);
                    if (sim > threshold) {  // strictly exceeding
                        const std::size_t na = a * m + i;
                        const std::size_t nb = b * m + j;
                        graph.adjacency[na].push_back(nb);
                        graph.adjacency[nb].push_back(na);
                        ++graph.edge_count;
                    }
                }
            }
        }
    }
    return graph;
}

ClusterSet connected_components(const SimilarityGraph& graph) {
    ClusterSet result;
    result.singletons.assign(graph.num_domains, {});
    std::vector<bool> visited(graph.node_count(), false);

    for (std::size_t start = 0; start < graph.node_count(); ++start) {
        if (visited[start]) continue;
        if (graph.adjacency[start].empty()) {
            visited[start] = true;
            const ProtoId p = graph.proto_of(start);
            result.singletons[p.domain].push_back(p.slot);
            continue;
        }
        std::vector<ProtoId> members;
        std::deque<std::size_t> queue{start};
        visited[start] = true;
        while (!queue.empty()) {
            const std::size_t node = queue.front();
            queue.pop_front();
            members.push_back(graph.proto_of(node));
            for (std::size_t next : graph.adjacency[node]) {
                if (!visited[next]) {
                    visited[next] = true;
                    queue.push_back(next);
                }
            }
        }
        std::sort(members.begin(), members.end());
        result.clusters.push_back(std::move(members));
    }
    return result;
}

std::vector<double> cluster_centroid(const std::vector<ProtoId>& cluster,
                                     const std::vector<PrototypeMemory>& memories) {
    if (cluster.empty()) throw std::invalid_argument("cluster_centroid: empty cluster");
    const std::size_t d = memories[0].dim();
    std::vector<double> centroid(d, 0.0);
    for (const ProtoId& p : cluster) {
        const double* row = memories[p.domain].vectors.row(p.slot);
        for (std::size_t j = 0; j < d; ++j) centroid[j] += row[j];
    }
    const double inv = 1.0 / static_cast<double>(cluster.size());
    for (double& v : centroid) v *= inv;
    return centroid;
}

SharedSelection select_shared(const ClusterSet& clusters,
                              const std::vector<PrototypeMemory>& memories, double gamma,
                              std::size_t memory_size) {
    if (!(gamma > 0.0) || gamma > 1.0)
        throw std::invalid_argument("gamma must lie in (0, 1]");
    SharedSelection selection;
    selection.capacity = static_cast<std::size_t>(
        std::floor(gamma * static_cast<double>(memory_size)));

    std::vector<std::size_t> order(clusters.clusters.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return clusters.clusters[a].size() > clusters.clusters[b].size();
    });  // stable: cardinality ties keep discovery order

    const std::size_t k = std::min(order.size(), selection.capacity);
    const std::size_t d = memories.empty() ? 0 : memories[0].dim();
    selection.prototypes = Matrix(k, d);
    for (std::size_t r = 0; r < k; ++r) {
        selection.source_clusters.push_back(order[r]);
        const std::vector<double> centroid =
            cluster_centroid(clusters.clusters[order[r]], memories);
        std::memcpy(selection.prototypes.row(r), centroid.data(), d * sizeof(double));
    }
    for (std::size_t r = k; r < order.size(); ++r) selection.demoted.push_back(order[r]);
    return selection;
}

double utility_diversity_score(const std::vector<double>& prototype, std::int64_t freq,
                               std::int64_t max_freq,
                               const std::vector<const double*>& other_pool,
                               std::size_t dim) {
    const double utility =
        max_freq > 0 ? static_cast<double>(freq) / static_cast<double>(max_freq) : 0.0;
    double penalty = 0.0;
    if (!other_pool.empty()) {
        double max_sim = -1.0;
        for (const double* other : other_pool)
            max_sim = std::max(max_sim, cosine_similarity(prototype.data(), other, dim));
        penalty = max_sim;
    }
    return utility - penalty;
}

PersonalizedSelection select_personalized(std::vector<PersonalizedCandidate> pool,
                                          std::size_t quota,
                                          std::vector<PersonalizedCandidate>* scored_out) {
    std::sort(pool.begin(), pool.end(),
              [](const PersonalizedCandidate& a, const PersonalizedCandidate& b) {
                  if (a.score != b.score) return a.score > b.score;
                  return a.slot < b.slot;
              });
    if (scored_out) *scored_out = pool;
    PersonalizedSelection selection;
    const std::size_t keep = std::min(quota, pool.size());
    selection.chosen.assign(pool.begin(), pool.begin() + keep);
    return selection;
}

PrototypeMemory aggregate_average(const std::vector<PrototypeMemory>& memories) {
    if (memories.empty()) throw std::invalid_argument("aggregate_average: no memories");
    const std::size_t m = memories[0].size();
    const std::size_t d = memories[0].dim();
    for (const auto& mem : memories)
        if (mem.size() != m || mem.dim() != d)
            throw std::invalid_argument("aggregate_average: memory shape mismatch");

    PrototypeMemory out;
    out.domain_id = "average";
    out.vectors = Matrix(m, d, 0.0);
    out.usage.assign(m, 0);
    out.provenance.assign(m, Provenance::shared);
    for (const auto& mem : memories)
        for (std::size_t i = 0; i < mem.vectors.data.size(); ++i)
            out.vectors.data[i] += mem.vectors.data[i];
    const double inv = 1.0 / static_cast<double>(memories.size());
    for (double& v : out.vectors.data) v *= inv;
    return out;
}

ServerOutcome cross_domain_update(const std::vector<PrototypeMemory>& memories, double gamma,
                                  double delta, Rng& fresh_rng, bool personalized) {
    if (memories.empty()) throw std::invalid_argument("cross_domain_update: no memories");
    const std::size_t num_domains = memories.size();
    const std::size_t m = memories[0].size();
    const std::size_t d = memories[0].dim();

    ServerOutcome outcome;

    ClusterSet clusters;
    if (num_domains >= 2) {
        const SimilarityGraph graph = build_graph(memories, delta);
        outcome.edge_count = graph.edge_count;
        clusters = connected_components(graph);
    } else {
        // A single domain has no cross-domain pairs: everything is unclustered.
        clusters.singletons.assign(1, {});
        for (std::size_t i = 0; i < m; ++i) clusters.singletons[0].push_back(i);
    }
    outcome.cluster_count = clusters.clusters.size();
    outcome.clusters = clusters.clusters;

    const SharedSelection shared = select_shared(clusters, memories, gamma, m);
    outcome.shared_prototypes = shared.prototypes;
    outcome.selected_clusters = shared.source_clusters;
    const std::size_t k = shared.prototypes.rows;
    const std::size_t quota = personalized ? m - k : 0;

    // Per-domain candidate pools: the original unclustered slots plus the
    // members of demoted clusters, returned to their owners.
    std::vector<std::vector<PersonalizedCandidate>> pools(num_domains);
    for (std::size_t n = 0; n < num_domains; ++n)
        for (std::size_t slot : clusters.singletons[n]) {
            PersonalizedCandidate c;
            c.slot = slot;
            const double* row = memories[n].vectors.row(slot);
            c.vector.assign(row, row + d);
            c.freq = memories[n].usage[slot];
            pools[n].push_back(std::move(c));
        }
    for (std::size_t cluster_idx : shared.demoted)
        for (const ProtoId& p : clusters.clusters[cluster_idx]) {
            PersonalizedCandidate c;
            c.slot = p.slot;
            const double* row = memories[p.domain].vectors.row(p.slot);
            c.vector.assign(row, row + d);
            c.freq = memories[p.domain].usage[p.slot];
            pools[p.domain].push_back(std::move(c));
        }
    for (auto& pool : pools)
        std::sort(pool.begin(), pool.end(),
                  [](const PersonalizedCandidate& a, const PersonalizedCandidate& b) {
                      return a.slot < b.slot;
                  });

    outcome.scored_candidates.resize(num_domains);
    outcome.composition.resize(num_domains);
    outcome.global_memories.reserve(num_domains);

    for (std::size_t n = 0; n < num_domains; ++n) {
        // Score against every other domain's pooled prototypes (pre-selection).
        std::vector<const double*> other_pool;
        for (std::size_t o = 0; o < num_domains; ++o) {
            if (o == n) continue;
            for (const auto& cand : pools[o]) other_pool.push_back(cand.vector.data());
        }
        std::int64_t max_freq = 0;
        for (const auto& cand : pools[n]) max_freq = std::max(max_freq, cand.freq);
        std::vector<PersonalizedCandidate> scored = pools[n];
        for (auto& cand : scored)
            cand.score = utility_diversity_score(cand.vector, cand.freq, max_freq,
                                                 other_pool, d);

        const PersonalizedSelection picked =
            select_personalized(std::move(scored), quota, &outcome.scored_candidates[n]);

        PrototypeMemory global;
        global.domain_id = memories[n].domain_id;
        global.vectors = Matrix(m, d);
        global.usage.assign(m, 0);
        global.provenance.assign(m, Provenance::fresh);

        std::size_t row = 0;
        for (std::size_t r = 0; r < k; ++r, ++row) {
            std::memcpy(global.vectors.row(row), shared.prototypes.row(r),
                        d * sizeof(double));
            global.provenance[row] = Provenance::shared;
        }
        for (const auto& cand : picked.chosen) {
            std::memcpy(global.vectors.row(row), cand.vector.data(), d * sizeof(double));
            global.provenance[row] = Provenance::personalized;
            ++row;
        }
        outcome.composition[n].shared = k;
        outcome.composition[n].personalized = picked.chosen.size();
        outcome.composition[n].fresh = m - row;
        for (; row < m; ++row) fill_fresh_row(global.vectors.row(row), d, fresh_rng);

        outcome.global_memories.push_back(std::move(global));
    }
    return outcome;
}

}  // namespace fedpm
