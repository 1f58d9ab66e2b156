#include <algorithm>
#include <cmath>
#include <set>

#include "doctest.h"

#include "fedpm/memory_server.hpp"
#include "fedpm/rng.hpp"

using namespace fedpm;

namespace {

PrototypeMemory memory_from_rows(const std::vector<std::vector<double>>& rows,
                                 std::string domain) {
    PrototypeMemory memory;
    memory.domain_id = std::move(domain);
    memory.vectors = Matrix(rows.size(), rows[0].size());
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < rows[0].size(); ++j) memory.vectors(i, j) = rows[i][j];
    memory.usage.assign(rows.size(), 0);
    memory.provenance.assign(rows.size(), Provenance::fresh);
    return memory;
}

// Independent clustering oracle: boolean-matrix transitive closure.
std::vector<std::set<std::size_t>> closure_partition(std::size_t n,
                                                     std::vector<std::vector<bool>> reach) {
    for (std::size_t i = 0; i < n; ++i) reach[i][i] = true;
    for (std::size_t k = 0; k < n; ++k)
        for (std::size_t i = 0; i < n; ++i)
            if (reach[i][k])
                for (std::size_t j = 0; j < n; ++j)
                    if (reach[k][j]) reach[i][j] = true;

    std::vector<std::set<std::size_t>> classes;
    std::vector<bool> assigned(n, false);
    for (std::size_t i = 0; i < n; ++i) {
        if (assigned[i]) continue;
        std::set<std::size_t> cls;
        for (std::size_t j = 0; j < n; ++j)
            if (reach[i][j]) {
                cls.insert(j);
                assigned[j] = true;
            }
        classes.push_back(std::move(cls));
    }
    return classes;
}

}  // namespace

TEST_CASE("cosine similarity basics") {
    CHECK(cosine_similarity({1.0, 2.0}, {1.0, 2.0}) == doctest::Approx(1.0));
    CHECK(cosine_similarity({1.0, 0.0}, {0.0, 1.0}) == doctest::Approx(0.0));
    CHECK(cosine_similarity({1.0, 0.0}, {-1.0, 0.0}) == doctest::Approx(-1.0));
    CHECK(cosine_similarity({0.0, 0.0}, {1.0, 0.0}) == 0.0);  // zero-norm rule
    CHECK_THROWS_AS(cosine_similarity({1.0}, {1.0, 2.0}), std::invalid_argument);
}

TEST_CASE("build_graph connects identical memories slot by slot") {
    const PrototypeMemory a = memory_from_rows({{1, 0}, {0, 1}}, "a");
    const PrototypeMemory b = memory_from_rows({{1, 0}, {0, 1}}, "b");
    const SimilarityGraph graph = build_graph({a, b}, 0.7);
    CHECK(graph.edge_count >= 2);  // each slot pairs with its copy
    CHECK_THROWS_AS(build_graph({a}, 0.7), std::invalid_argument);
}

TEST_CASE("orthogonal prototypes produce no edges") {
    const PrototypeMemory a = memory_from_rows({{1, 0, 0, 0}, {0, 1, 0, 0}}, "a");
    const PrototypeMemory b = memory_from_rows({{0, 0, 1, 0}, {0, 0, 0, 1}}, "b");
    CHECK(build_graph({a, b}, 0.7).edge_count == 0);
}

TEST_CASE("the threshold is strict and same-domain edges never form") {
    // cos = 0.7 exactly: vectors (1,0) and (0.7, sqrt(1-0.49))
    const double y = std::sqrt(1.0 - 0.49);
    const PrototypeMemory a = memory_from_rows({{1, 0}}, "a");
    const PrototypeMemory b = memory_from_rows({{0.7, y}}, "b");
    CHECK(build_graph({a, b}, 0.7).edge_count == 0);

    // two near-identical slots inside ONE domain must not connect
    const PrototypeMemory c = memory_from_rows({{1, 0}, {1, 1e-9}}, "c");
    const PrototypeMemory d = memory_from_rows({{1, 1e-9}, {0, 1}}, "d");
    const SimilarityGraph graph = build_graph({c, d}, 0.7);
    CHECK(graph.edge_count > 0);
    for (std::size_t node = 0; node < graph.node_count(); ++node)
        for (std::size_t next : graph.adjacency[node])
            CHECK(graph.proto_of(node).domain != graph.proto_of(next).domain);
}

TEST_CASE("connected components on the documented shapes") {
    SimilarityGraph graph;
    graph.num_domains = 3;
    graph.memory_size = 1;
    graph.adjacency.assign(3, {});

    SUBCASE("one pair, one isolated node") {
        graph.adjacency[0] = {1};
        graph.adjacency[1] = {0};
        const ClusterSet set = connected_components(graph);
        REQUIRE(set.clusters.size() == 1);
        CHECK(set.clusters[0].size() == 2);
        CHECK(set.singletons[2] == std::vector<std::size_t>{0});
    }

    SUBCASE("a chain clusters transitively across domains") {
        graph.adjacency[0] = {1};
        graph.adjacency[1] = {0, 2};
        graph.adjacency[2] = {1};
        const ClusterSet set = connected_components(graph);
        REQUIRE(set.clusters.size() == 1);
        CHECK(set.clusters[0].size() == 3);
    }
}

TEST_CASE("clustering equals transitive closure on random graphs") {
    Rng rng(2024);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t domains = 2 + rng.below(2);          // 2..3
        const std::size_t slots = 1 + rng.below(30 / domains); // <= 30 nodes
        const std::size_t n = domains * slots;

        SimilarityGraph graph;
        graph.num_domains = domains;
        graph.memory_size = slots;
        graph.adjacency.assign(n, {});
        std::vector<std::vector<bool>> edges(n, std::vector<bool>(n, false));
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) {
                if (graph.proto_of(i).domain == graph.proto_of(j).domain) continue;
                if (rng.uniform01() < 0.08) {
                    graph.adjacency[i].push_back(j);
                    graph.adjacency[j].push_back(i);
                    edges[i][j] = edges[j][i] = true;
                    ++graph.edge_count;
                }
            }

        const ClusterSet set = connected_components(graph);
        const auto oracle = closure_partition(n, edges);

        // canonicalize both partitions as sorted node-id sets
        std::set<std::set<std::size_t>> ours;
        for (const auto& cluster : set.clusters) {
            std::set<std::size_t> ids;
            for (const ProtoId& p : cluster) ids.insert(graph.node_id(p));
            ours.insert(std::move(ids));
        }
        for (std::size_t d = 0; d < domains; ++d)
            for (std::size_t slot : set.singletons[d])
                ours.insert(std::set<std::size_t>{graph.node_id(ProtoId{d, slot})});
        std::set<std::set<std::size_t>> expected(oracle.begin(), oracle.end());
        CHECK(ours == expected);
    }
}

TEST_CASE("cluster centroids are elementwise means") {
    const PrototypeMemory a = memory_from_rows({{0, 2}, {1, 1}}, "a");
    const PrototypeMemory b = memory_from_rows({{2, 0}, {1, 1}}, "b");
    const PrototypeMemory c = memory_from_rows({{4, 4}, {0, 0}}, "c");
    const std::vector<PrototypeMemory> memories = {a, b, c};

    CHECK(cluster_centroid({{0, 0}, {1, 0}}, memories) == std::vector<double>{1.0, 1.0});
    CHECK(cluster_centroid({{2, 0}}, memories) == std::vector<double>{4.0, 4.0});
    CHECK(cluster_centroid({{0, 1}, {1, 1}, {2, 0}}, memories) ==
          std::vector<double>{2.0, 2.0});
    CHECK_THROWS_AS(cluster_centroid({}, memories), std::invalid_argument);
}

TEST_CASE("select_shared caps at floor(gamma*M) and breaks ties by discovery") {
    ClusterSet set;
    set.singletons.assign(2, {});
    const PrototypeMemory mem = memory_from_rows({{1, 0}, {0, 1}, {1, 1}}, "m");
    const std::vector<PrototypeMemory> memories = {mem, mem};

    SUBCASE("capacity formula") {
        const SharedSelection sel = select_shared(set, memories, 0.95, 256);
        CHECK(sel.capacity == 243);
    }

    SUBCASE("two clusters fit under a large cap") {
        set.clusters = {{{0, 0}, {1, 0}}, {{0, 1}, {1, 1}}};
        const SharedSelection sel = select_shared(set, memories, 0.95, 256);
        CHECK(sel.prototypes.rows == 2);
        CHECK(sel.demoted.empty());
    }

    SUBCASE("cardinality then discovery order decide under pressure") {
        set.clusters = {{{0, 0}, {1, 0}, {0, 1}},        // size 3, discovered first
                        {{0, 2}, {1, 2}, {1, 1}},        // size 3, discovered second
                        {{0, 1}, {1, 0}}};               // size 2
        const SharedSelection sel = select_shared(set, memories, 0.7, 3);  // cap = 2
        REQUIRE(sel.source_clusters.size() == 2);
        CHECK(sel.source_clusters[0] == 0);
        CHECK(sel.source_clusters[1] == 1);
        CHECK(sel.demoted == std::vector<std::size_t>{2});
    }
}

TEST_CASE("utility-diversity score on the documented cases") {
    const std::vector<double> e = {1.0, 0.0};
    const std::vector<double> orth = {0.0, 1.0};
    const std::vector<double> dup = {1.0, 0.0};

    // max frequency holder, orthogonal to everything else
    std::vector<const double*> others = {orth.data()};
    CHECK(utility_diversity_score(e, 10, 10, others, 2) == doctest::Approx(1.0));

    // never used, exact duplicate elsewhere
    std::vector<const double*> dup_pool = {dup.data()};
    CHECK(utility_diversity_score(e, 0, 10, dup_pool, 2) == doctest::Approx(-1.0));

    // freq 5 of max 10, best cross similarity 0.3
    const double y = std::sqrt(1.0 - 0.09);
    const std::vector<double> partial = {0.3, y};
    std::vector<const double*> partial_pool = {partial.data()};
    CHECK(utility_diversity_score(e, 5, 10, partial_pool, 2) == doctest::Approx(0.2));

    // empty other pool: no penalty; zero max frequency: no utility
    CHECK(utility_diversity_score(e, 5, 10, {}, 2) == doctest::Approx(0.5));
    CHECK(utility_diversity_score(e, 0, 0, others, 2) == doctest::Approx(0.0));
}

TEST_CASE("utility term is non-decreasing in the frequency") {
    Rng rng(77);
    std::vector<double> e(8), other(8);
    for (double& v : e) v = rng.normal(0.0, 1.0);
    for (double& v : other) v = rng.normal(0.0, 1.0);
    std::vector<const double*> pool = {other.data()};
    double previous = -2.0;
    for (std::int64_t freq = 0; freq <= 20; freq += 4) {
        const double score = utility_diversity_score(e, freq, 20, pool, 8);
        CHECK(score >= previous);
        previous = score;
    }
}

TEST_CASE("select_personalized ranks by score with slot tie-breaks") {
    std::vector<PersonalizedCandidate> pool(3);
    pool[0] = {0, {1.0, 0.0}, 1, 0.2};
    pool[1] = {1, {0.0, 1.0}, 5, 0.9};
    pool[2] = {2, {1.0, 1.0}, 3, 0.5};

    SUBCASE("quota zero yields nothing") {
        CHECK(select_personalized(pool, 0, nullptr).chosen.empty());
    }
    SUBCASE("quota equal to pool keeps everything in score order") {
        const auto sel = select_personalized(pool, 3, nullptr);
        REQUIRE(sel.chosen.size() == 3);
        CHECK(sel.chosen[0].slot == 1);
        CHECK(sel.chosen[1].slot == 2);
        CHECK(sel.chosen[2].slot == 0);
    }
    SUBCASE("top scores win under a binding quota") {
        const auto sel = select_personalized(pool, 2, nullptr);
        REQUIRE(sel.chosen.size() == 2);
        CHECK(sel.chosen[0].score == doctest::Approx(0.9));
        CHECK(sel.chosen[1].score == doctest::Approx(0.5));
    }
}

TEST_CASE("cross_domain_update keeps every memory at exactly M rows") {
    Rng rng(99);
    std::vector<PrototypeMemory> memories;
    for (int n = 0; n < 3; ++n) {
        PrototypeMemory mem = init_memory(16, 8, 100 + n, "d" + std::to_string(n));
        for (std::size_t i = 0; i < mem.size(); ++i) mem.usage[i] = rng.below(20);
        memories.push_back(std::move(mem));
    }
    Rng fresh(1);
    const ServerOutcome outcome = cross_domain_update(memories, 0.95, 0.7, fresh);
    for (const PrototypeMemory& mem : outcome.global_memories) {
        CHECK(mem.size() == 16);
        CHECK(mem.usage == std::vector<std::int64_t>(16, 0));
    }
    CHECK(outcome.shared_prototypes.rows <= 15);  // floor(0.95*16)
}

TEST_CASE("identical uploads give identical global memories") {
    PrototypeMemory base = init_memory(8, 4, 7, "a");
    for (std::size_t i = 0; i < base.size(); ++i) base.usage[i] = 3;
    PrototypeMemory copy = base;
    copy.domain_id = "b";
    Rng fresh(2);
    const ServerOutcome outcome = cross_domain_update({base, copy}, 1.0, 0.7, fresh);
    // gamma=1: every slot pairs exactly with its twin, so the shared block
    // covers the whole memory and both domains receive the same rows.
    CHECK(outcome.shared_prototypes.rows == 8);
    CHECK(outcome.global_memories[0].vectors == outcome.global_memories[1].vectors);
}

TEST_CASE("two orthogonal domains keep score-reordered own memories") {
    // no cross similarity: P_S empty, every slot competes via the score
    PrototypeMemory a = memory_from_rows({{1, 0, 0, 0}, {0, 1, 0, 0}}, "a");
    PrototypeMemory b = memory_from_rows({{0, 0, 1, 0}, {0, 0, 0, 1}}, "b");
    a.usage = {5, 9};
    b.usage = {2, 1};
    Rng fresh(3);
    const ServerOutcome outcome = cross_domain_update({a, b}, 0.95, 0.7, fresh);
    CHECK(outcome.shared_prototypes.rows == 0);
    // domain a: slot 1 has the higher frequency, orthogonal penalty equal
    REQUIRE(outcome.global_memories[0].size() == 2);
    CHECK(outcome.global_memories[0].vectors.row(0)[1] == 1.0);  // slot 1 first
    for (const PrototypeMemory& mem : outcome.global_memories)
        for (Provenance p : mem.provenance) CHECK(p == Provenance::personalized);
}

TEST_CASE("permutation alignment reproduces the original prototype set") {
    Rng rng(555);
    const std::size_t m = 12, d = 16;
    // well-separated prototypes: distinct basis directions plus small noise,
    // so the only high-similarity pairs are the permuted copies themselves
    PrototypeMemory a;
    a.domain_id = "a";
    a.vectors = Matrix(m, d);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < d; ++j)
            a.vectors(i, j) = (i == j ? 2.0 : 0.0) + 0.1 * rng.normal(0.0, 1.0);
    a.usage.assign(m, 0);
    a.provenance.assign(m, Provenance::fresh);
    for (std::size_t i = 0; i < m; ++i) a.usage[i] = 1 + rng.below(9);

    std::vector<std::size_t> perm(m);
    for (std::size_t i = 0; i < m; ++i) perm[i] = i;
    rng.shuffle(perm);
    PrototypeMemory b = a;
    b.domain_id = "b";
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < d; ++j) b.vectors(i, j) = a.vectors(perm[i], j);

    Rng fresh(4);
    const ServerOutcome outcome = cross_domain_update({a, b}, 1.0, 0.7, fresh);

    // every prototype pairs with its copy: m two-element clusters
    REQUIRE(outcome.clusters.size() == m);
    for (const auto& cluster : outcome.clusters) CHECK(cluster.size() == 2);
    CHECK(outcome.shared_prototypes.rows == m);

    // P_S as a set equals A's rows (centroid of two identical vectors)
    for (std::size_t i = 0; i < m; ++i) {
        bool found = false;
        for (std::size_t r = 0; r < m; ++r) {
            double max_diff = 0.0;
            for (std::size_t j = 0; j < d; ++j)
                max_diff = std::max(max_diff,
                                    std::fabs(outcome.shared_prototypes(r, j) -
                                              a.vectors(i, j)));
            if (max_diff < 1e-12) found = true;
        }
        CHECK(found);
    }
}

TEST_CASE("reference composition: 243 shared plus 13 personalized at M=256") {
    // D=64 keeps random cross-slot cosines far below the threshold
    PrototypeMemory a = init_memory(256, 64, 11, "a");
    for (std::size_t i = 0; i < a.size(); ++i) a.usage[i] = 1;
    PrototypeMemory b = a;
    b.domain_id = "b";
    Rng fresh(5);
    // identical uploads: every slot forms its own 2-element cluster
    const ServerOutcome outcome = cross_domain_update({a, b}, 0.95, 0.7, fresh);
    CHECK(outcome.shared_prototypes.rows == 243);  // floor(0.95 * 256)
    for (const PrototypeMemory& mem : outcome.global_memories) {
        CHECK(mem.size() == 256);
        std::size_t shared = 0, personalized = 0;
        for (Provenance p : mem.provenance) {
            if (p == Provenance::shared) ++shared;
            if (p == Provenance::personalized) ++personalized;
        }
        CHECK(shared == 243);
        CHECK(personalized == 13);
    }
}

TEST_CASE("aggregate_average is the index-wise mean") {
    const PrototypeMemory a = memory_from_rows({{1.0}}, "a");
    const PrototypeMemory b = memory_from_rows({{2.0}}, "b");
    const PrototypeMemory c = memory_from_rows({{6.0}}, "c");
    CHECK(aggregate_average({a, b, c}).vectors(0, 0) == doctest::Approx(3.0));

    const PrototypeMemory same = aggregate_average({a, a});
    CHECK(same.vectors == a.vectors);

    PrototypeMemory neg = a;
    neg.vectors(0, 0) = -1.0;
    CHECK(aggregate_average({a, neg}).vectors(0, 0) == 0.0);
}
