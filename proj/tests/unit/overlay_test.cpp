#include "consensus_lens/overlay.hpp"
#include "test_support.hpp"

#include <doctest.h>

#include <algorithm>
#include <limits>
#include <set>

using namespace clens;
using test::reference_seed;

namespace {

std::vector<node_point> reference_points()
{
    // tests/oracles/reference.py, embed(S, 0..4).
    return {{node_id(0), {0.8984670355038019, 0.5581805363311019}},
            {node_id(1), {0.004691436132805427, 0.2884777480372783}},
            {node_id(2), {0.33388380536436046, 0.1636411979541823}},
            {node_id(3), {0.27641113093370906, 0.5344119086423365}},
            {node_id(4), {0.07081798919352111, 0.3524146530864062}}};
}

double objective(std::span<const node_point> pts, std::span<const std::uint32_t> a, std::span<const point2> c)
{
    double sum = 0.0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        double dx = pts[i].pos.x() - c[a[i]].x();
        double dy = pts[i].pos.y() - c[a[i]].y();
        sum += dx * dx + dy * dy;
    }
    return sum;
}

// One plain Lloyd refinement: means, then nearest assignment.
double one_lloyd_step(std::span<const node_point> pts, std::span<const std::uint32_t> a, std::size_t k)
{
    std::vector<double> sx(k, 0), sy(k, 0), cnt(k, 0);
    for (std::size_t i = 0; i < pts.size(); ++i) {
        sx[a[i]] += pts[i].pos.x();
        sy[a[i]] += pts[i].pos.y();
        cnt[a[i]] += 1;
    }
    std::vector<point2> c;
    for (std::size_t j = 0; j < k; ++j) c.emplace_back(sx[j] / cnt[j], sy[j] / cnt[j]);
    double sum = 0.0;
    for (const auto& p : pts) {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& q : c) {
            double dx = p.pos.x() - q.x(), dy = p.pos.y() - q.y();
            best = std::min(best, dx * dx + dy * dy);
        }
        sum += best;
    }
    return sum;
}

} // namespace

TEST_CASE("embed_nodes matches the reference hash-and-divide")
{
    auto nodes = test::node_range(5);
    auto pts = embed_nodes(reference_seed(), nodes);
    auto ref = reference_points();
    REQUIRE(pts.size() == 5);
    for (std::size_t i = 0; i < 5; ++i) {
        CHECK(pts[i].node == ref[i].node);
        CHECK(pts[i].pos.x() == ref[i].pos.x());
        CHECK(pts[i].pos.y() == ref[i].pos.y());
    }
    auto single = embed_nodes(reference_seed(), std::vector<node_id>{node_id(0)});
    CHECK(single[0].pos == ref[0].pos);
}

TEST_CASE("embedding of 30 nodes stays in the unit square")
{
    auto pts = embed_nodes(derive_slot_seed(reference_seed(), 3), test::node_range(30));
    CHECK(pts.size() == 30);
    for (const auto& p : pts) {
        CHECK(p.pos.x() >= 0.0);
        CHECK(p.pos.x() < 1.0);
        CHECK(p.pos.y() >= 0.0);
        CHECK(p.pos.y() < 1.0);
    }
    CHECK(embed_nodes(derive_slot_seed(reference_seed(), 3), test::node_range(30))[17].pos == pts[17].pos);
}

TEST_CASE("kmeans single cluster is the coordinate mean")
{
    auto pts = reference_points();
    auto r = kmeans_cluster(pts, 1, reference_seed(), 50);
    CHECK(std::all_of(r.assignment.begin(), r.assignment.end(), [](auto a) { return a == 0; }));
    double mx = 0, my = 0;
    for (const auto& p : pts) {
        mx += p.pos.x();
        my += p.pos.y();
    }
    CHECK(r.centroids[0].x() == doctest::Approx(mx / 5).epsilon(1e-15));
    CHECK(r.centroids[0].y() == doctest::Approx(my / 5).epsilon(1e-15));
    CHECK(r.converged);
}

TEST_CASE("kmeans with k = n gives zero objective")
{
    auto pts = reference_points();
    auto r = kmeans_cluster(pts, 5, reference_seed(), 50);
    std::set<std::uint32_t> clusters(r.assignment.begin(), r.assignment.end());
    CHECK(clusters.size() == 5);
    for (std::size_t i = 0; i < 5; ++i) CHECK(r.centroids[r.assignment[i]] == pts[i].pos);
    CHECK(r.objectives.back() == 0.0);
}

TEST_CASE("kmeans n=5 k=2 matches the plain Lloyd oracle")
{
    auto pts = reference_points();
    auto r = kmeans_cluster(pts, 2, reference_seed(), 50);
    // tests/oracles/reference.py lloyd(pts, 2, S, 50)
    CHECK(r.assignment == std::vector<std::uint32_t>{0, 1, 1, 1, 1});
    CHECK(r.centroids[0] == point2(0.8984670355038019, 0.5581805363311019));
    CHECK(r.centroids[1] == point2(0.17145109040609902, 0.3347363769300508));
    CHECK(r.objectives == std::vector<double>{0.2667276329390974, 0.14693306077754678});
    CHECK(r.converged);

    // No single refinement step improves the converged result.
    CHECK(objective(pts, r.assignment, r.centroids) <= one_lloyd_step(pts, r.assignment, 2));

    // Brute force over all 2-partitions: the result is a global optimum here.
    double best = std::numeric_limits<double>::infinity();
    for (unsigned mask = 1; mask < 31; ++mask) {
        std::vector<std::uint32_t> a(5);
        for (unsigned i = 0; i < 5; ++i) a[i] = (mask >> i) & 1u;
        std::vector<double> sx(2, 0), sy(2, 0), cnt(2, 0);
        for (unsigned i = 0; i < 5; ++i) {
            sx[a[i]] += pts[i].pos.x();
            sy[a[i]] += pts[i].pos.y();
            cnt[a[i]] += 1;
        }
        std::vector<point2> c{{sx[0] / cnt[0], sy[0] / cnt[0]}, {sx[1] / cnt[1], sy[1] / cnt[1]}};
        best = std::min(best, objective(pts, a, c));
    }
    CHECK(r.objectives.back() == doctest::Approx(best).epsilon(1e-12));
}

TEST_CASE("kmeans preconditions")
{
    auto pts = reference_points();
    CHECK_THROWS_AS(kmeans_cluster(pts, 0, reference_seed(), 50), invalid_configuration);
    CHECK_THROWS_AS(kmeans_cluster(pts, 6, reference_seed(), 50), invalid_configuration);
    CHECK_THROWS_AS(kmeans_cluster(pts, 2, reference_seed(), 0), invalid_configuration);
}

TEST_CASE("kmeans tolerates duplicate points")
{
    std::vector<node_point> pts;
    for (std::uint32_t i = 0; i < 6; ++i) pts.push_back({node_id(i), point2(0.25, 0.25)});
    pts.push_back({node_id(6), point2(0.75, 0.75)});
    for (slot_index s = 0; s < 20; ++s) {
        auto r = kmeans_cluster(pts, 3, derive_slot_seed(reference_seed(), s), 50);
        for (std::size_t i = 0; i < pts.size(); ++i)
            CHECK(nearest_centroid(pts[i].pos, r.centroids) == r.assignment[i]);
        for (std::size_t i = 1; i < r.objectives.size(); ++i) CHECK(r.objectives[i] <= r.objectives[i - 1]);
    }
}

TEST_CASE("kmeans result does not depend on input order")
{
    auto pts = embed_nodes(reference_seed(), test::node_range(30));
    auto reversed = pts;
    std::reverse(reversed.begin(), reversed.end());
    auto a = kmeans_cluster(pts, 5, reference_seed(), 50);
    auto b = kmeans_cluster(reversed, 5, reference_seed(), 50);
    CHECK(a.centroids == b.centroids);
    for (std::size_t i = 0; i < 30; ++i) CHECK(a.assignment[i] == b.assignment[29 - i]);
}

TEST_CASE("topology properties over many slots")
{
    auto beacon = reference_seed();
    std::optional<topology_snapshot> prev;
    int churn = 0;
    for (slot_index s = 0; s < 100; ++s) {
        auto seed_s = derive_slot_seed(beacon, s);
        auto t = build_topology(seed_s, s, 30, 5);
        CAPTURE(s);
        for (std::size_t i = 1; i < t.objectives.size(); ++i) CHECK(t.objectives[i] <= t.objectives[i - 1]);
        for (std::size_t i = 0; i < 30; ++i) {
            double own = squared_distance(t.points[i], t.centroids[t.assignment[i]]);
            for (const auto& c : t.centroids) CHECK_FALSE(squared_distance(t.points[i], c) < own);
        }
        // Independent local recomputations agree.
        CHECK(build_topology(seed_s, s, 30, 5) == t);
        if (prev && prev->assignment != t.assignment) ++churn;
        prev = t;
    }
    CHECK(churn >= 90);
}

TEST_CASE("pick_representatives")
{
    SUBCASE("singleton and tie-break")
    {
        std::vector<node_point> pts{{node_id(4), {0.1, 0.5}}, {node_id(2), {0.3, 0.5}}, {node_id(7), {0.9, 0.9}}};
        std::vector<std::uint32_t> a{0, 0, 1};
        std::vector<point2> c{{0.2, 0.5}, {0.9, 0.9}};
        auto reps = pick_representatives(pts, a, c);
        CHECK(reps[0] == node_id(2)); // equidistant, lower id wins
        CHECK(reps[1] == node_id(7));
    }
    SUBCASE("empty cluster has none")
    {
        std::vector<node_point> pts{{node_id(0), {0.1, 0.1}}};
        std::vector<std::uint32_t> a{0};
        std::vector<point2> c{{0.1, 0.1}, {0.8, 0.8}};
        auto reps = pick_representatives(pts, a, c);
        CHECK(reps[0] == node_id(0));
        CHECK_FALSE(reps[1]);
    }
    SUBCASE("n=30 k=5 brute force")
    {
        auto t = build_topology(derive_slot_seed(reference_seed(), 11), 11, 30, 5);
        CHECK(std::count_if(t.representatives.begin(), t.representatives.end(), [](auto r) { return r.has_value(); }) ==
              5);
        for (std::size_t c = 0; c < 5; ++c) {
            REQUIRE(t.representatives[c]);
            auto rep = t.representatives[c]->index;
            CHECK(t.assignment[rep] == c);
            double rep_d = squared_distance(t.points[rep], t.centroids[c]);
            for (std::size_t i = 0; i < 30; ++i) {
                if (t.assignment[i] != c) continue;
                double d = squared_distance(t.points[i], t.centroids[c]);
                CHECK((d > rep_d || (d == rep_d && i >= rep)));
            }
        }
    }
}

TEST_CASE("default cluster count")
{
    CHECK(default_cluster_count(1) == 1);
    CHECK(default_cluster_count(4) == 2);
    CHECK(default_cluster_count(5) == 3);
    CHECK(default_cluster_count(30) == 6);
    CHECK(default_cluster_count(36) == 6);
}

TEST_CASE("route_attestation rules on a six-node topology")
{
    // Cluster 0 = {0, 1, 2} with representative 1; cluster 1 = {3, 4, 5} with representative 4.
    topology_snapshot t;
    t.k = 2;
    t.assignment = {0, 0, 0, 1, 1, 1};
    t.representatives = {node_id(1), node_id(4)};
    const node_id producer(5);

    // Hand-enumerated expectations for every source.
    const std::vector<route_path> expected{
        {node_id(0), node_id(1), producer}, {node_id(1), producer}, {node_id(2), node_id(1), producer},
        {node_id(3), node_id(4), producer}, {node_id(4), producer}, {producer}};
    for (std::uint32_t src = 0; src < 6; ++src) {
        CAPTURE(src);
        auto path = route_attestation(node_id(src), producer, t);
        CHECK(path == expected[src]);
        CHECK(path.back() == producer);
        std::set<node_id> uniq(path.begin(), path.end());
        CHECK(uniq.size() == path.size());
    }

    // Representative is the producer: collapse to two hops.
    CHECK(route_attestation(node_id(3), node_id(4), t) == route_path{node_id(3), node_id(4)});
    CHECK_THROWS_AS(route_attestation(node_id(6), producer, t), unknown_node);
    CHECK_THROWS_AS(route_attestation(node_id(0), node_id(9), t), unknown_node);
}
