#include "consensus_lens/overlay.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace clens {

namespace {

double unit_coordinate(const seed& slot_seed, node_id node, std::uint8_t axis)
{
    auto idx = be64(node.index);
    const std::array<std::uint8_t, 1> suffix{axis};
    auto h = sha256({slot_seed.bytes, idx, suffix});
    auto word = read_be64(std::span<const std::uint8_t, 8>(h.data(), 8));
    return std::ldexp(static_cast<double>(word >> 11), -53);
}

double assign_pass(std::span<const node_point> points, std::span<const point2> centroids,
                   std::vector<std::uint32_t>& assignment)
{
    double objective = 0.0;
    assignment.resize(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) {
        auto c = nearest_centroid(points[i].pos, centroids);
        assignment[i] = c;
        objective += squared_distance(points[i].pos, centroids[c]);
    }
    return objective;
}

void update_centroids(std::span<const node_point> points, std::span<const std::uint32_t> assignment,
                      std::vector<point2>& centroids)
{
    const auto k = centroids.size();
    std::vector<point2> sums(k, point2::Zero());
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < points.size(); ++i) {
        sums[assignment[i]] += points[i].pos;
        ++counts[assignment[i]];
    }

    for (std::size_t c = 0; c < k; ++c)
        if (counts[c] > 0) centroids[c] = sums[c] / static_cast<double>(counts[c]);

    // Reseat each empty cluster on the point farthest from its updated centroid.
    std::vector<bool> used(points.size(), false);
    for (std::size_t c = 0; c < k; ++c) {
        if (counts[c] > 0) continue;
        std::optional<std::size_t> far;
        double far_d = -1.0;
        for (std::size_t i = 0; i < points.size(); ++i) {
            if (used[i]) continue;
            double d = squared_distance(points[i].pos, centroids[assignment[i]]);
            if (d > far_d) {
                far_d = d;
                far = i;
            }
        }
        if (far) {
            used[*far] = true;
            centroids[c] = points[*far].pos;
        }
    }
}

} // namespace

std::vector<node_point> embed_nodes(const seed& slot_seed, std::span<const node_id> nodes)
{
    std::vector<node_point> out;
    out.reserve(nodes.size());
    for (auto node : nodes)
        out.push_back({node, point2(unit_coordinate(slot_seed, node, 0), unit_coordinate(slot_seed, node, 1))});
    return out;
}

std::uint32_t nearest_centroid(const point2& p, std::span<const point2> centroids)
{
    std::uint32_t best = 0;
    double best_d = squared_distance(p, centroids[0]);
    for (std::uint32_t c = 1; c < centroids.size(); ++c) {
        double d = squared_distance(p, centroids[c]);
        if (d < best_d) {
            best_d = d;
            best = c;
        }
    }
    return best;
}

kmeans_result kmeans_cluster(std::span<const node_point> points, std::size_t k, const seed& slot_seed,
                             std::size_t max_iters)
{
    const auto n = points.size();
    if (k == 0 || k > n)
        throw invalid_configuration("cluster count k=" + std::to_string(k) + " must lie in [1, " +
                                    std::to_string(n) + "]");
    if (max_iters == 0) throw invalid_configuration("kmeans max_iters must be at least 1");

    // Work in NodeId order so the result does not depend on input order.
    std::vector<std::size_t> by_id(n);
    std::iota(by_id.begin(), by_id.end(), 0);
    std::sort(by_id.begin(), by_id.end(), [&](auto a, auto b) { return points[a].node < points[b].node; });
    std::vector<node_point> sorted;
    sorted.reserve(n);
    for (auto i : by_id) sorted.push_back(points[i]);

    hash_stream rng(slot_seed.bytes, "kmeans-init");
    std::vector<std::size_t> pick(n);
    std::iota(pick.begin(), pick.end(), 0);
    partial_shuffle(std::span<std::size_t>(pick), k, rng);

    kmeans_result res;
    res.centroids.reserve(k);
    for (std::size_t c = 0; c < k; ++c) res.centroids.push_back(sorted[pick[c]].pos);

    std::vector<std::uint32_t> current;
    res.objectives.push_back(assign_pass(sorted, res.centroids, current));
    std::vector<std::uint32_t> next;
    for (std::size_t it = 0; it < max_iters; ++it) {
        update_centroids(sorted, current, res.centroids);
        ++res.iterations;
        res.objectives.push_back(assign_pass(sorted, res.centroids, next));
        if (next == current) {
            res.converged = true;
            break;
        }
        current.swap(next);
    }
    if (!res.converged) current = next;

    res.assignment.resize(n);
    for (std::size_t s = 0; s < n; ++s) res.assignment[by_id[s]] = current[s];
    return res;
}

std::vector<std::optional<node_id>> pick_representatives(std::span<const node_point> points,
                                                         std::span<const std::uint32_t> assignment,
                                                         std::span<const point2> centroids)
{
    std::vector<std::optional<node_id>> reps(centroids.size());
    std::vector<double> best(centroids.size(), 0.0);
    for (std::size_t i = 0; i < points.size(); ++i) {
        auto c = assignment[i];
        double d = squared_distance(points[i].pos, centroids[c]);
        auto& rep = reps[c];
        if (!rep || d < best[c] || (d == best[c] && points[i].node < *rep)) {
            rep = points[i].node;
            best[c] = d;
        }
    }
    return reps;
}

std::optional<node_id> topology_snapshot::representative_of(node_id node) const
{
    if (node.index >= assignment.size()) throw unknown_node("node " + std::to_string(node.index) + " not in topology");
    return representatives.at(assignment[node.index]);
}

topology_snapshot build_topology(const seed& slot_seed, slot_index slot, std::size_t n, std::size_t k,
                                 std::size_t max_iters)
{
    std::vector<node_id> nodes(n);
    for (std::size_t i = 0; i < n; ++i) nodes[i] = node_id(static_cast<std::uint32_t>(i));
    auto points = embed_nodes(slot_seed, nodes);
    auto km = kmeans_cluster(points, k, slot_seed, max_iters);

    topology_snapshot topo;
    topo.slot = slot;
    topo.k = k;
    topo.points.reserve(n);
    for (const auto& p : points) topo.points.push_back(p.pos);
    topo.representatives = pick_representatives(points, km.assignment, km.centroids);
    topo.assignment = std::move(km.assignment);
    topo.centroids = std::move(km.centroids);
    topo.objectives = std::move(km.objectives);
    topo.iterations = km.iterations;
    topo.converged = km.converged;
    return topo;
}

std::size_t default_cluster_count(std::size_t n)
{
    if (n <= 1) return 1;
    auto k = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(n))));
    while (k * k < n) ++k;
    while (k > 1 && (k - 1) * (k - 1) >= n) --k;
    return std::min(k, n);
}

route_path route_attestation(node_id src, node_id producer, const topology_snapshot& topology)
{
    const auto n = topology.assignment.size();
    if (src.index >= n) throw unknown_node("route source " + std::to_string(src.index) + " not in topology");
    if (producer.index >= n)
        throw unknown_node("route destination " + std::to_string(producer.index) + " not in topology");
    if (src == producer) return {src};
    auto rep = topology.representative_of(src);
    if (!rep || *rep == src || *rep == producer) return {src, producer};
    return {src, *rep, producer};
}

} // namespace clens
