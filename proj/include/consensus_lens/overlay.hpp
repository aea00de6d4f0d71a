#pragma once

#include "consensus_lens/protocol.hpp"

#include <Eigen/Core>

#include <optional>
#include <span>
#include <vector>

namespace clens {

using point2 = Eigen::Vector2d;

struct node_point {
    node_id node;
    point2 pos;
};

/// x = top 53 bits of the first 8 bytes of SHA-256(slot_seed || be64(node) || 0x00)
/// scaled by 2^-53, y likewise with suffix 0x01. Both land in [0, 1).
std::vector<node_point> embed_nodes(const seed& slot_seed, std::span<const node_id> nodes);

struct kmeans_result {
    std::vector<std::uint32_t> assignment; // parallel to the input points
    std::vector<point2> centroids;
    std::vector<double> objectives; // one entry per assignment pass, non-increasing
    std::size_t iterations = 0;     // centroid update steps performed
    bool converged = false;
};

inline double squared_distance(const point2& a, const point2& b)
{
    return (a - b).squaredNorm();
}

/// Index of the nearest centroid, lowest index on ties.
std::uint32_t nearest_centroid(const point2& p, std::span<const point2> centroids);

/// Lloyd's algorithm. Initial centroids are the points picked by the first k
/// draws of a Fisher-Yates over the points in NodeId order using
/// hash_stream(slot_seed, "kmeans-init"). A cluster that empties has its
/// centroid reseated at the point farthest from its own centroid (ties to the
/// lowest NodeId, each point used at most once per pass). Stops when an
/// assignment pass changes nothing or after max_iters updates.
kmeans_result kmeans_cluster(std::span<const node_point> points, std::size_t k, const seed& slot_seed,
                             std::size_t max_iters);

/// Member nearest its centroid, lowest NodeId on ties; nullopt for empty
/// clusters.
std::vector<std::optional<node_id>> pick_representatives(std::span<const node_point> points,
                                                         std::span<const std::uint32_t> assignment,
                                                         std::span<const point2> centroids);

struct topology_snapshot {
    slot_index slot = 0;
    std::size_t k = 0;
    std::vector<point2> points;             // indexed by NodeId
    std::vector<std::uint32_t> assignment;  // indexed by NodeId
    std::vector<point2> centroids;
    std::vector<std::optional<node_id>> representatives; // indexed by cluster
    std::vector<double> objectives;
    std::size_t iterations = 0;
    bool converged = false;

    std::optional<node_id> representative_of(node_id node) const;
    bool operator==(const topology_snapshot&) const = default;
};

/// embed -> kmeans -> representatives for nodes 0..n-1.
topology_snapshot build_topology(const seed& slot_seed, slot_index slot, std::size_t n, std::size_t k,
                                 std::size_t max_iters = 50);

/// ceil(sqrt(n)), at least 1.
std::size_t default_cluster_count(std::size_t n);

class unknown_node : public std::out_of_range {
public:
    using std::out_of_range::out_of_range;
};

using route_path = std::vector<node_id>;

/// [src] when src is the producer; [src, producer] when src represents its
/// own cluster or its representative is the producer; otherwise
/// [src, representative, producer].
route_path route_attestation(node_id src, node_id producer, const topology_snapshot& topology);

} // namespace clens
