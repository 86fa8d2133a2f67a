#pragma once

#include "grasp/common.hpp"
#include "grasp/ingest.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace grasp {

/// Users occupy nodes [0, I), items occupy [I, I + J).
struct BipartiteGraph {
    std::size_t n_users = 0;
    std::size_t n_items = 0;
    std::vector<std::vector<std::int32_t>> adjacency;  // sorted, deduplicated

    std::size_t n_nodes() const { return n_users + n_items; }
    std::int32_t user_node(std::size_t user) const { return static_cast<std::int32_t>(user); }
    std::int32_t item_node(std::size_t item) const { return static_cast<std::int32_t>(n_users + item); }
    bool has_edge(std::int32_t a, std::int32_t b) const;
    std::size_t n_edges() const;
};

struct GraphOptions {
    /// Experimental: link items sharing a brand. Off by default; the attention
    /// bias is defined over interaction edges only.
    bool brand_edges = false;
};

/// Edges come from the train split only, so val/test interactions never leak.
BipartiteGraph build_graph(const Dataset& dataset, const GraphOptions& options = {});

struct ShortestPathMatrix {
    static constexpr std::int32_t kUnreachable = -1;

    MatrixXi32 hops;  // symmetric, zero diagonal, kUnreachable for disconnected pairs
    std::int32_t max_finite = 0;

    std::size_t size() const { return static_cast<std::size_t>(hops.rows()); }
    bool reachable(std::size_t a, std::size_t b) const { return hops(a, b) != kUnreachable; }
};

/// Unweighted BFS from every node.
ShortestPathMatrix all_pairs_shortest_paths(const BipartiteGraph& graph);

enum class PathVariant {
    AsWritten,  // 1 - delta^P / max(P); grows with distance
    Proximity,  // delta^(P - 1); shrinks with distance
};

std::string to_string(PathVariant variant);
PathVariant parse_path_variant(const std::string& name);

struct StructuralBias {
    double delta = 0.9;
    PathVariant variant = PathVariant::AsWritten;
    Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> conn;
    Mat<double> path;

    std::size_t size() const { return static_cast<std::size_t>(path.rows()); }
    /// R = R_conn + R_path, materialized.
    Mat<double> combined() const { return conn.cast<double>() + path; }
};

/// R_path for one finite, off-diagonal hop count.
double path_score(std::int32_t hops, std::int32_t max_finite, double delta, PathVariant variant);

/// Throws ConfigError for delta outside (0, 1) or an edgeless graph.
StructuralBias build_structural_bias(const ShortestPathMatrix& paths, double delta,
                                     PathVariant variant = PathVariant::AsWritten);

/// R[a][b]; throws std::out_of_range for indices outside the node range.
double bias_lookup(const StructuralBias& bias, std::size_t node_a, std::size_t node_b);

/// Binary dump: "GSAR-BIAS", u32 version, u64 config hash, u32 dimension,
/// P as row-major f32 (unreachable = -1), then R as row-major f32.
void save_bias_dump(const ShortestPathMatrix& paths, const StructuralBias& bias,
                    const std::filesystem::path& path, std::uint64_t config_hash = 0);

struct BiasDump {
    std::uint64_t config_hash = 0;
    Mat<float> hops;
    Mat<float> combined;
};

BiasDump load_bias_dump(const std::filesystem::path& path);

}  // namespace grasp
