#include "grasp/graph.hpp"

#include "grasp/binary_io.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <map>

namespace grasp {

bool BipartiteGraph::has_edge(std::int32_t a, std::int32_t b) const {
    const auto& nbrs = adjacency.at(static_cast<std::size_t>(a));
    return std::binary_search(nbrs.begin(), nbrs.end(), b);
}

std::size_t BipartiteGraph::n_edges() const {
    std::size_t degree_sum = 0;
    for (const auto& nbrs : adjacency) {
        degree_sum += nbrs.size();
    }
    return degree_sum / 2;
}

BipartiteGraph build_graph(const Dataset& dataset, const GraphOptions& options) {
    BipartiteGraph g;
    g.n_users = dataset.n_users();
    g.n_items = dataset.n_items();
    g.adjacency.assign(g.n_nodes(), {});
    auto link = [&](std::int32_t a, std::int32_t b) {
        g.adjacency[static_cast<std::size_t>(a)].push_back(b);
        g.adjacency[static_cast<std::size_t>(b)].push_back(a);
    };
    for (std::size_t u = 0; u < g.n_users; ++u) {
        for (std::int32_t item : dataset.train[u]) {
            link(g.user_node(u), g.item_node(static_cast<std::size_t>(item)));
        }
    }
    if (options.brand_edges) {
        std::map<std::string, std::vector<std::int32_t>> by_brand;
        for (const auto& [item, meta] : dataset.meta) {
            if (meta.brand && !meta.brand->empty()) {
                by_brand[*meta.brand].push_back(item);
            }
        }
        for (const auto& [brand, items] : by_brand) {
            for (std::size_t a = 0; a < items.size(); ++a) {
                for (std::size_t b = a + 1; b < items.size(); ++b) {
                    link(g.item_node(static_cast<std::size_t>(items[a])),
                         g.item_node(static_cast<std::size_t>(items[b])));
                }
            }
        }
    }
    for (auto& nbrs : g.adjacency) {
        std::sort(nbrs.begin(), nbrs.end());
        nbrs.erase(std::unique(nbrs.begin(), nbrs.end()), nbrs.end());
    }
    return g;
}

ShortestPathMatrix all_pairs_shortest_paths(const BipartiteGraph& graph) {
    const auto n = static_cast<std::int64_t>(graph.n_nodes());
    ShortestPathMatrix sp;
    sp.hops = MatrixXi32::Constant(n, n, ShortestPathMatrix::kUnreachable);

#pragma omp parallel for schedule(dynamic, 16) num_threads(thread_count())
    for (std::int64_t source = 0; source < n; ++source) {
        auto row = sp.hops.row(source);
        std::vector<std::int32_t> frontier{static_cast<std::int32_t>(source)};
        std::vector<std::int32_t> next;
        row(source) = 0;
        for (std::int32_t depth = 1; !frontier.empty(); ++depth) {
            next.clear();
            for (std::int32_t node : frontier) {
                for (std::int32_t nbr : graph.adjacency[static_cast<std::size_t>(node)]) {
                    if (row(nbr) == ShortestPathMatrix::kUnreachable) {
                        row(nbr) = depth;
                        next.push_back(nbr);
                    }
                }
            }
            frontier.swap(next);
        }
    }
    sp.max_finite = n == 0 ? 0 : sp.hops.maxCoeff();
    return sp;
}

std::string to_string(PathVariant variant) {
    return variant == PathVariant::AsWritten ? "as-written" : "proximity";
}

PathVariant parse_path_variant(const std::string& name) {
    if (name == "as-written") {
        return PathVariant::AsWritten;
    }
    if (name == "proximity") {
        return PathVariant::Proximity;
    }
    throw ConfigError("unknown bias variant '" + name + "' (expected as-written or proximity)");
}

double path_score(std::int32_t hops, std::int32_t max_finite, double delta, PathVariant variant) {
    if (variant == PathVariant::AsWritten) {
        return 1.0 - std::pow(delta, hops) / static_cast<double>(max_finite);
    }
    return std::pow(delta, hops - 1);
}

StructuralBias build_structural_bias(const ShortestPathMatrix& paths, double delta, PathVariant variant) {
    if (!(delta > 0.0 && delta < 1.0)) {
        throw ConfigError("delta must lie in (0, 1)");
    }
    if (paths.max_finite < 1) {
        throw ConfigError("structural bias needs at least one edge (max finite path length is 0)");
    }
    const auto n = static_cast<Eigen::Index>(paths.size());
    StructuralBias bias;
    bias.delta = delta;
    bias.variant = variant;
    bias.conn = (paths.hops.array() == 1).cast<std::uint8_t>();

    // Score per hop count.
    std::vector<double> table(static_cast<std::size_t>(paths.max_finite) + 1, 0.0);
    for (std::int32_t h = 1; h <= paths.max_finite; ++h) {
        table[static_cast<std::size_t>(h)] = path_score(h, paths.max_finite, delta, variant);
    }
    bias.path.resize(n, n);
    for (Eigen::Index a = 0; a < n; ++a) {
        for (Eigen::Index b = 0; b < n; ++b) {
            const std::int32_t h = paths.hops(a, b);
            bias.path(a, b) = h <= 0 ? 0.0 : table[static_cast<std::size_t>(h)];
        }
    }
    return bias;
}

double bias_lookup(const StructuralBias& bias, std::size_t node_a, std::size_t node_b) {
    if (node_a >= bias.size() || node_b >= bias.size()) {
        throw std::out_of_range("bias_lookup: node index out of range");
    }
    const auto a = static_cast<Eigen::Index>(node_a);
    const auto b = static_cast<Eigen::Index>(node_b);
    return static_cast<double>(bias.conn(a, b)) + bias.path(a, b);
}

namespace {
constexpr const char* kBiasMagic = "GSAR-BIAS";
constexpr std::uint32_t kBiasVersion = 1;
}  // namespace

void save_bias_dump(const ShortestPathMatrix& paths, const StructuralBias& bias,
                    const std::filesystem::path& path, std::uint64_t config_hash) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot write " + path.string());
    }
    const auto n = static_cast<std::uint32_t>(paths.size());
    binio::write_bytes(out, kBiasMagic, 9);
    binio::write(out, kBiasVersion);
    binio::write(out, config_hash);
    binio::write(out, n);
    const Mat<float> hops = paths.hops.cast<float>();
    const Mat<float> combined = bias.combined().cast<float>();
    binio::write_bytes(out, hops.data(), sizeof(float) * hops.size());
    binio::write_bytes(out, combined.data(), sizeof(float) * combined.size());
}

BiasDump load_bias_dump(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    binio::expect_magic(in, kBiasMagic);
    if (binio::read<std::uint32_t>(in, "version") != kBiasVersion) {
        throw IoError(path.string() + ": unsupported bias dump version");
    }
    BiasDump dump;
    dump.config_hash = binio::read<std::uint64_t>(in, "config hash");
    const auto n = static_cast<Eigen::Index>(binio::read<std::uint32_t>(in, "dimension"));
    dump.hops.resize(n, n);
    dump.combined.resize(n, n);
    binio::read_bytes(in, dump.hops.data(), sizeof(float) * dump.hops.size(), "P");
    binio::read_bytes(in, dump.combined.data(), sizeof(float) * dump.combined.size(), "R");
    return dump;
}

}  // namespace grasp
