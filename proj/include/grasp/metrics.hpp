#pragma once

#include "grasp/ingest.hpp"

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace grasp {

/// Ranked candidates for one user, descending score, ties by ascending item index.
struct RecommendationList {
    std::int32_t user = 0;
    std::vector<std::int32_t> items;
    std::vector<double> scores;
};

/// |relevant ∩ top-k| / |relevant|.
double recall_at_k(std::span<const std::int32_t> ranked, std::span<const std::int32_t> relevant, std::size_t k);

/// Binary-relevance NDCG; the ideal DCG places every relevant item, so it is
/// not truncated at k.
double ndcg_at_k(std::span<const std::int32_t> ranked, std::span<const std::int32_t> relevant, std::size_t k);

struct UserMetrics {
    std::int32_t user = 0;
    std::map<int, double> recall;
    std::map<int, double> ndcg;
};

struct MetricsReport {
    std::string mode = "full";
    std::uint64_t seed = 0;
    std::string config_hash;
    std::string split;
    std::string averaging = "macro";
    double recall_at_20 = 0.0;
    double recall_at_40 = 0.0;
    double ndcg_at_100 = 0.0;
    std::map<int, double> recall;  // macro averages for every evaluated k
    std::map<int, double> ndcg;
    std::vector<UserMetrics> per_user;
    std::size_t excluded_users = 0;  // users without relevant items
};

/// Macro-averaged Recall@k and NDCG@k for ks plus the fixed 20/40/100 cutoffs.
/// relevant is indexed by user; users with no relevant items are excluded.
MetricsReport compute_metrics(const std::vector<RecommendationList>& recommendations,
                              const std::vector<ItemList>& relevant, const std::vector<int>& ks);

std::string to_json(const MetricsReport& report);
MetricsReport metrics_from_json(const std::string& text);

}  // namespace grasp
