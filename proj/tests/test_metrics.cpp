#include "doctest.h"

#include "grasp/common.hpp"
#include "grasp/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

using namespace grasp;

TEST_CASE("golden metric values") {
    const std::vector<std::int32_t> ranked{1, 7, 2, 9};
    CHECK(std::abs(recall_at_k(ranked, std::vector<std::int32_t>{1, 3}, 4) - 0.5) < 1e-6);
    const double ndcg = ndcg_at_k(std::vector<std::int32_t>{1, 5, 2}, std::vector<std::int32_t>{1, 2}, 3);
    CHECK(std::abs(ndcg - 1.5 / (1.0 + 1.0 / std::log2(3.0))) < 1e-12);
    CHECK(std::abs(ndcg - 0.9197) < 1e-4);
    CHECK(std::abs(ndcg_at_k(std::vector<std::int32_t>{4, 2, 8}, std::vector<std::int32_t>{2, 4}, 3) - 1.0) < 1e-6);
    CHECK(recall_at_k(ranked, std::vector<std::int32_t>{}, 4) == 0.0);
}

TEST_CASE("ideal DCG counts every relevant item") {
    // Three relevant items, a perfect top-1 list: NDCG@1 stays below one.
    const double v = ndcg_at_k(std::vector<std::int32_t>{5}, std::vector<std::int32_t>{5, 6, 7}, 1);
    CHECK(v == doctest::Approx(1.0 / (1.0 + 1.0 / std::log2(3.0) + 0.5)));
}

TEST_CASE("recall is monotone in k and metrics stay in the unit interval") {
    std::mt19937_64 rng(200);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<std::int32_t> ranked(30);
        std::iota(ranked.begin(), ranked.end(), 0);
        std::shuffle(ranked.begin(), ranked.end(), rng);
        std::vector<std::int32_t> relevant(ranked.begin(), ranked.begin() + 1 + trial % 10);
        std::shuffle(ranked.begin(), ranked.end(), rng);
        double prev = 0.0;
        for (std::size_t k = 1; k <= 30; ++k) {
            const double r = recall_at_k(ranked, relevant, k);
            const double n = ndcg_at_k(ranked, relevant, k);
            CHECK(r >= prev);
            CHECK(r <= 1.0);
            CHECK(n >= 0.0);
            CHECK(n <= 1.0 + 1e-12);
            prev = r;
        }
        CHECK(prev == 1.0);
    }
}

TEST_CASE("macro averages, fixed cutoffs and exclusions") {
    std::vector<RecommendationList> recs(3);
    recs[0] = {0, {1, 2, 3}, {3, 2, 1}};
    recs[1] = {1, {4, 5, 6}, {3, 2, 1}};
    recs[2] = {2, {7}, {1}};
    const std::vector<ItemList> relevant{{1}, {6, 9}, {}};
    const auto report = compute_metrics(recs, relevant, {1, 5});
    CHECK(report.per_user.size() == 2);
    CHECK(report.excluded_users == 1);
    CHECK(report.recall.at(1) == doctest::Approx(0.5));
    CHECK(report.recall.at(5) == doctest::Approx(0.75));
    CHECK(report.recall_at_20 == doctest::Approx(0.75));
    CHECK(report.recall.count(40) == 1);
    CHECK(report.ndcg.count(100) == 1);
    double mean = 0.0;
    for (const auto& um : report.per_user) {
        mean += um.ndcg.at(100);
    }
    CHECK(report.ndcg_at_100 == doctest::Approx(mean / 2.0));
}

TEST_CASE("report JSON round trip") {
    std::vector<RecommendationList> recs{{0, {1, 2}, {2.0, 1.0}}};
    auto report = compute_metrics(recs, {{2}}, {1});
    report.mode = "no-gkia";
    report.seed = 9;
    report.config_hash = "beef";
    report.split = "test";
    const auto text = to_json(report);
    const auto back = metrics_from_json(text);
    CHECK(to_json(back) == text);
    CHECK(back.mode == "no-gkia");
    CHECK(back.per_user.size() == 1);
    CHECK_THROWS_AS(metrics_from_json("{}"), IoError);
}
