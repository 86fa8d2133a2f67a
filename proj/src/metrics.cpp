#include "grasp/metrics.hpp"

#include "grasp/common.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <set>
#include <unordered_set>

namespace grasp {

using json = nlohmann::json;

namespace {

std::unordered_set<std::int32_t> as_set(std::span<const std::int32_t> items) {
    return {items.begin(), items.end()};
}

}  // namespace

double recall_at_k(std::span<const std::int32_t> ranked, std::span<const std::int32_t> relevant, std::size_t k) {
    const auto rel = as_set(relevant);
    if (rel.empty()) {
        return 0.0;
    }
    const std::size_t cut = std::min(k, ranked.size());
    std::size_t hits = 0;
    for (std::size_t i = 0; i < cut; ++i) {
        hits += rel.count(ranked[i]);
    }
    return static_cast<double>(hits) / static_cast<double>(rel.size());
}

double ndcg_at_k(std::span<const std::int32_t> ranked, std::span<const std::int32_t> relevant, std::size_t k) {
    const auto rel = as_set(relevant);
    if (rel.empty()) {
        return 0.0;
    }
    const std::size_t cut = std::min(k, ranked.size());
    double dcg = 0.0;
    for (std::size_t i = 0; i < cut; ++i) {
        if (rel.count(ranked[i])) {
            dcg += 1.0 / std::log2(static_cast<double>(i) + 2.0);  // (2^1 - 1) / log2(rank + 1)
        }
    }
    double idcg = 0.0;
    for (std::size_t i = 0; i < rel.size(); ++i) {
        idcg += 1.0 / std::log2(static_cast<double>(i) + 2.0);
    }
    return dcg / idcg;
}

MetricsReport compute_metrics(const std::vector<RecommendationList>& recommendations,
                              const std::vector<ItemList>& relevant, const std::vector<int>& ks) {
    std::set<int> recall_ks(ks.begin(), ks.end());
    std::set<int> ndcg_ks(ks.begin(), ks.end());
    recall_ks.insert({20, 40});
    ndcg_ks.insert(100);

    MetricsReport report;
    for (const auto& rec : recommendations) {
        const auto& rel = relevant.at(static_cast<std::size_t>(rec.user));
        if (rel.empty()) {
            ++report.excluded_users;
            continue;
        }
        UserMetrics um;
        um.user = rec.user;
        for (int k : recall_ks) {
            um.recall[k] = recall_at_k(rec.items, rel, static_cast<std::size_t>(k));
        }
        for (int k : ndcg_ks) {
            um.ndcg[k] = ndcg_at_k(rec.items, rel, static_cast<std::size_t>(k));
        }
        report.per_user.push_back(std::move(um));
    }
    if (report.excluded_users > 0) {
        std::cerr << "warning: " << report.excluded_users << " user(s) without relevant items excluded from metrics\n";
    }
    const auto n = static_cast<double>(report.per_user.size());
    for (const auto& um : report.per_user) {
        for (const auto& [k, v] : um.recall) {
            report.recall[k] += v;
        }
        for (const auto& [k, v] : um.ndcg) {
            report.ndcg[k] += v;
        }
    }
    for (auto* agg : {&report.recall, &report.ndcg}) {
        for (auto& [k, v] : *agg) {
            v = n > 0 ? v / n : 0.0;
        }
    }
    report.recall_at_20 = report.recall[20];
    report.recall_at_40 = report.recall[40];
    report.ndcg_at_100 = report.ndcg[100];
    return report;
}

namespace {

json to_json_map(const std::map<int, double>& m) {
    json obj = json::object();
    for (const auto& [k, v] : m) {
        obj[std::to_string(k)] = v;
    }
    return obj;
}

std::map<int, double> from_json_map(const json& obj) {
    std::map<int, double> m;
    for (const auto& [k, v] : obj.items()) {
        m[std::stoi(k)] = v.get<double>();
    }
    return m;
}

}  // namespace

std::string to_json(const MetricsReport& r) {
    json per_user = json::array();
    for (const auto& um : r.per_user) {
        per_user.push_back({{"user", um.user}, {"recall", to_json_map(um.recall)}, {"ndcg", to_json_map(um.ndcg)}});
    }
    json doc = {{"mode", r.mode},
                {"seed", r.seed},
                {"config_hash", r.config_hash},
                {"split", r.split},
                {"averaging", r.averaging},
                {"recall_at_20", r.recall_at_20},
                {"recall_at_40", r.recall_at_40},
                {"ndcg_at_100", r.ndcg_at_100},
                {"recall", to_json_map(r.recall)},
                {"ndcg", to_json_map(r.ndcg)},
                {"excluded_users", r.excluded_users},
                {"per_user", std::move(per_user)}};
    return doc.dump(1);
}

MetricsReport metrics_from_json(const std::string& text) {
    try {
        const json doc = json::parse(text);
        MetricsReport r;
        r.mode = doc.at("mode").get<std::string>();
        r.seed = doc.at("seed").get<std::uint64_t>();
        r.config_hash = doc.at("config_hash").get<std::string>();
        r.split = doc.at("split").get<std::string>();
        r.averaging = doc.at("averaging").get<std::string>();
        r.recall_at_20 = doc.at("recall_at_20").get<double>();
        r.recall_at_40 = doc.at("recall_at_40").get<double>();
        r.ndcg_at_100 = doc.at("ndcg_at_100").get<double>();
        r.recall = from_json_map(doc.at("recall"));
        r.ndcg = from_json_map(doc.at("ndcg"));
        r.excluded_users = doc.at("excluded_users").get<std::size_t>();
        for (const auto& entry : doc.at("per_user")) {
            UserMetrics um;
            um.user = entry.at("user").get<std::int32_t>();
            um.recall = from_json_map(entry.at("recall"));
            um.ndcg = from_json_map(entry.at("ndcg"));
            r.per_user.push_back(std::move(um));
        }
        return r;
    } catch (const json::exception& e) {
        throw IoError(std::string("malformed metrics report: ") + e.what());
    }
}

}  // namespace grasp
