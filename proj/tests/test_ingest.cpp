#include "doctest.h"

#include "test_support.hpp"

#include "grasp/ingest.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

using namespace grasp;
namespace fs = std::filesystem;

namespace {

fs::path write_lines(const std::string& name, const std::vector<std::string>& lines) {
    const auto path = fs::temp_directory_path() / name;
    std::ofstream out(path);
    for (const auto& l : lines) {
        out << l << '\n';
    }
    return path;
}

void check_invariants(const Dataset& ds) {
    REQUIRE(ds.train.size() == ds.n_users());
    for (std::size_t u = 0; u < ds.n_users(); ++u) {
        std::set<std::int32_t> seen;
        for (const auto* split : {&ds.train[u], &ds.val[u], &ds.test[u]}) {
            for (auto i : *split) {
                CHECK(i >= 0);
                CHECK(static_cast<std::size_t>(i) < ds.n_items());
                CHECK(seen.insert(i).second);
            }
        }
        CHECK(!ds.val[u].empty());
        CHECK(!ds.test[u].empty());
    }
    for (std::size_t u = 0; u < ds.n_users(); ++u) {
        CHECK(*ds.users.find(ds.users.id(u)) == u);
    }
    for (std::size_t i = 0; i < ds.n_items(); ++i) {
        CHECK(*ds.items.find(ds.items.id(i)) == i);
    }
}

}  // namespace

TEST_CASE("review lines map to records and bad lines are counted") {
    const auto path = write_lines("grasp_reviews.jsonl",
                                  {R"({"user":"u1","item":"i1","rating":5})",
                                   R"({"user":"u1","item":"i2","rating":0})",
                                   "",
                                   R"({"user":"u2","item":"i1","rating":4.0,"review_text":"nice","timestamp":17})",
                                   R"({"user":"u2","item":"i3","rating":3.5})",
                                   R"(not json)",
                                   R"({"user":"","item":"i1","rating":5})",
                                   R"({"item":"i1","rating":5})"});
    const auto r = load_reviews(path);
    REQUIRE(r.records.size() == 2);
    CHECK(r.skipped == 5);
    CHECK(r.records[0].user_id == "u1");
    CHECK(r.records[0].item_id == "i1");
    CHECK(r.records[0].rating == 5);
    CHECK_FALSE(r.records[0].review_text.has_value());
    CHECK(r.records[1].review_text == "nice");
    CHECK(r.records[1].timestamp == 17);
    fs::remove(path);
}

TEST_CASE("empty review file gives nothing and no warnings") {
    const auto path = write_lines("grasp_empty.jsonl", {});
    const auto r = load_reviews(path);
    CHECK(r.records.empty());
    CHECK(r.skipped == 0);
    CHECK_THROWS_AS(load_reviews(fs::temp_directory_path() / "grasp_does_not_exist.jsonl"), IoError);
    fs::remove(path);
}

TEST_CASE("metadata lines, optional fields and duplicates") {
    const auto path = write_lines("grasp_meta.jsonl",
                                  {R"({"item":"i1","title":"T","brand":"B","categories":["C"]})",
                                   R"({"item":"i2","title":"U"})",
                                   R"({"item":"i1","title":"again"})",
                                   R"({"item":"i3","title":"V","categories":[["a","b"],["c"]]})",
                                   R"({"title":"no id"})"});
    const auto r = load_metadata(path);
    REQUIRE(r.records.size() == 3);
    CHECK(r.duplicates == 1);
    CHECK(r.skipped == 1);
    CHECK(r.records[0].title == "T");
    CHECK(r.records[0].brand == "B");
    CHECK(r.records[0].categories == std::vector<std::string>{"C"});
    CHECK_FALSE(r.records[1].brand.has_value());
    CHECK(r.records[2].categories == std::vector<std::string>{"a", "b", "c"});
    fs::remove(path);
}

TEST_CASE("split sizes keep val and test non-empty") {
    CHECK(split_sizes(10).train == 8);
    CHECK(split_sizes(10).val == 1);
    CHECK(split_sizes(10).test == 1);
    for (std::size_t n = 3; n <= 50; ++n) {
        const auto s = split_sizes(n);
        CHECK(s.train + s.val + s.test == n);
        CHECK(s.val >= 1);
        CHECK(s.test >= 1);
        CHECK(s.train >= 1);
        if (n >= 5) {
            const double frac = static_cast<double>(s.train) / static_cast<double>(n);
            CHECK(frac >= 0.6);
            CHECK(frac <= 0.8);
        }
    }
}

TEST_CASE("binarization keeps exactly ratings above three") {
    for (int rating = 1; rating <= 5; ++rating) {
        std::vector<InteractionRecord> recs;
        for (int i = 0; i < 3; ++i) {
            recs.push_back(support::record("keep", "k" + std::to_string(i), 5));
        }
        recs.push_back(support::record("probe", "p0", rating));
        for (int i = 1; i < 3; ++i) {
            recs.push_back(support::record("probe", "p" + std::to_string(i), 5));
        }
        const auto ds = binarize_and_split(recs, {}, 1);
        CHECK((ds.users.find("probe").has_value()) == (rating > 3));
    }
}

TEST_CASE("users with fewer than three kept interactions are dropped") {
    std::vector<InteractionRecord> recs = {support::record("a", "x", 5), support::record("a", "y", 5),
                                           support::record("a", "z", 2), support::record("b", "x", 4),
                                           support::record("b", "y", 4), support::record("b", "z", 4),
                                           support::record("b", "z", 5)};
    const auto ds = binarize_and_split(recs, {}, 3);
    CHECK(ds.n_users() == 1);
    CHECK(ds.provenance.users_dropped == 1);
    CHECK(ds.train[0].size() + ds.val[0].size() + ds.test[0].size() == 3);
    check_invariants(ds);
    CHECK_THROWS_AS(binarize_and_split({support::record("a", "x", 5)}, {}, 3), ConfigError);
}

TEST_CASE("ten kept interactions split eight, one, one") {
    std::vector<InteractionRecord> recs;
    for (int i = 0; i < 10; ++i) {
        recs.push_back(support::record("u", "i" + std::to_string(i), 4));
    }
    const auto ds = binarize_and_split(recs, {}, 42);
    CHECK(ds.train[0].size() == 8);
    CHECK(ds.val[0].size() == 1);
    CHECK(ds.test[0].size() == 1);
    CHECK(binarize_and_split(recs, {}, 42).train == ds.train);
}

TEST_CASE("synthetic generator is deterministic and community pure") {
    SyntheticSpec spec;
    const auto a = generate_synthetic(spec);
    const auto b = generate_synthetic(spec);
    CHECK(a.dataset.train == b.dataset.train);
    CHECK(a.dataset.test == b.dataset.test);
    check_invariants(a.dataset);

    std::size_t intra = 0;
    std::size_t total = 0;
    for (const auto& r : a.records) {
        const auto u = std::stoul(r.user_id.substr(1));
        const auto j = std::stoul(r.item_id.substr(1));
        intra += synthetic_community(u, spec.n_communities) == synthetic_community(j, spec.n_communities);
        ++total;
    }
    const double purity = static_cast<double>(intra) / static_cast<double>(total);
    MESSAGE("edge purity " << purity);
    CHECK(purity >= 0.9);

    spec.inter_prob = 0.0;
    const auto pure = generate_synthetic(spec);
    for (const auto& r : pure.records) {
        CHECK(synthetic_community(std::stoul(r.user_id.substr(1)), 2) ==
              synthetic_community(std::stoul(r.item_id.substr(1)), 2));
    }
    // Items of one community share a brand.
    for (const auto& m : a.metas) {
        const auto j = std::stoul(m.item_id.substr(1));
        CHECK(m.brand == "brand" + std::to_string(synthetic_community(j, 2)));
    }
}

TEST_CASE("history reduction") {
    auto ds = support::synthetic();
    const auto half = reduce_history(ds, 0.5, 9);
    for (std::size_t u = 0; u < ds.n_users(); ++u) {
        const auto n = ds.train[u].size();
        CHECK(half.train[u].size() == std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(0.5 * n))));
        CHECK(half.val[u] == ds.val[u]);
        CHECK(half.test[u] == ds.test[u]);
        for (auto i : half.train[u]) {
            CHECK(std::find(ds.train[u].begin(), ds.train[u].end(), i) != ds.train[u].end());
        }
    }
    CHECK(reduce_history(ds, 0.5, 9).train == half.train);
    ds.train[0] = {ds.train[0][0]};
    CHECK(reduce_history(ds, 0.9, 1).train[0].size() == 1);

    Dataset eight = ds;
    eight.train[0] = {0, 1, 2, 3, 4, 5, 6, 7};
    eight.val[0] = {8};
    eight.test[0] = {9};
    CHECK(reduce_history(eight, 0.5, 3).train[0].size() == 4);
}

TEST_CASE("dataset dump round trip") {
    const auto ds = support::synthetic();
    const auto path = fs::temp_directory_path() / "grasp_dataset.json";
    save_dataset(ds, path, "cafe");
    std::string hash;
    const auto back = load_dataset(path, &hash);
    CHECK(hash == "cafe");
    CHECK(back.users.ids() == ds.users.ids());
    CHECK(back.items.ids() == ds.items.ids());
    CHECK(back.train == ds.train);
    CHECK(back.val == ds.val);
    CHECK(back.test == ds.test);
    CHECK(back.reviews == ds.reviews);
    CHECK(back.meta.size() == ds.meta.size());
    CHECK(back.provenance.source == ds.provenance.source);
    fs::remove(path);
}
