#include "doctest.h"

#include "leakage.hpp"
#include "test_support.hpp"

#include "grasp/prompts.hpp"

#include <filesystem>
#include <random>

using namespace grasp;

namespace {

Dataset tiny() {
    std::vector<InteractionRecord> recs;
    for (int u = 0; u < 2; ++u) {
        for (int i = 0; i < 4; ++i) {
            recs.push_back(support::record("u" + std::to_string(u), "i" + std::to_string(i), 5, u * 10 + i,
                                           "great product number " + std::to_string(i)));
        }
    }
    ItemMeta m0;
    m0.item_id = "i0";
    m0.title = "Silk Lotion";
    m0.brand = "Acme";
    m0.categories = {"Beauty", "Skin"};
    m0.description = "soft\nand smooth";
    ItemMeta m1;
    m1.item_id = "i1";
    m1.title = "Hair Kit";
    m1.brand = "Acme";
    return binarize_and_split(recs, {m0, m1}, 5);
}

}  // namespace

TEST_CASE("item content prompt omits absent clauses") {
    const auto ds = tiny();
    const auto corpus = build_crowd_prompts(ds, build_graph(ds));
    const auto content = corpus.only(PromptKind::ItemContent);
    REQUIRE(content.size() == 2);
    CHECK(content.prompts[0].text ==
          "the title of item_0 is Silk Lotion. the brand of item_0 is Acme. the product categories of item_0 are "
          "Beauty, Skin. the description of item_0 is soft and smooth.");
    CHECK(content.prompts[1].text == "the title of item_1 is Hair Kit. the brand of item_1 is Acme.");
}

TEST_CASE("second-order groups need two members and are chunked") {
    const auto ds = tiny();
    const auto corpus = build_crowd_prompts(ds, build_graph(ds));
    const auto second = corpus.only(PromptKind::SecondOrder);
    REQUIRE(second.size() == 1);
    CHECK(second.prompts[0].text == "item_0, item_1 share the same brand: Acme");

    auto big = support::synthetic();
    CrowdPromptOptions opts;
    opts.max_group = 4;
    const auto chunked = build_crowd_prompts(big, build_graph(big), opts).only(PromptKind::SecondOrder);
    for (const auto& p : chunked.prompts) {
        std::size_t items = 0;
        for (const auto& piece : split_pieces(p.text)) {
            items += piece.kind == TokenPiece::Kind::Item;
        }
        CHECK(items >= 2);
        CHECK(items <= 4);
    }
    // 15 items per brand and category split into balanced chunks of at most 4.
    CHECK(chunked.size() == 2 * 2 * 4);
}

TEST_CASE("first-order and event prompts cover train pairs only") {
    const auto ds = tiny();
    const auto g = build_graph(ds);
    const auto corpus = build_crowd_prompts(ds, g);
    std::size_t train_pairs = 0;
    for (const auto& t : ds.train) {
        train_pairs += t.size();
    }
    CHECK(corpus.count(PromptKind::FirstOrder) == train_pairs);
    CHECK(corpus.count(PromptKind::InteractionEvent) == ds.n_users());
    std::vector<std::string> texts;
    for (const auto& p : corpus.prompts) {
        texts.push_back(p.text);
    }
    CHECK(leakage::scan_texts(ds, texts).empty());
    const auto events = corpus.only(PromptKind::InteractionEvent);
    CHECK(events.prompts[0].text.rfind("user_0 has interacted with item_", 0) == 0);
}

TEST_CASE("leakage scan over the synthetic fixture") {
    const auto ds = support::synthetic();
    const auto g = build_graph(ds);
    std::vector<std::string> texts;
    for (const auto& p : build_crowd_prompts(ds, g).prompts) {
        texts.push_back(p.text);
    }
    for (std::size_t u = 0; u < ds.n_users(); ++u) {
        texts.push_back(build_predictive_prompt(ds, static_cast<std::int32_t>(u), 20).text);
    }
    CHECK(leakage::scan_texts(ds, texts).empty());
    CHECK(leakage::scan_graph(ds, g).empty());
    // The scanner does fire on a planted leak.
    texts.push_back(user_token(0) + " purchased " + item_token(static_cast<std::size_t>(ds.test[0][0])) + ".");
    CHECK(leakage::scan_texts(ds, texts).size() == 1);
}

TEST_CASE("every node token in prompts refers to an existing node") {
    const auto ds = support::synthetic();
    for (const auto& p : build_crowd_prompts(ds, build_graph(ds)).prompts) {
        for (const auto& piece : split_pieces(p.text)) {
            if (piece.kind == TokenPiece::Kind::User) {
                CHECK(piece.index < ds.n_users());
            } else if (piece.kind == TokenPiece::Kind::Item) {
                CHECK(piece.index < ds.n_items());
            }
        }
    }
}

TEST_CASE("predictive prompt keeps the most recent history") {
    const auto p = render_predictive_prompt(5, {1, 2, 3}, 2);
    CHECK(p.text == "user_5 purchased item_2. user_5 purchased item_3. user_5 will purchase");
    CHECK(p.history == ItemList{2, 3});
    CHECK(render_predictive_prompt(5, {9}, 20).text == "user_5 purchased item_9. user_5 will purchase");
    CHECK_THROWS_AS(render_predictive_prompt(5, {}, 20), ConfigError);
}

TEST_CASE("event repetition and corpus file round trip") {
    const auto ds = tiny();
    const auto crowd = build_crowd_prompts(ds, build_graph(ds));
    const auto weighted = assemble_corpus(crowd, 3);
    CHECK(weighted.count(PromptKind::InteractionEvent) == 4 * crowd.count(PromptKind::InteractionEvent));
    CHECK(weighted.size() == crowd.size() + 3 * crowd.count(PromptKind::InteractionEvent));

    const auto path = std::filesystem::temp_directory_path() / "grasp_corpus.tsv";
    save_corpus(weighted, path, "abc");
    const auto back = load_corpus(path);
    REQUIRE(back.size() == weighted.size());
    for (std::size_t i = 0; i < back.size(); ++i) {
        CHECK(back.prompts[i].kind == weighted.prompts[i].kind);
        CHECK(back.prompts[i].text == weighted.prompts[i].text);
    }
    std::filesystem::remove(path);
}

TEST_CASE("disabled families are absent") {
    const auto ds = support::synthetic();
    CrowdPromptOptions opts;
    opts.item_content = false;
    opts.second_order = false;
    const auto corpus = build_crowd_prompts(ds, build_graph(ds), opts);
    CHECK(corpus.count(PromptKind::ItemContent) == 0);
    CHECK(corpus.count(PromptKind::SecondOrder) == 0);
    CHECK(corpus.count(PromptKind::FirstOrder) > 0);
}
