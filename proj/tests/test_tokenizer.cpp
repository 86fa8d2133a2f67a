#include "doctest.h"

#include "grasp/tokenizer.hpp"

#include <filesystem>

using namespace grasp;

TEST_CASE("node tokens are atomic and words are lowercased") {
    const auto pieces = split_pieces("user_12 bought Item_3, item_45x and item_7!");
    REQUIRE(pieces.size() == 8);
    CHECK(pieces[0].kind == TokenPiece::Kind::User);
    CHECK(pieces[0].index == 12);
    CHECK(pieces[1].text == "bought");
    CHECK(pieces[2].kind == TokenPiece::Kind::Word);  // node tokens are case-sensitive
    CHECK(pieces[2].text == "item");
    CHECK(pieces[3].text == "3");
    // "item_45x" is not a node token: it splits like any word
    CHECK(pieces[4].kind == TokenPiece::Kind::Word);
    CHECK(pieces[4].text == "item");
    CHECK(pieces[5].text == "45x");
    CHECK(pieces[6].text == "and");
    CHECK(pieces[7].kind == TokenPiece::Kind::Item);
    CHECK(pieces[7].index == 7);
}

TEST_CASE("vocabulary layout and lookups") {
    const auto vocab = build_vocab({"the cat sat", "the dog"}, 3, 2);
    CHECK(vocab.size() == 4 + 3 + 2 + 4);
    CHECK(vocab.user_id(0) == 4);
    CHECK(vocab.item_id(0) == 7);
    CHECK(vocab.first_item_id() == 7);
    CHECK(vocab.end_item_id() == 9);
    CHECK(vocab.is_item(8));
    CHECK_FALSE(vocab.is_item(9));
    CHECK(*vocab.word_id("the") == 9);  // most frequent first
    CHECK(vocab.token(vocab.item_id(1)) == "item_1");
    CHECK(*vocab.find("user_2") == vocab.user_id(2));
    CHECK_FALSE(vocab.find("user_3").has_value());
    CHECK(*vocab.node_of_token(vocab.item_id(1)) == 4);
    CHECK_FALSE(vocab.node_of_token(*vocab.word_id("the")).has_value());
    CHECK(vocab.token_of_node(4) == vocab.item_id(1));
    CHECK_THROWS_AS(vocab.token(static_cast<TokenId>(vocab.size())), std::out_of_range);
}

TEST_CASE("frequency cap and minimum count") {
    VocabOptions opts;
    opts.max_vocab = 2;
    const auto capped = build_vocab({"b b b a a c"}, 0, 0, opts);
    CHECK(capped.n_words() == 2);
    CHECK(capped.word_id("b").has_value());
    CHECK(capped.word_id("a").has_value());
    CHECK_FALSE(capped.word_id("c").has_value());
    opts.max_vocab = 10;
    opts.min_freq = 2;
    CHECK(build_vocab({"b b a a c"}, 0, 0, opts).n_words() == 2);
    // Ties are broken lexicographically.
    opts.min_freq = 1;
    const auto ties = build_vocab({"z y x"}, 0, 0, opts);
    CHECK(*ties.word_id("x") < *ties.word_id("y"));
}

TEST_CASE("encode and decode") {
    const auto vocab = build_vocab({"user_0 purchased item_1 . user_0 will purchase"}, 1, 2);
    const auto seq = encode(vocab, "user_0 purchased item_1. user_0 will purchase");
    REQUIRE(seq.ids.size() == 7);
    CHECK(seq.ids[0] == Vocabulary::kBos);
    CHECK(seq.ids[1] == vocab.user_id(0));
    CHECK(seq.ids[3] == vocab.item_id(1));
    CHECK(decode(vocab, seq.ids) == "user_0 purchased item_1 user_0 will purchase");
    const auto unk = encode(vocab, "user_9 bought item_1");
    CHECK(unk.ids[1] == Vocabulary::kUnk);
    CHECK(unk.ids[2] == Vocabulary::kUnk);
    CHECK(unk.ids[3] == vocab.item_id(1));
    CHECK(encode(vocab, "user_0 purchased item_1", 3).ids.size() == 3);
}

TEST_CASE("vocabulary file round trip") {
    const auto vocab = build_vocab({"alpha beta beta gamma é"}, 2, 3);
    const auto path = std::filesystem::temp_directory_path() / "grasp_vocab.json";
    save_vocab(vocab, path, "hash1");
    std::string hash;
    const auto back = load_vocab(path, &hash);
    CHECK(back == vocab);
    CHECK(hash == "hash1");
    std::filesystem::remove(path);
}
