#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace grasp {

using TokenId = std::int32_t;

/// Id layout: control tokens, then user_0..user_{I-1}, item_0..item_{J-1}, then words.
/// Node token id = kNumControl + graph node index.
class Vocabulary {
public:
    static constexpr TokenId kPad = 0;
    static constexpr TokenId kUnk = 1;
    static constexpr TokenId kBos = 2;
    static constexpr TokenId kEos = 3;
    static constexpr TokenId kNumControl = 4;

    Vocabulary() = default;
    Vocabulary(std::size_t n_users, std::size_t n_items, std::vector<std::string> words,
               std::map<std::string, std::size_t> counts, std::size_t max_vocab, std::size_t min_freq);

    std::size_t size() const { return kNumControl + n_users_ + n_items_ + words_.size(); }
    std::size_t n_users() const { return n_users_; }
    std::size_t n_items() const { return n_items_; }
    std::size_t n_words() const { return words_.size(); }

    TokenId user_id(std::size_t user) const { return kNumControl + static_cast<TokenId>(user); }
    TokenId item_id(std::size_t item) const { return kNumControl + static_cast<TokenId>(n_users_ + item); }
    TokenId first_item_id() const { return item_id(0); }
    TokenId end_item_id() const { return item_id(n_items_); }
    bool is_item(TokenId id) const { return id >= first_item_id() && id < end_item_id(); }

    /// Word id, or nullopt for out-of-vocabulary words.
    std::optional<TokenId> word_id(const std::string& word) const;
    /// Node token ("user_3" / "item_8") or word id; nullopt if unknown.
    std::optional<TokenId> find(const std::string& token) const;
    /// Throws std::out_of_range for ids outside the vocabulary.
    std::string token(TokenId id) const;

    std::optional<std::int32_t> node_of_token(TokenId id) const;
    TokenId token_of_node(std::int32_t node) const { return kNumControl + node; }

    std::string to_json() const;
    static Vocabulary from_json(const std::string& text);

    bool operator==(const Vocabulary&) const = default;

private:
    std::size_t n_users_ = 0;
    std::size_t n_items_ = 0;
    std::vector<std::string> words_;
    std::map<std::string, std::size_t> counts_;
    std::size_t max_vocab_ = 0;
    std::size_t min_freq_ = 0;
    std::unordered_map<std::string, TokenId> word_lookup_;
};

struct TokenPiece {
    enum class Kind { Word, User, Item } kind;
    std::string text;       // lowercased word, or the node token verbatim
    std::size_t index = 0;  // user / item index for node pieces
};

/// Node tokens first (user_<digits>, item_<digits> as a whole word), then
/// lowercased words split on ASCII punctuation and whitespace.
std::vector<TokenPiece> split_pieces(std::string_view text);

struct VocabOptions {
    std::size_t max_vocab = 5000;  // cap on word tokens
    std::size_t min_freq = 1;
};

/// Node tokens are always present; words ranked by frequency then lexicographically.
Vocabulary build_vocab(const std::vector<std::string>& texts, std::size_t n_users, std::size_t n_items,
                       const VocabOptions& options = {});

struct TokenizedSequence {
    std::vector<TokenId> ids;
    std::string kind;
};

/// BOS-prefixed ids; unknown words map to UNK. max_length 0 means no truncation.
TokenizedSequence encode(const Vocabulary& vocab, std::string_view text, std::size_t max_length = 0);

/// Space-joined tokens with control tokens omitted.
std::string decode(const Vocabulary& vocab, const std::vector<TokenId>& ids);

void save_vocab(const Vocabulary& vocab, const std::filesystem::path& path, const std::string& config_hash = {});
Vocabulary load_vocab(const std::filesystem::path& path, std::string* config_hash = nullptr);

}  // namespace grasp
