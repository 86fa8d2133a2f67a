#include "grasp/tokenizer.hpp"

#include "grasp/common.hpp"

#include "json.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

namespace grasp {

using json = nlohmann::json;

namespace {

constexpr const char* kControlTokens[] = {"<pad>", "<unk>", "<bos>", "<eos>"};

bool is_word_char(unsigned char c) { return std::isalnum(c) || c >= 0x80; }

// Length of a node token starting at pos, or 0.
std::size_t node_token_length(std::string_view text, std::size_t pos, TokenPiece::Kind& kind) {
    std::string_view rest = text.substr(pos);
    std::size_t prefix = 0;
    if (rest.substr(0, 5) == "user_") {
        kind = TokenPiece::Kind::User;
        prefix = 5;
    } else if (rest.substr(0, 5) == "item_") {
        kind = TokenPiece::Kind::Item;
        prefix = 5;
    } else {
        return 0;
    }
    std::size_t end = prefix;
    while (end < rest.size() && std::isdigit(static_cast<unsigned char>(rest[end]))) {
        ++end;
    }
    if (end == prefix || end - prefix > 9) {
        return 0;
    }
    // Must end at a word boundary: "item_45x" is plain text.
    return end < rest.size() && is_word_char(static_cast<unsigned char>(rest[end])) ? 0 : end;
}

}  // namespace

std::vector<TokenPiece> split_pieces(std::string_view text) {
    std::vector<TokenPiece> pieces;
    std::string word;
    auto flush = [&] {
        if (!word.empty()) {
            pieces.push_back({TokenPiece::Kind::Word, std::move(word), 0});
            word.clear();
        }
    };
    for (std::size_t i = 0; i < text.size();) {
        TokenPiece::Kind kind{};
        if (word.empty()) {
            if (std::size_t len = node_token_length(text, i, kind); len > 0) {
                std::string tok(text.substr(i, len));
                const auto index = static_cast<std::size_t>(std::stoul(tok.substr(5)));
                pieces.push_back({kind, std::move(tok), index});
                i += len;
                continue;
            }
        }
        const auto c = static_cast<unsigned char>(text[i]);
        if (is_word_char(c)) {
            word.push_back(static_cast<char>(c < 0x80 ? std::tolower(c) : c));
        } else {
            flush();
        }
        ++i;
    }
    flush();
    return pieces;
}

Vocabulary::Vocabulary(std::size_t n_users, std::size_t n_items, std::vector<std::string> words,
                       std::map<std::string, std::size_t> counts, std::size_t max_vocab, std::size_t min_freq)
    : n_users_(n_users),
      n_items_(n_items),
      words_(std::move(words)),
      counts_(std::move(counts)),
      max_vocab_(max_vocab),
      min_freq_(min_freq) {
    const TokenId base = kNumControl + static_cast<TokenId>(n_users_ + n_items_);
    for (std::size_t w = 0; w < words_.size(); ++w) {
        if (!word_lookup_.emplace(words_[w], base + static_cast<TokenId>(w)).second) {
            throw ConfigError("duplicate word in vocabulary: " + words_[w]);
        }
    }
}

std::optional<TokenId> Vocabulary::word_id(const std::string& word) const {
    auto it = word_lookup_.find(word);
    if (it == word_lookup_.end()) {
        return std::nullopt;
    }
    return it->second;
}

std::optional<TokenId> Vocabulary::find(const std::string& token) const {
    const auto pieces = split_pieces(token);
    if (pieces.size() == 1 && pieces[0].text == token) {
        const auto& p = pieces[0];
        if (p.kind == TokenPiece::Kind::User) {
            return p.index < n_users_ ? std::optional<TokenId>(user_id(p.index)) : std::nullopt;
        }
        if (p.kind == TokenPiece::Kind::Item) {
            return p.index < n_items_ ? std::optional<TokenId>(item_id(p.index)) : std::nullopt;
        }
    }
    return word_id(token);
}

std::string Vocabulary::token(TokenId id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= size()) {
        throw std::out_of_range("token id " + std::to_string(id) + " outside vocabulary");
    }
    if (id < kNumControl) {
        return kControlTokens[id];
    }
    const auto offset = static_cast<std::size_t>(id - kNumControl);
    if (offset < n_users_) {
        return "user_" + std::to_string(offset);
    }
    if (offset < n_users_ + n_items_) {
        return "item_" + std::to_string(offset - n_users_);
    }
    return words_[offset - n_users_ - n_items_];
}

std::optional<std::int32_t> Vocabulary::node_of_token(TokenId id) const {
    if (id < kNumControl) {
        return std::nullopt;
    }
    const auto node = static_cast<std::size_t>(id - kNumControl);
    if (node < n_users_ + n_items_) {
        return static_cast<std::int32_t>(node);
    }
    return std::nullopt;
}

std::string Vocabulary::to_json() const {
    json tokens = json::object();
    for (TokenId id = 0; static_cast<std::size_t>(id) < size(); ++id) {
        tokens[token(id)] = id;
    }
    json doc = {{"format", "grasp-vocab"},
                {"version", 1},
                {"n_users", n_users_},
                {"n_items", n_items_},
                {"max_vocab", max_vocab_},
                {"min_freq", min_freq_},
                {"words", words_},
                {"tokens", std::move(tokens)},
                {"counts", counts_}};
    return doc.dump(1);
}

Vocabulary Vocabulary::from_json(const std::string& text) {
    try {
        const json doc = json::parse(text);
        if (doc.at("format") != "grasp-vocab" || doc.at("version") != 1) {
            throw IoError("not a version-1 vocabulary file");
        }
        Vocabulary vocab(doc.at("n_users").get<std::size_t>(), doc.at("n_items").get<std::size_t>(),
                         doc.at("words").get<std::vector<std::string>>(),
                         doc.at("counts").get<std::map<std::string, std::size_t>>(),
                         doc.at("max_vocab").get<std::size_t>(), doc.at("min_freq").get<std::size_t>());
        for (const auto& [tok, id] : doc.at("tokens").items()) {
            if (vocab.token(id.get<TokenId>()) != tok) {
                throw IoError("vocabulary token map disagrees with id layout at " + tok);
            }
        }
        return vocab;
    } catch (const json::exception& e) {
        throw IoError(std::string("malformed vocabulary: ") + e.what());
    }
}

Vocabulary build_vocab(const std::vector<std::string>& texts, std::size_t n_users, std::size_t n_items,
                       const VocabOptions& options) {
    std::map<std::string, std::size_t> counts;
    for (const auto& text : texts) {
        for (const auto& piece : split_pieces(text)) {
            if (piece.kind == TokenPiece::Kind::Word) {
                ++counts[piece.text];
            }
        }
    }
    std::vector<std::pair<std::string, std::size_t>> ranked;
    for (const auto& [word, n] : counts) {
        if (n >= options.min_freq) {
            ranked.emplace_back(word, n);
        }
    }
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    if (ranked.size() > options.max_vocab) {
        ranked.resize(options.max_vocab);
    }
    std::vector<std::string> words;
    std::map<std::string, std::size_t> kept_counts;
    for (auto& [word, n] : ranked) {
        kept_counts[word] = n;
        words.push_back(std::move(word));
    }
    return Vocabulary(n_users, n_items, std::move(words), std::move(kept_counts), options.max_vocab,
                      options.min_freq);
}

TokenizedSequence encode(const Vocabulary& vocab, std::string_view text, std::size_t max_length) {
    TokenizedSequence seq;
    seq.ids.push_back(Vocabulary::kBos);
    for (const auto& piece : split_pieces(text)) {
        TokenId id = Vocabulary::kUnk;
        switch (piece.kind) {
            case TokenPiece::Kind::User:
                if (piece.index < vocab.n_users()) {
                    id = vocab.user_id(piece.index);
                }
                break;
            case TokenPiece::Kind::Item:
                if (piece.index < vocab.n_items()) {
                    id = vocab.item_id(piece.index);
                }
                break;
            case TokenPiece::Kind::Word:
                id = vocab.word_id(piece.text).value_or(Vocabulary::kUnk);
                break;
        }
        seq.ids.push_back(id);
    }
    if (max_length > 0 && seq.ids.size() > max_length) {
        seq.ids.resize(max_length);
    }
    return seq;
}

std::string decode(const Vocabulary& vocab, const std::vector<TokenId>& ids) {
    std::string out;
    for (TokenId id : ids) {
        std::string tok = vocab.token(id);
        if (id < Vocabulary::kNumControl) {
            continue;
        }
        if (!out.empty()) {
            out += ' ';
        }
        out += tok;
    }
    return out;
}

void save_vocab(const Vocabulary& vocab, const std::filesystem::path& path, const std::string& config_hash) {
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot write " + path.string());
    }
    json doc = json::parse(vocab.to_json());
    doc["config_hash"] = config_hash;
    out << doc.dump(1);
}

Vocabulary load_vocab(const std::filesystem::path& path, std::string* config_hash) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    std::stringstream buf;
    buf << in.rdbuf();
    if (config_hash != nullptr) {
        try {
            *config_hash = json::parse(buf.str()).value("config_hash", "");
        } catch (const json::exception& e) {
            throw IoError(path.string() + ": malformed vocabulary (" + e.what() + ")");
        }
    }
    return Vocabulary::from_json(buf.str());
}

}  // namespace grasp
