#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace grasp {

struct InteractionRecord {
    std::string user_id;
    std::string item_id;
    int rating = 0;
    std::optional<std::string> review_text;
    std::optional<std::string> reason;  // "why I bought it" text, rare in public dumps
    std::optional<std::int64_t> timestamp;
};

struct ItemMeta {
    std::string item_id;
    std::string title;
    std::optional<std::string> brand;
    std::vector<std::string> categories;
    std::optional<std::string> description;
};

template <typename Record>
struct LoadResult {
    std::vector<Record> records;
    std::size_t skipped = 0;     // malformed or invariant-violating lines
    std::size_t duplicates = 0;  // metadata only: repeated item ids
};

/// Reads a JSON-lines review dump. Throws IoError if the file cannot be opened.
LoadResult<InteractionRecord> load_reviews(const std::filesystem::path& path);

/// Reads a JSON-lines item metadata dump; the first line for an item id wins.
LoadResult<ItemMeta> load_metadata(const std::filesystem::path& path);

/// Bijection between opaque string ids and dense indices.
class IdIndex {
public:
    std::size_t add(const std::string& id);
    std::optional<std::size_t> find(const std::string& id) const;
    const std::string& id(std::size_t index) const { return ids_.at(index); }
    std::size_t size() const { return ids_.size(); }
    const std::vector<std::string>& ids() const { return ids_; }

private:
    std::vector<std::string> ids_;
    std::unordered_map<std::string, std::size_t> lookup_;
};

using ItemList = std::vector<std::int32_t>;
using UserItem = std::pair<std::int32_t, std::int32_t>;

struct DatasetProvenance {
    std::uint64_t seed = 0;
    std::size_t records_in = 0;
    std::size_t records_kept = 0;
    std::size_t users_dropped = 0;
    std::string source;
};

struct Dataset {
    IdIndex users;
    IdIndex items;
    std::vector<ItemList> train;
    std::vector<ItemList> val;
    std::vector<ItemList> test;
    std::map<std::int32_t, ItemMeta> meta;
    std::map<UserItem, std::string> reviews;
    std::map<UserItem, std::string> reasons;
    DatasetProvenance provenance;

    std::size_t n_users() const { return users.size(); }
    std::size_t n_items() const { return items.size(); }
};

/// Throws ConfigError when a split invariant is violated.
void validate(const Dataset& dataset);

struct SplitSizes {
    std::size_t train = 0;
    std::size_t val = 0;
    std::size_t test = 0;
};

/// 80/10/10 with floor on train, ceil on val, and at least one val and one test item.
SplitSizes split_sizes(std::size_t n);

/// Keeps ratings > 3, drops users with fewer than three kept interactions and
/// splits the rest per user after a seeded shuffle.
Dataset binarize_and_split(const std::vector<InteractionRecord>& records,
                           const std::vector<ItemMeta>& metas, std::uint64_t split_seed);

struct SyntheticSpec {
    std::size_t n_users = 50;
    std::size_t n_items = 30;
    std::size_t n_communities = 2;
    double intra_prob = 0.4;
    double inter_prob = 0.02;
    std::uint64_t seed = 7;
};

struct SyntheticData {
    std::vector<InteractionRecord> records;
    std::vector<ItemMeta> metas;
    Dataset dataset;
};

/// Planted-community generator: users and items are assigned round-robin to
/// communities and items of one community share a brand and category.
SyntheticData generate_synthetic(const SyntheticSpec& spec);

/// Community of a synthetic user or item index (round-robin assignment).
inline std::size_t synthetic_community(std::size_t index, std::size_t n_communities) {
    return index % n_communities;
}

/// Subsamples every train list to ceil((1 - fraction) * len) items, at least one.
Dataset reduce_history(const Dataset& dataset, double fraction, std::uint64_t seed);

/// Single JSON document with indices, splits, metadata, reviews and provenance.
void save_dataset(const Dataset& dataset, const std::filesystem::path& path,
                  const std::string& config_hash = {});
Dataset load_dataset(const std::filesystem::path& path, std::string* config_hash = nullptr);

}  // namespace grasp
