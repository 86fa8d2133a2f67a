#include "grasp/ingest.hpp"

#include "grasp/common.hpp"

#include "json.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <unordered_set>

namespace grasp {

using json = nlohmann::json;

namespace {

std::ifstream open_input(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    return in;
}

bool is_blank(const std::string& line) {
    return std::all_of(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c); });
}

std::optional<std::string> optional_string(const json& obj, const char* key) {
    auto it = obj.find(key);
    if (it == obj.end() || it->is_null()) {
        return std::nullopt;
    }
    if (!it->is_string()) {
        throw std::invalid_argument(key);
    }
    return it->get<std::string>();
}

std::optional<std::int64_t> integral_value(const json& value) {
    if (value.is_number_integer()) {
        return value.get<std::int64_t>();
    }
    if (value.is_number_float()) {
        const double d = value.get<double>();
        if (std::isfinite(d) && std::floor(d) == d) {
            return static_cast<std::int64_t>(d);
        }
    }
    return std::nullopt;
}

void flatten_categories(const json& node, std::vector<std::string>& out) {
    if (node.is_string()) {
        out.push_back(node.get<std::string>());
    } else if (node.is_array()) {
        for (const auto& child : node) {
            flatten_categories(child, out);
        }
    } else {
        throw std::invalid_argument("categories");
    }
}

}  // namespace

LoadResult<InteractionRecord> load_reviews(const std::filesystem::path& path) {
    auto in = open_input(path);
    LoadResult<InteractionRecord> result;
    std::string line;
    while (std::getline(in, line)) {
        if (is_blank(line)) {
            continue;
        }
        try {
            const json obj = json::parse(line);
            InteractionRecord rec;
            rec.user_id = obj.at("user").get<std::string>();
            rec.item_id = obj.at("item").get<std::string>();
            const auto rating = integral_value(obj.at("rating"));
            if (!rating || *rating < 1 || *rating > 5 || rec.user_id.empty() || rec.item_id.empty()) {
                ++result.skipped;
                continue;
            }
            rec.rating = static_cast<int>(*rating);
            rec.review_text = optional_string(obj, "review_text");
            rec.reason = optional_string(obj, "reason");
            if (auto it = obj.find("timestamp"); it != obj.end() && !it->is_null()) {
                const auto ts = integral_value(*it);
                if (!ts) {
                    ++result.skipped;
                    continue;
                }
                rec.timestamp = *ts;
            }
            result.records.push_back(std::move(rec));
        } catch (const std::exception&) {
            ++result.skipped;
        }
    }
    return result;
}

LoadResult<ItemMeta> load_metadata(const std::filesystem::path& path) {
    auto in = open_input(path);
    LoadResult<ItemMeta> result;
    std::unordered_set<std::string> seen;
    std::string line;
    while (std::getline(in, line)) {
        if (is_blank(line)) {
            continue;
        }
        try {
            const json obj = json::parse(line);
            ItemMeta meta;
            meta.item_id = obj.at("item").get<std::string>();
            meta.title = obj.at("title").get<std::string>();
            if (meta.item_id.empty()) {
                ++result.skipped;
                continue;
            }
            meta.brand = optional_string(obj, "brand");
            meta.description = optional_string(obj, "description");
            if (auto it = obj.find("categories"); it != obj.end() && !it->is_null()) {
                flatten_categories(*it, meta.categories);
            }
            if (!seen.insert(meta.item_id).second) {
                ++result.duplicates;
                continue;
            }
            result.records.push_back(std::move(meta));
        } catch (const std::exception&) {
            ++result.skipped;
        }
    }
    return result;
}

std::size_t IdIndex::add(const std::string& id) {
    auto [it, inserted] = lookup_.emplace(id, ids_.size());
    if (inserted) {
        ids_.push_back(id);
    }
    return it->second;
}

std::optional<std::size_t> IdIndex::find(const std::string& id) const {
    auto it = lookup_.find(id);
    if (it == lookup_.end()) {
        return std::nullopt;
    }
    return it->second;
}

void validate(const Dataset& ds) {
    const std::size_t n_users = ds.n_users();
    const auto n_items = static_cast<std::int32_t>(ds.n_items());
    if (ds.train.size() != n_users || ds.val.size() != n_users || ds.test.size() != n_users) {
        throw ConfigError("dataset split lists do not match the user count");
    }
    for (std::size_t u = 0; u < n_users; ++u) {
        if (ds.train[u].empty() || ds.val[u].empty() || ds.test[u].empty()) {
            throw ConfigError("user " + ds.users.id(u) + " has an empty split");
        }
        std::set<std::int32_t> seen;
        for (const auto* list : {&ds.train[u], &ds.val[u], &ds.test[u]}) {
            for (std::int32_t item : *list) {
                if (item < 0 || item >= n_items) {
                    throw ConfigError("item index out of range for user " + ds.users.id(u));
                }
                if (!seen.insert(item).second) {
                    throw ConfigError("overlapping splits for user " + ds.users.id(u));
                }
            }
        }
    }
}

SplitSizes split_sizes(std::size_t n) {
    SplitSizes s;
    s.train = (n * 8) / 10;
    const std::size_t rest = n - s.train;
    s.val = (rest + 1) / 2;
    s.test = rest - s.val;
    if (s.val == 0 && s.train > 0) {
        --s.train;
        ++s.val;
    }
    if (s.test == 0 && s.train > 0) {
        --s.train;
        ++s.test;
    }
    return s;
}

Dataset binarize_and_split(const std::vector<InteractionRecord>& records,
                           const std::vector<ItemMeta>& metas, std::uint64_t split_seed) {
    Dataset ds;
    ds.provenance.seed = split_seed;
    ds.provenance.records_in = records.size();

    // Kept record positions per user id, in input order, first (user, item) occurrence only.
    IdIndex user_order;
    std::vector<std::vector<std::size_t>> kept_by_user;
    std::set<std::pair<std::string, std::string>> seen_pairs;
    for (std::size_t r = 0; r < records.size(); ++r) {
        const auto& rec = records[r];
        if (rec.rating <= 3) {
            continue;
        }
        if (!seen_pairs.emplace(rec.user_id, rec.item_id).second) {
            continue;
        }
        const std::size_t u = user_order.add(rec.user_id);
        if (u == kept_by_user.size()) {
            kept_by_user.emplace_back();
        }
        kept_by_user[u].push_back(r);
    }

    std::vector<std::size_t> retained;
    for (std::size_t u = 0; u < kept_by_user.size(); ++u) {
        if (kept_by_user[u].size() >= 3) {
            retained.push_back(u);
        } else {
            ++ds.provenance.users_dropped;
        }
    }
    if (retained.empty()) {
        throw ConfigError("no user has three or more interactions rated above 3");
    }

    std::unordered_set<std::string> used_items;
    for (std::size_t u : retained) {
        for (std::size_t r : kept_by_user[u]) {
            used_items.insert(records[r].item_id);
        }
        ds.provenance.records_kept += kept_by_user[u].size();
    }
    for (const auto& meta : metas) {
        if (used_items.count(meta.item_id) && !ds.items.find(meta.item_id)) {
            ds.meta[static_cast<std::int32_t>(ds.items.add(meta.item_id))] = meta;
        }
    }
    for (std::size_t u : retained) {
        for (std::size_t r : kept_by_user[u]) {
            ds.items.add(records[r].item_id);
        }
    }

    std::mt19937_64 rng(split_seed);
    for (std::size_t u : retained) {
        const auto user = static_cast<std::int32_t>(ds.users.add(user_order.id(u)));
        std::vector<std::size_t> order = kept_by_user[u];
        std::shuffle(order.begin(), order.end(), rng);
        const SplitSizes sizes = split_sizes(order.size());

        const bool timed = std::all_of(order.begin(), order.end(),
                                       [&](std::size_t r) { return records[r].timestamp.has_value(); });
        auto chronological = [&](auto first, auto last) {
            std::vector<std::size_t> part(first, last);
            std::sort(part.begin(), part.end(), [&](std::size_t a, std::size_t b) {
                if (timed && *records[a].timestamp != *records[b].timestamp) {
                    return *records[a].timestamp < *records[b].timestamp;
                }
                return a < b;
            });
            ItemList items;
            for (std::size_t r : part) {
                const auto item = static_cast<std::int32_t>(*ds.items.find(records[r].item_id));
                items.push_back(item);
                if (records[r].review_text && !records[r].review_text->empty()) {
                    ds.reviews[{user, item}] = *records[r].review_text;
                }
                if (records[r].reason && !records[r].reason->empty()) {
                    ds.reasons[{user, item}] = *records[r].reason;
                }
            }
            return items;
        };
        const auto train_end = order.begin() + static_cast<std::ptrdiff_t>(sizes.train);
        const auto val_end = train_end + static_cast<std::ptrdiff_t>(sizes.val);
        ds.train.push_back(chronological(order.begin(), train_end));
        ds.val.push_back(chronological(train_end, val_end));
        ds.test.push_back(chronological(val_end, order.end()));
    }
    validate(ds);
    return ds;
}

namespace {

constexpr std::array<const char*, 16> kAdjectives = {
    "silky", "bold",   "gentle", "bright", "rugged", "cozy",  "crisp",  "vivid",
    "smooth", "sturdy", "fresh", "warm",   "sleek",  "light", "rich",   "calm"};

constexpr std::array<const char*, 4> kNouns = {"lotion", "gadget", "kit", "set"};

const char* community_word(std::size_t community, std::size_t k) {
    return kAdjectives[(community * 4 + k) % kAdjectives.size()];
}

}  // namespace

SyntheticData generate_synthetic(const SyntheticSpec& spec) {
    if (spec.n_users == 0 || spec.n_items == 0 || spec.n_communities == 0) {
        throw ConfigError("synthetic spec needs positive user, item and community counts");
    }
    if (!(spec.inter_prob >= 0.0 && spec.inter_prob < spec.intra_prob && spec.intra_prob <= 1.0)) {
        throw ConfigError("synthetic spec needs 0 <= inter_prob < intra_prob <= 1");
    }

    SyntheticData out;
    std::mt19937_64 rng(spec.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    for (std::size_t j = 0; j < spec.n_items; ++j) {
        const std::size_t c = synthetic_community(j, spec.n_communities);
        ItemMeta meta;
        meta.item_id = "i" + std::to_string(j);
        meta.title = std::string(community_word(c, j % 4)) + " " + kNouns[j % kNouns.size()] + " " +
                     std::to_string(j);
        meta.brand = "brand" + std::to_string(c);
        meta.categories = {"category" + std::to_string(c)};
        meta.description = std::string("a ") + community_word(c, (j + 1) % 4) + " choice";
        out.metas.push_back(std::move(meta));
    }

    for (std::size_t u = 0; u < spec.n_users; ++u) {
        const std::size_t cu = synthetic_community(u, spec.n_communities);
        std::vector<std::size_t> picked;
        for (int attempt = 0; attempt <= 100; ++attempt) {
            picked.clear();
            for (std::size_t j = 0; j < spec.n_items; ++j) {
                const bool same = synthetic_community(j, spec.n_communities) == cu;
                if (unit(rng) < (same ? spec.intra_prob : spec.inter_prob)) {
                    picked.push_back(j);
                }
            }
            if (picked.size() >= 3) {
                break;
            }
        }
        if (picked.size() < 3) {
            continue;
        }
        for (std::size_t j : picked) {
            const std::size_t cj = synthetic_community(j, spec.n_communities);
            InteractionRecord rec;
            rec.user_id = "u" + std::to_string(u);
            rec.item_id = "i" + std::to_string(j);
            rec.rating = 5;
            const auto pick = static_cast<std::size_t>(unit(rng) * 4.0) % 4;
            rec.review_text = std::string("this is ") + community_word(cj, pick) + " and " +
                              community_word(cj, (pick + 1) % 4);
            out.records.push_back(std::move(rec));
        }
    }
    out.dataset = binarize_and_split(out.records, out.metas, spec.seed);
    out.dataset.provenance.source = "synthetic";
    return out;
}

Dataset reduce_history(const Dataset& dataset, double fraction, std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction < 1.0)) {
        throw ConfigError("reduce_history fraction must lie in (0, 1)");
    }
    Dataset out = dataset;
    std::mt19937_64 rng(seed);
    for (auto& list : out.train) {
        const double target = std::ceil((1.0 - fraction) * static_cast<double>(list.size()) - 1e-9);
        const auto keep = std::max<std::size_t>(1, static_cast<std::size_t>(target));
        std::vector<std::size_t> positions(list.size());
        std::iota(positions.begin(), positions.end(), 0);
        std::shuffle(positions.begin(), positions.end(), rng);
        positions.resize(std::min(keep, positions.size()));
        std::sort(positions.begin(), positions.end());
        ItemList reduced;
        for (std::size_t p : positions) {
            reduced.push_back(list[p]);
        }
        list = std::move(reduced);
    }
    return out;
}

namespace {

json pairs_to_json(const std::map<UserItem, std::string>& texts) {
    json arr = json::array();
    for (const auto& [key, text] : texts) {
        arr.push_back({{"user", key.first}, {"item", key.second}, {"text", text}});
    }
    return arr;
}

std::map<UserItem, std::string> pairs_from_json(const json& arr) {
    std::map<UserItem, std::string> out;
    for (const auto& entry : arr) {
        out[{entry.at("user").get<std::int32_t>(), entry.at("item").get<std::int32_t>()}] =
            entry.at("text").get<std::string>();
    }
    return out;
}

}  // namespace

void save_dataset(const Dataset& ds, const std::filesystem::path& path, const std::string& config_hash) {
    json doc;
    doc["format"] = "grasp-dataset";
    doc["version"] = 1;
    doc["config_hash"] = config_hash;
    doc["provenance"] = {{"seed", ds.provenance.seed},
                         {"records_in", ds.provenance.records_in},
                         {"records_kept", ds.provenance.records_kept},
                         {"users_dropped", ds.provenance.users_dropped},
                         {"source", ds.provenance.source},
                         {"n_users", ds.n_users()},
                         {"n_items", ds.n_items()}};
    doc["users"] = ds.users.ids();
    doc["items"] = ds.items.ids();
    doc["train"] = ds.train;
    doc["val"] = ds.val;
    doc["test"] = ds.test;
    json meta = json::array();
    for (const auto& [index, m] : ds.meta) {
        json entry = {{"index", index}, {"item", m.item_id}, {"title", m.title}, {"categories", m.categories}};
        if (m.brand) {
            entry["brand"] = *m.brand;
        }
        if (m.description) {
            entry["description"] = *m.description;
        }
        meta.push_back(std::move(entry));
    }
    doc["meta"] = std::move(meta);
    doc["reviews"] = pairs_to_json(ds.reviews);
    doc["reasons"] = pairs_to_json(ds.reasons);

    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot write " + path.string());
    }
    out << doc.dump(1) << '\n';
}

Dataset load_dataset(const std::filesystem::path& path, std::string* config_hash) {
    auto in = open_input(path);
    json doc;
    try {
        doc = json::parse(in);
        if (doc.at("format") != "grasp-dataset" || doc.at("version") != 1) {
            throw IoError(path.string() + " is not a version-1 dataset dump");
        }
        Dataset ds;
        for (const auto& id : doc.at("users")) {
            ds.users.add(id.get<std::string>());
        }
        for (const auto& id : doc.at("items")) {
            ds.items.add(id.get<std::string>());
        }
        ds.train = doc.at("train").get<std::vector<ItemList>>();
        ds.val = doc.at("val").get<std::vector<ItemList>>();
        ds.test = doc.at("test").get<std::vector<ItemList>>();
        for (const auto& entry : doc.at("meta")) {
            ItemMeta m;
            m.item_id = entry.at("item").get<std::string>();
            m.title = entry.at("title").get<std::string>();
            m.categories = entry.at("categories").get<std::vector<std::string>>();
            if (entry.contains("brand")) {
                m.brand = entry["brand"].get<std::string>();
            }
            if (entry.contains("description")) {
                m.description = entry["description"].get<std::string>();
            }
            ds.meta[entry.at("index").get<std::int32_t>()] = std::move(m);
        }
        ds.reviews = pairs_from_json(doc.at("reviews"));
        ds.reasons = pairs_from_json(doc.at("reasons"));
        const auto& prov = doc.at("provenance");
        ds.provenance.seed = prov.at("seed").get<std::uint64_t>();
        ds.provenance.records_in = prov.at("records_in").get<std::size_t>();
        ds.provenance.records_kept = prov.at("records_kept").get<std::size_t>();
        ds.provenance.users_dropped = prov.at("users_dropped").get<std::size_t>();
        ds.provenance.source = prov.at("source").get<std::string>();
        if (config_hash) {
            *config_hash = doc.value("config_hash", "");
        }
        validate(ds);
        return ds;
    } catch (const json::exception& e) {
        throw IoError(path.string() + ": malformed dataset dump (" + e.what() + ")");
    }
}

}  // namespace grasp
