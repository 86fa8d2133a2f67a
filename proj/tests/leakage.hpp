#pragma once

// Scans every training-side artifact for a (user, held-out item) pair.

#include "grasp/graph.hpp"
#include "grasp/prompts.hpp"
#include "grasp/tokenizer.hpp"
#include "grasp/train.hpp"

#include <set>
#include <string>
#include <vector>

namespace leakage {

inline std::set<std::pair<std::int32_t, std::int32_t>> held_out_pairs(const grasp::Dataset& ds) {
    std::set<std::pair<std::int32_t, std::int32_t>> pairs;
    for (std::size_t u = 0; u < ds.n_users(); ++u) {
        for (const auto* split : {&ds.val[u], &ds.test[u]}) {
            for (auto i : *split) {
                pairs.emplace(static_cast<std::int32_t>(u), i);
            }
        }
    }
    return pairs;
}

/// A prompt leaks when it names a user together with one of that user's val/test items.
inline std::vector<std::string> scan_texts(const grasp::Dataset& ds, const std::vector<std::string>& texts) {
    const auto held = held_out_pairs(ds);
    std::vector<std::string> found;
    for (const auto& text : texts) {
        std::vector<std::int32_t> users;
        std::vector<std::int32_t> items;
        for (const auto& piece : grasp::split_pieces(text)) {
            if (piece.kind == grasp::TokenPiece::Kind::User) {
                users.push_back(static_cast<std::int32_t>(piece.index));
            } else if (piece.kind == grasp::TokenPiece::Kind::Item) {
                items.push_back(static_cast<std::int32_t>(piece.index));
            }
        }
        for (auto u : users) {
            for (auto i : items) {
                if (held.count({u, i})) {
                    found.push_back("prompt pairs user_" + std::to_string(u) + " with held-out item_" +
                                    std::to_string(i) + ": " + text);
                }
            }
        }
    }
    return found;
}

inline std::vector<std::string> scan_graph(const grasp::Dataset& ds, const grasp::BipartiteGraph& g) {
    std::vector<std::string> found;
    for (const auto& [u, i] : held_out_pairs(ds)) {
        if (g.has_edge(g.user_node(static_cast<std::size_t>(u)), g.item_node(static_cast<std::size_t>(i)))) {
            found.push_back("graph edge user_" + std::to_string(u) + " - item_" + std::to_string(i));
        }
    }
    return found;
}

inline std::vector<std::string> scan_finetune(const grasp::Dataset& ds,
                                              const std::vector<grasp::FinetuneSample>& samples) {
    const auto held = held_out_pairs(ds);
    std::vector<std::string> found;
    for (const auto& s : samples) {
        for (const auto* list : {&s.history, &s.targets}) {
            for (auto i : *list) {
                if (held.count({s.user, i})) {
                    found.push_back("fine-tune sample of user_" + std::to_string(s.user) + " uses held-out item_" +
                                    std::to_string(i));
                }
            }
        }
    }
    return found;
}

}  // namespace leakage
