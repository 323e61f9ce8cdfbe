// tournament_tree.hpp
// Tournament tree over k optional entries: each internal node caches the
// winner of its two subtrees, so one leaf change replays a single root path
// in at most ceil(log2 k) item comparisons. The winner is the smallest
// (item, leaf index) pair; exhausted leaves rank above everything and
// matches against them are decided without comparing.

#pragma once

#include "bulkpq/errors.hpp"
#include "bulkpq/item.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace bulkpq {

template <typename Item>
class TournamentTree {
public:
    static constexpr std::size_t npos = static_cast<std::size_t>(-1);

    explicit TournamentTree(ItemOrder<Item> order = {}) : order_(order) {}

    // Rebuilds the tree over the given leaves. Build comparisons are tracked
    // separately from replay comparisons.
    void assign(const std::vector<std::optional<Item>>& leaves) {
        leaf_count_ = leaves.size();
        padded_ = 1;
        while (padded_ < leaf_count_)
            padded_ <<= 1;
        items_.assign(padded_, Item{});
        present_.assign(padded_, 0);
        for (std::size_t i = 0; i < leaf_count_; ++i) {
            if (leaves[i]) {
                items_[i] = *leaves[i];
                present_[i] = 1;
            }
        }
        nodes_.assign(padded_, 0);
        if (padded_ == 1)
            return;
        const std::uint64_t before = replay_comparisons_;
        for (std::size_t v = padded_ / 2; v < padded_; ++v)
            nodes_[v] = pick(2 * v - padded_, 2 * v + 1 - padded_);
        for (std::size_t v = padded_ / 2; v-- > 1;)
            nodes_[v] = pick(nodes_[2 * v], nodes_[2 * v + 1]);
        build_comparisons_ += replay_comparisons_ - before;
        replay_comparisons_ = before;
    }

    std::size_t size() const { return leaf_count_; }

    bool has_winner() const {
        const std::size_t w = root();
        return w != npos && present_[w];
    }

    // Leaf index of the current winner; npos when every leaf is exhausted.
    std::size_t winner() const {
        const std::size_t w = root();
        return (w != npos && present_[w]) ? w : npos;
    }

    const Item& winner_item() const {
        if (!has_winner())
            throw empty_error("tournament tree: all leaves exhausted");
        return items_[root()];
    }

    bool leaf_present(std::size_t idx) const { return present_[idx] != 0; }

    const Item& leaf_item(std::size_t idx) const { return items_[idx]; }

    // Replaces one leaf (any leaf, not just the winner) and replays its path.
    void update_leaf(std::size_t idx, std::optional<Item> value) {
        if (value) {
            items_[idx] = *value;
            present_[idx] = 1;
        } else {
            present_[idx] = 0;
        }
        if (padded_ == 1)
            return;
        std::size_t v = (idx + padded_) >> 1;
        nodes_[v] = pick(2 * v - padded_, 2 * v + 1 - padded_);
        for (v >>= 1; v >= 1; v >>= 1)
            nodes_[v] = pick(nodes_[2 * v], nodes_[2 * v + 1]);
    }

    std::uint64_t replay_comparisons() const { return replay_comparisons_; }
    std::uint64_t build_comparisons() const { return build_comparisons_; }

private:
    std::size_t root() const {
        if (leaf_count_ == 0)
            return npos;
        return padded_ == 1 ? 0 : nodes_[1];
    }

    // Winner of a match between two leaves; one comparison when both present.
    std::size_t pick(std::size_t a, std::size_t b) {
        if (!present_[b])
            return a;
        if (!present_[a])
            return b;
        ++replay_comparisons_;
        const int c = order_.compare(items_[a], items_[b]);
        return (c < 0 || (c == 0 && a < b)) ? a : b;
    }

    ItemOrder<Item> order_;
    std::size_t leaf_count_ = 0;
    std::size_t padded_ = 1;
    std::vector<Item> items_;
    std::vector<char> present_;
    std::vector<std::size_t> nodes_; // nodes_[v] = winning leaf of subtree v
    std::uint64_t replay_comparisons_ = 0;
    std::uint64_t build_comparisons_ = 0;
};

} // namespace bulkpq
