// heaps.hpp
// Per-thread insertion heaps, sorted internal arrays with level numbers,
// and the tournament-tree hierarchy over all in-RAM minima. Heaps are
// binary min-heaps in normal operation; inside bulk sessions they are plain
// append arrays and order is reestablished at session end.

#pragma once

#include "bulkpq/errors.hpp"
#include "bulkpq/item.hpp"
#include "bulkpq/merge.hpp"
#include "bulkpq/tournament_tree.hpp"

#include <algorithm>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <vector>

namespace bulkpq {

template <typename Item>
class InsertionHeap {
public:
    bool empty() const { return items_.empty(); }
    std::size_t size() const { return items_.size(); }
    bool bulk_mode() const { return bulk_mode_; }

    // Heap mode: sift-up insert; returns true when the minimum changed.
    // Bulk mode: plain append, no ordering work.
    bool push(const Item& item, const ItemOrder<Item>& order) {
        if (bulk_mode_) {
            items_.push_back(item);
            return false;
        }
        const bool changed =
            items_.empty() || order.less(item, items_.front());
        items_.push_back(item);
        std::push_heap(items_.begin(), items_.end(), greater(order));
        return changed;
    }

    const Item& min() const { return items_.front(); }

    Item pop_min(const ItemOrder<Item>& order) {
        std::pop_heap(items_.begin(), items_.end(), greater(order));
        Item out = items_.back();
        items_.pop_back();
        return out;
    }

    void enter_bulk_mode() { bulk_mode_ = true; }

    // Leaves bulk mode, reestablishing the heap property.
    void leave_bulk_mode(const ItemOrder<Item>& order) {
        bulk_mode_ = false;
        std::make_heap(items_.begin(), items_.end(), greater(order));
    }

    // Moves the contents out sorted in extraction order and empties the
    // heap. Uses a general sorter, not heap sort.
    std::vector<Item> take_sorted(const ItemOrder<Item>& order) {
        std::vector<Item> out = std::move(items_);
        items_.clear();
        std::sort(out.begin(), out.end(),
                  [&](const Item& a, const Item& b) { return order.less(a, b); });
        return out;
    }

    const std::vector<Item>& raw() const { return items_; }

private:
    static auto greater(const ItemOrder<Item>& order) {
        return [order](const Item& a, const Item& b) {
            return order.less(b, a);
        };
    }

    std::vector<Item> items_;
    bool bulk_mode_ = false;
};

// Immutable sorted in-RAM run with a level tag and a growing consumed prefix.
template <typename Item>
struct InternalArray {
    std::vector<Item> items;
    std::size_t consumed = 0;
    unsigned level = 0;

    std::size_t remaining() const { return items.size() - consumed; }
    bool exhausted() const { return consumed == items.size(); }
    const Item& head() const { return items[consumed]; }
    SequenceSlice<Item> slice() const {
        return SequenceSlice<Item>(items.data() + consumed,
                                   items.data() + items.size());
    }
};

// Registry of internal arrays. Registration is the only operation callable
// concurrently (from overflowing insertion heaps) and runs under one mutex.
template <typename Item>
class InternalArrayStore {
public:
    explicit InternalArrayStore(ItemOrder<Item> order = {}) : order_(order) {}

    std::size_t register_array(std::vector<Item> sorted, unsigned level) {
        auto arr = std::make_unique<InternalArray<Item>>();
        arr->items = std::move(sorted);
        arr->level = level;
        std::lock_guard<std::mutex> lock(registration_mutex_);
        arrays_.push_back(std::move(arr));
        return arrays_.size() - 1;
    }

    std::size_t count() const { return arrays_.size(); }

    std::size_t count_at_level(unsigned level) const {
        std::size_t n = 0;
        for (const auto& a : arrays_)
            if (a->level == level && !a->exhausted())
                ++n;
        return n;
    }

    unsigned max_level() const {
        unsigned lvl = 0;
        for (const auto& a : arrays_)
            lvl = std::max(lvl, a->level);
        return lvl;
    }

    InternalArray<Item>& array(std::size_t i) { return *arrays_[i]; }
    const InternalArray<Item>& array(std::size_t i) const {
        return *arrays_[i];
    }

    std::uint64_t total_items() const {
        std::uint64_t n = 0;
        for (const auto& a : arrays_)
            n += a->remaining();
        return n;
    }

    std::uint64_t total_bytes() const {
        std::uint64_t n = 0;
        for (const auto& a : arrays_)
            n += a->items.size() * sizeof(Item);
        return n;
    }

    // Drops exhausted arrays. Returns true if anything was removed.
    bool sweep_exhausted() {
        const std::size_t before = arrays_.size();
        arrays_.erase(std::remove_if(arrays_.begin(), arrays_.end(),
                                     [](const auto& a) {
                                         return a->exhausted();
                                     }),
                      arrays_.end());
        return arrays_.size() != before;
    }

    void clear() { arrays_.clear(); }

    // Merges arrays of `level` into one array at level+1 when the level
    // holds more than max_per_level arrays. Prefers the whole level; when
    // the transient output would exceed the byte allowance it merges the
    // largest subset that fits, smallest arrays first (array sizes can be
    // wildly skewed after bulk cycles). Cascades upward. Returns true if
    // any merge ran.
    bool maybe_merge_level(unsigned level, std::size_t max_per_level,
                           std::uint64_t byte_allowance, std::size_t p,
                           unsigned max_workers) {
        bool merged_any = false;
        for (unsigned lvl = level;; ++lvl) {
            bool merged_here = true;
            while (merged_here) {
                merged_here = false;
                std::vector<std::size_t> victims;
                for (std::size_t i = 0; i < arrays_.size(); ++i)
                    if (arrays_[i]->level == lvl && !arrays_[i]->exhausted())
                        victims.push_back(i);
                if (victims.size() <= max_per_level)
                    break;
                std::sort(victims.begin(), victims.end(),
                          [&](std::size_t a, std::size_t b) {
                              return arrays_[a]->remaining() <
                                     arrays_[b]->remaining();
                          });
                std::size_t take = 0;
                std::uint64_t out_items = 0;
                while (take < victims.size() &&
                       (out_items + arrays_[victims[take]]->remaining()) *
                               sizeof(Item) <=
                           byte_allowance) {
                    out_items += arrays_[victims[take]]->remaining();
                    ++take;
                }
                if (take < 2)
                    break; // defer to the external flush
                victims.resize(take);
                std::vector<SequenceSlice<Item>> slices;
                slices.reserve(victims.size());
                for (std::size_t v : victims)
                    slices.push_back(arrays_[v]->slice());
                std::vector<Item> merged;
                merged.reserve(out_items);
                parallel_multiway_merge(slices, out_items, std::nullopt, p,
                                        merged, order_, max_workers);
                std::sort(victims.begin(), victims.end());
                for (auto it = victims.rbegin(); it != victims.rend(); ++it)
                    arrays_.erase(arrays_.begin() +
                                  static_cast<std::ptrdiff_t>(*it));
                auto arr = std::make_unique<InternalArray<Item>>();
                arr->items = std::move(merged);
                arr->level = lvl + 1;
                arrays_.push_back(std::move(arr));
                merged_any = true;
                merged_here = true;
            }
            if (lvl >= max_level())
                break;
        }
        return merged_any;
    }

private:
    std::vector<std::unique_ptr<InternalArray<Item>>> arrays_;
    std::mutex registration_mutex_;
    ItemOrder<Item> order_;
};

// Tournament trees over the insertion-heap minima and the internal-array
// heads, combined with the extract-buffer head into one global winner.
template <typename Item>
class MinimaHierarchy {
public:
    enum class Source { Heap, Array, ExtractBuffer };

    struct Peek {
        Source source;
        std::size_t index; // heap or array index; unused for extract buffer
        Item item;
    };

    explicit MinimaHierarchy(ItemOrder<Item> order = {})
        : order_(order), heaps_tree_(order), arrays_tree_(order) {}

    void rebuild_heaps(const std::vector<InsertionHeap<Item>>& heaps) {
        std::vector<std::optional<Item>> leaves(heaps.size());
        for (std::size_t i = 0; i < heaps.size(); ++i)
            if (!heaps[i].empty() && !heaps[i].bulk_mode())
                leaves[i] = heaps[i].min();
        heaps_tree_.assign(leaves);
    }

    void update_heap(std::size_t i, std::optional<Item> min) {
        heaps_tree_.update_leaf(i, min);
    }

    void rebuild_arrays(const InternalArrayStore<Item>& store) {
        std::vector<std::optional<Item>> leaves(store.count());
        for (std::size_t i = 0; i < store.count(); ++i)
            if (!store.array(i).exhausted())
                leaves[i] = store.array(i).head();
        arrays_tree_.assign(leaves);
    }

    void update_array(std::size_t i, std::optional<Item> head) {
        arrays_tree_.update_leaf(i, head);
    }

    void set_extract_head(std::optional<Item> head) {
        extract_head_ = head;
    }

    // Minimum over all in-RAM sources; ties prefer the extract buffer, then
    // internal arrays, then insertion heaps.
    std::optional<Peek> winner() const {
        std::optional<Peek> best;
        if (extract_head_)
            best = Peek{Source::ExtractBuffer, 0, *extract_head_};
        if (arrays_tree_.has_winner()) {
            const Item& w = arrays_tree_.winner_item();
            if (!best || order_.less(w, best->item))
                best = Peek{Source::Array, arrays_tree_.winner(), w};
        }
        if (heaps_tree_.has_winner()) {
            const Item& w = heaps_tree_.winner_item();
            if (!best || order_.less(w, best->item))
                best = Peek{Source::Heap, heaps_tree_.winner(), w};
        }
        return best;
    }

private:
    ItemOrder<Item> order_;
    TournamentTree<Item> heaps_tree_;
    TournamentTree<Item> arrays_tree_;
    std::optional<Item> extract_head_;
};

} // namespace bulkpq
