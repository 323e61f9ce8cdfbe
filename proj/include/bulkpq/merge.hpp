// merge.hpp
// Multisequence selection and parallel multiway merging of sorted runs.
// Selection finds per-sequence cut positions realizing a global rank with
// ties broken by lower sequence index, which makes every merge stable and
// deterministic. The parallel merge splits the work into p range-disjoint,
// size-balanced parts merged independently; each part is merged with a
// tournament tree and written in sequence.

#pragma once

#include "bulkpq/errors.hpp"
#include "bulkpq/item.hpp"
#include "bulkpq/tournament_tree.hpp"

#include <algorithm>
#include <cstdint>
#include <exception>
#include <functional>
#include <limits>
#include <mutex>
#include <optional>
#include <thread>
#include <type_traits>
#include <vector>

namespace bulkpq {

// View of a contiguous sorted run. Merging advances `first`.
template <typename Item>
struct SequenceSlice {
    const Item* first = nullptr;
    const Item* last = nullptr;

    SequenceSlice() = default;
    SequenceSlice(const Item* f, const Item* l) : first(f), last(l) {}

    std::size_t size() const { return static_cast<std::size_t>(last - first); }
    bool empty() const { return first == last; }
};

// Cut positions for p range-disjoint parts. cuts has p+1 rows of k
// per-sequence positions (relative to each slice's begin); row 0 is all
// zeros, row i and row i+1 delimit part i.
struct SelectionResult {
    std::vector<std::vector<std::size_t>> cuts;
    std::vector<std::size_t> part_sizes;
};

// Runs `parts` tasks on at most `max_workers` threads. Tasks write disjoint
// state, so scheduling cannot influence results.
inline void run_parallel(std::size_t parts, unsigned max_workers,
                         const std::function<void(std::size_t)>& body) {
    if (parts == 0)
        return;
    const unsigned workers =
        static_cast<unsigned>(std::min<std::size_t>(parts, max_workers));
    if (workers <= 1) {
        for (std::size_t i = 0; i < parts; ++i)
            body(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(workers);
    std::exception_ptr failure;
    std::mutex failure_mutex;
    for (unsigned w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            try {
                for (std::size_t i = w; i < parts; i += workers)
                    body(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(failure_mutex);
                if (!failure)
                    failure = std::current_exception();
            }
        });
    }
    for (auto& t : pool)
        t.join();
    if (failure)
        std::rethrow_exception(failure);
}

namespace detail {

// Number of items in [first, last) extracted strictly before `probe`.
template <typename Item>
std::size_t count_before(const Item* first, const Item* last,
                         const Item& probe, const ItemOrder<Item>& order) {
    const Item* pos = std::partition_point(
        first, last, [&](const Item& x) { return order.less(x, probe); });
    return static_cast<std::size_t>(pos - first);
}

// Number of items extracted no later than `probe` (key <= probe's key in
// extraction order).
template <typename Item>
std::size_t count_through(const Item* first, const Item* last,
                          const Item& probe, const ItemOrder<Item>& order) {
    const Item* pos = std::partition_point(
        first, last, [&](const Item& x) { return !order.less(probe, x); });
    return static_cast<std::size_t>(pos - first);
}

} // namespace detail

// Cut positions such that the union of slice prefixes holds exactly `rank`
// items, every prefix item precedes every suffix item, and equal keys are
// taken from lower sequence indices first.
template <typename Item>
std::vector<std::size_t>
multisequence_select(const std::vector<SequenceSlice<Item>>& slices,
                     std::size_t rank, const ItemOrder<Item>& order = {}) {
    const std::size_t k = slices.size();
    std::vector<std::size_t> cuts(k, 0);
    std::size_t total = 0;
    for (const auto& s : slices)
        total += s.size();
    if (rank > total)
        throw contract_error("multisequence_select: rank out of range");
    if (rank == 0)
        return cuts;
    if (rank == total) {
        for (std::size_t i = 0; i < k; ++i)
            cuts[i] = slices[i].size();
        return cuts;
    }

    // Binary search over the key universe for the key of the rank-th item
    // (in extraction order), using the direction-free rank mapping.
    std::uint64_t lo = std::numeric_limits<std::uint64_t>::max();
    std::uint64_t hi = 0;
    for (const auto& s : slices) {
        if (s.empty())
            continue;
        lo = std::min(lo, order.rank_key(*s.first));
        hi = std::max(hi, order.rank_key(*(s.last - 1)));
    }
    while (lo < hi) {
        const std::uint64_t mid = lo + (hi - lo) / 2;
        const Item probe = order.item_from_rank(mid);
        std::size_t through = 0;
        for (const auto& s : slices)
            through += detail::count_through(s.first, s.last, probe, order);
        if (through >= rank)
            hi = mid;
        else
            lo = mid + 1;
    }
    const Item boundary = order.item_from_rank(lo);

    // Take everything strictly before the boundary key, then fill the
    // remainder with boundary-key items from lower sequence indices.
    std::size_t taken = 0;
    for (std::size_t i = 0; i < k; ++i) {
        cuts[i] = detail::count_before(slices[i].first, slices[i].last,
                                       boundary, order);
        taken += cuts[i];
    }
    std::size_t remaining = rank - taken;
    for (std::size_t i = 0; i < k && remaining > 0; ++i) {
        const std::size_t equal =
            detail::count_through(slices[i].first, slices[i].last, boundary,
                                  order) -
            cuts[i];
        const std::size_t grab = std::min(remaining, equal);
        cuts[i] += grab;
        remaining -= grab;
    }
    return cuts;
}

// Cut vectors at global ranks floor(i*total/p) for i = 0..p. Part sizes
// differ pairwise by at most one and parts are range-disjoint.
template <typename Item>
SelectionResult
partition_for_parallel_merge(const std::vector<SequenceSlice<Item>>& slices,
                             std::size_t total, std::size_t p,
                             const ItemOrder<Item>& order = {}) {
    if (p < 1)
        throw contract_error("partition_for_parallel_merge: p must be >= 1");
    SelectionResult result;
    result.cuts.resize(p + 1);
    result.cuts[0].assign(slices.size(), 0);
    result.part_sizes.resize(p);
    for (std::size_t i = 1; i <= p; ++i) {
        const std::size_t rank = total * i / p;
        result.cuts[i] = multisequence_select(slices, rank, order);
        result.part_sizes[i - 1] = rank - total * (i - 1) / p;
    }
    return result;
}

// Sequential k-way merger over slice ranges, driven by a tournament tree.
// pop() returns the next item in extraction order and replays the tree.
template <typename Item>
class TreeMerger {
public:
    TreeMerger(std::vector<SequenceSlice<Item>> ranges,
               ItemOrder<Item> order = {})
        : ranges_(std::move(ranges)), tree_(order) {
        std::vector<std::optional<Item>> heads(ranges_.size());
        for (std::size_t i = 0; i < ranges_.size(); ++i)
            if (!ranges_[i].empty())
                heads[i] = *ranges_[i].first;
        tree_.assign(heads);
    }

    bool exhausted() const { return !tree_.has_winner(); }

    // Sequence index the next pop will draw from.
    std::size_t winner() const { return tree_.winner(); }

    Item pop() {
        const std::size_t w = tree_.winner();
        if (w == TournamentTree<Item>::npos)
            throw empty_error("tree merger: all sequences exhausted");
        const Item out = tree_.winner_item();
        auto& r = ranges_[w];
        ++r.first;
        tree_.update_leaf(w, r.empty() ? std::nullopt
                                       : std::optional<Item>(*r.first));
        return out;
    }

    std::uint64_t replay_comparisons() const {
        return tree_.replay_comparisons();
    }

private:
    std::vector<SequenceSlice<Item>> ranges_;
    TournamentTree<Item> tree_;
};

namespace detail {

// Merges the items between two cut vectors, feeding them to `emit`.
template <typename Item, typename Emit>
void merge_between_cuts(const std::vector<SequenceSlice<Item>>& slices,
                        const std::vector<std::size_t>& from,
                        const std::vector<std::size_t>& to,
                        const ItemOrder<Item>& order, Emit&& emit) {
    std::vector<SequenceSlice<Item>> ranges(slices.size());
    std::size_t count = 0;
    for (std::size_t i = 0; i < slices.size(); ++i) {
        ranges[i] = SequenceSlice<Item>(slices[i].first + from[i],
                                        slices[i].first + to[i]);
        count += to[i] - from[i];
    }
    // Two-way fast path; output-identical to the tree since the tree breaks
    // ties by lower sequence index as well.
    std::size_t live = 0;
    for (const auto& r : ranges)
        if (!r.empty())
            ++live;
    if (live <= 2) {
        SequenceSlice<Item> a, b;
        bool have_a = false;
        for (auto& r : ranges) {
            if (r.empty())
                continue;
            (have_a ? b : a) = r;
            have_a = true;
        }
        const Item* pa = a.first;
        const Item* pb = b.first;
        while (pa != a.last && pb != b.last)
            emit(order.less(*pb, *pa) ? *pb++ : *pa++);
        while (pa != a.last)
            emit(*pa++);
        while (pb != b.last)
            emit(*pb++);
        return;
    }
    TreeMerger<Item> merger(std::move(ranges), order);
    for (std::size_t i = 0; i < count; ++i)
        emit(merger.pop());
}

} // namespace detail

// Merges the smallest eligible items of all slices into `out`, in extraction
// order, as p consecutive sub-runs merged independently. Eligible items are
// those strictly before `value_limit` when given. At most max_items are
// produced; consumed prefixes are removed from the input slices. Returns the
// number of items written.
template <typename Item>
std::size_t parallel_multiway_merge(
    std::vector<SequenceSlice<Item>>& slices, std::size_t max_items,
    const std::optional<std::type_identity_t<Item>>& value_limit,
    std::size_t p, std::vector<Item>& out, const ItemOrder<Item>& order = {},
    unsigned max_workers = 0, std::size_t min_parallel_items = 32768) {
    std::vector<SequenceSlice<Item>> eligible(slices.size());
    std::size_t available = 0;
    for (std::size_t i = 0; i < slices.size(); ++i) {
        const Item* limit_pos =
            value_limit ? slices[i].first +
                              detail::count_before(slices[i].first,
                                                   slices[i].last,
                                                   *value_limit, order)
                        : slices[i].last;
        eligible[i] = SequenceSlice<Item>(slices[i].first, limit_pos);
        available += eligible[i].size();
    }
    const std::size_t n = std::min(max_items, available);
    const std::size_t base = out.size();
    out.resize(base + n);
    if (n == 0)
        return 0;

    if (p < 1)
        p = 1;
    // Small outputs are not worth a multisequence selection and worker
    // threads; a single capped tree merge produces the identical sequence.
    if (n < min_parallel_items)
        p = 1;
    if (p == 1) {
        std::vector<SequenceSlice<Item>> ranges = eligible;
        TreeMerger<Item> merger(ranges, order);
        std::vector<std::size_t> taken(slices.size(), 0);
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t src = merger.winner();
            out[base + i] = merger.pop();
            ++taken[src];
        }
        for (std::size_t i = 0; i < slices.size(); ++i)
            slices[i].first += taken[i];
        return n;
    }

    const SelectionResult sel =
        partition_for_parallel_merge(eligible, n, p, order);
    std::vector<std::size_t> offsets(p + 1, 0);
    for (std::size_t i = 0; i < p; ++i)
        offsets[i + 1] = offsets[i] + sel.part_sizes[i];

    run_parallel(p, max_workers ? max_workers : static_cast<unsigned>(p),
                 [&](std::size_t part) {
                     Item* dst = out.data() + base + offsets[part];
                     detail::merge_between_cuts(
                         eligible, sel.cuts[part], sel.cuts[part + 1], order,
                         [&dst](const Item& x) { *dst++ = x; });
                 });

    for (std::size_t i = 0; i < slices.size(); ++i)
        slices[i].first += sel.cuts[p][i];
    return n;
}

} // namespace bulkpq
