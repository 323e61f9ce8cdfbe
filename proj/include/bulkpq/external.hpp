// external.hpp
// External arrays and the dynamic block prediction machinery. Each on-disk
// array is a list of blocks whose minima stay in RAM. Block states move
// External -> Hinted -> Loaded -> Finished (with Hinted -> External on a
// canceled prefetch), and per array the states always form that layout in
// block order. A tournament tree over the next hintable minima drives
// prefetching; a second tree over the next loadable minima yields the merge
// limit, the smallest item possibly still on disk, below which in-RAM
// extraction is safe.

#pragma once

#include "bulkpq/block_store.hpp"
#include "bulkpq/config.hpp"
#include "bulkpq/counters.hpp"
#include "bulkpq/errors.hpp"
#include "bulkpq/item.hpp"
#include "bulkpq/merge.hpp"
#include "bulkpq/tournament_tree.hpp"

#include <algorithm>
#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <vector>

namespace bulkpq {

enum class BlockState { External, Hinted, Loaded, Finished };

template <typename Item>
struct BlockDescriptor {
    BlockId id;
    Item minimum;               // first item of the block, kept in RAM
    std::uint32_t item_count = 0;
    BlockState state = BlockState::External;
    PendingIoPtr pending;       // set while Hinted
    Buffer data;                // set while Loaded
    std::size_t consumed = 0;   // items handed to the extract machinery

    const Item* items() const {
        return reinterpret_cast<const Item*>(data.data());
    }
};

// Streams merge output into freshly written blocks using a bounded pool of
// write buffers with asynchronous writes. Parts emit disjoint position
// ranges; a block is submitted as soon as every item of it has been placed.
template <typename Item>
class BlockWriter {
public:
    BlockWriter(BlockStore& store, std::vector<BlockId> ids,
                std::size_t items_per_block, std::uint64_t total_items,
                std::size_t buffer_budget)
        : store_(store), ids_(std::move(ids)), ipb_(items_per_block),
          total_(total_items), budget_(buffer_budget),
          buffers_(ids_.size()), filled_(ids_.size(), 0),
          minima_(ids_.size(), Item{}) {}

    std::size_t block_capacity(std::size_t b) const {
        const std::uint64_t start = static_cast<std::uint64_t>(b) * ipb_;
        return static_cast<std::size_t>(
            std::min<std::uint64_t>(ipb_, total_ - start));
    }

    // Writes items [pos, pos + n) of the logical output. Thread-safe across
    // disjoint ranges.
    template <typename Next>
    void write_range(std::uint64_t pos, std::uint64_t n, Next&& next) {
        const std::uint64_t end = pos + n;
        while (pos < end) {
            const std::size_t b = static_cast<std::size_t>(pos / ipb_);
            const std::uint64_t block_start =
                static_cast<std::uint64_t>(b) * ipb_;
            const std::uint64_t span_begin = pos;
            const std::uint64_t span_end =
                std::min<std::uint64_t>(end, block_start + ipb_);
            Item* base = acquire(b);
            for (; pos < span_end; ++pos) {
                const Item x = next();
                base[pos - block_start] = x;
                if (pos == block_start)
                    minima_[b] = x;
            }
            contribute(b, static_cast<std::size_t>(span_end - span_begin));
        }
    }

    // Waits for every write to land; throws on the first I/O failure.
    // Returns the block minima in block order.
    std::vector<Item> finish() {
        std::vector<PendingIoPtr> writes;
        {
            std::unique_lock<std::mutex> lock(mutex_);
            cv_.wait(lock, [&] { return used_ == 0; });
            writes = std::move(pending_writes_);
        }
        for (auto& w : writes)
            w->wait();
        return std::move(minima_);
    }

private:
    Item* acquire(std::size_t b) {
        std::unique_lock<std::mutex> lock(mutex_);
        // Another part may open the same boundary block while we wait for a
        // free slot; re-check after every wakeup.
        cv_.wait(lock,
                 [&] { return !buffers_[b].empty() || used_ < budget_; });
        if (buffers_[b].empty()) {
            buffers_[b] = Buffer(static_cast<std::size_t>(store_.block_size()));
            ++used_;
        }
        return reinterpret_cast<Item*>(buffers_[b].data());
    }

    void contribute(std::size_t b, std::size_t n) {
        std::lock_guard<std::mutex> lock(mutex_);
        filled_[b] += n;
        if (filled_[b] == block_capacity(b)) {
            auto io = store_.write_block_async(
                ids_[b], std::move(buffers_[b]), [this] {
                    std::lock_guard<std::mutex> inner(mutex_);
                    --used_;
                    cv_.notify_all();
                });
            pending_writes_.push_back(std::move(io));
        }
    }

    BlockStore& store_;
    std::vector<BlockId> ids_;
    std::size_t ipb_;
    std::uint64_t total_;
    std::size_t budget_;
    std::vector<Buffer> buffers_;
    std::vector<std::size_t> filled_;
    std::vector<Item> minima_;
    std::vector<PendingIoPtr> pending_writes_;
    std::mutex mutex_;
    std::condition_variable cv_;
    std::size_t used_ = 0;
};

template <typename Item>
class ExternalArray {
public:
    ExternalArray(std::vector<BlockDescriptor<Item>> blocks, unsigned level)
        : blocks_(std::move(blocks)), level_(level) {
        for (const auto& b : blocks_)
            remaining_ += b.item_count;
    }

    unsigned level() const { return level_; }
    std::size_t block_count() const { return blocks_.size(); }
    std::uint64_t remaining_items() const { return remaining_; }
    bool exhausted() const { return remaining_ == 0; }

    BlockDescriptor<Item>& block(std::size_t i) { return blocks_[i]; }
    const BlockDescriptor<Item>& block(std::size_t i) const {
        return blocks_[i];
    }

    std::size_t finished_end() const { return finished_end_; }
    std::size_t loaded_end() const { return loaded_end_; }
    std::size_t hinted_end() const { return hinted_end_; }

    std::size_t loaded_count() const { return loaded_end_ - finished_end_; }
    std::size_t hinted_count() const { return hinted_end_ - loaded_end_; }

    // Minimum of the first block not guaranteed in RAM (m_i).
    std::optional<Item> loadable_min() const {
        if (loaded_end_ == blocks_.size())
            return std::nullopt;
        return blocks_[loaded_end_].minimum;
    }

    // Minimum of the first block neither hinted nor loaded (h_i).
    std::optional<Item> hintable_min() const {
        if (hinted_end_ == blocks_.size())
            return std::nullopt;
        return blocks_[hinted_end_].minimum;
    }

    void note_consumed(std::uint64_t n) { remaining_ -= n; }

    void transition_hint(std::size_t idx, PendingIoPtr pending) {
        if (idx != hinted_end_ || blocks_[idx].state != BlockState::External)
            throw std::logic_error("illegal block transition to Hinted");
        blocks_[idx].state = BlockState::Hinted;
        blocks_[idx].pending = std::move(pending);
        ++hinted_end_;
    }

    void transition_cancel_last_hint() {
        if (hinted_end_ == loaded_end_)
            throw std::logic_error("no hinted block to cancel");
        auto& b = blocks_[hinted_end_ - 1];
        b.state = BlockState::External;
        b.pending.reset();
        --hinted_end_;
    }

    void transition_load(Buffer data) {
        if (loaded_end_ >= hinted_end_)
            throw std::logic_error("illegal block transition to Loaded");
        auto& b = blocks_[loaded_end_];
        b.data = std::move(data);
        b.pending.reset();
        b.state = BlockState::Loaded;
        ++loaded_end_;
    }

    void transition_finish(const std::function<void(BlockId)>& release) {
        if (finished_end_ >= loaded_end_)
            throw std::logic_error("illegal block transition to Finished");
        auto& b = blocks_[finished_end_];
        if (b.consumed != b.item_count)
            throw std::logic_error("finishing a block with unconsumed items");
        b.data = Buffer();
        b.state = BlockState::Finished;
        release(b.id);
        ++finished_end_;
    }

private:
    std::vector<BlockDescriptor<Item>> blocks_;
    unsigned level_ = 0;
    std::uint64_t remaining_ = 0;
    // region bounds: [0,finished_end) Finished, [finished_end,loaded_end)
    // Loaded, [loaded_end,hinted_end) Hinted, [hinted_end,size) External
    std::size_t finished_end_ = 0;
    std::size_t loaded_end_ = 0;
    std::size_t hinted_end_ = 0;
};

// Coordinator over all external arrays: creation by merging in-RAM sources
// to disk, leveled external merging, prefetch hints, the merge limit, and
// extract-buffer refills. Tree updates run on the coordinating thread only;
// reads complete asynchronously and are observed during promotion.
template <typename Item>
class ExternalArrayStore {
public:
    ExternalArrayStore(const Config& cfg, BlockStore& store,
                       Counters& counters, ItemOrder<Item> order = {})
        : cfg_(cfg), store_(store), counters_(counters), order_(order),
          hint_tree_(order), load_tree_(order) {}

    ~ExternalArrayStore() {
        for (auto& a : arrays_)
            for (std::size_t i = a->loaded_end(); i < a->hinted_end(); ++i) {
                auto& b = a->block(i);
                if (b.pending) {
                    store_.cancel_read(b.pending);
                    b.pending->wait();
                }
            }
    }

    bool empty() const { return arrays_.empty(); }
    std::size_t array_count() const { return arrays_.size(); }
    std::uint64_t arrays_created() const { return arrays_created_; }

    // Items residing in external arrays that have not yet been moved into
    // the extract buffer (loaded or not).
    std::uint64_t total_items() const {
        std::uint64_t n = 0;
        for (const auto& a : arrays_)
            n += a->remaining_items();
        return n;
    }

    // Every external item not yet in the extract buffer compares at or
    // above this bound; absent means nothing external is covered yet. The
    // in-RAM sources therefore hold the complete set of items strictly
    // below it.
    const std::optional<Item>& coverage() const { return coverage_; }

    // Exact smallest item still residing in the external arrays, loaded or
    // not (linear in the number of arrays).
    std::optional<Item> external_min() const {
        std::optional<Item> best;
        for (const auto& a : arrays_) {
            for (std::size_t b = a->finished_end(); b < a->block_count();
                 ++b) {
                const auto& blk = a->block(b);
                std::optional<Item> m;
                if (blk.state == BlockState::Loaded) {
                    if (blk.consumed < blk.item_count)
                        m = blk.items()[blk.consumed];
                    else
                        continue; // fully consumed, not yet finished
                } else {
                    m = blk.minimum;
                }
                if (m && (!best || order_.less(*m, *best)))
                    best = *m;
                break;
            }
        }
        return best;
    }

    const ExternalArray<Item>& array(std::size_t i) const {
        return *arrays_[i];
    }

    std::size_t count_at_level(unsigned level) const {
        std::size_t n = 0;
        for (const auto& a : arrays_)
            if (a->level() == level)
                ++n;
        return n;
    }

    std::size_t items_per_block() const {
        return static_cast<std::size_t>(store_.block_size() / sizeof(Item));
    }

    // --- read buffer budget ---------------------------------------------

    std::size_t read_budget_blocks() const {
        return static_cast<std::size_t>(
            cfg_.effective_read_buffer_bytes_per_array() * arrays_.size() /
            store_.block_size());
    }

    std::size_t buffers_in_use() const {
        std::size_t n = 0;
        for (const auto& a : arrays_)
            n += a->loaded_count() + a->hinted_count();
        return n;
    }

    std::size_t hint_capacity() const {
        const std::size_t used = buffers_in_use();
        const std::size_t budget = read_budget_blocks();
        return budget > used ? budget - used : 0;
    }

    std::uint64_t read_buffer_bytes() const {
        return buffers_in_use() * store_.block_size();
    }

    // --- extract buffer ---------------------------------------------------

    std::optional<Item> extract_head() const {
        if (extract_consumed_ == extract_.size())
            return std::nullopt;
        return extract_[extract_consumed_];
    }

    Item extract_pop() {
        if (extract_consumed_ == extract_.size())
            throw empty_error("extract buffer empty");
        return extract_[extract_consumed_++];
    }

    std::size_t extract_remaining() const {
        return extract_.size() - extract_consumed_;
    }

    SequenceSlice<Item> extract_slice() const {
        return SequenceSlice<Item>(extract_.data() + extract_consumed_,
                                   extract_.data() + extract_.size());
    }

    void extract_advance(std::size_t n) { extract_consumed_ += n; }

    void extract_clear() {
        extract_.clear();
        extract_consumed_ = 0;
    }

    std::uint64_t extract_bytes() const {
        return extract_.size() * sizeof(Item);
    }

    // Injects a sorted run into the extract buffer (used when a limit
    // session returns unpopped pre-extracted items).
    void extract_restore(std::vector<Item> sorted_run) {
        if (extract_remaining() == 0) {
            extract_ = std::move(sorted_run);
            extract_consumed_ = 0;
            return;
        }
        std::vector<Item> merged;
        merged.reserve(extract_remaining() + sorted_run.size());
        std::merge(extract_.begin() + static_cast<std::ptrdiff_t>(
                                          extract_consumed_),
                   extract_.end(), sorted_run.begin(), sorted_run.end(),
                   std::back_inserter(merged),
                   [&](const Item& a, const Item& b) {
                       return order_.less(a, b);
                   });
        extract_ = std::move(merged);
        extract_consumed_ = 0;
    }

    // --- operations -------------------------------------------------------

    // Merges the given sorted in-RAM sources into one new external array at
    // level 0, streaming to freshly allocated blocks with asynchronous
    // writes. Sources are consumed (slices advanced past everything).
    bool create_external_array(std::vector<SequenceSlice<Item>>& sources) {
        std::uint64_t total = 0;
        for (const auto& s : sources)
            total += s.size();
        if (total == 0)
            return false;
        write_array(sources, total, 0);
        // Fresh external items may undercut everything covered so far.
        const Item& new_min = arrays_.back()->block(0).minimum;
        if (coverage_ && order_.less(new_min, *coverage_))
            coverage_ = new_min;
        rebuild_hints();
        return true;
    }

    // Stream-merges all arrays of `level` into one array at level+1 when the
    // level exceeds max_arrays_per_level, reading through the prediction
    // machinery. Cascades upward.
    void maybe_merge_external_level(unsigned level) {
        for (unsigned lvl = level;; ++lvl) {
            std::vector<std::size_t> participants;
            for (std::size_t i = 0; i < arrays_.size(); ++i)
                if (arrays_[i]->level() == lvl)
                    participants.push_back(i);
            if (participants.size() <= cfg_.max_arrays_per_level)
                break;
            merge_arrays_to_level(participants, lvl + 1);
        }
    }

    // Issues a prefetch for the globally smallest next-hintable block.
    // Requires free read-buffer capacity. Returns the (array, block) pair or
    // nothing when no hintable block exists.
    std::optional<std::pair<std::size_t, std::size_t>> hint_next_block() {
        if (!hint_tree_.has_winner())
            return std::nullopt;
        const std::size_t a = hint_tree_.winner();
        const std::size_t idx = arrays_[a]->hinted_end();
        issue_hint(*arrays_[a]);
        hint_tree_.update_leaf(a, arrays_[a]->hintable_min());
        return std::make_pair(a, idx);
    }

    // Recomputes the set of hinted blocks as the k smallest non-loaded,
    // non-finished block minima (k = current hint capacity), canceling and
    // issuing prefetches to converge. The determination replays a tournament
    // tree over the arrays and its comparisons are recorded.
    void rebuild_hints() {
        if (hints_suppressed_)
            return;
        const std::size_t total_loaded_blocks = [&] {
            std::size_t n = 0;
            for (const auto& a : arrays_)
                n += a->loaded_count();
            return n;
        }();
        const std::size_t budget = read_budget_blocks();
        const std::size_t k =
            budget > total_loaded_blocks ? budget - total_loaded_blocks : 0;
        const std::size_t S = arrays_.size();

        // Determination: replay from each array's first merely-hinted or
        // external block until the k smallest minima are known.
        TournamentTree<Item> det(order_);
        std::vector<std::size_t> cursor(S);
        std::vector<std::optional<Item>> leaves(S);
        for (std::size_t i = 0; i < S; ++i) {
            cursor[i] = arrays_[i]->loaded_end();
            if (cursor[i] < arrays_[i]->block_count())
                leaves[i] = arrays_[i]->block(cursor[i]).minimum;
        }
        det.assign(leaves);
        std::vector<std::size_t> desired(S, 0);
        const std::uint64_t before = det.replay_comparisons();
        std::size_t pops = 0;
        while (pops < k && det.has_winner()) {
            const std::size_t a = det.winner();
            ++desired[a];
            ++cursor[a];
            det.update_leaf(a, cursor[a] < arrays_[a]->block_count()
                                   ? std::optional<Item>(
                                         arrays_[a]->block(cursor[a]).minimum)
                                   : std::nullopt);
            ++pops;
        }
        const std::uint64_t delta = det.replay_comparisons() - before;
        counters_.comparisons_in_replay.fetch_add(delta,
                                                  std::memory_order_relaxed);
        if (on_rebuild)
            on_rebuild(k, S, delta);

        // Convergence: cancel per-array excess first, then issue the missing
        // hints in global minima order (the tree winner sequence lands
        // exactly on the desired set).
        std::size_t missing = 0;
        for (std::size_t i = 0; i < S; ++i) {
            auto& arr = *arrays_[i];
            while (arr.hinted_count() > desired[i])
                cancel_last_hint(arr);
            missing += desired[i] - arr.hinted_count();
        }
        rebuild_trees();
        for (std::size_t n = 0; n < missing; ++n)
            hint_next_block();
    }

    // Promotes completed prefetches to Loaded in block order, then returns
    // the merge limit: the smallest item possibly still outside RAM, or
    // nothing when every block is loaded or finished.
    std::optional<Item> compute_merge_limit() {
        promote_completed();
        if (!load_tree_.has_winner())
            return std::nullopt;
        return load_tree_.winner_item();
    }

    // Refills the extract buffer with up to max_items items strictly below
    // min(cap, merge limit), merging the loaded block prefixes of every
    // array together with the current buffer remainder. Fully consumed
    // blocks are finished and their buffers and disk blocks released; freed
    // capacity triggers new hints. Returns the number of items taken from
    // external blocks.
    std::size_t refill_extract_buffer(std::size_t max_items,
                                      const std::optional<Item>& cap) {
        std::optional<Item> limit = compute_merge_limit();
        if (cap && (!limit || order_.less(*cap, *limit)))
            limit = cap;

        // Slice order: extract-buffer remainder first, then per array in
        // registry order, per block in array order; this pins tie-breaking.
        std::vector<SequenceSlice<Item>> slices;
        slices.push_back(extract_slice());
        std::vector<std::pair<std::size_t, std::size_t>> origin; // array,block
        origin.emplace_back(npos, npos);
        for (std::size_t a = 0; a < arrays_.size(); ++a) {
            const auto& arr = *arrays_[a];
            for (std::size_t b = arr.finished_end(); b < arr.loaded_end();
                 ++b) {
                const auto& blk = arr.block(b);
                if (blk.consumed == blk.item_count)
                    continue;
                slices.emplace_back(blk.items() + blk.consumed,
                                    blk.items() + blk.item_count);
                origin.emplace_back(a, b);
            }
        }

        std::vector<Item> merged;
        const std::size_t budget_items = max_items + extract_remaining();
        std::vector<SequenceSlice<Item>> advanced = slices;
        parallel_multiway_merge(advanced, budget_items, limit,
                                cfg_.num_threads, merged, order_,
                                cfg_.num_threads);

        // Everything strictly below the refill cut is now in RAM: either the
        // limit when the merge drained all eligible items, or the last item
        // produced when max_items cut it short.
        if (merged.size() == budget_items && !merged.empty())
            coverage_ = merged.back();
        else if (limit)
            coverage_ = limit;

        std::size_t from_external = 0;
        bool removed_any = false;
        for (std::size_t s = 0; s < slices.size(); ++s) {
            const std::size_t taken =
                static_cast<std::size_t>(advanced[s].first - slices[s].first);
            if (taken == 0)
                continue;
            if (origin[s].first == npos) {
                extract_advance(taken);
                continue;
            }
            from_external += taken;
            auto& arr = *arrays_[origin[s].first];
            arr.block(origin[s].second).consumed += taken;
            arr.note_consumed(taken);
        }
        // Finish fully consumed loaded blocks in order.
        for (std::size_t a = 0; a < arrays_.size(); ++a) {
            auto& arr = *arrays_[a];
            while (arr.finished_end() < arr.loaded_end() &&
                   arr.block(arr.finished_end()).consumed ==
                       arr.block(arr.finished_end()).item_count)
                arr.transition_finish(
                    [&](BlockId id) { store_.free_block(id); });
            if (arr.exhausted())
                removed_any = true;
        }

        // Splice the merged run with the untouched buffer remainder; every
        // leftover is at or above the limit, so concatenation stays sorted.
        if (extract_remaining() > 0) {
            merged.insert(merged.end(),
                          extract_.begin() +
                              static_cast<std::ptrdiff_t>(extract_consumed_),
                          extract_.end());
        }
        extract_ = std::move(merged);
        extract_consumed_ = 0;

        if (removed_any)
            remove_exhausted_arrays();
        else
            issue_hints_to_capacity();

        if (on_refill && !extract_.empty())
            on_refill(extract_.back(), brute_force_unloaded_min());
        return from_external;
    }

    // Guarantees forward progress when nothing below the merge limit is
    // loaded: waits for (or force-issues) the read of the block holding the
    // limit, promoting it so the limit advances. Returns false when there is
    // nothing left to load.
    bool await_progress() {
        if (promote_completed() > 0)
            return true;
        if (!load_tree_.has_winner())
            return false;
        const std::size_t a = load_tree_.winner();
        auto& arr = *arrays_[a];
        if (arr.loaded_end() == arr.hinted_end()) {
            // The limit block is not even hinted; make room and fetch it.
            while (hint_capacity() == 0 && cancel_globally_largest_hint()) {
            }
            issue_hint(arr);
            hint_tree_.update_leaf(a, arr.hintable_min());
        }
        arr.block(arr.loaded_end()).pending->wait();
        promote(arr);
        load_tree_.update_leaf(a, arr.loadable_min());
        return true;
    }

    void set_hints_suppressed(bool s) { hints_suppressed_ = s; }
    bool hints_suppressed() const { return hints_suppressed_; }

    // Test hooks: refill safety (max refilled item, brute-force minimum over
    // unloaded blocks) and rebuild accounting (k, S, comparison delta).
    std::function<void(std::optional<Item>, std::optional<Item>)> on_refill;
    std::function<void(std::size_t, std::size_t, std::uint64_t)> on_rebuild;

    static constexpr std::size_t npos = static_cast<std::size_t>(-1);

private:
    void rebuild_trees() {
        std::vector<std::optional<Item>> hint_leaves(arrays_.size());
        std::vector<std::optional<Item>> load_leaves(arrays_.size());
        for (std::size_t i = 0; i < arrays_.size(); ++i) {
            hint_leaves[i] = arrays_[i]->hintable_min();
            load_leaves[i] = arrays_[i]->loadable_min();
        }
        hint_tree_.assign(hint_leaves);
        load_tree_.assign(load_leaves);
    }

    void issue_hint(ExternalArray<Item>& arr) {
        const std::size_t idx = arr.hinted_end();
        if (idx >= arr.block_count())
            throw std::logic_error("no hintable block in array");
        PendingIoPtr io = store_.read_block_async(arr.block(idx).id);
        arr.transition_hint(idx, std::move(io));
        counters_.hints_issued.fetch_add(1, std::memory_order_relaxed);
    }

    void cancel_last_hint(ExternalArray<Item>& arr) {
        auto& b = arr.block(arr.hinted_end() - 1);
        const CancelResult r = store_.cancel_read(b.pending);
        if (r == CancelResult::AlreadyCompleted) {
            // The read raced ahead; wait it out and discard the data.
            b.pending->wait();
        }
        arr.transition_cancel_last_hint();
    }

    // Cancels the hinted block with the globally largest minimum. Returns
    // false when no hinted block exists anywhere.
    bool cancel_globally_largest_hint() {
        std::size_t victim = npos;
        for (std::size_t i = 0; i < arrays_.size(); ++i) {
            const auto& arr = *arrays_[i];
            if (arr.hinted_count() == 0)
                continue;
            const Item& m = arr.block(arr.hinted_end() - 1).minimum;
            if (victim == npos ||
                order_.less(
                    arrays_[victim]->block(arrays_[victim]->hinted_end() - 1)
                        .minimum,
                    m))
                victim = i;
        }
        if (victim == npos)
            return false;
        cancel_last_hint(*arrays_[victim]);
        hint_tree_.update_leaf(victim, arrays_[victim]->hintable_min());
        return true;
    }

    // Promotes every completed hinted read, in block order per array.
    std::size_t promote_completed() {
        std::size_t promoted = 0;
        for (std::size_t i = 0; i < arrays_.size(); ++i) {
            auto& arr = *arrays_[i];
            bool advanced = false;
            while (arr.loaded_end() < arr.hinted_end()) {
                auto& b = arr.block(arr.loaded_end());
                if (!b.pending->completed())
                    break;
                promote(arr);
                advanced = true;
                ++promoted;
            }
            if (advanced)
                load_tree_.update_leaf(i, arr.loadable_min());
        }
        return promoted;
    }

    void promote(ExternalArray<Item>& arr) {
        auto& b = arr.block(arr.loaded_end());
        if (!b.pending->wait())
            throw io_error("prefetch was canceled under a promotion");
        Buffer data = b.pending->take_buffer();
        const Item* items = reinterpret_cast<const Item*>(data.data());
        if (b.item_count > 0 && order_.compare(items[0], b.minimum) != 0)
            throw io_error("block corrupt: minimum does not match contents");
        arr.transition_load(std::move(data));
    }

    void issue_hints_to_capacity() {
        while (hint_capacity() > 0) {
            if (!hint_next_block())
                break;
        }
    }

    void remove_exhausted_arrays() {
        arrays_.erase(std::remove_if(arrays_.begin(), arrays_.end(),
                                     [](const auto& a) {
                                         return a->exhausted();
                                     }),
                      arrays_.end());
        rebuild_hints();
    }

    std::optional<Item> brute_force_unloaded_min() const {
        std::optional<Item> best;
        for (const auto& a : arrays_) {
            for (std::size_t b = a->loaded_end(); b < a->block_count(); ++b) {
                const Item& m = a->block(b).minimum;
                if (!best || order_.less(m, *best))
                    best = m;
            }
        }
        return best;
    }

    // Merges `sources` (sorted slices) into a fresh array at `level`,
    // consuming them fully.
    void write_array(std::vector<SequenceSlice<Item>>& sources,
                     std::uint64_t total, unsigned level) {
        const std::size_t ipb = items_per_block();
        const std::size_t nblocks =
            static_cast<std::size_t>((total + ipb - 1) / ipb);
        std::vector<BlockId> ids;
        ids.reserve(nblocks);
        for (std::size_t i = 0; i < nblocks; ++i)
            ids.push_back(store_.allocate_block());
        BlockWriter<Item> writer(
            store_, ids, ipb, total,
            static_cast<std::size_t>(cfg_.effective_write_buffer_blocks()));

        const std::size_t p = cfg_.num_threads;
        const SelectionResult sel =
            partition_for_parallel_merge(sources, total, p, order_);
        std::vector<std::uint64_t> offsets(p + 1, 0);
        for (std::size_t i = 0; i < p; ++i)
            offsets[i + 1] = offsets[i] + sel.part_sizes[i];
        run_parallel(p, cfg_.num_threads, [&](std::size_t part) {
            std::vector<SequenceSlice<Item>> ranges(sources.size());
            for (std::size_t i = 0; i < sources.size(); ++i)
                ranges[i] = SequenceSlice<Item>(
                    sources[i].first + sel.cuts[part][i],
                    sources[i].first + sel.cuts[part + 1][i]);
            TreeMerger<Item> merger(std::move(ranges), order_);
            writer.write_range(offsets[part],
                               offsets[part + 1] - offsets[part],
                               [&] { return merger.pop(); });
        });
        std::vector<Item> minima = writer.finish();

        std::vector<BlockDescriptor<Item>> blocks(nblocks);
        for (std::size_t b = 0; b < nblocks; ++b) {
            blocks[b].id = ids[b];
            blocks[b].minimum = minima[b];
            blocks[b].item_count =
                static_cast<std::uint32_t>(writer_capacity(total, ipb, b));
        }
        for (std::size_t i = 0; i < sources.size(); ++i)
            sources[i].first += sel.cuts[p][i];
        arrays_.push_back(
            std::make_unique<ExternalArray<Item>>(std::move(blocks), level));
        ++arrays_created_;
    }

    static std::size_t writer_capacity(std::uint64_t total, std::size_t ipb,
                                       std::size_t b) {
        const std::uint64_t start = static_cast<std::uint64_t>(b) * ipb;
        return static_cast<std::size_t>(
            std::min<std::uint64_t>(ipb, total - start));
    }

    // Stream-merge of whole external arrays into one output array at
    // `out_level`, reading via hints and promotions, writing via the
    // buffered path.
    void merge_arrays_to_level(const std::vector<std::size_t>& participants,
                               unsigned out_level) {
        std::uint64_t total = 0;
        for (std::size_t a : participants)
            total += arrays_[a]->remaining_items();
        if (total == 0)
            return;
        const std::size_t ipb = items_per_block();
        const std::size_t nblocks =
            static_cast<std::size_t>((total + ipb - 1) / ipb);
        std::vector<BlockId> ids;
        ids.reserve(nblocks);
        for (std::size_t i = 0; i < nblocks; ++i)
            ids.push_back(store_.allocate_block());
        BlockWriter<Item> writer(
            store_, ids, ipb, total,
            static_cast<std::size_t>(cfg_.effective_write_buffer_blocks()));

        std::uint64_t written = 0;
        while (written < total) {
            compute_merge_limit();
            // Limit local to the participating arrays.
            std::optional<Item> limit;
            for (std::size_t a : participants) {
                auto m = arrays_[a]->loadable_min();
                if (m && (!limit || order_.less(*m, *limit)))
                    limit = m;
            }
            std::vector<SequenceSlice<Item>> slices;
            std::vector<std::pair<std::size_t, std::size_t>> origin;
            for (std::size_t a : participants) {
                const auto& arr = *arrays_[a];
                for (std::size_t b = arr.finished_end(); b < arr.loaded_end();
                     ++b) {
                    const auto& blk = arr.block(b);
                    if (blk.consumed == blk.item_count)
                        continue;
                    slices.emplace_back(blk.items() + blk.consumed,
                                        blk.items() + blk.item_count);
                    origin.emplace_back(a, b);
                }
            }
            std::vector<SequenceSlice<Item>> eligible(slices.size());
            std::uint64_t round = 0;
            for (std::size_t s = 0; s < slices.size(); ++s) {
                const Item* stop =
                    limit ? slices[s].first +
                                detail::count_before(slices[s].first,
                                                     slices[s].last, *limit,
                                                     order_)
                          : slices[s].last;
                eligible[s] = SequenceSlice<Item>(slices[s].first, stop);
                round += eligible[s].size();
            }
            if (round == 0) {
                if (!await_progress_for(participants))
                    throw std::logic_error(
                        "external merge stalled with items unaccounted for");
                continue;
            }

            const std::size_t p = cfg_.num_threads;
            const SelectionResult sel =
                partition_for_parallel_merge(eligible, round, p, order_);
            std::vector<std::uint64_t> offsets(p + 1, written);
            for (std::size_t i = 0; i < p; ++i)
                offsets[i + 1] = offsets[i] + sel.part_sizes[i];
            run_parallel(p, cfg_.num_threads, [&](std::size_t part) {
                std::vector<SequenceSlice<Item>> ranges(eligible.size());
                for (std::size_t i = 0; i < eligible.size(); ++i)
                    ranges[i] = SequenceSlice<Item>(
                        eligible[i].first + sel.cuts[part][i],
                        eligible[i].first + sel.cuts[part + 1][i]);
                TreeMerger<Item> merger(std::move(ranges), order_);
                writer.write_range(offsets[part],
                                   offsets[part + 1] - offsets[part],
                                   [&] { return merger.pop(); });
            });
            for (std::size_t s = 0; s < slices.size(); ++s) {
                const std::size_t taken = sel.cuts[p][s];
                if (taken == 0)
                    continue;
                auto& arr = *arrays_[origin[s].first];
                arr.block(origin[s].second).consumed += taken;
                arr.note_consumed(taken);
            }
            for (std::size_t a : participants) {
                auto& arr = *arrays_[a];
                while (arr.finished_end() < arr.loaded_end() &&
                       arr.block(arr.finished_end()).consumed ==
                           arr.block(arr.finished_end()).item_count)
                    arr.transition_finish(
                        [&](BlockId id) { store_.free_block(id); });
            }
            issue_hints_to_capacity();
            written += round;
        }
        std::vector<Item> minima = writer.finish();
        std::vector<BlockDescriptor<Item>> blocks(nblocks);
        for (std::size_t b = 0; b < nblocks; ++b) {
            blocks[b].id = ids[b];
            blocks[b].minimum = minima[b];
            blocks[b].item_count =
                static_cast<std::uint32_t>(writer_capacity(total, ipb, b));
        }
        arrays_.push_back(std::make_unique<ExternalArray<Item>>(
            std::move(blocks), out_level));
        ++arrays_created_;
        remove_exhausted_arrays(); // also rebuilds hints and trees
    }

    bool await_progress_for(const std::vector<std::size_t>& participants) {
        compute_merge_limit();
        std::size_t target = npos;
        std::optional<Item> best;
        for (std::size_t a : participants) {
            auto m = arrays_[a]->loadable_min();
            if (m && (!best || order_.less(*m, *best))) {
                best = m;
                target = a;
            }
        }
        if (target == npos)
            return false;
        auto& arr = *arrays_[target];
        if (arr.loaded_end() == arr.hinted_end()) {
            while (hint_capacity() == 0 && cancel_globally_largest_hint()) {
            }
            issue_hint(arr);
            hint_tree_.update_leaf(target, arr.hintable_min());
        }
        arr.block(arr.loaded_end()).pending->wait();
        promote(arr);
        load_tree_.update_leaf(target, arr.loadable_min());
        return true;
    }

    const Config& cfg_;
    BlockStore& store_;
    Counters& counters_;
    ItemOrder<Item> order_;
    std::vector<std::unique_ptr<ExternalArray<Item>>> arrays_;
    TournamentTree<Item> hint_tree_; // next hintable minima (h_i)
    TournamentTree<Item> load_tree_; // next loadable minima (m_i)
    std::vector<Item> extract_;
    std::size_t extract_consumed_ = 0;
    std::optional<Item> coverage_;
    bool hints_suppressed_ = false;
    std::uint64_t arrays_created_ = 0;
};

} // namespace bulkpq
