// ppq.hpp
// The bulk-parallel external-memory priority queue facade. Classic
// push/top/pop drive a single caller; bulk push sessions accept concurrent
// appenders on distinct thread indices; limit sessions decouple extraction
// of items below a declared floor from insertion of items at or above it.
// When accounted RAM exceeds the budget, every in-RAM run is merged into
// one sorted external array on disk.

#pragma once

#include "bulkpq/block_store.hpp"
#include "bulkpq/config.hpp"
#include "bulkpq/counters.hpp"
#include "bulkpq/errors.hpp"
#include "bulkpq/external.hpp"
#include "bulkpq/heaps.hpp"
#include "bulkpq/item.hpp"
#include "bulkpq/merge.hpp"

#include <algorithm>
#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

namespace bulkpq {

template <typename Item>
class ParallelPriorityQueue {
public:
    explicit ParallelPriorityQueue(Config cfg)
        : cfg_((cfg.validate(sizeof(Item)), std::move(cfg))),
          order_{cfg_.order_direction}, store_(cfg_, counters_),
          heaps_(cfg_.num_threads), internal_(order_), minima_(order_),
          ext_(cfg_, store_, counters_, order_) {
        minima_.rebuild_heaps(heaps_);
        minima_.rebuild_arrays(internal_);
    }

    const Config& config() const { return cfg_; }
    Counters& counters() { return counters_; }
    const Counters& counters() const { return counters_; }
    ExternalArrayStore<Item>& external_store() { return ext_; }

    std::uint64_t size() const {
        return counters_.items_pushed.load(std::memory_order_relaxed) -
               counters_.items_popped.load(std::memory_order_relaxed);
    }

    bool empty() const { return size() == 0; }

    // --- classic single-caller interface ---------------------------------

    void push(const Item& item) {
        require_idle("push");
        counters_.items_pushed.fetch_add(1, std::memory_order_relaxed);
        if (heaps_[0].push(item, order_))
            minima_.update_heap(0, heaps_[0].min());
        if (heaps_[0].size() >= cfg_.insertion_heap_capacity) {
            overflow_heap(0);
            after_registration();
        }
    }

    Item top() {
        require_idle("top");
        return ready_min().item;
    }

    Item pop() {
        require_idle("pop");
        const auto peek = ready_min();
        remove_peeked(peek);
        counters_.items_popped.fetch_add(1, std::memory_order_relaxed);
        return peek.item;
    }

    // --- bulk interface ----------------------------------------------------

    // Starts a bulk insertion phase; k estimates the coming bulk size and
    // only tunes how far insertion heaps may grow before overflowing.
    void bulk_push_begin(std::uint64_t k) {
        require_idle("bulk_push_begin");
        phase_ = Phase::BulkPush;
        const std::uint64_t accounted = accounted_bytes();
        const std::uint64_t avail =
            cfg_.mem_budget > accounted ? cfg_.mem_budget - accounted : 0;
        const std::uint64_t per_thread_ram_items =
            avail / (cfg_.num_threads * sizeof(Item));
        const std::uint64_t per_thread_estimate =
            (k + cfg_.num_threads - 1) / cfg_.num_threads;
        bulk_allowance_ = std::max<std::uint64_t>(
            cfg_.insertion_heap_capacity,
            std::min(per_thread_estimate, per_thread_ram_items));
        for (auto& h : heaps_)
            h.enter_bulk_mode();
        ext_.set_hints_suppressed(true);
    }

    // Appends with no ordering work. Callable concurrently from distinct
    // thread indices.
    void bulk_push(unsigned thread, const Item& item) {
        if (phase_ != Phase::BulkPush)
            throw session_error("bulk_push outside a bulk push session");
        if (thread >= cfg_.num_threads)
            throw contract_error("bulk_push: thread index out of range");
        counters_.items_pushed.fetch_add(1, std::memory_order_relaxed);
        heaps_[thread].push(item, order_);
        if (heaps_[thread].size() >= bulk_allowance_)
            internal_.register_array(heaps_[thread].take_sorted(order_), 0);
    }

    // Reestablishes order: oversized heaps become internal arrays, the rest
    // are re-heapified; the minima hierarchy is replayed once, deferred
    // level merges run, and the one deferred hint rebuild executes.
    void bulk_push_end() {
        if (phase_ != Phase::BulkPush)
            throw session_error("bulk_push_end without bulk_push_begin");
        phase_ = Phase::Idle;
        close_append_heaps();
        minima_.rebuild_heaps(heaps_);
        minima_.rebuild_arrays(internal_);
        run_deferred_level_merges();
        ext_.set_hints_suppressed(false);
        flush_if_over_budget();
        ext_.rebuild_hints();
    }

    // Removes and returns the min(k, size) globally smallest items in
    // extraction order.
    std::vector<Item> bulk_pop(std::size_t k) {
        require_idle("bulk_pop");
        std::vector<Item> out;
        const std::uint64_t target64 = std::min<std::uint64_t>(k, size());
        const std::size_t target = static_cast<std::size_t>(target64);
        if (target == 0)
            return out;
        out.reserve(target);
        convert_heaps_to_arrays();
        run_deferred_level_merges();
        while (out.size() < target) {
            if (ext_.total_items() == 0) {
                merge_in_ram(target - out.size(), std::nullopt, out);
                break;
            }
            if (ext_.coverage())
                merge_in_ram(target - out.size(), ext_.coverage(), out);
            if (out.size() >= target)
                break;
            pull_from_external();
        }
        tidy_after_extraction();
        counters_.items_popped.fetch_add(out.size(),
                                         std::memory_order_relaxed);
        return out;
    }

    // Removes up to k items strictly below L; the flag reports whether more
    // such items remain.
    std::pair<std::vector<Item>, bool> bulk_pop_limit(const Item& L,
                                                      std::size_t k) {
        require_idle("bulk_pop_limit");
        std::vector<Item> out;
        convert_heaps_to_arrays();
        run_deferred_level_merges();
        extract_below(L, k, out);
        tidy_after_extraction();
        counters_.items_popped.fetch_add(out.size(),
                                         std::memory_order_relaxed);
        return {std::move(out), more_below(L)};
    }

    // --- limit session -----------------------------------------------------

    void limit_begin(const Item& L, std::size_t bulk_size) {
        require_idle("limit_begin");
        phase_ = Phase::Limit;
        limit_floor_ = L;
        limit_chunk_ = std::max<std::size_t>(1, bulk_size);
        // Session appends stay in their heaps until limit_end: concurrent
        // limit_push must not register arrays while the session owner's
        // refills walk the registry.
        bulk_allowance_ = ~std::uint64_t(0);
        convert_heaps_to_arrays();
        for (auto& h : heaps_)
            h.enter_bulk_mode();
        session_buffer_.clear();
        session_consumed_ = 0;
    }

    // Head of the pre-extracted run of items below the floor; once those are
    // exhausted, returns some remaining item at or above the floor (the
    // caller's loop condition ends the session).
    Item limit_top() {
        if (phase_ != Phase::Limit)
            throw session_error("limit_top outside a limit session");
        if (session_consumed_ == session_buffer_.size())
            refill_session();
        if (session_consumed_ < session_buffer_.size())
            return session_buffer_[session_consumed_];
        std::optional<Item> best;
        if (const auto w = minima_.winner())
            best = w->item;
        if (const auto ext_min = ext_.external_min())
            if (!best || order_.less(*ext_min, *best))
                best = ext_min;
        return best ? *best : limit_floor_;
    }

    Item limit_pop() {
        if (phase_ != Phase::Limit)
            throw session_error("limit_pop outside a limit session");
        if (session_consumed_ == session_buffer_.size())
            refill_session();
        if (session_consumed_ == session_buffer_.size())
            throw contract_error("limit_pop: no items below the limit");
        counters_.items_popped.fetch_add(1, std::memory_order_relaxed);
        return session_buffer_[session_consumed_++];
    }

    void limit_push(const Item& item, unsigned thread = 0) {
        if (phase_ != Phase::Limit)
            throw session_error("limit_push outside a limit session");
        if (order_.less(item, limit_floor_))
            throw contract_error("limit_push: item below the session limit");
        if (thread >= cfg_.num_threads)
            throw contract_error("limit_push: thread index out of range");
        counters_.items_pushed.fetch_add(1, std::memory_order_relaxed);
        heaps_[thread].push(item, order_);
        if (heaps_[thread].size() >= bulk_allowance_)
            internal_.register_array(heaps_[thread].take_sorted(order_), 0);
    }

    void limit_end() {
        if (phase_ != Phase::Limit)
            throw session_error("limit_end without limit_begin");
        phase_ = Phase::Idle;
        if (session_consumed_ < session_buffer_.size()) {
            std::vector<Item> leftover(
                session_buffer_.begin() +
                    static_cast<std::ptrdiff_t>(session_consumed_),
                session_buffer_.end());
            internal_.register_array(std::move(leftover), 0);
        }
        session_buffer_.clear();
        session_consumed_ = 0;
        close_append_heaps();
        minima_.rebuild_heaps(heaps_);
        minima_.rebuild_arrays(internal_);
        run_deferred_level_merges();
        flush_if_over_budget();
        ext_.rebuild_hints();
    }

    // --- accounting and introspection ---------------------------------------

    // Item memory charged against mem_budget: heap reserve, write buffers,
    // internal arrays, extract and session buffers. Read buffers are
    // governed separately by the per-array read-buffer law and are not part
    // of the flush trigger (flushing creates arrays and so can never shrink
    // them).
    std::uint64_t accounted_bytes() const {
        const std::uint64_t reserve =
            cfg_.num_threads * cfg_.insertion_heap_capacity * sizeof(Item) +
            cfg_.effective_write_buffer_blocks() * cfg_.block_size;
        return reserve + internal_.total_bytes() + ext_.extract_bytes() +
               session_buffer_.size() * sizeof(Item);
    }

    std::uint64_t read_buffer_bytes() const {
        return ext_.read_buffer_bytes();
    }

    // Items reachable in every source; equals items_pushed - items_popped.
    std::uint64_t debug_total_items() const {
        std::uint64_t n = 0;
        for (const auto& h : heaps_)
            n += h.size();
        n += internal_.total_items();
        n += ext_.extract_remaining();
        n += ext_.total_items();
        n += session_buffer_.size() - session_consumed_;
        return n;
    }

private:
    enum class Phase { Idle, BulkPush, Limit };

    struct Peeked {
        typename MinimaHierarchy<Item>::Source source;
        std::size_t index;
        Item item;
    };

    void require_idle(const char* op) const {
        if (phase_ != Phase::Idle)
            throw session_error(std::string(op) +
                                " requires an idle queue (open session)");
    }

    void overflow_heap(std::size_t t) {
        internal_.register_array(heaps_[t].take_sorted(order_), 0);
        minima_.update_heap(t, std::nullopt);
        minima_.rebuild_arrays(internal_);
    }

    void after_registration() {
        run_deferred_level_merges();
        flush_if_over_budget();
    }

    void run_deferred_level_merges() {
        const std::uint64_t accounted = accounted_bytes();
        const std::uint64_t allowance =
            cfg_.mem_budget > accounted ? cfg_.mem_budget - accounted : 0;
        if (internal_.maybe_merge_level(0, cfg_.max_arrays_per_level,
                                        allowance, cfg_.num_threads,
                                        cfg_.num_threads))
            minima_.rebuild_arrays(internal_);
    }

    void flush_if_over_budget() {
        if (phase_ != Phase::Idle)
            return;
        if (accounted_bytes() <= cfg_.mem_budget)
            return;
        flush_to_external();
    }

    // Merges all internal arrays, insertion heaps and the extract buffer
    // into one sorted external array at level 0.
    void flush_to_external() {
        for (std::size_t t = 0; t < heaps_.size(); ++t)
            if (!heaps_[t].empty())
                internal_.register_array(heaps_[t].take_sorted(order_), 0);
        std::vector<SequenceSlice<Item>> sources;
        sources.push_back(ext_.extract_slice());
        for (std::size_t i = 0; i < internal_.count(); ++i)
            if (!internal_.array(i).exhausted())
                sources.push_back(internal_.array(i).slice());
        if (ext_.create_external_array(sources)) {
            internal_.clear();
            ext_.extract_clear();
            ext_.maybe_merge_external_level(0);
        }
        minima_.rebuild_heaps(heaps_);
        minima_.rebuild_arrays(internal_);
        minima_.set_extract_head(ext_.extract_head());
    }

    // True when the in-RAM sources provably hold the global minimum: either
    // nothing external is pending, or the candidate lies strictly below the
    // extract-buffer coverage bound.
    bool ram_complete_below(const Item& candidate) const {
        if (ext_.total_items() == 0)
            return true;
        const auto& cov = ext_.coverage();
        return cov && order_.less(candidate, *cov);
    }

    // Finds the global minimum, refilling the extract buffer whenever the
    // in-RAM winner is not provably ahead of everything still on disk.
    Peeked ready_min() {
        for (;;) {
            const auto winner = minima_.winner();
            if (winner && ram_complete_below(winner->item))
                return Peeked{winner->source, winner->index, winner->item};
            if (!winner && ext_.total_items() == 0)
                throw empty_error("top/pop on an empty queue");
            pull_from_external();
        }
    }

    // Brings more external items into the extract buffer, waiting on block
    // loads when nothing below the merge limit is in RAM yet.
    void pull_from_external() {
        const std::size_t got = ext_.refill_extract_buffer(
            static_cast<std::size_t>(cfg_.extract_buffer_max), std::nullopt);
        minima_.set_extract_head(ext_.extract_head());
        if (got == 0 && ext_.extract_remaining() == 0 &&
            ext_.total_items() > 0)
            ext_.await_progress();
    }

    void remove_peeked(const Peeked& peek) {
        using Source = typename MinimaHierarchy<Item>::Source;
        switch (peek.source) {
        case Source::Heap: {
            auto& h = heaps_[peek.index];
            h.pop_min(order_);
            minima_.update_heap(peek.index,
                                h.empty() ? std::nullopt
                                          : std::optional<Item>(h.min()));
            break;
        }
        case Source::Array: {
            auto& arr = internal_.array(peek.index);
            ++arr.consumed;
            if (arr.exhausted()) {
                internal_.sweep_exhausted();
                minima_.rebuild_arrays(internal_);
            } else {
                minima_.update_array(peek.index, arr.head());
            }
            break;
        }
        case Source::ExtractBuffer:
            ext_.extract_pop();
            minima_.set_extract_head(ext_.extract_head());
            break;
        }
    }

    void convert_heaps_to_arrays() {
        bool any = false;
        for (std::size_t t = 0; t < heaps_.size(); ++t) {
            if (heaps_[t].empty())
                continue;
            internal_.register_array(heaps_[t].take_sorted(order_), 0);
            minima_.update_heap(t, std::nullopt);
            any = true;
        }
        if (any)
            minima_.rebuild_arrays(internal_);
    }

    void close_append_heaps() {
        for (std::size_t t = 0; t < heaps_.size(); ++t) {
            if (heaps_[t].size() > cfg_.insertion_heap_capacity)
                internal_.register_array(heaps_[t].take_sorted(order_), 0);
            else
                heaps_[t].leave_bulk_mode(order_);
        }
    }

    // One limited parallel multiway merge across the internal arrays and
    // the extract buffer, consuming what it emits. Returns items produced.
    std::size_t merge_in_ram(std::size_t max_items,
                             const std::optional<Item>& limit,
                             std::vector<Item>& out) {
        std::vector<SequenceSlice<Item>> slices;
        std::vector<std::size_t> array_of_slice;
        slices.push_back(ext_.extract_slice());
        array_of_slice.push_back(static_cast<std::size_t>(-1));
        for (std::size_t i = 0; i < internal_.count(); ++i) {
            if (internal_.array(i).exhausted())
                continue;
            slices.push_back(internal_.array(i).slice());
            array_of_slice.push_back(i);
        }
        std::vector<SequenceSlice<Item>> advanced = slices;
        const std::size_t got =
            parallel_multiway_merge(advanced, max_items, limit,
                                    cfg_.num_threads, out, order_,
                                    cfg_.num_threads);
        for (std::size_t s = 0; s < slices.size(); ++s) {
            const std::size_t taken =
                static_cast<std::size_t>(advanced[s].first - slices[s].first);
            if (taken == 0)
                continue;
            if (array_of_slice[s] == static_cast<std::size_t>(-1))
                ext_.extract_advance(taken);
            else
                internal_.array(array_of_slice[s]).consumed += taken;
        }
        return got;
    }

    // Shared core of bulk_pop_limit and limit-session refills. Insertion
    // heaps are not consulted: idle-phase callers convert them first, and
    // inside a limit session they hold only items at or above the floor.
    void extract_below(const Item& L, std::size_t max_items,
                       std::vector<Item>& out) {
        while (out.size() < max_items) {
            const bool external_live = ext_.total_items() > 0;
            const auto& cov = ext_.coverage();
            std::optional<Item> limit = L;
            if (external_live && cov && order_.less(*cov, L))
                limit = cov;
            if (!external_live || cov)
                merge_in_ram(max_items - out.size(), limit, out);
            if (out.size() >= max_items)
                break;
            // Items below L can still hide externally only while the
            // coverage bound sits below L.
            if (external_live && (!cov || order_.less(*cov, L)))
                pull_from_external();
            else
                break;
        }
    }

    bool more_below(const Item& L) {
        std::optional<Item> best;
        if (const auto w = minima_.winner())
            best = w->item;
        if (const auto ext_min = ext_.external_min())
            if (!best || order_.less(*ext_min, *best))
                best = ext_min;
        return best && order_.less(*best, L);
    }

    void refill_session() {
        session_buffer_.clear();
        session_consumed_ = 0;
        extract_below(limit_floor_, limit_chunk_, session_buffer_);
        tidy_after_extraction();
    }

    // Bulk merges consume from arrays and the extract buffer without
    // touching the minima leaves; rebuild them afterwards.
    void tidy_after_extraction() {
        internal_.sweep_exhausted();
        minima_.rebuild_arrays(internal_);
        minima_.set_extract_head(ext_.extract_head());
    }

    Config cfg_;
    Counters counters_;
    ItemOrder<Item> order_;
    BlockStore store_;
    std::vector<InsertionHeap<Item>> heaps_;
    InternalArrayStore<Item> internal_;
    MinimaHierarchy<Item> minima_;
    ExternalArrayStore<Item> ext_;

    Phase phase_ = Phase::Idle;
    std::uint64_t bulk_allowance_ = 0;
    Item limit_floor_{};
    std::size_t limit_chunk_ = 0;
    std::vector<Item> session_buffer_;
    std::size_t session_consumed_ = 0;
};

} // namespace bulkpq
