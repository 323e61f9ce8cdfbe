// counters.hpp
// Instrumentation counters, safe to read from any thread.

#pragma once

#include <atomic>
#include <cstdint>

namespace bulkpq {

struct Counters {
    std::atomic<std::uint64_t> blocks_written{0};
    std::atomic<std::uint64_t> blocks_read{0};
    std::atomic<std::uint64_t> hints_issued{0};
    std::atomic<std::uint64_t> hints_canceled{0};
    std::atomic<std::uint64_t> comparisons_in_replay{0};
    std::atomic<std::uint64_t> items_pushed{0};
    std::atomic<std::uint64_t> items_popped{0};

    struct Snapshot {
        std::uint64_t blocks_written;
        std::uint64_t blocks_read;
        std::uint64_t hints_issued;
        std::uint64_t hints_canceled;
        std::uint64_t comparisons_in_replay;
        std::uint64_t items_pushed;
        std::uint64_t items_popped;
    };

    Snapshot snapshot() const {
        return Snapshot{
            blocks_written.load(std::memory_order_relaxed),
            blocks_read.load(std::memory_order_relaxed),
            hints_issued.load(std::memory_order_relaxed),
            hints_canceled.load(std::memory_order_relaxed),
            comparisons_in_replay.load(std::memory_order_relaxed),
            items_pushed.load(std::memory_order_relaxed),
            items_popped.load(std::memory_order_relaxed),
        };
    }
};

} // namespace bulkpq
