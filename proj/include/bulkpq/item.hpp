// item.hpp
// Fixed-size record types stored in the queue and the total order on them.
// Comparisons look at the key only; payload bytes ride along untouched.

#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <type_traits>

namespace bulkpq {

// 8-byte record: bare 64-bit key.
struct PlainItem {
    std::uint64_t key;

    PlainItem() = default;
    explicit PlainItem(std::uint64_t k) : key(k) {}
};

// 24-byte record: key first, then 16 opaque payload bytes.
struct PayloadItem {
    std::uint64_t key;
    std::array<unsigned char, 16> payload;

    PayloadItem() : key(0), payload{} {}
    explicit PayloadItem(std::uint64_t k) : key(k), payload{} {}
};

static_assert(std::is_trivially_copyable_v<PlainItem>);
static_assert(std::is_trivially_copyable_v<PayloadItem>);
static_assert(sizeof(PlainItem) == 8);
static_assert(sizeof(PayloadItem) == 24);

enum class OrderDirection {
    MinFirst, // smallest key extracted first
    MaxFirst  // largest key extracted first
};

// Strict total order on keys, adjusted for extraction direction.
// Equal keys compare equal regardless of payload.
template <typename Item>
struct ItemOrder {
    OrderDirection direction = OrderDirection::MinFirst;

    // true if a is extracted before b
    bool less(const Item& a, const Item& b) const {
        return direction == OrderDirection::MinFirst ? a.key < b.key
                                                     : b.key < a.key;
    }

    int compare(const Item& a, const Item& b) const {
        if (less(a, b)) return -1;
        if (less(b, a)) return 1;
        return 0;
    }

    bool operator()(const Item& a, const Item& b) const { return less(a, b); }

    // Monotone mapping of keys onto plain uint64 order; lets binary searches
    // over the key universe ignore the direction flag.
    std::uint64_t rank_key(const Item& a) const {
        return direction == OrderDirection::MinFirst ? a.key : ~a.key;
    }

    Item item_from_rank(std::uint64_t r) const {
        return Item(direction == OrderDirection::MinFirst ? r : ~r);
    }
};

} // namespace bulkpq
