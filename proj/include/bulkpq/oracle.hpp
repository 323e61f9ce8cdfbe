// oracle.hpp
// Trusted in-RAM reference queue with the same public interface as the
// real queue, plus deterministic operation-script generation, execution and
// line-oriented (de)serialization for differential testing.

#pragma once

#include "bulkpq/errors.hpp"
#include "bulkpq/item.hpp"

#include <algorithm>
#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <queue>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace bulkpq {

// Sorted-multiset semantics computed the obvious way; never touches disk.
template <typename Item>
class OracleQueue {
public:
    explicit OracleQueue(ItemOrder<Item> order = {})
        : order_(order), heap_(greater(order)) {}

    std::uint64_t size() const { return heap_.size() + session_pushes_.size(); }
    bool empty() const { return size() == 0; }

    void push(const Item& item) {
        require_idle("push");
        heap_.push(item);
    }

    Item top() {
        require_idle("top");
        if (heap_.empty())
            throw empty_error("top on an empty queue");
        return heap_.top();
    }

    Item pop() {
        require_idle("pop");
        if (heap_.empty())
            throw empty_error("pop on an empty queue");
        Item out = heap_.top();
        heap_.pop();
        return out;
    }

    void bulk_push_begin(std::uint64_t) {
        require_idle("bulk_push_begin");
        phase_ = Phase::BulkPush;
    }

    void bulk_push(unsigned, const Item& item) {
        if (phase_ != Phase::BulkPush)
            throw session_error("bulk_push outside a bulk push session");
        heap_.push(item);
    }

    void bulk_push_end() {
        if (phase_ != Phase::BulkPush)
            throw session_error("bulk_push_end without bulk_push_begin");
        phase_ = Phase::Idle;
    }

    std::vector<Item> bulk_pop(std::size_t k) {
        require_idle("bulk_pop");
        std::vector<Item> out;
        while (out.size() < k && !heap_.empty()) {
            out.push_back(heap_.top());
            heap_.pop();
        }
        return out;
    }

    std::pair<std::vector<Item>, bool> bulk_pop_limit(const Item& L,
                                                      std::size_t k) {
        require_idle("bulk_pop_limit");
        std::vector<Item> out;
        while (out.size() < k && !heap_.empty() &&
               order_.less(heap_.top(), L)) {
            out.push_back(heap_.top());
            heap_.pop();
        }
        return {std::move(out),
                !heap_.empty() && order_.less(heap_.top(), L)};
    }

    void limit_begin(const Item& L, std::size_t) {
        require_idle("limit_begin");
        phase_ = Phase::Limit;
        limit_floor_ = L;
    }

    // Returns the smallest non-session item, or the floor itself when only
    // session insertions remain. Values at or above the floor just signal
    // the caller's loop to stop.
    Item limit_top() {
        if (phase_ != Phase::Limit)
            throw session_error("limit_top outside a limit session");
        return heap_.empty() ? limit_floor_ : heap_.top();
    }

    Item limit_pop() {
        if (phase_ != Phase::Limit)
            throw session_error("limit_pop outside a limit session");
        if (heap_.empty() || !order_.less(heap_.top(), limit_floor_))
            throw contract_error("limit_pop: no items below the limit");
        Item out = heap_.top();
        heap_.pop();
        return out;
    }

    void limit_push(const Item& item, unsigned = 0) {
        if (phase_ != Phase::Limit)
            throw session_error("limit_push outside a limit session");
        if (order_.less(item, limit_floor_))
            throw contract_error("limit_push: item below the session limit");
        session_pushes_.push_back(item);
    }

    void limit_end() {
        if (phase_ != Phase::Limit)
            throw session_error("limit_end without limit_begin");
        phase_ = Phase::Idle;
        for (const Item& x : session_pushes_)
            heap_.push(x);
        session_pushes_.clear();
    }

private:
    enum class Phase { Idle, BulkPush, Limit };

    static auto greater(const ItemOrder<Item>& order) {
        return [order](const Item& a, const Item& b) {
            return order.less(b, a);
        };
    }

    void require_idle(const char* op) const {
        if (phase_ != Phase::Idle)
            throw session_error(std::string(op) +
                                " requires an idle queue (open session)");
    }

    ItemOrder<Item> order_;
    std::priority_queue<Item, std::vector<Item>,
                        decltype(greater(std::declval<ItemOrder<Item>>()))>
        heap_;
    std::vector<Item> session_pushes_;
    Phase phase_ = Phase::Idle;
    Item limit_floor_{};
};

// --- operation scripts -----------------------------------------------------

enum class OpKind {
    Push,          // a = key
    Top,           //
    Pop,           //
    BulkPushBegin, // a = size estimate
    BulkPushBatch, // a = item count, b = key seed, thread = thread index
    BulkPushEnd,   //
    BulkPop,       // a = k
    BulkPopLimit,  // a = limit key, b = k
    LimitCycle,    // a = limit key, b = chunk, c = pop budget, d = push seed
};

struct ScriptOp {
    OpKind kind = OpKind::Push;
    std::uint64_t a = 0;
    std::uint64_t b = 0;
    std::uint64_t c = 0;
    std::uint64_t d = 0;
    unsigned thread = 0;
};

struct Script {
    std::uint64_t key_universe = 1ull << 62;
    std::vector<ScriptOp> ops;
};

enum class ScriptProfile { Mixed, BulkHeavy, LimitHeavy, FlushForcing };

inline const char* to_string(ScriptProfile p) {
    switch (p) {
    case ScriptProfile::Mixed: return "mixed";
    case ScriptProfile::BulkHeavy: return "bulk-heavy";
    case ScriptProfile::LimitHeavy: return "limit-heavy";
    case ScriptProfile::FlushForcing: return "flush-forcing";
    }
    return "?";
}

inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

// Marker recorded when a limit cycle observes a top at or above its limit.
inline constexpr std::uint64_t kLimitExitMarker =
    0xfffffffffffffff7ull;

// Executes one limit session: pops while the top is below L (bounded by a
// pop budget), occasionally pushing items at or above L. Shared by the
// generator's legality model and the script runner so both sides take
// identical decisions. Records observations into `transcript` when given.
template <typename Queue, typename Item>
void replay_limit_cycle(Queue& q, const Item& L, std::uint64_t chunk,
                        std::uint64_t pop_budget, std::uint64_t push_seed,
                        std::uint64_t universe,
                        std::vector<std::uint64_t>* transcript) {
    ItemOrder<Item> order;
    q.limit_begin(L, static_cast<std::size_t>(chunk));
    std::uint64_t s = push_seed;
    std::uint64_t pops = 0;
    while (pops < pop_budget) {
        const Item t = q.limit_top();
        const bool below = order.less(t, L);
        if (transcript)
            transcript->push_back(below ? t.key : kLimitExitMarker);
        if (!below)
            break;
        const Item popped = q.limit_pop();
        if (transcript)
            transcript->push_back(popped.key);
        ++pops;
        if (splitmix64(s) % 100 < 60) {
            const std::uint64_t raw = splitmix64(s) % universe;
            q.limit_push(Item(raw < L.key ? L.key + (raw & 1023) : raw), 0);
        }
    }
    q.limit_end();
}

// Deterministic, precondition-respecting pseudo-random operation script.
// The generator replays its choices against an embedded oracle so that
// every emitted operation is legal at execution time. Scripts assume
// min-first extraction order.
template <typename Item>
Script generate_op_script(std::uint64_t seed, std::size_t length,
                          ScriptProfile profile, unsigned num_threads) {
    std::mt19937_64 rng(seed * 0x2545F4914F6CDD1Dull + 1);
    OracleQueue<Item> model;
    Script script;
    // A small key universe on some seeds exercises duplicate keys.
    script.key_universe = (seed % 5 == 0) ? 1024 : (1ull << 62);
    const std::uint64_t universe = script.key_universe;
    auto key = [&] { return rng() % universe; };
    auto chance = [&](unsigned pct) { return rng() % 100 < pct; };

    auto emit_bulk_session = [&](std::uint64_t items) {
        const std::uint64_t est = chance(50) ? items : items / 2 + 1;
        script.ops.push_back({OpKind::BulkPushBegin, est});
        model.bulk_push_begin(est);
        std::uint64_t left = items;
        while (left > 0) {
            const std::uint64_t n =
                std::min<std::uint64_t>(left, 1 + rng() % (items / 2 + 1));
            const std::uint64_t batch_seed = rng();
            const unsigned thread =
                static_cast<unsigned>(rng() % num_threads);
            script.ops.push_back(
                {OpKind::BulkPushBatch, n, batch_seed, 0, 0, thread});
            std::uint64_t s = batch_seed;
            for (std::uint64_t i = 0; i < n; ++i)
                model.bulk_push(thread, Item(splitmix64(s) % universe));
            left -= n;
        }
        script.ops.push_back({OpKind::BulkPushEnd});
        model.bulk_push_end();
    };

    while (script.ops.size() < length) {
        const unsigned roll = static_cast<unsigned>(rng() % 100);
        switch (profile) {
        case ScriptProfile::Mixed: {
            if (roll < 35) {
                const std::uint64_t k = key();
                script.ops.push_back({OpKind::Push, k});
                model.push(Item(k));
            } else if (roll < 50 && !model.empty()) {
                script.ops.push_back({OpKind::Pop});
                model.pop();
            } else if (roll < 60 && !model.empty()) {
                script.ops.push_back({OpKind::Top});
                model.top();
            } else if (roll < 75) {
                emit_bulk_session(1 + rng() % 64);
            } else if (roll < 88) {
                const std::uint64_t k = 1 + rng() % 64;
                script.ops.push_back({OpKind::BulkPop, k});
                model.bulk_pop(static_cast<std::size_t>(k));
            } else {
                const std::uint64_t L = key();
                const std::uint64_t k = 1 + rng() % 64;
                script.ops.push_back({OpKind::BulkPopLimit, L, k});
                model.bulk_pop_limit(Item(L), static_cast<std::size_t>(k));
            }
            break;
        }
        case ScriptProfile::BulkHeavy: {
            if (roll < 55) {
                emit_bulk_session(64 + rng() % 4096);
            } else {
                const std::uint64_t k = 64 + rng() % 4096;
                script.ops.push_back({OpKind::BulkPop, k});
                model.bulk_pop(static_cast<std::size_t>(k));
            }
            break;
        }
        case ScriptProfile::LimitHeavy: {
            if (roll < 40) {
                emit_bulk_session(32 + rng() % 512);
            } else if (roll < 85) {
                const std::uint64_t L = key();
                const std::uint64_t chunk = 1 + rng() % 32;
                const std::uint64_t pops = rng() % 128;
                const std::uint64_t push_seed = rng();
                script.ops.push_back(
                    {OpKind::LimitCycle, L, chunk, pops, push_seed});
                replay_limit_cycle(model, Item(L), chunk, pops, push_seed,
                                   universe, nullptr);
            } else if (!model.empty()) {
                script.ops.push_back({OpKind::Pop});
                model.pop();
            } else {
                const std::uint64_t k = key();
                script.ops.push_back({OpKind::Push, k});
                model.push(Item(k));
            }
            break;
        }
        case ScriptProfile::FlushForcing: {
            // push volume far outruns extraction so RAM budgets overflow
            if (roll < 65) {
                emit_bulk_session(32768 + rng() % 32768);
            } else if (roll < 85) {
                const std::uint64_t k = 1024 + rng() % 8192;
                script.ops.push_back({OpKind::BulkPop, k});
                model.bulk_pop(static_cast<std::size_t>(k));
            } else {
                const std::uint64_t L = key();
                const std::uint64_t k = 1024 + rng() % 8192;
                script.ops.push_back({OpKind::BulkPopLimit, L, k});
                model.bulk_pop_limit(Item(L), static_cast<std::size_t>(k));
            }
            break;
        }
        }
    }
    return script;
}

// Runs a script, recording every observable result as a flat word list.
template <typename Queue, typename Item>
std::vector<std::uint64_t> run_script(Queue& q, const Script& script) {
    std::vector<std::uint64_t> t;
    for (const ScriptOp& op : script.ops) {
        switch (op.kind) {
        case OpKind::Push:
            q.push(Item(op.a));
            break;
        case OpKind::Top:
            t.push_back(q.top().key);
            break;
        case OpKind::Pop:
            t.push_back(q.pop().key);
            break;
        case OpKind::BulkPushBegin:
            q.bulk_push_begin(op.a);
            break;
        case OpKind::BulkPushBatch: {
            std::uint64_t s = op.b;
            for (std::uint64_t i = 0; i < op.a; ++i)
                q.bulk_push(op.thread,
                            Item(splitmix64(s) % script.key_universe));
            break;
        }
        case OpKind::BulkPushEnd:
            q.bulk_push_end();
            break;
        case OpKind::BulkPop: {
            const auto got = q.bulk_pop(static_cast<std::size_t>(op.a));
            t.push_back(got.size());
            for (const Item& x : got)
                t.push_back(x.key);
            break;
        }
        case OpKind::BulkPopLimit: {
            const auto got =
                q.bulk_pop_limit(Item(op.a), static_cast<std::size_t>(op.b));
            t.push_back(got.first.size());
            for (const Item& x : got.first)
                t.push_back(x.key);
            t.push_back(got.second ? 1 : 0);
            break;
        }
        case OpKind::LimitCycle:
            replay_limit_cycle(q, Item(op.a), op.b, op.c, op.d,
                               script.key_universe, &t);
            break;
        }
        t.push_back(q.size());
    }
    return t;
}

// --- line-oriented script serialization --------------------------------------

inline std::string to_text(const Script& script) {
    std::ostringstream out;
    out << "universe " << script.key_universe << '\n';
    for (const ScriptOp& op : script.ops) {
        switch (op.kind) {
        case OpKind::Push: out << "push " << op.a; break;
        case OpKind::Top: out << "top"; break;
        case OpKind::Pop: out << "pop"; break;
        case OpKind::BulkPushBegin: out << "bulk_begin " << op.a; break;
        case OpKind::BulkPushBatch:
            out << "bulk_batch " << op.thread << ' ' << op.a << ' ' << op.b;
            break;
        case OpKind::BulkPushEnd: out << "bulk_end"; break;
        case OpKind::BulkPop: out << "bulk_pop " << op.a; break;
        case OpKind::BulkPopLimit:
            out << "bulk_pop_limit " << op.a << ' ' << op.b;
            break;
        case OpKind::LimitCycle:
            out << "limit_cycle " << op.a << ' ' << op.b << ' ' << op.c << ' '
                << op.d;
            break;
        }
        out << '\n';
    }
    return out.str();
}

inline Script from_text(std::istream& in) {
    Script script;
    std::string line;
    while (std::getline(in, line)) {
        std::istringstream ls(line);
        std::string word;
        if (!(ls >> word) || word.empty() || word[0] == '#')
            continue;
        if (word == "universe") {
            ls >> script.key_universe;
            continue;
        }
        ScriptOp op;
        if (word == "push") {
            op.kind = OpKind::Push;
            ls >> op.a;
        } else if (word == "top") {
            op.kind = OpKind::Top;
        } else if (word == "pop") {
            op.kind = OpKind::Pop;
        } else if (word == "bulk_begin") {
            op.kind = OpKind::BulkPushBegin;
            ls >> op.a;
        } else if (word == "bulk_batch") {
            op.kind = OpKind::BulkPushBatch;
            ls >> op.thread >> op.a >> op.b;
        } else if (word == "bulk_end") {
            op.kind = OpKind::BulkPushEnd;
        } else if (word == "bulk_pop") {
            op.kind = OpKind::BulkPop;
            ls >> op.a;
        } else if (word == "bulk_pop_limit") {
            op.kind = OpKind::BulkPopLimit;
            ls >> op.a >> op.b;
        } else if (word == "limit_cycle") {
            op.kind = OpKind::LimitCycle;
            ls >> op.a >> op.b >> op.c >> op.d;
        } else {
            throw contract_error("unknown script op: " + word);
        }
        script.ops.push_back(op);
    }
    return script;
}

} // namespace bulkpq
