// Oracle queue semantics, script generation determinism, serialization and
// a small differential suite against the real queue.

#include <doctest.h>

#include "bulkpq/oracle.hpp"
#include "bulkpq/ppq.hpp"

#include <filesystem>
#include <random>
#include <sstream>
#include <string>

using namespace bulkpq;

namespace {

struct TempDir {
    std::filesystem::path path;
    TempDir() {
        path = std::filesystem::temp_directory_path() /
               ("bulkpq_orc_test_" + std::to_string(std::random_device{}()));
        std::filesystem::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
};

Config diff_config(const TempDir& dir) {
    Config cfg;
    cfg.num_threads = 4;
    cfg.mem_budget = 8u << 20;
    cfg.block_size = 256 * 1024;
    cfg.insertion_heap_capacity = 4096;
    cfg.extract_buffer_max = 8192;
    cfg.backing_paths = {dir.path.string()};
    return cfg;
}

} // namespace

TEST_CASE("oracle bulk operations are exact") {
    OracleQueue<PlainItem> q;
    q.push(PlainItem(3));
    q.push(PlainItem(1));
    q.push(PlainItem(2));
    const auto two = q.bulk_pop(2);
    REQUIRE(two.size() == 2);
    CHECK(two[0].key == 1);
    CHECK(two[1].key == 2);

    const auto none = q.bulk_pop_limit(PlainItem(0), 5);
    CHECK(none.first.empty());
    CHECK_FALSE(none.second);

    CHECK(q.pop().key == 3);
    CHECK_THROWS_AS(q.pop(), empty_error);
}

TEST_CASE("oracle enforces the same session discipline") {
    OracleQueue<PlainItem> q;
    CHECK_THROWS_AS(q.bulk_push(0, PlainItem(1)), session_error);
    q.bulk_push_begin(1);
    CHECK_THROWS_AS(q.push(PlainItem(1)), session_error);
    q.bulk_push_end();
    q.limit_begin(PlainItem(5), 4);
    CHECK_THROWS_AS(q.limit_push(PlainItem(4)), contract_error);
    CHECK_THROWS_AS(q.limit_pop(), contract_error);
    q.limit_end();
}

TEST_CASE("script generation is deterministic") {
    const auto a = generate_op_script<PlainItem>(1, 200,
                                                 ScriptProfile::Mixed, 4);
    const auto b = generate_op_script<PlainItem>(1, 200,
                                                 ScriptProfile::Mixed, 4);
    REQUIRE(a.ops.size() == b.ops.size());
    CHECK(a.key_universe == b.key_universe);
    for (std::size_t i = 0; i < a.ops.size(); ++i) {
        CHECK(a.ops[i].kind == b.ops[i].kind);
        CHECK(a.ops[i].a == b.ops[i].a);
        CHECK(a.ops[i].b == b.ops[i].b);
        CHECK(a.ops[i].c == b.ops[i].c);
        CHECK(a.ops[i].d == b.ops[i].d);
        CHECK(a.ops[i].thread == b.ops[i].thread);
    }
    // and replaying twice on fresh oracles yields identical transcripts
    OracleQueue<PlainItem> q1, q2;
    const auto t1 = run_script<OracleQueue<PlainItem>, PlainItem>(q1, a);
    const auto t2 = run_script<OracleQueue<PlainItem>, PlainItem>(q2, b);
    CHECK(t1 == t2);
}

TEST_CASE("scripts serialize to text and back unchanged") {
    const auto script = generate_op_script<PlainItem>(
        7, 300, ScriptProfile::LimitHeavy, 4);
    const std::string text = to_text(script);
    std::istringstream in(text);
    const auto parsed = from_text(in);
    REQUIRE(parsed.ops.size() == script.ops.size());
    CHECK(parsed.key_universe == script.key_universe);
    OracleQueue<PlainItem> q1, q2;
    const auto t1 = run_script<OracleQueue<PlainItem>, PlainItem>(q1, script);
    const auto t2 = run_script<OracleQueue<PlainItem>, PlainItem>(q2, parsed);
    CHECK(t1 == t2);
}

TEST_CASE("every generated op respects preconditions on the oracle") {
    for (auto profile :
         {ScriptProfile::Mixed, ScriptProfile::BulkHeavy,
          ScriptProfile::LimitHeavy}) {
        for (std::uint64_t seed = 1; seed <= 5; ++seed) {
            const auto script =
                generate_op_script<PlainItem>(seed, 500, profile, 4);
            OracleQueue<PlainItem> q;
            CHECK_NOTHROW(
                (run_script<OracleQueue<PlainItem>, PlainItem>(q, script)));
        }
    }
}

TEST_CASE("small differential suite: queue matches the oracle") {
    for (auto profile :
         {ScriptProfile::Mixed, ScriptProfile::BulkHeavy,
          ScriptProfile::LimitHeavy}) {
        for (std::uint64_t seed = 1; seed <= 4; ++seed) {
            const auto script =
                generate_op_script<PlainItem>(seed, 400, profile, 4);
            TempDir dir;
            ParallelPriorityQueue<PlainItem> q(diff_config(dir));
            OracleQueue<PlainItem> oracle;
            const auto tq =
                run_script<ParallelPriorityQueue<PlainItem>, PlainItem>(
                    q, script);
            const auto to =
                run_script<OracleQueue<PlainItem>, PlainItem>(oracle, script);
            if (tq != to) {
                // dump the script for reproduction before failing
                INFO("profile=" << to_string(profile) << " seed=" << seed);
                INFO(to_text(script));
                REQUIRE(tq == to);
            }
        }
    }
}

TEST_CASE("flush-forcing scripts hit the disk") {
    const auto script = generate_op_script<PlainItem>(
        3, 150, ScriptProfile::FlushForcing, 4);
    TempDir dir;
    ParallelPriorityQueue<PlainItem> q(diff_config(dir));
    OracleQueue<PlainItem> oracle;
    const auto tq =
        run_script<ParallelPriorityQueue<PlainItem>, PlainItem>(q, script);
    const auto to =
        run_script<OracleQueue<PlainItem>, PlainItem>(oracle, script);
    CHECK(tq == to);
    CHECK(q.counters().blocks_written.load() > 0);
}
