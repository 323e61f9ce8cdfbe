// bench.cpp
// Benchmark harness for the bulk-parallel external-memory priority queue.
//
// Experiments:
//   push-rand-pop      fill with n uniformly random keys, extract all
//   push-asc-pop       fill with n ascending keys, extract all (cycles items)
//   asc-rbulk-rewrite  fill ascending, then rewrite the queue in randomly
//                      sized bulks (pop v', push v' fresh higher keys)
//   bulk-rewrite       same with a fixed bulk size v
//   merge-micro        in-RAM parallel multiway merge of v fixed-size runs
//
// Every run verifies correctness (sorted output, conservation) before it
// reports timing; results append to a CSV.

#include <CLI11.hpp>

#include "bulkpq/merge.hpp"
#include "bulkpq/oracle.hpp"
#include "bulkpq/ppq.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#ifdef __linux__
#include <pthread.h>
#include <sched.h>
#endif

using namespace bulkpq;

namespace {

struct ExperimentSpec {
    std::string name;
    std::uint64_t n = 1ull << 20;
    std::uint64_t bulk_size = 1ull << 16;
    unsigned item_size = 8;
    std::uint64_t seed = 1;
    std::uint64_t push_chunk = 1ull << 16;
    std::uint64_t seq_bytes = 2ull << 20; // merge-micro sequence size
    unsigned repetitions = 15;            // merge-micro repetitions
    bool pin_threads = false;
    Config config;
};

struct ResultRow {
    std::string experiment;
    std::uint64_t n = 0;
    std::uint64_t v = 0;
    unsigned item_size = 8;
    unsigned threads = 1;
    std::uint64_t mem_budget = 0;
    std::uint64_t block_size = 0;
    double seconds = 0.0;
    Counters::Snapshot counters{};

    double mitems_per_s() const {
        return seconds > 0 ? static_cast<double>(n) / seconds / 1e6 : 0.0;
    }
    // items cross the queue interface twice, in and out
    double mib_per_s() const {
        return seconds > 0 ? 2.0 * static_cast<double>(n) * item_size /
                                 (1 << 20) / seconds
                           : 0.0;
    }
};

void emit_results(const std::vector<ResultRow>& rows,
                  const std::string& path) {
    if (path.empty() || rows.empty())
        return;
    const bool fresh = !std::filesystem::exists(path) ||
                       std::filesystem::file_size(path) == 0;
    std::ofstream out(path, std::ios::app);
    if (!out)
        throw io_error("cannot open result file: " + path);
    if (fresh)
        out << "experiment,n,v,item_size,threads,mem_budget,block_size,"
               "seconds,mitems_per_s,mib_per_s,blocks_read,blocks_written,"
               "hints_issued,hints_canceled\n";
    for (const auto& r : rows) {
        out << r.experiment << ',' << r.n << ',' << r.v << ',' << r.item_size
            << ',' << r.threads << ',' << r.mem_budget << ',' << r.block_size
            << ',' << r.seconds << ',' << r.mitems_per_s() << ','
            << r.mib_per_s() << ',' << r.counters.blocks_read << ','
            << r.counters.blocks_written << ',' << r.counters.hints_issued
            << ',' << r.counters.hints_canceled << '\n';
    }
}

void print_row(const ResultRow& r) {
    std::printf("%-18s n=%llu v=%llu item=%uB threads=%u  %.3f s  "
                "%.2f Mitems/s  %.1f MiB/s  (rd %llu wr %llu hints %llu/%llu "
                "canceled)\n",
                r.experiment.c_str(), (unsigned long long)r.n,
                (unsigned long long)r.v, r.item_size, r.threads, r.seconds,
                r.mitems_per_s(), r.mib_per_s(),
                (unsigned long long)r.counters.blocks_read,
                (unsigned long long)r.counters.blocks_written,
                (unsigned long long)r.counters.hints_issued,
                (unsigned long long)r.counters.hints_canceled);
}

void pin_current_thread(unsigned index) {
#ifdef __linux__
    cpu_set_t set;
    CPU_ZERO(&set);
    CPU_SET(index % std::thread::hardware_concurrency(), &set);
    pthread_setaffinity_np(pthread_self(), sizeof(set), &set);
#else
    (void)index;
#endif
}

[[noreturn]] void verification_failure(const std::string& what) {
    std::fprintf(stderr, "verification failed: %s\n", what.c_str());
    std::exit(2);
}

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

template <typename Item>
void parallel_bulk_fill(ParallelPriorityQueue<Item>& q,
                        const ExperimentSpec& spec, std::uint64_t count,
                        bool random_keys) {
    const unsigned p = spec.config.num_threads;
    std::uint64_t done = 0;
    while (done < count) {
        const std::uint64_t chunk = std::min(spec.push_chunk, count - done);
        q.bulk_push_begin(chunk);
        std::vector<std::thread> pool;
        for (unsigned t = 0; t < p; ++t) {
            const std::uint64_t lo = done + chunk * t / p;
            const std::uint64_t hi = done + chunk * (t + 1) / p;
            pool.emplace_back([&, t, lo, hi] {
                if (spec.pin_threads)
                    pin_current_thread(t);
                std::uint64_t s = spec.seed * 0x9e3779b97f4a7c15ull + lo;
                for (std::uint64_t i = lo; i < hi; ++i) {
                    const std::uint64_t key =
                        random_keys ? splitmix64(s) : i;
                    q.bulk_push(t, Item(key));
                }
            });
        }
        for (auto& th : pool)
            th.join();
        q.bulk_push_end();
        done += chunk;
    }
}

template <typename Item>
ResultRow run_push_pop(const ExperimentSpec& spec, bool random_keys) {
    ParallelPriorityQueue<Item> q(spec.config);
    const auto start = Clock::now();
    parallel_bulk_fill(q, spec, spec.n, random_keys);
    if (q.size() != spec.n)
        verification_failure("fill count mismatch");

    std::uint64_t prev = 0;
    bool first = true;
    std::uint64_t popped = 0;
    while (!q.empty()) {
        const std::uint64_t k = q.pop().key;
        if (!first && k < prev)
            verification_failure("pops out of order");
        if (!random_keys && k != popped)
            verification_failure("ascending keys must pop as 0..n-1");
        prev = k;
        first = false;
        ++popped;
    }
    const double secs = seconds_since(start);
    if (popped != spec.n)
        verification_failure("pop count mismatch");

    return ResultRow{spec.name,
                     spec.n,
                     spec.bulk_size,
                     spec.item_size,
                     spec.config.num_threads,
                     spec.config.mem_budget,
                     spec.config.block_size,
                     secs,
                     q.counters().snapshot()};
}

template <typename Item>
ResultRow run_bulk_rewrite(const ExperimentSpec& spec, bool random_sizes) {
    ParallelPriorityQueue<Item> q(spec.config);
    parallel_bulk_fill(q, spec, spec.n, false);
    std::uint64_t next_key = spec.n;

    std::mt19937_64 rng(spec.seed);
    std::uint64_t extracted = 0;
    std::uint64_t inserted = 0;
    // only the bulk pop/push cycles are timed
    const auto start = Clock::now();
    while (extracted < spec.n) {
        std::uint64_t v = random_sizes
                              ? rng() % (spec.bulk_size + 1)
                              : std::min(spec.bulk_size, spec.n - extracted);
        v = std::min<std::uint64_t>(v, spec.n - extracted);
        if (v == 0)
            continue;
        const auto got = q.bulk_pop(static_cast<std::size_t>(v));
        if (got.size() != v)
            verification_failure("bulk_pop returned short");
        for (std::size_t i = 1; i < got.size(); ++i)
            if (got[i].key < got[i - 1].key)
                verification_failure("bulk_pop not sorted");
        if (!got.empty() && got.back().key >= next_key)
            verification_failure("cycle popped a key from a later push");
        q.bulk_push_begin(v);
        for (std::uint64_t i = 0; i < v; ++i)
            q.bulk_push(0, Item(next_key++));
        q.bulk_push_end();
        extracted += v;
        inserted += v;
    }
    const double secs = seconds_since(start);
    if (q.size() != spec.n || inserted != extracted)
        verification_failure("rewrite conservation violated");

    return ResultRow{spec.name,
                     spec.n,
                     spec.bulk_size,
                     spec.item_size,
                     spec.config.num_threads,
                     spec.config.mem_budget,
                     spec.config.block_size,
                     secs,
                     q.counters().snapshot()};
}

template <typename Item>
ResultRow run_merge_micro(const ExperimentSpec& spec) {
    const std::size_t v = static_cast<std::size_t>(spec.bulk_size);
    const std::size_t per_seq =
        std::max<std::size_t>(1, spec.seq_bytes / sizeof(Item));
    std::vector<std::vector<Item>> runs(v);
    std::uint64_t s = spec.seed;
    for (auto& r : runs) {
        r.reserve(per_seq);
        for (std::size_t i = 0; i < per_seq; ++i)
            r.emplace_back(splitmix64(s));
        std::sort(r.begin(), r.end(),
                  [](const Item& a, const Item& b) { return a.key < b.key; });
    }
    const std::uint64_t total = static_cast<std::uint64_t>(v) * per_seq;

    std::vector<double> times;
    times.reserve(spec.repetitions);
    for (unsigned rep = 0; rep < spec.repetitions; ++rep) {
        std::vector<SequenceSlice<Item>> slices;
        slices.reserve(v);
        for (const auto& r : runs)
            slices.emplace_back(r.data(), r.data() + r.size());
        std::vector<Item> out;
        out.reserve(static_cast<std::size_t>(total));
        const auto start = Clock::now();
        parallel_multiway_merge(slices, static_cast<std::size_t>(total),
                                std::nullopt, spec.config.num_threads, out,
                                ItemOrder<Item>{}, spec.config.num_threads);
        times.push_back(seconds_since(start));
        if (out.size() != total)
            verification_failure("merge dropped items");
        for (std::size_t i = 1; i < out.size(); ++i)
            if (out[i].key < out[i - 1].key)
                verification_failure("merge output not sorted");
    }
    std::sort(times.begin(), times.end());
    const double median = times[times.size() / 2];

    return ResultRow{spec.name,
                     total,
                     spec.bulk_size,
                     spec.item_size,
                     spec.config.num_threads,
                     spec.config.mem_budget,
                     spec.config.block_size,
                     median,
                     {}};
}

template <typename Item>
ResultRow run_one(const ExperimentSpec& spec) {
    if (spec.name == "push-rand-pop")
        return run_push_pop<Item>(spec, true);
    if (spec.name == "push-asc-pop")
        return run_push_pop<Item>(spec, false);
    if (spec.name == "asc-rbulk-rewrite")
        return run_bulk_rewrite<Item>(spec, true);
    if (spec.name == "bulk-rewrite")
        return run_bulk_rewrite<Item>(spec, false);
    if (spec.name == "merge-micro")
        return run_merge_micro<Item>(spec);
    throw contract_error("unknown experiment: " + spec.name);
}

ResultRow dispatch(const ExperimentSpec& spec) {
    if (spec.item_size == 8)
        return run_one<PlainItem>(spec);
    if (spec.item_size == 24)
        return run_one<PayloadItem>(spec);
    throw contract_error("item size must be 8 or 24");
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"bulk-parallel external-memory priority queue benchmarks"};

    ExperimentSpec spec;
    unsigned log2_n = 20;
    std::string dirs;
    std::string out_path;
    std::string sweep;
    std::string config_file;

    // desk-scale defaults; larger setups stay ordinary flag values
    spec.config.mem_budget = 64ull << 20;
    spec.config.block_size = 1ull << 20;

    app.add_option("--experiment", spec.name,
                   "push-rand-pop | push-asc-pop | asc-rbulk-rewrite | "
                   "bulk-rewrite | merge-micro")
        ->required();
    app.add_option("--log2-n", log2_n, "log2 of the item count");
    app.add_option("--bulk-size", spec.bulk_size,
                   "bulk size v (max size for the random-bulk experiment; "
                   "sequence count for merge-micro)");
    app.add_option("--item-size", spec.item_size, "8 or 24 bytes");
    app.add_option("--mem-budget", spec.config.mem_budget,
                   "queue RAM budget in bytes");
    app.add_option("--block-size", spec.config.block_size,
                   "disk block size in bytes");
    app.add_option("--threads", spec.config.num_threads, "worker threads p");
    app.add_option("--dirs", dirs, "comma-separated backing directories");
    app.add_option("--seed", spec.seed, "workload seed");
    app.add_option("--out", out_path, "CSV output path (appended)");
    app.add_option("--sweep", sweep,
                   "lo:hi:factor sweep over v (rewrites, merge-micro) or "
                   "over n (push experiments)");
    app.add_option("--push-chunk", spec.push_chunk,
                   "items per bulk push session during fills");
    app.add_option("--seq-bytes", spec.seq_bytes,
                   "bytes per sequence for merge-micro");
    app.add_option("--reps", spec.repetitions,
                   "repetitions for merge-micro (median reported)");
    app.add_option("--config", config_file, "key=value config file");
    app.add_flag("--pin-threads", spec.pin_threads,
                 "pin workload threads to cores");

    CLI11_PARSE(app, argc, argv);

    try {
        if (!config_file.empty()) {
            // file first, explicit flags override
            Config from_file = Config::load_file(config_file);
            if (app.count("--mem-budget"))
                from_file.mem_budget = spec.config.mem_budget;
            if (app.count("--block-size"))
                from_file.block_size = spec.config.block_size;
            if (app.count("--threads"))
                from_file.num_threads = spec.config.num_threads;
            spec.config = from_file;
        }
        spec.n = 1ull << log2_n;

        if (!dirs.empty()) {
            spec.config.backing_paths.clear();
            std::stringstream ss(dirs);
            std::string part;
            while (std::getline(ss, part, ','))
                if (!part.empty())
                    spec.config.backing_paths.push_back(part);
        } else {
            const char* env = std::getenv("BULKPQ_TMPDIR");
            std::filesystem::path base =
                env ? std::filesystem::path(env)
                    : std::filesystem::temp_directory_path();
            spec.config.backing_paths = {(base / "bulkpq-bench").string()};
        }
        if (spec.name != "merge-micro")
            spec.config.validate(spec.item_size);

        std::vector<ResultRow> rows;
        if (sweep.empty()) {
            rows.push_back(dispatch(spec));
            print_row(rows.front());
        } else {
            unsigned long long lo = 0, hi = 0, factor = 2;
            if (std::sscanf(sweep.c_str(), "%llu:%llu:%llu", &lo, &hi,
                            &factor) < 2 ||
                lo == 0 || hi < lo || factor < 2)
                throw contract_error("bad --sweep, expected lo:hi:factor");
            const bool over_n = spec.name.rfind("push-", 0) == 0;
            for (unsigned long long x = lo; x <= hi; x *= factor) {
                ExperimentSpec s = spec;
                if (over_n)
                    s.n = x;
                else
                    s.bulk_size = x;
                rows.push_back(dispatch(s));
                print_row(rows.back());
            }
        }
        emit_results(rows, out_path);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "bench: %s\n", e.what());
        return 1;
    }
    return 0;
}
