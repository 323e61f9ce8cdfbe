// replay_script.cpp
// Replays a line-oriented operation script against both the reference
// oracle and the real queue and reports the first divergence. Used to
// reproduce differential-suite failures from their dumped scripts.

#include <CLI11.hpp>

#include "bulkpq/oracle.hpp"
#include "bulkpq/ppq.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

using namespace bulkpq;

int main(int argc, char** argv) {
    CLI::App app{"replay an operation script against queue and oracle"};
    std::string script_path;
    std::string dir;
    Config cfg;
    cfg.num_threads = 4;
    cfg.mem_budget = 8u << 20;
    cfg.block_size = 256 * 1024;
    cfg.insertion_heap_capacity = 4096;
    cfg.extract_buffer_max = 8192;

    app.add_option("script", script_path, "script file (see to_text format)")
        ->required()
        ->check(CLI::ExistingFile);
    app.add_option("--dir", dir, "backing directory");
    app.add_option("--mem-budget", cfg.mem_budget, "queue RAM budget");
    app.add_option("--block-size", cfg.block_size, "block size");
    app.add_option("--threads", cfg.num_threads, "threads");
    CLI11_PARSE(app, argc, argv);

    try {
        std::ifstream in(script_path);
        const Script script = from_text(in);
        if (dir.empty())
            dir = (std::filesystem::temp_directory_path() / "bulkpq-replay")
                      .string();
        cfg.backing_paths = {dir};
        cfg.validate(sizeof(PlainItem));

        ParallelPriorityQueue<PlainItem> q(cfg);
        OracleQueue<PlainItem> oracle;
        const auto tq =
            run_script<ParallelPriorityQueue<PlainItem>, PlainItem>(q,
                                                                    script);
        const auto to =
            run_script<OracleQueue<PlainItem>, PlainItem>(oracle, script);
        if (tq == to) {
            std::printf("transcripts identical (%zu words, %zu ops)\n",
                        tq.size(), script.ops.size());
            return 0;
        }
        std::size_t at = 0;
        while (at < tq.size() && at < to.size() && tq[at] == to[at])
            ++at;
        std::printf("transcripts DIVERGE at word %zu: queue=%llu oracle=%llu "
                    "(lengths %zu vs %zu)\n",
                    at,
                    at < tq.size() ? (unsigned long long)tq[at] : 0ull,
                    at < to.size() ? (unsigned long long)to[at] : 0ull,
                    tq.size(), to.size());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "replay: %s\n", e.what());
        return 2;
    }
}
