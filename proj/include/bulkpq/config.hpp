// config.hpp
// Queue configuration: thread count, memory budget, block geometry and
// backing storage. Loadable from key=value text files.

#pragma once

#include "bulkpq/errors.hpp"
#include "bulkpq/item.hpp"

#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace bulkpq {

struct Config {
    // p: workload threads and worker group size for parallel merges
    unsigned num_threads = 4;
    // M: total RAM the queue may account for, in bytes
    std::uint64_t mem_budget = 64ull << 20;
    // B: disk transfer unit in bytes
    std::uint64_t block_size = 2ull << 20;
    // one backing file per simulated disk, created inside these directories
    std::vector<std::string> backing_paths = {"."};
    // items held by one insertion heap before it overflows
    std::uint64_t insertion_heap_capacity = 16 * 1024;
    // arrays tolerated on one level before they are merged upward
    std::uint64_t max_arrays_per_level = 64;
    // write buffer blocks for merges into external memory; 0 = 2p + 2
    std::uint64_t write_buffer_blocks = 0;
    // read buffer bytes granted per live external array; 0 = 2 blocks
    std::uint64_t read_buffer_bytes_per_array = 0;
    // items per extract buffer refill
    std::uint64_t extract_buffer_max = 256 * 1024;
    OrderDirection order_direction = OrderDirection::MinFirst;
    // 0 = unbounded; otherwise each backing file may not grow past this
    std::uint64_t max_file_bytes = 0;
    // open backing files with O_DIRECT
    bool direct_io = false;

    std::uint64_t effective_write_buffer_blocks() const {
        return write_buffer_blocks ? write_buffer_blocks
                                   : 2ull * num_threads + 2;
    }

    std::uint64_t effective_read_buffer_bytes_per_array() const {
        return read_buffer_bytes_per_array ? read_buffer_bytes_per_array
                                           : 2 * block_size;
    }

    // Throws config_error on the first violated invariant.
    void validate(std::uint64_t item_size) const {
        if (num_threads < 1)
            throw config_error("num_threads must be >= 1");
        if (backing_paths.empty())
            throw config_error("at least one backing path required");
        if (block_size < 64 * 1024)
            throw config_error("block_size must be >= 64 KiB");
        if (block_size < item_size)
            throw config_error("block_size smaller than one item");
        if (insertion_heap_capacity < 1)
            throw config_error("insertion_heap_capacity must be >= 1");
        if (max_arrays_per_level < 2)
            throw config_error("max_arrays_per_level must be >= 2");
        if (extract_buffer_max < 1)
            throw config_error("extract_buffer_max must be >= 1");
        const std::uint64_t wbb = effective_write_buffer_blocks();
        if (wbb < 2ull * num_threads)
            throw config_error("write_buffer_blocks must be >= 2 * num_threads");
        if (effective_read_buffer_bytes_per_array() < block_size)
            throw config_error(
                "read_buffer_bytes_per_array must be >= block_size");
        const std::uint64_t floor = num_threads * insertion_heap_capacity *
                                        item_size +
                                    wbb * block_size + block_size;
        if (mem_budget <= floor)
            throw config_error(
                "mem_budget too small: needs more than heaps + write buffers "
                "+ one read block = " +
                std::to_string(floor) + " bytes");
        if (max_file_bytes != 0 && max_file_bytes < block_size)
            throw config_error("max_file_bytes smaller than one block");
    }

    // Parses `key = value` lines; '#' starts a comment. Unknown keys error.
    static Config load_file(const std::string& path) {
        std::ifstream in(path);
        if (!in)
            throw config_error("cannot open config file: " + path);
        Config cfg;
        cfg.backing_paths.clear();
        std::string line;
        while (std::getline(in, line)) {
            const auto hash = line.find('#');
            if (hash != std::string::npos)
                line.erase(hash);
            const auto eq = line.find('=');
            if (eq == std::string::npos)
                continue;
            auto trim = [](std::string s) {
                const auto b = s.find_first_not_of(" \t\r");
                const auto e = s.find_last_not_of(" \t\r");
                return b == std::string::npos ? std::string()
                                              : s.substr(b, e - b + 1);
            };
            const std::string key = trim(line.substr(0, eq));
            const std::string value = trim(line.substr(eq + 1));
            if (key.empty())
                continue;
            cfg.set(key, value);
        }
        if (cfg.backing_paths.empty())
            cfg.backing_paths = {"."};
        return cfg;
    }

    void set(const std::string& key, const std::string& value) {
        auto as_u64 = [&](const std::string& v) {
            return static_cast<std::uint64_t>(std::stoull(v));
        };
        if (key == "num_threads")
            num_threads = static_cast<unsigned>(as_u64(value));
        else if (key == "mem_budget")
            mem_budget = as_u64(value);
        else if (key == "block_size")
            block_size = as_u64(value);
        else if (key == "backing_paths") {
            backing_paths.clear();
            std::stringstream ss(value);
            std::string part;
            while (std::getline(ss, part, ','))
                if (!part.empty())
                    backing_paths.push_back(part);
        } else if (key == "insertion_heap_capacity")
            insertion_heap_capacity = as_u64(value);
        else if (key == "max_arrays_per_level")
            max_arrays_per_level = as_u64(value);
        else if (key == "write_buffer_blocks")
            write_buffer_blocks = as_u64(value);
        else if (key == "read_buffer_bytes_per_array")
            read_buffer_bytes_per_array = as_u64(value);
        else if (key == "extract_buffer_max")
            extract_buffer_max = as_u64(value);
        else if (key == "order_direction") {
            if (value == "min-first")
                order_direction = OrderDirection::MinFirst;
            else if (value == "max-first")
                order_direction = OrderDirection::MaxFirst;
            else
                throw config_error("order_direction must be min-first or "
                                   "max-first");
        } else if (key == "max_file_bytes")
            max_file_bytes = as_u64(value);
        else if (key == "direct_io")
            direct_io = (value == "1" || value == "true");
        else
            throw config_error("unknown config key: " + key);
    }
};

} // namespace bulkpq
