// block_store.hpp
// File-backed external memory: fixed-size blocks striped round-robin over
// one backing file per configured directory, with asynchronous reads and
// writes executed by one I/O thread per file. Blocks are raw byte ranges;
// all metadata stays in RAM. Freed blocks are reused within the same run.

#pragma once

#include "bulkpq/config.hpp"
#include "bulkpq/counters.hpp"
#include "bulkpq/errors.hpp"

#include <atomic>
#include <condition_variable>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <unordered_set>
#include <vector>

namespace bulkpq {

struct BlockId {
    std::uint32_t file_index = 0;
    std::uint64_t offset = 0; // bytes, multiple of the block size

    friend bool operator==(const BlockId& a, const BlockId& b) {
        return a.file_index == b.file_index && a.offset == b.offset;
    }
};

struct BlockIdHash {
    std::size_t operator()(const BlockId& id) const {
        return std::hash<std::uint64_t>()(
            (static_cast<std::uint64_t>(id.file_index) << 48) ^ id.offset);
    }
};

// Byte buffer aligned for unbuffered I/O.
class Buffer {
public:
    Buffer() = default;
    explicit Buffer(std::size_t n) : size_(n) {
        if (n)
            data_ = static_cast<std::byte*>(
                ::operator new(n, std::align_val_t(kAlignment)));
    }
    Buffer(Buffer&& other) noexcept
        : data_(other.data_), size_(other.size_) {
        other.data_ = nullptr;
        other.size_ = 0;
    }
    Buffer& operator=(Buffer&& other) noexcept {
        if (this != &other) {
            release();
            data_ = other.data_;
            size_ = other.size_;
            other.data_ = nullptr;
            other.size_ = 0;
        }
        return *this;
    }
    Buffer(const Buffer&) = delete;
    Buffer& operator=(const Buffer&) = delete;
    ~Buffer() { release(); }

    std::byte* data() { return data_; }
    const std::byte* data() const { return data_; }
    std::size_t size() const { return size_; }
    bool empty() const { return size_ == 0; }

    static constexpr std::size_t kAlignment = 4096;

private:
    void release() {
        if (data_)
            ::operator delete(data_, std::align_val_t(kAlignment));
        data_ = nullptr;
    }

    std::byte* data_ = nullptr;
    std::size_t size_ = 0;
};

enum class CancelResult { Canceled, AlreadyCompleted };

// Handle for one in-flight block transfer. At most one pending operation
// exists per block at any time.
class PendingIo {
public:
    enum class Kind { Read, Write };
    enum class State { Queued, Running, Done, Failed, Canceled };

    Kind kind() const { return kind_; }
    BlockId block() const { return id_; }

    bool completed() const {
        std::lock_guard<std::mutex> lock(mutex_);
        return state_ == State::Done;
    }

    bool finished() const {
        std::lock_guard<std::mutex> lock(mutex_);
        return state_ == State::Done || state_ == State::Failed ||
               state_ == State::Canceled;
    }

    // Blocks until the operation finishes; throws io_error on failure.
    // Returns false if the operation was canceled.
    bool wait() {
        std::unique_lock<std::mutex> lock(mutex_);
        cv_.wait(lock, [&] {
            return state_ == State::Done || state_ == State::Failed ||
                   state_ == State::Canceled;
        });
        if (state_ == State::Failed)
            throw io_error(error_);
        return state_ == State::Done;
    }

    // Moves the data of a completed read out of the handle.
    Buffer take_buffer() {
        std::lock_guard<std::mutex> lock(mutex_);
        if (state_ != State::Done)
            throw io_error("take_buffer on unfinished or failed request");
        return std::move(buffer_);
    }

private:
    friend class BlockStore;

    mutable std::mutex mutex_;
    std::condition_variable cv_;
    State state_ = State::Queued;
    Kind kind_ = Kind::Read;
    BlockId id_;
    Buffer buffer_;
    std::string error_;
    std::function<void()> on_complete_; // runs on the I/O thread on finish
};

using PendingIoPtr = std::shared_ptr<PendingIo>;

class BlockStore {
public:
    BlockStore(const Config& cfg, Counters& counters);
    ~BlockStore();

    BlockStore(const BlockStore&) = delete;
    BlockStore& operator=(const BlockStore&) = delete;

    std::uint64_t block_size() const { return block_size_; }

    // Reserves a fresh block, round-robin across backing files. Throws
    // io_error when a file is at its configured capacity.
    BlockId allocate_block();

    // Returns a block to the free list for reuse.
    void free_block(BlockId id);

    // Initiates an asynchronous write of exactly one block. The buffer must
    // be block-sized. on_complete, if given, runs on the I/O thread after
    // the write lands.
    PendingIoPtr write_block_async(BlockId id, Buffer data,
                                   std::function<void()> on_complete = {});

    // Initiates an asynchronous read of a previously written block.
    PendingIoPtr read_block_async(BlockId id);

    // Drops a queued read before it starts; best effort. A second cancel of
    // an already canceled request reports Canceled again.
    CancelResult cancel_read(const PendingIoPtr& io);

    // Blocks until every submitted operation has finished.
    void wait_all();

private:
    struct BackingFile {
        int fd = -1;
        std::string path;
        std::uint64_t end_offset = 0;
        std::vector<std::uint64_t> free_list;
        std::deque<PendingIoPtr> queue;
        std::mutex queue_mutex;
        std::condition_variable queue_cv;
        std::thread worker;
    };

    void io_thread(BackingFile& file);
    void finish(const PendingIoPtr& io, PendingIo::State state,
                std::string error);

    const std::uint64_t block_size_;
    const std::uint64_t max_file_bytes_;
    Counters& counters_;
    std::vector<std::unique_ptr<BackingFile>> files_;

    std::mutex mutex_; // guards allocation state and the pending set
    std::condition_variable idle_cv_;
    std::size_t next_file_ = 0;
    std::size_t in_flight_ = 0;
    std::unordered_set<BlockId, BlockIdHash> pending_;
    std::unordered_set<BlockId, BlockIdHash> written_;
    std::atomic<bool> shutdown_{false};
};

} // namespace bulkpq
