// block_store.cpp
// Asynchronous block I/O over plain files using pread/pwrite, one worker
// thread per backing file.

#include "bulkpq/block_store.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <filesystem>

namespace bulkpq {

BlockStore::BlockStore(const Config& cfg, Counters& counters)
    : block_size_(cfg.block_size), max_file_bytes_(cfg.max_file_bytes),
      counters_(counters) {
    if (cfg.backing_paths.empty())
        throw config_error("block store needs at least one backing path");
    if (cfg.direct_io && block_size_ % 4096 != 0)
        throw config_error("direct I/O requires 4096-aligned block size");
    int flags = O_RDWR | O_CREAT | O_TRUNC;
#ifdef O_DIRECT
    if (cfg.direct_io)
        flags |= O_DIRECT;
#endif
    files_.reserve(cfg.backing_paths.size());
    for (std::size_t i = 0; i < cfg.backing_paths.size(); ++i) {
        auto file = std::make_unique<BackingFile>();
        std::filesystem::path dir(cfg.backing_paths[i]);
        std::error_code ec;
        std::filesystem::create_directories(dir, ec);
        file->path = (dir / ("bulkpq." + std::to_string(i) + ".dat")).string();
        file->fd = ::open(file->path.c_str(), flags, 0644);
        if (file->fd < 0)
            throw io_error("cannot open backing file " + file->path + ": " +
                           std::strerror(errno));
        files_.push_back(std::move(file));
    }
    for (auto& file : files_)
        file->worker = std::thread([this, f = file.get()] { io_thread(*f); });
}

BlockStore::~BlockStore() {
    shutdown_.store(true);
    for (auto& file : files_) {
        {
            std::lock_guard<std::mutex> lock(file->queue_mutex);
        }
        file->queue_cv.notify_all();
    }
    for (auto& file : files_) {
        if (file->worker.joinable())
            file->worker.join();
        if (file->fd >= 0) {
            ::close(file->fd);
            ::unlink(file->path.c_str());
        }
    }
}

BlockId BlockStore::allocate_block() {
    std::lock_guard<std::mutex> lock(mutex_);
    const std::size_t start = next_file_;
    for (std::size_t attempt = 0; attempt < files_.size(); ++attempt) {
        const std::size_t fi = (start + attempt) % files_.size();
        BackingFile& file = *files_[fi];
        if (!file.free_list.empty()) {
            const std::uint64_t off = file.free_list.back();
            file.free_list.pop_back();
            next_file_ = (fi + 1) % files_.size();
            return BlockId{static_cast<std::uint32_t>(fi), off};
        }
        if (max_file_bytes_ == 0 ||
            file.end_offset + block_size_ <= max_file_bytes_) {
            const std::uint64_t off = file.end_offset;
            file.end_offset += block_size_;
            next_file_ = (fi + 1) % files_.size();
            return BlockId{static_cast<std::uint32_t>(fi), off};
        }
    }
    throw io_error("block store: all backing files at capacity");
}

void BlockStore::free_block(BlockId id) {
    std::lock_guard<std::mutex> lock(mutex_);
    files_[id.file_index]->free_list.push_back(id.offset);
    written_.erase(id);
}

PendingIoPtr BlockStore::write_block_async(BlockId id, Buffer data,
                                           std::function<void()> on_complete) {
    if (data.size() != block_size_)
        throw contract_error("write buffer must be exactly one block");
    auto io = std::make_shared<PendingIo>();
    io->kind_ = PendingIo::Kind::Write;
    io->id_ = id;
    io->buffer_ = std::move(data);
    io->on_complete_ = std::move(on_complete);
    {
        std::lock_guard<std::mutex> lock(mutex_);
        if (!pending_.insert(id).second)
            throw contract_error("block already has a pending operation");
        written_.insert(id);
        ++in_flight_;
    }
    BackingFile& file = *files_[id.file_index];
    {
        std::lock_guard<std::mutex> lock(file.queue_mutex);
        file.queue.push_back(io);
    }
    file.queue_cv.notify_one();
    return io;
}

PendingIoPtr BlockStore::read_block_async(BlockId id) {
    auto io = std::make_shared<PendingIo>();
    io->kind_ = PendingIo::Kind::Read;
    io->id_ = id;
    io->buffer_ = Buffer(block_size_);
    {
        std::lock_guard<std::mutex> lock(mutex_);
        if (!written_.count(id))
            throw io_error("read of a block that was never written");
        if (!pending_.insert(id).second)
            throw contract_error("block already has a pending operation");
        ++in_flight_;
    }
    BackingFile& file = *files_[id.file_index];
    {
        std::lock_guard<std::mutex> lock(file.queue_mutex);
        file.queue.push_back(io);
    }
    file.queue_cv.notify_one();
    return io;
}

CancelResult BlockStore::cancel_read(const PendingIoPtr& io) {
    if (io->kind() != PendingIo::Kind::Read)
        throw contract_error("cancel_read on a write request");
    BackingFile& file = *files_[io->block().file_index];
    bool removed = false;
    {
        std::lock_guard<std::mutex> lock(file.queue_mutex);
        for (auto it = file.queue.begin(); it != file.queue.end(); ++it) {
            if (it->get() == io.get()) {
                file.queue.erase(it);
                removed = true;
                break;
            }
        }
    }
    if (removed) {
        counters_.hints_canceled.fetch_add(1, std::memory_order_relaxed);
        finish(io, PendingIo::State::Canceled, {});
        return CancelResult::Canceled;
    }
    std::lock_guard<std::mutex> lock(io->mutex_);
    return io->state_ == PendingIo::State::Canceled
               ? CancelResult::Canceled
               : CancelResult::AlreadyCompleted;
}

void BlockStore::wait_all() {
    std::unique_lock<std::mutex> lock(mutex_);
    idle_cv_.wait(lock, [&] { return in_flight_ == 0; });
}

void BlockStore::finish(const PendingIoPtr& io, PendingIo::State state,
                        std::string error) {
    std::function<void()> callback;
    {
        std::lock_guard<std::mutex> lock(io->mutex_);
        io->state_ = state;
        io->error_ = std::move(error);
        callback = std::move(io->on_complete_);
    }
    io->cv_.notify_all();
    if (state == PendingIo::State::Done) {
        if (io->kind() == PendingIo::Kind::Read)
            counters_.blocks_read.fetch_add(1, std::memory_order_relaxed);
        else
            counters_.blocks_written.fetch_add(1, std::memory_order_relaxed);
    }
    {
        std::lock_guard<std::mutex> lock(mutex_);
        pending_.erase(io->block());
        --in_flight_;
    }
    idle_cv_.notify_all();
    if (callback)
        callback();
}

void BlockStore::io_thread(BackingFile& file) {
    for (;;) {
        PendingIoPtr io;
        {
            std::unique_lock<std::mutex> lock(file.queue_mutex);
            file.queue_cv.wait(lock, [&] {
                return !file.queue.empty() || shutdown_.load();
            });
            if (file.queue.empty())
                return;
            io = file.queue.front();
            file.queue.pop_front();
        }
        {
            std::lock_guard<std::mutex> lock(io->mutex_);
            io->state_ = PendingIo::State::Running;
        }
        const std::uint64_t off = io->block().offset;
        std::byte* data = io->buffer_.data();
        std::size_t remaining = block_size_;
        std::size_t done = 0;
        bool failed = false;
        std::string error;
        while (remaining > 0) {
            ssize_t r;
            if (io->kind() == PendingIo::Kind::Write)
                r = ::pwrite(file.fd, data + done, remaining, off + done);
            else
                r = ::pread(file.fd, data + done, remaining, off + done);
            if (r < 0) {
                if (errno == EINTR)
                    continue;
                failed = true;
                error = std::string("block I/O failed on ") + file.path +
                        ": " + std::strerror(errno);
                break;
            }
            if (r == 0) {
                failed = true;
                error = "short block transfer on " + file.path;
                break;
            }
            done += static_cast<std::size_t>(r);
            remaining -= static_cast<std::size_t>(r);
        }
        finish(io, failed ? PendingIo::State::Failed : PendingIo::State::Done,
               std::move(error));
    }
}

} // namespace bulkpq
