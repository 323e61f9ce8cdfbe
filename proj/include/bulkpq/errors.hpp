// errors.hpp
// Exception taxonomy shared by all queue components.

#pragma once

#include <stdexcept>
#include <string>

namespace bulkpq {

// Invalid configuration parameters.
class config_error : public std::runtime_error {
public:
    explicit config_error(const std::string& what) : std::runtime_error(what) {}
};

// Disk or file failures, including exhausted backing capacity.
class io_error : public std::runtime_error {
public:
    explicit io_error(const std::string& what) : std::runtime_error(what) {}
};

// top/pop style call on an empty container.
class empty_error : public std::runtime_error {
public:
    explicit empty_error(const std::string& what) : std::runtime_error(what) {}
};

// Illegal phase transition (bulk/limit session misuse).
class session_error : public std::runtime_error {
public:
    explicit session_error(const std::string& what) : std::runtime_error(what) {}
};

// Caller broke an operation contract (e.g. limit_push below the limit).
class contract_error : public std::runtime_error {
public:
    explicit contract_error(const std::string& what) : std::runtime_error(what) {}
};

} // namespace bulkpq
