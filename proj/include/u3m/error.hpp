#pragma once

#include <stdexcept>
#include <string>

namespace u3m {

/// Shape or dimension disagreement between operands.
struct shape_error : std::runtime_error {
    explicit shape_error(const std::string& msg) : std::runtime_error("shape error: " + msg) {}
};

/// Invalid configuration value or combination, caught before any compute.
struct config_error : std::runtime_error {
    explicit config_error(const std::string& msg) : std::runtime_error("config error: " + msg) {}
};

/// Bad input data (files, labels, class indices, corrupt checkpoints).
struct data_error : std::runtime_error {
    explicit data_error(const std::string& msg) : std::runtime_error("data error: " + msg) {}
};

/// API misuse such as reusing a consumed tape or missing gradients.
struct state_error : std::runtime_error {
    explicit state_error(const std::string& msg) : std::runtime_error("state error: " + msg) {}
};

/// Non-finite values where the contract requires finite ones.
struct numeric_error : std::runtime_error {
    explicit numeric_error(const std::string& msg) : std::runtime_error("numeric error: " + msg) {}
};

/// Metric undefined for the accumulated counts.
struct metric_error : std::runtime_error {
    explicit metric_error(const std::string& msg) : std::runtime_error("metric error: " + msg) {}
};

/// Filesystem / stream failures.
struct io_error : std::runtime_error {
    explicit io_error(const std::string& msg) : std::runtime_error("io error: " + msg) {}
};

}  // namespace u3m
