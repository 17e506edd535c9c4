#pragma once

#include <stdexcept>
#include <string>

namespace bidask {

/// Caller supplied something outside an operation's preconditions.
class InputError : public std::invalid_argument {
public:
    explicit InputError(const std::string& what) : std::invalid_argument(what) {}
};

/// A computation failed to produce a trustworthy number (non-convergence,
/// corrupt variance, too many invalid paths).
class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

namespace detail {

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw InputError(msg);
}

} // namespace detail
} // namespace bidask
