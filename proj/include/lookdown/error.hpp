#pragma once

#include <stdexcept>
#include <string>

namespace lookdown {

// Invalid argument to a public operation (non-positive rate, bad window, N < 2, ...).
class ParameterError : public std::invalid_argument {
 public:
  explicit ParameterError(const std::string& what) : std::invalid_argument(what) {}
};

// An event was applied out of time order.
class SequencingError : public std::logic_error {
 public:
  explicit SequencingError(const std::string& what) : std::logic_error(what) {}
};

// Evaluation outside the domain of a path.
class DomainError : public std::domain_error {
 public:
  explicit DomainError(const std::string& what) : std::domain_error(what) {}
};

// Backward reconstruction ran out of events before all lineages merged.
class InsufficientHistoryError : public std::runtime_error {
 public:
  explicit InsufficientHistoryError(const std::string& what) : std::runtime_error(what) {}
};

namespace detail {

inline void require(bool condition, const char* message) {
  if (!condition) throw ParameterError(message);
}

}  // namespace detail

}  // namespace lookdown
