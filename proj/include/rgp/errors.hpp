#pragma once

#include <stdexcept>
#include <string>

namespace rgp {

struct NotPositiveDefinite : std::runtime_error {
  explicit NotPositiveDefinite(const std::string& what)
      : std::runtime_error(what) {}
};

struct DimensionMismatch : std::invalid_argument {
  explicit DimensionMismatch(const std::string& what)
      : std::invalid_argument(what) {}
};

struct EmptySet : std::logic_error {
  explicit EmptySet(const std::string& what) : std::logic_error(what) {}
};

struct Infeasible : std::runtime_error {
  explicit Infeasible(const std::string& what) : std::runtime_error(what) {}
};

struct ConstraintViolation : std::runtime_error {
  explicit ConstraintViolation(const std::string& what)
      : std::runtime_error(what) {}
};

}  // namespace rgp
