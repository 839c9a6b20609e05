#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace splatsched {

/// Base of every error raised by the library. `category()` drives the CLI
/// exit code mapping.
class Error : public std::runtime_error {
 public:
  enum class Category { kUsage, kData, kConstraint };

  Error(Category category, const std::string& what)
      : std::runtime_error(what), category_(category) {}

  Category category() const noexcept { return category_; }

 private:
  Category category_;
};

/// An argument is outside its documented range. Carries the field name.
class ParameterError : public Error {
 public:
  ParameterError(std::string field, const std::string& what)
      : Error(Category::kUsage, field + ": " + what), field_(std::move(field)) {}

  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/// Malformed input file. `offset` is the byte offset where parsing failed.
class FormatError : public Error {
 public:
  FormatError(std::uint64_t offset, const std::string& what)
      : Error(Category::kData, what + " (at byte " + std::to_string(offset) + ")"),
        offset_(offset) {}

  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_;
};

class VersionError : public Error {
 public:
  explicit VersionError(const std::string& what) : Error(Category::kData, what) {}
};

/// Inputs are individually valid but do not fit together (e.g. partition
/// does not cover the cloud, temporal data missing for a temporal profile).
class ConsistencyError : public Error {
 public:
  explicit ConsistencyError(const std::string& what) : Error(Category::kData, what) {}
};

/// A cardinality or divisibility constraint is violated.
class ConstraintError : public Error {
 public:
  explicit ConstraintError(const std::string& what) : Error(Category::kConstraint, what) {}
};

/// The balance constraint cannot be met because a single vertex is too heavy.
class InfeasibleError : public Error {
 public:
  InfeasibleError(std::size_t vertex, const std::string& what)
      : Error(Category::kConstraint, what), vertex_(vertex) {}

  std::size_t vertex() const noexcept { return vertex_; }

 private:
  std::size_t vertex_;
};

/// Exhaustive search refused because the instance is too large.
class SizeError : public Error {
 public:
  explicit SizeError(const std::string& what) : Error(Category::kConstraint, what) {}
};

/// Two reports cannot be compared (different batch schedules).
class ComparisonError : public Error {
 public:
  explicit ComparisonError(const std::string& what) : Error(Category::kConstraint, what) {}
};

}  // namespace splatsched
