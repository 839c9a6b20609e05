#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

namespace splatsched {

/// Patch x GPU matrix of in-frustum point counts. Entry (j, k) is the number
/// of points patch j needs from GPU k.
class AccessMatrix {
 public:
  AccessMatrix() = default;
  AccessMatrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  std::int64_t operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  std::int64_t& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }

  std::span<const std::int64_t> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }
  std::span<std::int64_t> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }

  std::int64_t row_sum(std::size_t r) const;
  std::vector<std::int64_t> row_sums() const;
  std::int64_t total() const;

  /// Sums groups of `group` consecutive columns (GPU -> machine view).
  AccessMatrix merge_columns(std::size_t group) const;

  friend bool operator==(const AccessMatrix&, const AccessMatrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::int64_t> data_;
};

/// CSV with header "patch_id,gpu_0,...,gpu_{N-1}".
void write_access_csv(const AccessMatrix& m, std::ostream& out);
AccessMatrix read_access_csv(std::istream& in);

}  // namespace splatsched
