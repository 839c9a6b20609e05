#include "splatsched/access_matrix.hpp"

#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>

#include "splatsched/error.hpp"
#include "splatsched/partition_assignment.hpp"

namespace splatsched {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    if (!cell.empty() && cell.back() == '\r') cell.pop_back();
    cells.push_back(cell);
  }
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

std::int64_t parse_int(const std::string& s, std::uint64_t offset) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw FormatError(offset, "expected an integer, got '" + s + "'");
  }
}

}  // namespace

std::int64_t AccessMatrix::row_sum(std::size_t r) const {
  const auto rw = row(r);
  return std::accumulate(rw.begin(), rw.end(), std::int64_t{0});
}

std::vector<std::int64_t> AccessMatrix::row_sums() const {
  std::vector<std::int64_t> sums(rows_);
  for (std::size_t r = 0; r < rows_; ++r) sums[r] = row_sum(r);
  return sums;
}

std::int64_t AccessMatrix::total() const {
  return std::accumulate(data_.begin(), data_.end(), std::int64_t{0});
}

AccessMatrix AccessMatrix::merge_columns(std::size_t group) const {
  if (group == 0 || cols_ % group != 0) {
    throw ConstraintError("cannot merge " + std::to_string(cols_) + " columns in groups of " +
                          std::to_string(group));
  }
  AccessMatrix out(rows_, cols_ / group);
  for (std::size_t r = 0; r < rows_; ++r) {
    for (std::size_t c = 0; c < cols_; ++c) out(r, c / group) += (*this)(r, c);
  }
  return out;
}

void write_access_csv(const AccessMatrix& m, std::ostream& out) {
  out << "patch_id";
  for (std::size_t k = 0; k < m.cols(); ++k) out << ",gpu_" << k;
  out << '\n';
  for (std::size_t j = 0; j < m.rows(); ++j) {
    out << j;
    for (std::size_t k = 0; k < m.cols(); ++k) out << ',' << m(j, k);
    out << '\n';
  }
}

AccessMatrix read_access_csv(std::istream& in) {
  std::string line;
  std::uint64_t offset = 0;
  if (!std::getline(in, line)) throw FormatError(0, "empty access matrix CSV");
  const auto header = split_csv_line(line);
  if (header.size() < 2 || header[0] != "patch_id") {
    throw FormatError(0, "access matrix CSV must start with 'patch_id,gpu_0,...'");
  }
  for (std::size_t k = 1; k < header.size(); ++k) {
    if (header[k] != "gpu_" + std::to_string(k - 1)) {
      throw FormatError(0, "unexpected column '" + header[k] + "'");
    }
  }
  const std::size_t cols = header.size() - 1;
  offset += line.size() + 1;

  std::vector<std::vector<std::int64_t>> rows;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") {
      offset += line.size() + 1;
      continue;
    }
    const auto cells = split_csv_line(line);
    if (cells.size() != cols + 1) {
      throw FormatError(offset, "expected " + std::to_string(cols + 1) + " cells, got " +
                                    std::to_string(cells.size()));
    }
    if (parse_int(cells[0], offset) != static_cast<std::int64_t>(rows.size())) {
      throw FormatError(offset, "patch ids must be 0..B-1 in order");
    }
    std::vector<std::int64_t> row(cols);
    for (std::size_t k = 0; k < cols; ++k) {
      row[k] = parse_int(cells[k + 1], offset);
      if (row[k] < 0) throw FormatError(offset, "negative access count");
    }
    rows.push_back(std::move(row));
    offset += line.size() + 1;
  }
  AccessMatrix m(rows.size(), cols);
  for (std::size_t j = 0; j < rows.size(); ++j) {
    for (std::size_t k = 0; k < cols; ++k) m(j, k) = rows[j][k];
  }
  return m;
}

void write_partition_csv(const PartitionAssignment& a, std::ostream& out) {
  out << "group_id,machine,gpu\n";
  for (std::size_t g = 0; g < a.group_slots.size(); ++g) {
    out << g << ',' << a.group_slots[g].machine << ',' << a.group_slots[g].gpu << '\n';
  }
}

PartitionAssignment read_partition_csv(std::istream& in, std::uint32_t machines,
                                       std::uint32_t gpus_per_machine) {
  PartitionAssignment a;
  a.machines = machines;
  a.gpus_per_machine = gpus_per_machine;
  std::string line;
  if (!std::getline(in, line)) throw FormatError(0, "empty partition CSV");
  if (split_csv_line(line) != std::vector<std::string>{"group_id", "machine", "gpu"}) {
    throw FormatError(0, "partition CSV must start with 'group_id,machine,gpu'");
  }
  std::uint64_t offset = line.size() + 1;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") {
      offset += line.size() + 1;
      continue;
    }
    const auto cells = split_csv_line(line);
    if (cells.size() != 3) throw FormatError(offset, "expected 3 cells");
    if (parse_int(cells[0], offset) != static_cast<std::int64_t>(a.group_slots.size())) {
      throw FormatError(offset, "group ids must be 0..n-1 in order");
    }
    const auto machine = parse_int(cells[1], offset);
    const auto gpu = parse_int(cells[2], offset);
    if (machine < 0 || machine >= machines || gpu < 0 || gpu >= gpus_per_machine) {
      throw FormatError(offset, "slot outside the " + std::to_string(machines) + "x" +
                                    std::to_string(gpus_per_machine) + " topology");
    }
    a.group_slots.push_back({static_cast<std::uint32_t>(machine), static_cast<std::uint32_t>(gpu)});
    offset += line.size() + 1;
  }
  return a;
}

}  // namespace splatsched
