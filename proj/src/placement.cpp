#include "splatsched/placement.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <ostream>
#include <sstream>

#include "json.hpp"
#include "splatsched/error.hpp"
#include "splatsched/hungarian.hpp"

namespace splatsched {

namespace {

std::int64_t max_of(const std::vector<std::int64_t>& x) {
  return x.empty() ? 0 : *std::max_element(x.begin(), x.end());
}

std::vector<std::int64_t> totals_or_row_sums(const AccessMatrix& access,
                                             std::span<const std::int64_t> row_totals) {
  if (row_totals.empty()) return access.row_sums();
  if (row_totals.size() != access.rows()) {
    throw ParameterError("row_totals", "expected " + std::to_string(access.rows()) + " entries");
  }
  std::vector<std::int64_t> t(row_totals.begin(), row_totals.end());
  for (std::size_t j = 0; j < t.size(); ++j) {
    if (t[j] < access.row_sum(j)) throw ParameterError("row_totals", "total below row sum");
  }
  return t;
}

// Raises non-negative loads to the p-th power, choosing the cheapest exact-ish
// form for the given p.
class PowerNorm {
 public:
  explicit PowerNorm(double p) : p_(p) {
    if (std::isinf(p)) {
      kind_ = Kind::kMax;
    } else if (p == 1.0) {
      kind_ = Kind::kOne;
    } else if (p == 2.0) {
      kind_ = Kind::kTwo;
    } else if (p == std::floor(p) && p <= 16.0) {
      kind_ = Kind::kInteger;
      int_p_ = static_cast<int>(p);
    } else {
      kind_ = Kind::kGeneral;
    }
  }

  bool is_max() const { return kind_ == Kind::kMax; }

  double power(double x) const {
    switch (kind_) {
      case Kind::kOne:
        return x;
      case Kind::kTwo:
        return x * x;
      case Kind::kInteger: {
        double r = x;
        for (int i = 1; i < int_p_; ++i) r *= x;
        return r;
      }
      default:
        return std::pow(x, p_);
    }
  }

  double root(double s) const {
    if (s <= 0.0) return 0.0;
    switch (kind_) {
      case Kind::kOne:
        return s;
      case Kind::kTwo:
        return std::sqrt(s);
      default:
        return std::pow(s, 1.0 / p_);
    }
  }

 private:
  enum class Kind { kOne, kTwo, kInteger, kGeneral, kMax };
  double p_;
  Kind kind_ = Kind::kGeneral;
  int int_p_ = 1;
};

// One load vector (send, recv or comp) with what is needed to evaluate its
// norm after changing two entries.
struct LoadTerm {
  std::vector<std::int64_t> x;
  double power_sum = 0.0;
  std::array<std::size_t, 3> top{};  // indices of the 3 largest, for p = inf

  void refresh(const PowerNorm& norm) {
    power_sum = 0.0;
    for (auto v : x) power_sum += norm.power(static_cast<double>(v));
    std::vector<std::size_t> idx(x.size());
    for (std::size_t k = 0; k < idx.size(); ++k) idx[k] = k;
    const std::size_t n_top = std::min<std::size_t>(3, idx.size());
    std::partial_sort(idx.begin(), idx.begin() + n_top, idx.end(),
                      [&](std::size_t a, std::size_t b) { return x[a] > x[b] || (x[a] == x[b] && a < b); });
    top.fill(x.size());
    for (std::size_t i = 0; i < n_top; ++i) top[i] = idx[i];
  }

  double norm_after(const PowerNorm& norm, std::size_t ka, std::int64_t va, std::size_t kb,
                    std::int64_t vb) const {
    if (norm.is_max()) {
      std::int64_t m = std::max(va, vb);
      for (auto k : top) {
        if (k == x.size()) break;
        if (k != ka && k != kb) {
          m = std::max(m, x[k]);
          break;
        }
      }
      return static_cast<double>(m);
    }
    const double s = power_sum - norm.power(static_cast<double>(x[ka])) -
                     norm.power(static_cast<double>(x[kb])) + norm.power(static_cast<double>(va)) +
                     norm.power(static_cast<double>(vb));
    return norm.root(s);
  }
};

struct Loads {
  std::vector<std::int64_t> send, recv, comp;
};

Loads compute_loads(const AccessMatrix& access, const std::vector<std::uint32_t>& w,
                    std::span<const std::int64_t> totals, std::size_t n_gpus) {
  Loads l{std::vector<std::int64_t>(n_gpus, 0), std::vector<std::int64_t>(n_gpus, 0),
          std::vector<std::int64_t>(n_gpus, 0)};
  for (std::size_t j = 0; j < access.rows(); ++j) {
    const std::size_t owner = w[j];
    for (std::size_t k = 0; k < n_gpus; ++k) {
      if (k != owner) l.send[k] += access(j, k);
    }
    l.recv[owner] += totals[j] - access(j, owner);
    l.comp[owner] += totals[j];
  }
  return l;
}

double relaxed_value(const Loads& l, const CostCoefficients& c) {
  const PowerNorm norm(c.p);
  double value = 0.0;
  for (auto [coef, vec] : {std::pair{c.beta, &l.send}, std::pair{c.gamma, &l.recv},
                           std::pair{c.delta, &l.comp}}) {
    if (coef == 0.0) continue;
    if (norm.is_max()) {
      value += coef * static_cast<double>(max_of(*vec));
    } else {
      double s = 0.0;
      for (auto v : *vec) s += norm.power(static_cast<double>(v));
      value += coef * norm.root(s);
    }
  }
  return value;
}

void check_solution_shape(const AccessMatrix& access, const PlacementSolution& w) {
  if (w.gpu_of_patch.size() != access.rows()) {
    throw ParameterError("placement", "solution has " + std::to_string(w.gpu_of_patch.size()) +
                                          " patches, matrix has " + std::to_string(access.rows()));
  }
  if (w.n_gpus != access.cols()) {
    throw ParameterError("placement", "solution has " + std::to_string(w.n_gpus) +
                                          " GPUs, matrix has " + std::to_string(access.cols()));
  }
  for (auto g : w.gpu_of_patch) {
    if (g >= w.n_gpus) throw ParameterError("placement", "GPU index out of range");
  }
}

void require_divisible(std::size_t patches, std::size_t gpus) {
  if (gpus == 0) throw ParameterError("n_gpus", "must be at least 1");
  if (patches % gpus != 0) {
    throw ConstraintError(std::to_string(patches) + " patches cannot be split evenly over " +
                          std::to_string(gpus) + " GPUs");
  }
}

}  // namespace

void CostCoefficients::validate() const {
  for (auto [name, v] : {std::pair{"alpha", alpha}, std::pair{"beta", beta},
                         std::pair{"gamma", gamma}, std::pair{"delta", delta}}) {
    if (!std::isfinite(v) || v < 0.0) throw ParameterError(name, "must be a non-negative number");
  }
  if (std::isnan(p) || p < 1.0) throw ParameterError("p", "must be >= 1 or infinite");
  if (alpha == 0.0 && beta == 0.0 && gamma == 0.0 && delta == 0.0) {
    throw ParameterError("coefficients", "at least one coefficient must be positive");
  }
}

std::vector<std::size_t> PlacementSolution::patch_counts() const {
  std::vector<std::size_t> counts(n_gpus, 0);
  for (auto g : gpu_of_patch) {
    if (g < n_gpus) ++counts[g];
  }
  return counts;
}

void check_cardinality(const PlacementSolution& w, std::size_t n_patches) {
  require_divisible(n_patches, w.n_gpus);
  const std::size_t want = n_patches / w.n_gpus;
  const auto counts = w.patch_counts();
  bool ok = w.gpu_of_patch.size() == n_patches;
  for (auto c : counts) ok = ok && c == want;
  if (ok) return;
  std::ostringstream msg;
  msg << "each GPU must hold " << want << " patches; counts are [";
  for (std::size_t k = 0; k < counts.size(); ++k) msg << (k ? "," : "") << counts[k];
  msg << "]";
  throw ConstraintError(msg.str());
}

double p_norm(std::span<const std::int64_t> x, double p) {
  const PowerNorm norm(p);
  if (norm.is_max()) {
    std::int64_t m = 0;
    for (auto v : x) m = std::max(m, v);
    return static_cast<double>(m);
  }
  double s = 0.0;
  for (auto v : x) s += norm.power(static_cast<double>(v));
  return norm.root(s);
}

ObjectiveBreakdown objective(const AccessMatrix& access, const PlacementSolution& w,
                             const CostCoefficients& c) {
  return objective(access, w, c, {});
}

ObjectiveBreakdown objective(const AccessMatrix& access, const PlacementSolution& w,
                             const CostCoefficients& c, std::span<const std::int64_t> row_totals) {
  c.validate();
  check_solution_shape(access, w);
  check_cardinality(w, access.rows());
  const auto totals = totals_or_row_sums(access, row_totals);
  Loads l = compute_loads(access, w.gpu_of_patch, totals, w.n_gpus);

  ObjectiveBreakdown b;
  for (std::size_t j = 0; j < access.rows(); ++j) b.total_local += access(j, w.gpu_of_patch[j]);
  b.max_send = max_of(l.send);
  b.max_recv = max_of(l.recv);
  b.max_comp = max_of(l.comp);
  b.exact = -c.alpha * static_cast<double>(b.total_local) +
            c.beta * static_cast<double>(b.max_send) + c.gamma * static_cast<double>(b.max_recv) +
            c.delta * static_cast<double>(b.max_comp);
  b.relaxed = relaxed_value(l, c);
  b.send = std::move(l.send);
  b.recv = std::move(l.recv);
  b.comp = std::move(l.comp);
  return b;
}

PlacementSolution lsa_assign(const AccessMatrix& access) {
  const std::size_t n = access.rows();
  const std::size_t gpus = access.cols();
  require_divisible(n, gpus);
  PlacementSolution w;
  w.n_gpus = static_cast<std::uint32_t>(gpus);
  w.gpu_of_patch.assign(n, 0);
  if (n == 0) return w;
  const std::size_t slots = n / gpus;

  CostMatrix m{n, std::vector<std::int64_t>(n * n)};
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t s = 0; s < n; ++s) m.cost[j * n + s] = -access(j, s / slots);
  }
  const auto slot_of = solve_assignment(m);
  for (std::size_t j = 0; j < n; ++j) w.gpu_of_patch[j] = static_cast<std::uint32_t>(slot_of[j] / slots);
  return w;
}

LocalSearchResult local_search(const AccessMatrix& access, const PlacementSolution& initial,
                               const CostCoefficients& c, const SearchBudget& budget,
                               std::span<const std::int64_t> row_totals) {
  c.validate();
  check_solution_shape(access, initial);
  check_cardinality(initial, access.rows());
  const auto totals = totals_or_row_sums(access, row_totals);
  const std::size_t n = access.rows();
  const std::size_t gpus = initial.n_gpus;
  const PowerNorm norm(c.p);
  const auto start = std::chrono::steady_clock::now();

  LocalSearchResult result;
  result.solution = initial;
  auto& w = result.solution.gpu_of_patch;

  Loads l = compute_loads(access, w, totals, gpus);
  LoadTerm send{l.send}, recv{l.recv}, comp{l.comp};
  auto refresh_all = [&] {
    send.refresh(norm);
    recv.refresh(norm);
    comp.refresh(norm);
  };
  refresh_all();
  double current = relaxed_value(l, c);
  result.initial_relaxed = current;

  while (gpus > 1 && result.sweeps < budget.max_sweeps) {
    if (budget.wall_time &&
        std::chrono::steady_clock::now() - start >= *budget.wall_time) {
      break;
    }
    ++result.sweeps;
    const double tol = 1e-12 * std::max(1.0, std::abs(current));
    double best = current;
    std::size_t best_a = n, best_b = n;
    for (std::size_t a = 0; a < n; ++a) {
      const std::size_t ka = w[a];
      const std::int64_t ta = totals[a];
      const std::int64_t a_ka = access(a, ka);
      for (std::size_t b = a + 1; b < n; ++b) {
        const std::size_t kb = w[b];
        if (kb == ka) continue;
        ++result.evaluations;
        const std::int64_t tb = totals[b];
        const std::int64_t b_kb = access(b, kb);
        const std::int64_t a_kb = access(a, kb);
        const std::int64_t b_ka = access(b, ka);
        double v = 0.0;
        if (c.beta != 0.0) {
          v += c.beta * send.norm_after(norm, ka, send.x[ka] + a_ka - b_ka, kb,
                                        send.x[kb] + b_kb - a_kb);
        }
        if (c.gamma != 0.0) {
          v += c.gamma * recv.norm_after(norm, ka, recv.x[ka] - (ta - a_ka) + (tb - b_ka), kb,
                                         recv.x[kb] - (tb - b_kb) + (ta - a_kb));
        }
        if (c.delta != 0.0) {
          v += c.delta * comp.norm_after(norm, ka, comp.x[ka] - ta + tb, kb, comp.x[kb] - tb + ta);
        }
        if (v < best - tol) {
          best = v;
          best_a = a;
          best_b = b;
        }
      }
    }
    if (best_a == n) break;

    // Apply, then confirm the improvement against a from-scratch recount so
    // rounding in the incremental sums can never accept a worsening swap.
    std::swap(w[best_a], w[best_b]);
    Loads fresh = compute_loads(access, w, totals, gpus);
    const double after = relaxed_value(fresh, c);
    if (!(after < current)) {
      std::swap(w[best_a], w[best_b]);
      break;
    }
    send.x = std::move(fresh.send);
    recv.x = std::move(fresh.recv);
    comp.x = std::move(fresh.comp);
    refresh_all();
    current = after;
    result.swaps.emplace_back(static_cast<std::uint32_t>(best_a),
                              static_cast<std::uint32_t>(best_b));
  }
  result.final_relaxed = current;
  return result;
}

CostCoefficients auto_coefficients(const ProfilerStats& stats, double p) {
  if (!std::isfinite(stats.t_comm) || !std::isfinite(stats.t_comp) || stats.t_comm < 0.0 ||
      stats.t_comp < 0.0) {
    throw ParameterError("profiler", "times must be non-negative");
  }
  if (stats.max_send < 0 || stats.max_recv < 0) {
    throw ParameterError("profiler", "loads must be non-negative");
  }
  const double t = stats.t_comm + stats.t_comp;
  if (!(t > 0.0)) throw ParameterError("profiler", "T_comm + T_comp must be positive");
  CostCoefficients c;
  c.alpha = 0.0;
  c.delta = stats.t_comp / t;
  const double share = stats.t_comm / t;
  const double loads = static_cast<double>(stats.max_recv + stats.max_send);
  if (loads == 0.0) {
    c.beta = c.gamma = share / 2.0;
  } else {
    c.beta = share * static_cast<double>(stats.max_recv) / loads;
    c.gamma = share * static_cast<double>(stats.max_send) / loads;
  }
  c.p = p;
  c.validate();
  return c;
}

HierarchicalPlacement hierarchical_place(const AccessMatrix& gpu_access, std::uint32_t machines,
                                         std::uint32_t gpus_per_machine,
                                         const CostCoefficients& inter,
                                         const CostCoefficients& intra,
                                         const SearchBudget& budget) {
  if (machines == 0) throw ParameterError("machines", "must be at least 1");
  if (gpus_per_machine == 0) throw ParameterError("gpus_per_machine", "must be at least 1");
  const std::size_t n_gpus = static_cast<std::size_t>(machines) * gpus_per_machine;
  if (gpu_access.cols() != n_gpus) {
    throw ParameterError("access", "matrix has " + std::to_string(gpu_access.cols()) +
                                       " columns, topology has " + std::to_string(n_gpus) + " GPUs");
  }
  const std::size_t n = gpu_access.rows();
  require_divisible(n, machines);
  require_divisible(n, n_gpus);

  HierarchicalPlacement out;
  if (machines == 1) {
    out.machine_solution = {std::vector<std::uint32_t>(n, 0), 1};
  } else {
    const AccessMatrix machine_access = gpu_access.merge_columns(gpus_per_machine);
    auto level1 = local_search(machine_access, lsa_assign(machine_access), inter, budget);
    out.swaps += level1.swaps.size();
    out.machine_solution = std::move(level1.solution);
  }

  out.solution.n_gpus = static_cast<std::uint32_t>(n_gpus);
  out.solution.gpu_of_patch.assign(n, 0);
  const auto totals = gpu_access.row_sums();
  for (std::uint32_t m = 0; m < machines; ++m) {
    std::vector<std::size_t> patches;
    for (std::size_t j = 0; j < n; ++j) {
      if (out.machine_solution.gpu_of_patch[j] == m) patches.push_back(j);
    }
    const std::uint32_t base = m * gpus_per_machine;
    if (gpus_per_machine == 1) {
      for (auto j : patches) out.solution.gpu_of_patch[j] = base;
      continue;
    }
    AccessMatrix sub(patches.size(), gpus_per_machine);
    std::vector<std::int64_t> sub_totals(patches.size());
    for (std::size_t r = 0; r < patches.size(); ++r) {
      for (std::uint32_t g = 0; g < gpus_per_machine; ++g) sub(r, g) = gpu_access(patches[r], base + g);
      sub_totals[r] = totals[patches[r]];
    }
    auto level2 = local_search(sub, lsa_assign(sub), intra, budget, sub_totals);
    out.swaps += level2.swaps.size();
    for (std::size_t r = 0; r < patches.size(); ++r) {
      out.solution.gpu_of_patch[patches[r]] = base + level2.solution.gpu_of_patch[r];
    }
  }
  return out;
}

double count_balanced_assignments(std::size_t n_patches, std::size_t n_gpus) {
  require_divisible(n_patches, n_gpus);
  const std::size_t slots = n_patches / n_gpus;
  double count = 1.0;
  std::size_t remaining = n_patches;
  for (std::size_t k = 0; k < n_gpus; ++k) {
    // C(remaining, slots)
    double binom = 1.0;
    for (std::size_t i = 1; i <= slots; ++i) {
      binom = binom * static_cast<double>(remaining - slots + i) / static_cast<double>(i);
    }
    count *= std::round(binom);
    remaining -= slots;
  }
  return count;
}

BruteForceResult brute_force_optimal(const AccessMatrix& access, const CostCoefficients& c,
                                     std::uint64_t limit) {
  c.validate();
  const std::size_t n = access.rows();
  const std::size_t gpus = access.cols();
  const double candidates = count_balanced_assignments(n, gpus);
  if (candidates > static_cast<double>(limit)) {
    throw SizeError("brute force would evaluate " + std::to_string(candidates) +
                    " assignments (limit " + std::to_string(limit) + ")");
  }
  const std::size_t slots = n / gpus;
  const auto totals = access.row_sums();

  BruteForceResult best;
  double best_value = std::numeric_limits<double>::infinity();
  std::vector<std::uint32_t> w(n, 0);
  std::vector<std::size_t> used(gpus, 0);
  std::vector<std::int64_t> send(gpus), recv(gpus), comp(gpus);

  auto evaluate = [&] {
    std::fill(send.begin(), send.end(), 0);
    std::fill(recv.begin(), recv.end(), 0);
    std::fill(comp.begin(), comp.end(), 0);
    std::int64_t local = 0;
    for (std::size_t j = 0; j < n; ++j) {
      const std::size_t owner = w[j];
      for (std::size_t k = 0; k < gpus; ++k) {
        if (k != owner) send[k] += access(j, k);
      }
      recv[owner] += totals[j] - access(j, owner);
      comp[owner] += totals[j];
      local += access(j, owner);
    }
    const double value = -c.alpha * static_cast<double>(local) +
                         c.beta * static_cast<double>(max_of(send)) +
                         c.gamma * static_cast<double>(max_of(recv)) +
                         c.delta * static_cast<double>(max_of(comp));
    ++best.evaluated;
    if (value < best_value) {
      best_value = value;
      best.solution = {w, static_cast<std::uint32_t>(gpus)};
    }
  };

  // Lexicographic enumeration of balanced W; the first minimum found is the
  // lexicographically smallest.
  auto recurse = [&](auto& self, std::size_t j) -> void {
    if (j == n) {
      evaluate();
      return;
    }
    for (std::size_t k = 0; k < gpus; ++k) {
      if (used[k] == slots) continue;
      ++used[k];
      w[j] = static_cast<std::uint32_t>(k);
      self(self, j + 1);
      --used[k];
    }
  };
  recurse(recurse, 0);
  if (n == 0) best.solution = {{}, static_cast<std::uint32_t>(gpus)};
  best.breakdown = objective(access, best.solution, c);
  return best;
}

void write_solution_csv(const PlacementSolution& w, std::ostream& out) {
  out << "patch_id,gpu\n";
  for (std::size_t j = 0; j < w.gpu_of_patch.size(); ++j) out << j << ',' << w.gpu_of_patch[j] << '\n';
}

void write_breakdown_json(const ObjectiveBreakdown& b, const CostCoefficients& c,
                          std::ostream& out) {
  nlohmann::ordered_json j;
  j["coefficients"] = {{"alpha", c.alpha}, {"beta", c.beta}, {"gamma", c.gamma},
                       {"delta", c.delta}};
  if (std::isinf(c.p)) {
    j["coefficients"]["p"] = "inf";
  } else {
    j["coefficients"]["p"] = c.p;
  }
  j["total_local"] = b.total_local;
  j["max_send"] = b.max_send;
  j["max_recv"] = b.max_recv;
  j["max_comp"] = b.max_comp;
  j["exact"] = b.exact;
  j["relaxed"] = b.relaxed;
  j["send"] = b.send;
  j["recv"] = b.recv;
  j["comp"] = b.comp;
  out << j.dump(2) << '\n';
}

}  // namespace splatsched
