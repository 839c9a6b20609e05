#pragma once

#include <chrono>
#include <cstdint>
#include <iosfwd>
#include <limits>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "splatsched/access_matrix.hpp"

namespace splatsched {

inline constexpr double kInfiniteNorm = std::numeric_limits<double>::infinity();

/// Weights of the placement objective. `alpha` scales total (negated) local
/// access and only enters the exact objective; `p` is the norm used by the
/// relaxed objective that local search optimizes (+inf gives the max).
struct CostCoefficients {
  double alpha = 1.0;
  double beta = 0.25;
  double gamma = 0.25;
  double delta = 0.5;
  double p = 2.0;

  void validate() const;

  /// Machine-level defaults.
  static CostCoefficients inter_node() { return {1.0, 0.25, 0.25, 0.5, 2.0}; }
  /// GPU-level defaults inside a machine: alpha = 0, beta = gamma = 0.1 delta.
  static CostCoefficients intra_node() { return {0.0, 0.1, 0.1, 1.0, 2.0}; }
};

/// Patch -> GPU map W.
struct PlacementSolution {
  std::vector<std::uint32_t> gpu_of_patch;
  std::uint32_t n_gpus = 0;

  std::vector<std::size_t> patch_counts() const;

  friend bool operator==(const PlacementSolution&, const PlacementSolution&) = default;
};

/// Throws ConstraintError (listing the per-GPU counts) unless every GPU holds
/// exactly n_patches / n_gpus patches.
void check_cardinality(const PlacementSolution& w, std::size_t n_patches);

struct ObjectiveBreakdown {
  std::int64_t total_local = 0;
  std::vector<std::int64_t> send, recv, comp;
  std::int64_t max_send = 0;
  std::int64_t max_recv = 0;
  std::int64_t max_comp = 0;
  double exact = 0.0;
  double relaxed = 0.0;
};

/// p-norm of a non-negative load vector; p = +inf gives the max.
double p_norm(std::span<const std::int64_t> x, double p);

/// send_k = sum_j [W_j != k] A[j,k]; recv_k = sum_j [W_j = k] (T_j - A[j,k]);
/// comp_k = sum_j [W_j = k] T_j, with T_j the row sum of A.
ObjectiveBreakdown objective(const AccessMatrix& access, const PlacementSolution& w,
                             const CostCoefficients& c);

/// Same, with explicit per-row totals T_j (>= the row sum). Used for the
/// GPU level inside a machine, where a patch also reads remote points.
ObjectiveBreakdown objective(const AccessMatrix& access, const PlacementSolution& w,
                             const CostCoefficients& c, std::span<const std::int64_t> row_totals);

/// Maximizes total local access under equal per-GPU patch counts via the
/// Hungarian method on the slot-expanded square matrix.
PlacementSolution lsa_assign(const AccessMatrix& access);

struct SearchBudget {
  std::size_t max_sweeps = 1000;
  /// Unset means no wall-clock limit (fully deterministic).
  std::optional<std::chrono::microseconds> wall_time;
};

struct LocalSearchResult {
  PlacementSolution solution;
  /// Accepted swaps in order, as (patch_a, patch_b) with patch_a < patch_b.
  std::vector<std::pair<std::uint32_t, std::uint32_t>> swaps;
  std::size_t sweeps = 0;
  std::size_t evaluations = 0;
  double initial_relaxed = 0.0;
  double final_relaxed = 0.0;
};

/// Steepest-descent pairwise swaps on the relaxed objective. Each sweep
/// evaluates every pair of patches on different GPUs and applies the single
/// best strictly improving swap (lexicographically smallest pair on ties).
LocalSearchResult local_search(const AccessMatrix& access, const PlacementSolution& initial,
                               const CostCoefficients& c, const SearchBudget& budget = {},
                               std::span<const std::int64_t> row_totals = {});

struct ProfilerStats {
  double t_comm = 0.0;
  double t_comp = 0.0;
  std::int64_t max_send = 0;
  std::int64_t max_recv = 0;
};

/// delta = comp share; the comm share is split between beta and gamma in
/// proportion to max_recv and max_send; alpha = 0.
CostCoefficients auto_coefficients(const ProfilerStats& stats, double p);

struct HierarchicalPlacement {
  PlacementSolution solution;  // over all machines * gpus_per_machine GPUs
  PlacementSolution machine_solution;
  std::size_t swaps = 0;
};

/// Patches to machines (LSA + local search on machine-summed columns with
/// `inter`), then each machine's patches to its GPUs with `intra`.
HierarchicalPlacement hierarchical_place(const AccessMatrix& gpu_access, std::uint32_t machines,
                                         std::uint32_t gpus_per_machine,
                                         const CostCoefficients& inter,
                                         const CostCoefficients& intra,
                                         const SearchBudget& budget = {});

struct BruteForceResult {
  PlacementSolution solution;
  ObjectiveBreakdown breakdown;
  std::uint64_t evaluated = 0;
};

/// Number of assignments with equal per-GPU counts (multinomial), as a double.
double count_balanced_assignments(std::size_t n_patches, std::size_t n_gpus);

/// Exhaustive minimizer of the exact objective; ties go to the
/// lexicographically smallest W. Throws SizeError above `limit` candidates.
BruteForceResult brute_force_optimal(const AccessMatrix& access, const CostCoefficients& c,
                                     std::uint64_t limit = 1'000'000);

/// Solution CSV "patch_id,gpu" and breakdown JSON for trace replay.
void write_solution_csv(const PlacementSolution& w, std::ostream& out);
void write_breakdown_json(const ObjectiveBreakdown& b, const CostCoefficients& c,
                          std::ostream& out);

}  // namespace splatsched
