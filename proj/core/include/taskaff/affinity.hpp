#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <vector>

#include "taskaff/mtl.hpp"
#include "taskaff/rng.hpp"
#include "taskaff/types.hpp"

namespace taskaff {

struct SamplingPlan {
  std::size_t num_tasks = 0;
  std::size_t subset_size = 10;    // alpha
  std::size_t num_subsets = 2000;  // n
  std::uint64_t seed = 0;
  // Extra subsets are appended until every pair co-occurs this often.
  std::size_t min_pair_coverage = 1;

  void validate() const;
};

// Default coverage guard: 1 for up to 200 tasks, otherwise off.
std::size_t default_min_pair_coverage(std::size_t num_tasks);

struct SampledSubsets {
  std::vector<TaskSubset> subsets;
  std::size_t requested = 0;  // the first `requested` entries are the i.i.d. draws
  std::size_t appended = 0;   // coverage top-ups after them
};

// One size-`size` subset of {0..num_tasks-1}, uniform over all of them.
TaskSubset sample_uniform_subset(std::size_t num_tasks, std::size_t size, Rng& rng);

// n i.i.d. uniform size-alpha subsets (repeats allowed), then coverage
// top-ups; throws CoverageError if 10n total subsets do not suffice.
SampledSubsets sample_subsets(const SamplingPlan& plan);

// Scores f_i(S) for every member of one subset; scores[k] belongs to subset[k].
struct SubsetEvaluation {
  TaskSubset subset;
  std::vector<double> scores;
  Metric metric = Metric::kNegCrossEntropy;
  std::uint64_t seed = 0;

  double score_of(TaskId task) const;
};

struct CollectOptions {
  std::size_t workers = 1;
  MaskKind mask = MaskKind::kVal;
  // Global index of subsets[0]; training seeds are keyed by global index.
  std::size_t index_offset = 0;
  // Called once per subset in ascending index order as results complete.
  std::function<void(std::size_t index, const SubsetEvaluation&)> on_complete;
};

std::uint64_t subset_training_seed(std::uint64_t base_seed, std::size_t index);

// Trains one model per subset and scores every member on `options.mask`.
// Training errors are rethrown tagged with the subset index.
std::vector<SubsetEvaluation> collect_evaluations(const Dataset& data,
                                                  std::span<const TaskSubset> subsets,
                                                  const LearnerSpec& spec, std::uint64_t base_seed,
                                                  const CollectOptions& options = {});

enum class Orientation { kPerformance, kLoss };

struct AffinityMatrix {
  Matrix theta;                // theta(i, j): mean of f_i(S) over S containing i and j
  IndexMatrix counts;          // counts(i, j): subsets containing both
  Orientation orientation = Orientation::kPerformance;
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> imputed;

  std::size_t num_tasks() const noexcept { return static_cast<std::size_t>(theta.rows()); }
};

// Averages the log into theta. Never co-sampled pairs take theta(i, i); a task
// never sampled at all takes the mean of every logged score. Both are flagged
// in `imputed`.
AffinityMatrix estimate_affinity(std::span<const SubsetEvaluation> evals, std::size_t num_tasks);

// Negates theta and flips the orientation flag.
AffinityMatrix flip_orientation(AffinityMatrix aff);

// Max-entry |theta(prefix) - theta(full)| for each checkpoint prefix size.
std::vector<double> convergence_trace(std::span<const SubsetEvaluation> evals,
                                      std::size_t num_tasks,
                                      std::span<const std::size_t> checkpoints);

// f_t(S) over logged subsets containing t (repeated subsets averaged).
using ScoreLog = std::map<TaskSubset, double>;
ScoreLog score_log_for(std::span<const SubsetEvaluation> evals, TaskId task);

struct MonotonicityViolation {
  TaskSubset smaller;
  TaskSubset larger;
  double smaller_score = 0.0;
  double larger_score = 0.0;
};

// Pairs S strictly inside S' (both containing `task`) with f(S') < f(S).
// Throws EmptyDomain when the log has no nested pair.
std::vector<MonotonicityViolation> probe_monotonicity(const ScoreLog& log, TaskId task);

struct SubmodularityViolation {
  TaskSubset inner;
  TaskSubset outer;
  TaskId added = 0;
  double inner_gain = 0.0;
  double outer_gain = 0.0;
};

// Quadruples S within S', x outside S', with f(S'+x) - f(S') > f(S+x) - f(S).
// Throws EmptyDomain when no quadruple has all four values logged.
std::vector<SubmodularityViolation> probe_submodularity(const ScoreLog& log, TaskId task);

// --- persistence ---

void save_subsets(const std::filesystem::path& path, const SampledSubsets& subsets);
SampledSubsets load_subsets(const std::filesystem::path& path);

// Evaluation log CSV: subset_index,task_id,score,metric,seed.
std::string evaluation_log_header();
std::string evaluation_log_rows(std::size_t index, const SubsetEvaluation& eval);

struct EvaluationLog {
  std::vector<SubsetEvaluation> evals;  // complete subsets 0..evals.size()-1
  std::size_t valid_bytes = 0;          // length of the well-formed prefix
};

// Reads the longest prefix of complete subsets (in index order) from a log
// written against `subsets`; anything after it is ignored.
EvaluationLog read_evaluation_log(const std::filesystem::path& path,
                                  std::span<const TaskSubset> subsets);

// theta.csv, counts.csv and affinity.json (orientation, imputed entries).
void save_affinity(const std::filesystem::path& dir, const AffinityMatrix& aff);
AffinityMatrix load_affinity(const std::filesystem::path& dir);

}  // namespace taskaff
