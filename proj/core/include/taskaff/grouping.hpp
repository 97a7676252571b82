#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "taskaff/affinity.hpp"
#include "taskaff/mtl.hpp"
#include "taskaff/types.hpp"

namespace taskaff {

// Clustering input built from a performance-oriented theta rescaled to
// [0, 1]. Rows 0..T-1 of `full` are target copies, rows T..2T-1 source copies:
//   full = [[A1, Theta], [Theta^T, 0]],  A1 = (Theta + Theta^T) / 2.
struct ClusterMatrix {
  Matrix a1;
  Matrix full;
  double rescale_min = 0.0;  // theta value mapped to 0
  double rescale_max = 1.0;  // theta value mapped to 1

  std::size_t num_tasks() const noexcept { return static_cast<std::size_t>(a1.rows()); }
};

// Throws InvalidInput for loss-oriented input and DegenerateInput for a
// constant theta.
ClusterMatrix build_cluster_matrix(const AffinityMatrix& aff);

struct KMeansOptions {
  std::size_t restarts = 10;
  std::size_t max_iterations = 300;
  double tol = 1e-6;  // max centroid shift
};

struct KMeansResult {
  std::vector<std::size_t> labels;
  Matrix centroids;
  double inertia = 0.0;
};

// Lloyd's algorithm from k-means++ seeds, best of `restarts` by inertia.
// Ties in assignment go to the lowest centroid index; an emptied cluster is
// reseeded with the point farthest from its centroid.
KMeansResult kmeans(const Matrix& points, std::size_t k, std::uint64_t seed,
                    const KMeansOptions& options = {});

// Normalized spectral clustering on a symmetric nonnegative affinity:
// eigenvectors of the k smallest eigenvalues of I - D^-1/2 A D^-1/2,
// rows scaled to unit length, then k-means. Degrees are floored at 1e-12.
std::vector<std::size_t> spectral_cluster(const Matrix& affinity, std::size_t k, std::uint64_t seed,
                                          const KMeansOptions& options = {});
std::vector<std::size_t> spectral_cluster(const ClusterMatrix& m, std::size_t k, std::uint64_t seed,
                                          const KMeansOptions& options = {});

struct TaskGrouping {
  std::vector<TaskSubset> groups;          // members, possibly overlapping
  std::vector<std::size_t> target_group;   // the one group serving each task as target
  std::vector<std::size_t> assignments;    // raw cluster label per copy (2T), may be empty
  std::size_t budget = 0;
  std::optional<double> objective;
  std::vector<double> per_task_scores;

  std::size_t num_tasks() const noexcept { return target_group.size(); }
};

// Merges target and source copies sharing a cluster label. Clusters holding
// no target copy are dropped; groups are ordered by their smallest target.
TaskGrouping derive_groups(std::span<const std::size_t> labels, std::size_t num_tasks,
                           std::size_t budget);

// Grouping where group g holds exactly the tasks with target_group g.
TaskGrouping partition_grouping(std::span<const std::size_t> group_of_task, std::size_t budget);

// One model per group, trained on the union of the members' training data.
std::vector<MtlModel> train_groups(const Dataset& data, const TaskGrouping& grouping,
                                   const LearnerSpec& spec, std::uint64_t seed,
                                   std::size_t workers = 1);

struct GroupingScore {
  std::vector<double> per_task;  // L_i
  double objective = 0.0;        // sum of L_i
};

// L_i = max over deployed models able to score task i (every linear model;
// mlp models only when i is a member) of the task's score on `mask`.
GroupingScore evaluate_grouping(std::span<const MtlModel> models, const Dataset& data,
                                Metric metric, MaskKind mask = MaskKind::kTest);

double adjusted_rand_index(std::span<const std::size_t> a, std::span<const std::size_t> b);

// JSON {groups, objective, per_task_scores, target_group, assignments, budget}.
void save_grouping(const std::filesystem::path& path, const TaskGrouping& grouping);
TaskGrouping load_grouping(const std::filesystem::path& path);

}  // namespace taskaff
