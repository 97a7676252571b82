#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "taskaff/affinity.hpp"
#include "taskaff/mtl.hpp"
#include "taskaff/types.hpp"

namespace taskaff {

// kSimplex puts the group centroids at the vertices of a regular simplex
// (all pairwise distances equal) inside span(P_G X); needs num_groups <=
// feature_dim. kRandom uses random directions rescaled so the closest pair
// sits at the target distance.
enum class CentroidLayout { kSimplex, kRandom };

std::string to_string(CentroidLayout layout);
CentroidLayout parse_centroid_layout(const std::string& s);

// Synthetic linear-regression tasks whose label vectors fall into
// `num_groups` clusters under the projection onto span(P_G X).
struct PlantedConfig {
  std::size_t num_tasks = 20;      // T
  std::size_t num_groups = 4;      // C
  std::size_t feature_dim = 10;    // d
  std::size_t num_nodes = 600;     // N
  std::size_t observed = 500;      // m
  double within_sep = 1.0;         // a: max same-group projected distance
  double between_sep = 10.0;       // b_sep: min cross-group projected distance
  double label_bound = 10.0;       // B: sup-norm cap on every label vector
  double noise_std = 0.0;          // off-subspace label noise
  double graph_degree = 8.0;       // mean degree of the random graph behind P_G
  CentroidLayout layout = CentroidLayout::kSimplex;
  std::uint64_t seed = 0;

  void validate() const;
};

struct PlantedInstance {
  PlantedConfig config;
  Matrix x;                        // N x d, isotropic Gaussian rows
  Matrix pg;                       // N x N, I + 0.5 * symmetric-normalized adjacency
  Matrix features;                 // P_G X
  std::vector<NodeId> observed;    // m sorted row ids
  std::vector<NodeId> val_rows;    // held-out rows used for validation
  std::vector<NodeId> test_rows;   // remaining held-out rows
  Matrix labels;                   // N x T, column i is Y^(i)
  std::vector<std::size_t> group_of;
  Matrix sigma;                    // N x N projection onto span(P_G X)
  Matrix sigma_tilde;              // m x m projection onto span of observed rows
  double achieved_within = 0.0;    // max same-group ||Sigma (Y_i - Y_j)||
  double achieved_between = 0.0;   // min cross-group ||Sigma (Y_i - Y_j)||
  double label_sup = 0.0;          // max |Y| entry

  std::size_t num_tasks() const noexcept { return static_cast<std::size_t>(labels.cols()); }
  std::size_t num_observed() const noexcept { return observed.size(); }
  // Y~: m x T labels restricted to observed rows.
  Matrix observed_labels() const;
  Matrix observed_features() const;
};

// Builds an instance satisfying the separation bounds, retrying up to 100
// draws; throws GenerationError with the last achieved (a, b_sep) otherwise.
PlantedInstance generate(const PlantedConfig& config);

// F (F^T F)^+ F^T, the pseudo-inverse taken through an eigendecomposition
// of the Gram matrix with eigenvalues below 1e-14 * max treated as zero.
Matrix projection_matrix(const Matrix& f);

// max |P^2 - P|.
double idempotence_error(const Matrix& p);

// Real-valued tasks over inputs P_G X: train = observed rows, val/test =
// the held-out rows recorded in the instance.
Dataset to_dataset(const PlantedInstance& inst);

// Loss of task i after fitting the subset's mean label, in the projected
// form, and its two orthogonal pieces:
//   total     = ||S~ ybar - y_i||^2
//   projected = ||S~ (ybar - y_i)||^2
//   residual  = ||(I - S~) y_i||^2
// All values are sums over the m observed rows (not divided by m).
struct LossDecomposition {
  double total = 0.0;
  double projected = 0.0;
  double residual = 0.0;
};
LossDecomposition decompose_loss(const PlantedInstance& inst, const TaskSubset& subset, TaskId task);

// Loss-oriented theta computed from the projection formula with no
// training. Throws CoverageError when some pair never co-occurs.
AffinityMatrix theta_closed_form(const PlantedInstance& inst, std::span<const TaskSubset> subsets);

// Exact average over all C(T, alpha) subsets; InvalidInput above 1e6 subsets.
AffinityMatrix population_theta(const PlantedInstance& inst, std::size_t alpha);

// Calls visit(subset) for every size-k subset of {0..n-1} in lexicographic order.
void for_each_subset(std::size_t n, std::size_t k, const std::function<void(const TaskSubset&)>& visit);
double binomial(std::size_t n, std::size_t k);

struct BlockReport {
  // Per row: min cross-group theta minus max same-group theta (j != i);
  // empty for rows with no same-group partner.
  std::vector<std::optional<double>> per_row_gaps;
  double global_gap = 0.0;
  bool pass = false;
};

// Loss orientation expected (lower = closer). Needs at least two groups.
BlockReport verify_block_structure(const AffinityMatrix& theta, std::span<const std::size_t> group_of);

// Largest same-group squared projected label distance, the label variation
// not explained by the planted groups.
double within_group_spread(const PlantedInstance& inst);

// Directory with features.csv, pg.csv, labels.csv and meta.json.
void save_instance(const std::filesystem::path& dir, const PlantedInstance& inst);
PlantedInstance load_instance(const std::filesystem::path& dir);

}  // namespace taskaff
