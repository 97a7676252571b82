#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <unordered_map>
#include <utility>
#include <vector>

#include "taskaff/types.hpp"

namespace taskaff {

// Immutable undirected graph in CSR form. Node ids are contiguous
// 0..N-1; `original_id(u)` maps back to the id used in the source file.
class Graph {
 public:
  using Edge = std::pair<NodeId, NodeId>;

  Graph() = default;

  // Edges may be listed in either direction and may repeat; self-loops are
  // dropped. `features` must have num_nodes rows or be empty (N x 0).
  // `original_ids` defaults to the identity.
  Graph(std::size_t num_nodes, std::span<const Edge> edges, Matrix features = {},
        std::vector<std::int64_t> original_ids = {});

  std::size_t num_nodes() const noexcept { return num_nodes_; }
  // Number of undirected edges.
  std::size_t num_edges() const noexcept { return neighbors_.size() / 2; }
  std::size_t feature_dim() const noexcept { return static_cast<std::size_t>(features_.cols()); }
  const Matrix& features() const noexcept { return features_; }

  std::span<const NodeId> neighbors(NodeId u) const {
    return {neighbors_.data() + offsets_[u], neighbors_.data() + offsets_[u + 1]};
  }
  std::size_t degree(NodeId u) const { return offsets_[u + 1] - offsets_[u]; }

  // Each undirected edge once, as (u, v) with u < v, sorted.
  std::vector<Edge> edges() const;

  std::int64_t original_id(NodeId u) const { return original_ids_[u]; }
  const std::vector<std::int64_t>& original_ids() const noexcept { return original_ids_; }
  std::optional<NodeId> internal_id(std::int64_t original) const;

  Graph with_features(Matrix features) const;

 private:
  std::size_t num_nodes_ = 0;
  std::vector<std::size_t> offsets_{0};
  std::vector<NodeId> neighbors_;
  Matrix features_;
  std::vector<std::int64_t> original_ids_;
  std::unordered_map<std::int64_t, NodeId> id_lookup_;
};

// SNAP ungraph format: one "u v" pair per line, '#' lines ignored. Ids are
// remapped in order of first appearance.
Graph load_edge_list(const std::filesystem::path& path);
void save_edge_list(const Graph& g, const std::filesystem::path& path);

// CSV "internal,original", one row per node.
void save_id_map(const Graph& g, const std::filesystem::path& path);

// Headerless CSV with N rows; row order is internal node id.
Matrix load_feature_csv(const std::filesystem::path& path, std::size_t num_nodes);

enum class DiffusionKind {
  kRowNormalized,        // D^-1 A
  kSymmetricNormalized,  // D^-1/2 A D^-1/2
  kPpr,                  // alpha * (I - (1 - alpha) D^-1 A)^-1
};

struct DiffusionOperator {
  DiffusionKind kind = DiffusionKind::kRowNormalized;
  double teleport = 0.15;  // kPpr only
};

// One application of the operator to a dense N x k block. Isolated nodes
// behave as if they carried a self-loop, so every operator row is defined.
Matrix apply_operator(const Graph& g, const DiffusionOperator& op, const Matrix& x);

// Dense N x N form of the operator.
Matrix dense_operator(const Graph& g, const DiffusionOperator& op);

// [X, PX, P^2 X, ..., P^hops X], column blocks ordered by hop.
Matrix diffuse_features(const Graph& g, const DiffusionOperator& op, std::size_t hops);

struct PprOptions {
  double teleport = 0.15;
  double tol = 1e-10;           // L1 change between iterates
  std::size_t max_iterations = 1000;
};

// Fixed point of r = a*s + (1-a) * P^T r with P the row-normalized walk and s
// uniform over `seeds`. Throws ConvergenceError after max_iterations.
Vector personalized_pagerank(const Graph& g, std::span<const NodeId> seeds,
                             const PprOptions& opts = {});

}  // namespace taskaff
