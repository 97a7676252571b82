#include "taskaff/graph.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <string>

#include "taskaff/error.hpp"
#include "taskaff/io.hpp"

namespace taskaff {

namespace fs = std::filesystem;

Graph::Graph(std::size_t num_nodes, std::span<const Edge> edges, Matrix features,
             std::vector<std::int64_t> original_ids)
    : num_nodes_(num_nodes), features_(std::move(features)), original_ids_(std::move(original_ids)) {
  if (features_.size() == 0) features_.resize(static_cast<Eigen::Index>(num_nodes), 0);
  if (static_cast<std::size_t>(features_.rows()) != num_nodes) {
    throw InvalidInput("feature matrix has " + std::to_string(features_.rows()) +
                       " rows, graph has " + std::to_string(num_nodes) + " nodes");
  }
  if (original_ids_.empty()) {
    original_ids_.resize(num_nodes);
    for (std::size_t i = 0; i < num_nodes; ++i) original_ids_[i] = static_cast<std::int64_t>(i);
  }
  if (original_ids_.size() != num_nodes) throw InvalidInput("id map size differs from node count");
  id_lookup_.reserve(num_nodes);
  for (std::size_t i = 0; i < num_nodes; ++i) {
    if (!id_lookup_.emplace(original_ids_[i], i).second)
      throw InvalidInput("duplicate original id " + std::to_string(original_ids_[i]));
  }

  std::vector<Edge> directed;
  directed.reserve(edges.size() * 2);
  for (auto [u, v] : edges) {
    if (u >= num_nodes || v >= num_nodes) throw InvalidInput("edge endpoint out of range");
    if (u == v) continue;
    directed.emplace_back(u, v);
    directed.emplace_back(v, u);
  }
  std::sort(directed.begin(), directed.end());
  directed.erase(std::unique(directed.begin(), directed.end()), directed.end());

  offsets_.assign(num_nodes + 1, 0);
  for (auto [u, v] : directed) ++offsets_[u + 1];
  for (std::size_t i = 0; i < num_nodes; ++i) offsets_[i + 1] += offsets_[i];
  neighbors_.resize(directed.size());
  for (std::size_t k = 0; k < directed.size(); ++k) neighbors_[k] = directed[k].second;
}

std::vector<Graph::Edge> Graph::edges() const {
  std::vector<Edge> out;
  out.reserve(num_edges());
  for (NodeId u = 0; u < num_nodes_; ++u)
    for (NodeId v : neighbors(u))
      if (u < v) out.emplace_back(u, v);
  return out;
}

std::optional<NodeId> Graph::internal_id(std::int64_t original) const {
  auto it = id_lookup_.find(original);
  if (it == id_lookup_.end()) return std::nullopt;
  return it->second;
}

Graph Graph::with_features(Matrix features) const {
  Graph out = *this;
  if (static_cast<std::size_t>(features.rows()) != num_nodes_)
    throw InvalidInput("feature matrix row count differs from node count");
  out.features_ = std::move(features);
  return out;
}

namespace {

std::int64_t parse_id(std::string_view tok, const std::string& path, std::size_t line) {
  std::int64_t v = 0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc{} || ptr != tok.data() + tok.size())
    throw ParseError(path, line, "bad node id '" + std::string(tok) + "'");
  return v;
}

}  // namespace

Graph load_edge_list(const fs::path& path) {
  io::require_exists(path);
  std::ifstream in(path);
  const auto name = path.string();
  std::vector<std::int64_t> ids;
  std::unordered_map<std::int64_t, NodeId> remap;
  std::vector<Graph::Edge> edges;
  auto intern = [&](std::int64_t id) {
    auto [it, inserted] = remap.emplace(id, ids.size());
    if (inserted) ids.push_back(id);
    return it->second;
  };
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto toks = io::split_ws(line);
    if (toks.empty() || toks.front().front() == '#') continue;
    if (toks.size() != 2) throw ParseError(name, lineno, "expected two node ids");
    const NodeId u = intern(parse_id(toks[0], name, lineno));
    const NodeId v = intern(parse_id(toks[1], name, lineno));
    edges.emplace_back(u, v);
  }
  if (ids.empty()) throw InvalidInput(name + ": graph has no nodes");
  const std::size_t n = ids.size();
  return Graph(n, edges, Matrix{}, std::move(ids));
}

void save_edge_list(const Graph& g, const fs::path& path) {
  std::string out = "# undirected edge list, original ids\n";
  for (auto [u, v] : g.edges()) {
    out += std::to_string(g.original_id(u));
    out += ' ';
    out += std::to_string(g.original_id(v));
    out += '\n';
  }
  io::write_text(path, out);
}

void save_id_map(const Graph& g, const fs::path& path) {
  std::string out;
  for (NodeId u = 0; u < g.num_nodes(); ++u) {
    out += std::to_string(u);
    out += ',';
    out += std::to_string(g.original_id(u));
    out += '\n';
  }
  io::write_text(path, out);
}

Matrix load_feature_csv(const fs::path& path, std::size_t num_nodes) {
  Matrix x = io::read_matrix_csv(path);
  if (static_cast<std::size_t>(x.rows()) != num_nodes) {
    throw InvalidInput(path.string() + ": expected " + std::to_string(num_nodes) +
                       " feature rows, found " + std::to_string(x.rows()));
  }
  return x;
}

namespace {

Matrix apply_row_normalized(const Graph& g, const Matrix& x) {
  Matrix out(x.rows(), x.cols());
  for (NodeId u = 0; u < g.num_nodes(); ++u) {
    const auto nbrs = g.neighbors(u);
    const auto r = static_cast<Eigen::Index>(u);
    if (nbrs.empty()) {
      out.row(r) = x.row(r);
      continue;
    }
    out.row(r).setZero();
    for (NodeId v : nbrs) out.row(r) += x.row(static_cast<Eigen::Index>(v));
    out.row(r) /= static_cast<double>(nbrs.size());
  }
  return out;
}

Matrix apply_symmetric(const Graph& g, const Matrix& x) {
  const auto n = g.num_nodes();
  Vector inv_sqrt(static_cast<Eigen::Index>(n));
  for (NodeId u = 0; u < n; ++u)
    inv_sqrt[static_cast<Eigen::Index>(u)] =
        1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(g.degree(u), 1)));
  Matrix out(x.rows(), x.cols());
  for (NodeId u = 0; u < n; ++u) {
    const auto r = static_cast<Eigen::Index>(u);
    const auto nbrs = g.neighbors(u);
    if (nbrs.empty()) {
      out.row(r) = x.row(r);
      continue;
    }
    out.row(r).setZero();
    for (NodeId v : nbrs) {
      const auto c = static_cast<Eigen::Index>(v);
      out.row(r) += inv_sqrt[c] * x.row(c);
    }
    out.row(r) *= inv_sqrt[r];
  }
  return out;
}

Matrix apply_ppr(const Graph& g, double teleport, const Matrix& x) {
  if (!(teleport > 0.0 && teleport <= 1.0)) throw InvalidInput("teleport must lie in (0, 1]");
  const double scale = std::max(1.0, x.cwiseAbs().sum());
  Matrix z = teleport * x;
  double delta = 0.0;
  for (std::size_t it = 0; it < 1000; ++it) {
    Matrix next = teleport * x + (1.0 - teleport) * apply_row_normalized(g, z);
    delta = (next - z).cwiseAbs().sum();
    z = std::move(next);
    if (delta <= 1e-10 * scale) return z;
  }
  throw ConvergenceError("ppr diffusion did not converge", delta);
}

}  // namespace

Matrix apply_operator(const Graph& g, const DiffusionOperator& op, const Matrix& x) {
  if (static_cast<std::size_t>(x.rows()) != g.num_nodes())
    throw InvalidInput("operator input row count differs from node count");
  switch (op.kind) {
    case DiffusionKind::kRowNormalized: return apply_row_normalized(g, x);
    case DiffusionKind::kSymmetricNormalized: return apply_symmetric(g, x);
    case DiffusionKind::kPpr: return apply_ppr(g, op.teleport, x);
  }
  throw InvalidInput("unknown diffusion kind");
}

Matrix dense_operator(const Graph& g, const DiffusionOperator& op) {
  const auto n = static_cast<Eigen::Index>(g.num_nodes());
  return apply_operator(g, op, Matrix::Identity(n, n));
}

Matrix diffuse_features(const Graph& g, const DiffusionOperator& op, std::size_t hops) {
  const Matrix& x = g.features();
  const auto d = x.cols();
  Matrix out(x.rows(), d * static_cast<Eigen::Index>(hops + 1));
  out.leftCols(d) = x;
  Matrix cur = x;
  for (std::size_t h = 1; h <= hops; ++h) {
    cur = apply_operator(g, op, cur);
    out.middleCols(d * static_cast<Eigen::Index>(h), d) = cur;
  }
  return out;
}

Vector personalized_pagerank(const Graph& g, std::span<const NodeId> seeds,
                             const PprOptions& opts) {
  if (seeds.empty()) throw InvalidInput("personalized_pagerank: empty seed set");
  if (!(opts.teleport > 0.0 && opts.teleport <= 1.0))
    throw InvalidInput("personalized_pagerank: teleport must lie in (0, 1]");
  if (!(opts.tol > 0.0)) throw InvalidInput("personalized_pagerank: tol must be positive");
  const auto n = static_cast<Eigen::Index>(g.num_nodes());
  Vector restart = Vector::Zero(n);
  for (NodeId s : seeds) {
    if (s >= g.num_nodes()) throw InvalidInput("personalized_pagerank: seed out of range");
    restart[static_cast<Eigen::Index>(s)] = 1.0;
  }
  restart /= restart.sum();

  Vector r = restart;
  double residual = 0.0;
  for (std::size_t it = 0; it < opts.max_iterations; ++it) {
    Vector walked = Vector::Zero(n);
    for (NodeId u = 0; u < g.num_nodes(); ++u) {
      const double mass = r[static_cast<Eigen::Index>(u)];
      if (mass == 0.0) continue;
      const auto nbrs = g.neighbors(u);
      if (nbrs.empty()) {
        walked[static_cast<Eigen::Index>(u)] += mass;
        continue;
      }
      const double share = mass / static_cast<double>(nbrs.size());
      for (NodeId v : nbrs) walked[static_cast<Eigen::Index>(v)] += share;
    }
    Vector next = opts.teleport * restart + (1.0 - opts.teleport) * walked;
    residual = (next - r).lpNorm<1>();
    r = std::move(next);
    if (residual <= opts.tol) return r;
  }
  throw ConvergenceError("personalized_pagerank did not converge", residual);
}

}  // namespace taskaff
