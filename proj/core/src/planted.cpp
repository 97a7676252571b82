#include "taskaff/planted.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include <json.hpp>

#include "taskaff/error.hpp"
#include "taskaff/graph.hpp"
#include "taskaff/io.hpp"
#include "taskaff/rng.hpp"

namespace taskaff {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr std::size_t kMaxAttempts = 100;
constexpr double kMaxEnumerated = 1e6;

Matrix gaussian(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix m(rows, cols);
  // column-major fill order is part of the reproducibility contract
  for (Eigen::Index c = 0; c < cols; ++c)
    for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = normal(rng);
  return m;
}

Matrix random_propagation(std::size_t n, double mean_degree, Rng& rng) {
  std::vector<Graph::Edge> edges;
  const double p = n > 1 ? std::min(1.0, mean_degree / static_cast<double>(n - 1)) : 0.0;
  std::bernoulli_distribution coin(p);
  for (NodeId u = 0; u < n; ++u)
    for (NodeId v = u + 1; v < n; ++v)
      if (coin(rng)) edges.emplace_back(u, v);
  const Graph g(n, edges);
  Matrix pg = 0.5 * dense_operator(g, {DiffusionKind::kSymmetricNormalized, 0.15});
  pg.diagonal().array() += 1.0;
  return pg;
}

Matrix rows_of(const Matrix& m, std::span<const NodeId> rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) out.row(static_cast<Eigen::Index>(r)) = m.row(static_cast<Eigen::Index>(rows[r]));
  return out;
}

struct Separation {
  double within = 0.0;
  double between = std::numeric_limits<double>::infinity();
};

Separation measure(const Matrix& projected, std::span<const std::size_t> group_of) {
  Separation s;
  const auto t = static_cast<Eigen::Index>(group_of.size());
  for (Eigen::Index i = 0; i < t; ++i)
    for (Eigen::Index j = i + 1; j < t; ++j) {
      const double d = (projected.col(i) - projected.col(j)).norm();
      if (group_of[i] == group_of[j]) s.within = std::max(s.within, d);
      else s.between = std::min(s.between, d);
    }
  return s;
}

void split_holdout(PlantedInstance& inst) {
  const auto& cfg = inst.config;
  std::vector<char> seen(cfg.num_nodes, 0);
  for (NodeId r : inst.observed) seen[r] = 1;
  std::vector<NodeId> rest;
  for (NodeId r = 0; r < cfg.num_nodes; ++r)
    if (!seen[r]) rest.push_back(r);
  Rng rng = make_rng(cfg.seed, Stream::kHoldout);
  std::shuffle(rest.begin(), rest.end(), rng);
  const std::size_t nval = rest.size() / 2;
  inst.val_rows.assign(rest.begin(), rest.begin() + static_cast<std::ptrdiff_t>(nval));
  inst.test_rows.assign(rest.begin() + static_cast<std::ptrdiff_t>(nval), rest.end());
  std::sort(inst.val_rows.begin(), inst.val_rows.end());
  std::sort(inst.test_rows.begin(), inst.test_rows.end());
}

void derive_projections(PlantedInstance& inst) {
  inst.features = inst.pg * inst.x;
  inst.sigma = projection_matrix(inst.features);
  inst.sigma_tilde = projection_matrix(inst.observed_features());
}

// Accumulates loss-oriented theta from subsets, using S~ Y~ computed once.
class ThetaAccumulator {
 public:
  explicit ThetaAccumulator(const PlantedInstance& inst)
      : y_(inst.observed_labels()), proj_(inst.sigma_tilde * y_) {
    const auto t = static_cast<Eigen::Index>(inst.num_tasks());
    sum_ = Matrix::Zero(t, t);
    counts_ = IndexMatrix::Zero(t, t);
  }

  void add(const TaskSubset& s) {
    Vector mean = Vector::Zero(proj_.rows());
    for (TaskId j : s) mean += proj_.col(static_cast<Eigen::Index>(j));
    mean /= static_cast<double>(s.size());
    const double m = static_cast<double>(y_.rows());
    for (TaskId i : s) {
      const double loss = (mean - y_.col(static_cast<Eigen::Index>(i))).squaredNorm() / m;
      for (TaskId j : s) {
        sum_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) += loss;
        ++counts_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      }
    }
  }

  AffinityMatrix finish() const {
    const auto t = sum_.rows();
    std::vector<CoverageError::Pair> missing;
    for (Eigen::Index i = 0; i < t; ++i)
      for (Eigen::Index j = i; j < t; ++j)
        if (counts_(i, j) == 0) missing.emplace_back(i, j);
    if (!missing.empty()) throw CoverageError("closed-form theta", std::move(missing));
    AffinityMatrix aff;
    aff.theta = sum_.array() / counts_.cast<double>().array();
    aff.counts = counts_;
    aff.orientation = Orientation::kLoss;
    aff.imputed.setConstant(t, t, false);
    return aff;
  }

 private:
  Matrix y_;
  Matrix proj_;
  Matrix sum_;
  IndexMatrix counts_;
};

}  // namespace

std::string to_string(CentroidLayout layout) {
  return layout == CentroidLayout::kSimplex ? "simplex" : "random";
}

CentroidLayout parse_centroid_layout(const std::string& s) {
  if (s == "simplex") return CentroidLayout::kSimplex;
  if (s == "random") return CentroidLayout::kRandom;
  throw InvalidInput("unknown centroid layout '" + s + "' (expected simplex or random)");
}

void PlantedConfig::validate() const {
  if (num_tasks == 0) throw InvalidInput("planted: num_tasks must be positive");
  if (num_groups == 0 || num_groups > num_tasks)
    throw InvalidInput("planted: need 1 <= num_groups <= num_tasks");
  if (feature_dim == 0) throw InvalidInput("planted: feature_dim must be positive");
  if (observed == 0 || observed > num_nodes)
    throw InvalidInput("planted: need 1 <= observed <= num_nodes");
  if (!(within_sep >= 0.0) || !(between_sep >= 0.0))
    throw InvalidInput("planted: separations must be non-negative");
  if (!(label_bound > 0.0)) throw InvalidInput("planted: label_bound must be positive");
  if (layout == CentroidLayout::kSimplex && num_groups > 1 && num_groups > feature_dim)
    throw InvalidInput("planted: simplex layout needs num_groups <= feature_dim");
  if (!(noise_std >= 0.0)) throw InvalidInput("planted: noise_std must be non-negative");
  if (!(graph_degree >= 0.0)) throw InvalidInput("planted: graph_degree must be non-negative");
}

Matrix PlantedInstance::observed_labels() const { return rows_of(labels, observed); }
Matrix PlantedInstance::observed_features() const { return rows_of(features, observed); }

Matrix projection_matrix(const Matrix& f) {
  const Matrix gram = f.transpose() * f;
  Eigen::SelfAdjointEigenSolver<Matrix> eig(gram);
  const Vector& lambda = eig.eigenvalues();
  const double cutoff = 1e-14 * std::max(lambda.cwiseAbs().maxCoeff(), 0.0);
  Vector inv = Vector::Zero(lambda.size());
  for (Eigen::Index k = 0; k < lambda.size(); ++k)
    if (lambda(k) > cutoff) inv(k) = 1.0 / lambda(k);
  const Matrix fv = f * eig.eigenvectors();
  return fv * inv.asDiagonal() * fv.transpose();
}

double idempotence_error(const Matrix& p) { return (p * p - p).cwiseAbs().maxCoeff(); }

PlantedInstance generate(const PlantedConfig& cfg) {
  cfg.validate();
  const auto n = static_cast<Eigen::Index>(cfg.num_nodes);
  const auto t = static_cast<Eigen::Index>(cfg.num_tasks);
  Separation last;
  for (std::size_t attempt = 0; attempt < kMaxAttempts; ++attempt) {
    Rng rng = make_rng(cfg.seed, Stream::kPlanted, attempt);
    PlantedInstance inst;
    inst.config = cfg;
    inst.x = gaussian(n, static_cast<Eigen::Index>(cfg.feature_dim), rng);
    inst.pg = random_propagation(cfg.num_nodes, cfg.graph_degree, rng);

    std::vector<NodeId> rows(cfg.num_nodes);
    std::iota(rows.begin(), rows.end(), NodeId{0});
    std::shuffle(rows.begin(), rows.end(), rng);
    inst.observed.assign(rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(cfg.observed));
    std::sort(inst.observed.begin(), inst.observed.end());
    derive_projections(inst);

    // balanced random assignment of tasks to groups
    std::vector<std::size_t> order(cfg.num_tasks);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    inst.group_of.assign(cfg.num_tasks, 0);
    for (std::size_t k = 0; k < order.size(); ++k) inst.group_of[order[k]] = k % cfg.num_groups;

    const auto c = static_cast<Eigen::Index>(cfg.num_groups);
    const auto d = static_cast<Eigen::Index>(cfg.feature_dim);
    Matrix centroids = inst.features * gaussian(d, c, rng);
    if (cfg.layout == CentroidLayout::kSimplex && c >= 2) {
      // orthonormal frame inside span(F); vertices e_g - 1/C are sqrt(2) apart
      const Matrix frame = Eigen::HouseholderQR<Matrix>(centroids).householderQ() * Matrix::Identity(n, c);
      const Matrix vertices = Matrix::Identity(c, c).rowwise() - Vector::Constant(c, 1.0 / static_cast<double>(c)).transpose();
      centroids = frame * vertices * ((cfg.between_sep + cfg.within_sep) / std::sqrt(2.0));
    } else {
      double closest = std::numeric_limits<double>::infinity();
      for (Eigen::Index g = 0; g < c; ++g)
        for (Eigen::Index h = g + 1; h < c; ++h)
          closest = std::min(closest, (centroids.col(g) - centroids.col(h)).norm());
      if (c >= 2) {
        if (closest > 0.0) centroids *= (cfg.between_sep + cfg.within_sep) / closest;
      } else if (centroids.norm() > 0.0) {
        centroids *= std::max(cfg.between_sep, 1.0) / centroids.norm();
      }
    }

    const Matrix perturb = inst.features * gaussian(d, t, rng);
    const Matrix z = cfg.noise_std > 0.0 ? gaussian(n, t, rng) : Matrix::Zero(n, t);
    const Matrix noise = cfg.noise_std * (z - inst.sigma * z);

    inst.labels.resize(n, t);
    for (Eigen::Index i = 0; i < t; ++i) {
      Vector y = centroids.col(static_cast<Eigen::Index>(inst.group_of[i]));
      const double pn = perturb.col(i).norm();
      if (pn > 0.0) y += (0.5 * cfg.within_sep / pn) * perturb.col(i);
      y += noise.col(i);
      inst.labels.col(i) = y.cwiseMax(-cfg.label_bound).cwiseMin(cfg.label_bound);
    }
    inst.label_sup = inst.labels.cwiseAbs().maxCoeff();

    last = measure(inst.sigma * inst.labels, inst.group_of);
    const double slack = 1e-9 * std::max(1.0, cfg.between_sep + cfg.within_sep);
    const bool ok_within = last.within <= cfg.within_sep + slack;
    const bool ok_between = c < 2 || last.between >= cfg.between_sep - slack;
    if (!ok_within || !ok_between) continue;
    inst.achieved_within = last.within;
    inst.achieved_between = last.between;
    split_holdout(inst);
    return inst;
  }
  throw GenerationError("planted: separation bounds not met after 100 draws", last.within,
                        last.between);
}

Dataset to_dataset(const PlantedInstance& inst) {
  std::vector<Task> tasks;
  tasks.reserve(inst.num_tasks());
  for (std::size_t i = 0; i < inst.num_tasks(); ++i) {
    Task task;
    task.name = "task" + std::to_string(i);
    task.kind = LabelKind::kReal;
    task.labels = inst.labels.col(static_cast<Eigen::Index>(i));
    task.train = inst.observed;
    task.val = inst.val_rows;
    task.test = inst.test_rows;
    tasks.push_back(std::move(task));
  }
  return Dataset{inst.features, TaskSet(inst.config.num_nodes, std::move(tasks))};
}

LossDecomposition decompose_loss(const PlantedInstance& inst, const TaskSubset& subset,
                                 TaskId task) {
  if (subset.empty()) throw InvalidInput("decompose_loss: empty subset");
  const Matrix y = inst.observed_labels();
  Vector mean = Vector::Zero(y.rows());
  for (TaskId j : subset) mean += y.col(static_cast<Eigen::Index>(j));
  mean /= static_cast<double>(subset.size());
  const Vector yi = y.col(static_cast<Eigen::Index>(task));
  const Matrix& p = inst.sigma_tilde;
  LossDecomposition out;
  out.total = (p * mean - yi).squaredNorm();
  out.projected = (p * (mean - yi)).squaredNorm();
  out.residual = (yi - p * yi).squaredNorm();
  return out;
}

AffinityMatrix theta_closed_form(const PlantedInstance& inst, std::span<const TaskSubset> subsets) {
  ThetaAccumulator acc(inst);
  for (const auto& s : subsets) {
    for (TaskId j : s)
      if (j >= inst.num_tasks()) throw InvalidInput("theta_closed_form: task id out of range");
    acc.add(s);
  }
  return acc.finish();
}

double binomial(std::size_t n, std::size_t k) {
  if (k > n) return 0.0;
  k = std::min(k, n - k);
  double r = 1.0;
  for (std::size_t i = 1; i <= k; ++i) r = r * static_cast<double>(n - k + i) / static_cast<double>(i);
  return std::round(r);
}

void for_each_subset(std::size_t n, std::size_t k,
                     const std::function<void(const TaskSubset&)>& visit) {
  if (k > n) return;
  TaskSubset s(k);
  std::iota(s.begin(), s.end(), TaskId{0});
  while (true) {
    visit(s);
    // rightmost position that can still advance
    std::size_t pos = k;
    while (pos > 0 && s[pos - 1] == n - k + pos - 1) --pos;
    if (pos == 0) return;
    ++s[pos - 1];
    for (std::size_t q = pos; q < k; ++q) s[q] = s[q - 1] + 1;
  }
}

AffinityMatrix population_theta(const PlantedInstance& inst, std::size_t alpha) {
  const std::size_t t = inst.num_tasks();
  if (alpha < 2 || alpha > t) throw InvalidInput("population_theta: need 2 <= alpha <= T");
  if (binomial(t, alpha) > kMaxEnumerated)
    throw InvalidInput("population_theta: C(T, alpha) exceeds 1e6 subsets");
  ThetaAccumulator acc(inst);
  for_each_subset(t, alpha, [&](const TaskSubset& s) { acc.add(s); });
  return acc.finish();
}

BlockReport verify_block_structure(const AffinityMatrix& aff, std::span<const std::size_t> group_of) {
  const auto t = static_cast<Eigen::Index>(aff.num_tasks());
  if (static_cast<Eigen::Index>(group_of.size()) != t)
    throw InvalidInput("verify_block_structure: group_of size mismatch");
  std::vector<std::size_t> distinct(group_of.begin(), group_of.end());
  std::sort(distinct.begin(), distinct.end());
  if (std::unique(distinct.begin(), distinct.end()) - distinct.begin() < 2)
    throw InvalidInput("verify_block_structure: needs at least two groups");
  // work in loss orientation: small = close
  const Matrix loss = aff.orientation == Orientation::kLoss ? aff.theta : Matrix(-aff.theta);
  constexpr double inf = std::numeric_limits<double>::infinity();
  BlockReport r;
  double max_within = -inf, min_between = inf;
  for (Eigen::Index i = 0; i < t; ++i) {
    double w = -inf, b = inf;
    for (Eigen::Index j = 0; j < t; ++j) {
      if (j == i) continue;
      if (group_of[i] == group_of[j]) w = std::max(w, loss(i, j));
      else b = std::min(b, loss(i, j));
    }
    max_within = std::max(max_within, w);
    min_between = std::min(min_between, b);
    r.per_row_gaps.push_back(w == -inf ? std::nullopt : std::optional<double>(b - w));
  }
  r.global_gap = min_between - max_within;
  r.pass = r.global_gap > 0.0;
  return r;
}

double within_group_spread(const PlantedInstance& inst) {
  return inst.achieved_within * inst.achieved_within;
}

namespace {

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

}  // namespace

void save_instance(const fs::path& dir, const PlantedInstance& inst) {
  fs::create_directories(dir);
  io::write_matrix_csv(dir / "features.csv", inst.x);
  io::write_matrix_csv(dir / "pg.csv", inst.pg);
  io::write_matrix_csv(dir / "labels.csv", inst.labels);
  const auto& c = inst.config;
  json j;
  j["config"] = {{"num_tasks", c.num_tasks},       {"num_groups", c.num_groups},
                 {"feature_dim", c.feature_dim},   {"num_nodes", c.num_nodes},
                 {"observed", c.observed},         {"within_sep", c.within_sep},
                 {"between_sep", c.between_sep},   {"label_bound", c.label_bound},
                 {"noise_std", c.noise_std},       {"graph_degree", c.graph_degree},
                 {"layout", to_string(c.layout)},  {"seed", c.seed}};
  j["observed"] = inst.observed;
  j["val_rows"] = inst.val_rows;
  j["test_rows"] = inst.test_rows;
  j["group_of"] = inst.group_of;
  j["achieved_within"] = inst.achieved_within;
  j["achieved_between"] = finite_or_null(inst.achieved_between);
  j["label_sup"] = inst.label_sup;
  io::write_text(dir / "meta.json", j.dump(1) + "\n");
}

PlantedInstance load_instance(const fs::path& dir) {
  for (const char* name : {"features.csv", "pg.csv", "labels.csv", "meta.json"})
    io::require_exists(dir / name);
  PlantedInstance inst;
  try {
    const json j = json::parse(io::read_text(dir / "meta.json"));
    const json& c = j.at("config");
    auto& cfg = inst.config;
    cfg.num_tasks = c.at("num_tasks");
    cfg.num_groups = c.at("num_groups");
    cfg.feature_dim = c.at("feature_dim");
    cfg.num_nodes = c.at("num_nodes");
    cfg.observed = c.at("observed");
    cfg.within_sep = c.at("within_sep");
    cfg.between_sep = c.at("between_sep");
    cfg.label_bound = c.at("label_bound");
    cfg.noise_std = c.at("noise_std");
    cfg.graph_degree = c.at("graph_degree");
    cfg.layout = parse_centroid_layout(c.value("layout", std::string("simplex")));
    cfg.seed = c.at("seed");
    inst.observed = j.at("observed").get<std::vector<NodeId>>();
    inst.val_rows = j.at("val_rows").get<std::vector<NodeId>>();
    inst.test_rows = j.at("test_rows").get<std::vector<NodeId>>();
    inst.group_of = j.at("group_of").get<std::vector<std::size_t>>();
    inst.achieved_within = j.at("achieved_within");
    const json& b = j.at("achieved_between");
    inst.achieved_between = b.is_null() ? std::numeric_limits<double>::infinity() : b.get<double>();
    inst.label_sup = j.at("label_sup");
  } catch (const json::exception& e) {
    throw InvalidInput((dir / "meta.json").string() + ": " + e.what());
  }
  inst.config.validate();
  inst.x = io::read_matrix_csv(dir / "features.csv");
  inst.pg = io::read_matrix_csv(dir / "pg.csv");
  inst.labels = io::read_matrix_csv(dir / "labels.csv");
  const auto n = static_cast<Eigen::Index>(inst.config.num_nodes);
  if (inst.x.rows() != n || inst.x.cols() != static_cast<Eigen::Index>(inst.config.feature_dim) ||
      inst.pg.rows() != n || inst.pg.cols() != n || inst.labels.rows() != n ||
      inst.labels.cols() != static_cast<Eigen::Index>(inst.config.num_tasks) ||
      inst.group_of.size() != inst.config.num_tasks || inst.observed.size() != inst.config.observed)
    throw InvalidInput(dir.string() + ": planted instance files disagree with meta.json");
  derive_projections(inst);
  return inst;
}

}  // namespace taskaff
