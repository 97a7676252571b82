#include "taskaff/grouping.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include <json.hpp>

#include "taskaff/error.hpp"
#include "taskaff/io.hpp"
#include "taskaff/parallel.hpp"
#include "taskaff/rng.hpp"

namespace taskaff {

namespace fs = std::filesystem;
using json = nlohmann::json;

ClusterMatrix build_cluster_matrix(const AffinityMatrix& aff) {
  if (aff.orientation != Orientation::kPerformance)
    throw InvalidInput("build_cluster_matrix needs performance-oriented affinities");
  const Matrix& theta = aff.theta;
  if (theta.rows() != theta.cols() || theta.rows() == 0) throw InvalidInput("theta must be square");
  const double lo = theta.minCoeff();
  const double hi = theta.maxCoeff();
  if (!(hi > lo)) throw DegenerateInput("theta is constant; nothing to cluster");
  const Matrix scaled = (theta.array() - lo) / (hi - lo);
  const auto t = theta.rows();
  ClusterMatrix m;
  m.rescale_min = lo;
  m.rescale_max = hi;
  m.a1.resize(t, t);
  for (Eigen::Index i = 0; i < t; ++i)
    for (Eigen::Index j = 0; j < t; ++j) m.a1(i, j) = (scaled(i, j) + scaled(j, i)) / 2.0;
  m.full = Matrix::Zero(2 * t, 2 * t);
  m.full.topLeftCorner(t, t) = m.a1;
  m.full.topRightCorner(t, t) = scaled;
  m.full.bottomLeftCorner(t, t) = scaled.transpose();
  return m;
}

namespace {

struct Lloyd {
  std::vector<std::size_t> labels;
  Matrix centroids;
  double inertia;
};

Matrix kmeanspp_seeds(const Matrix& x, std::size_t k, Rng& rng) {
  const auto n = x.rows();
  Matrix c(static_cast<Eigen::Index>(k), x.cols());
  std::uniform_int_distribution<Eigen::Index> first(0, n - 1);
  c.row(0) = x.row(first(rng));
  Vector d2(n);
  for (Eigen::Index i = 0; i < n; ++i) d2[i] = (x.row(i) - c.row(0)).squaredNorm();
  for (std::size_t j = 1; j < k; ++j) {
    const double total = d2.sum();
    Eigen::Index pick = 0;
    if (total > 0.0) {
      std::uniform_real_distribution<double> u(0.0, total);
      double r = u(rng);
      pick = n - 1;
      for (Eigen::Index i = 0; i < n; ++i) {
        r -= d2[i];
        if (r < 0.0 && d2[i] > 0.0) { pick = i; break; }
      }
    } else {
      pick = first(rng);
    }
    c.row(static_cast<Eigen::Index>(j)) = x.row(pick);
    for (Eigen::Index i = 0; i < n; ++i)
      d2[i] = std::min(d2[i], (x.row(i) - c.row(static_cast<Eigen::Index>(j))).squaredNorm());
  }
  return c;
}

Lloyd lloyd(const Matrix& x, Matrix c, const KMeansOptions& opt) {
  const auto n = x.rows();
  const auto k = c.rows();
  std::vector<std::size_t> labels(static_cast<std::size_t>(n), 0);
  Vector dist(n);
  auto assign = [&] {
    for (Eigen::Index i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      std::size_t arg = 0;
      for (Eigen::Index j = 0; j < k; ++j) {
        const double d = (x.row(i) - c.row(j)).squaredNorm();
        if (d < best) { best = d; arg = static_cast<std::size_t>(j); }
      }
      labels[static_cast<std::size_t>(i)] = arg;
      dist[i] = best;
    }
  };
  assign();
  for (std::size_t it = 0; it < opt.max_iterations; ++it) {
    Matrix next = Matrix::Zero(k, x.cols());
    std::vector<std::size_t> sizes(static_cast<std::size_t>(k), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      next.row(static_cast<Eigen::Index>(labels[static_cast<std::size_t>(i)])) += x.row(i);
      ++sizes[labels[static_cast<std::size_t>(i)]];
    }
    for (Eigen::Index j = 0; j < k; ++j) {
      if (sizes[static_cast<std::size_t>(j)] > 0) {
        next.row(j) /= static_cast<double>(sizes[static_cast<std::size_t>(j)]);
        continue;
      }
      Eigen::Index far = 0;
      dist.maxCoeff(&far);
      next.row(j) = x.row(far);
      dist[far] = 0.0;
    }
    const double shift = (next - c).rowwise().norm().maxCoeff();
    c = std::move(next);
    assign();
    if (shift <= opt.tol) break;
  }
  return {std::move(labels), std::move(c), dist.sum()};
}

}  // namespace

KMeansResult kmeans(const Matrix& points, std::size_t k, std::uint64_t seed,
                    const KMeansOptions& options) {
  if (k == 0) throw InvalidInput("kmeans: k must be at least 1");
  if (k > static_cast<std::size_t>(points.rows()))
    throw InvalidInput("kmeans: k exceeds the number of points");
  KMeansResult best;
  best.inertia = std::numeric_limits<double>::infinity();
  const std::size_t restarts = std::max<std::size_t>(options.restarts, 1);
  for (std::size_t r = 0; r < restarts; ++r) {
    Rng rng = make_rng(seed, Stream::kClustering, r);
    Lloyd run = lloyd(points, kmeanspp_seeds(points, k, rng), options);
    if (run.inertia < best.inertia) {
      best.labels = std::move(run.labels);
      best.centroids = std::move(run.centroids);
      best.inertia = run.inertia;
    }
  }
  return best;
}

std::vector<std::size_t> spectral_cluster(const Matrix& a, std::size_t k, std::uint64_t seed,
                                          const KMeansOptions& options) {
  const auto n = a.rows();
  if (a.cols() != n) throw InvalidInput("spectral_cluster: matrix must be square");
  if (k == 0 || k > static_cast<std::size_t>(n))
    throw InvalidInput("spectral_cluster: k must lie in 1..matrix size");
  if (a.minCoeff() < 0.0) throw InvalidInput("spectral_cluster: matrix must be nonnegative");
  if (k == 1) return std::vector<std::size_t>(static_cast<std::size_t>(n), 0);

  Vector inv_sqrt(n);
  for (Eigen::Index i = 0; i < n; ++i) inv_sqrt[i] = 1.0 / std::sqrt(std::max(a.row(i).sum(), 1e-12));
  Matrix lap = -(inv_sqrt.asDiagonal() * a * inv_sqrt.asDiagonal());
  lap.diagonal().array() += 1.0;
  lap = (lap + lap.transpose()).eval() / 2.0;
  Eigen::SelfAdjointEigenSolver<Matrix> eig(lap);
  if (eig.info() != Eigen::Success) throw Error("spectral_cluster: eigendecomposition failed");
  Matrix u = eig.eigenvectors().leftCols(static_cast<Eigen::Index>(k));
  for (Eigen::Index i = 0; i < n; ++i) {
    const double norm = u.row(i).norm();
    if (norm > 0.0) u.row(i) /= norm;
  }
  return kmeans(u, k, seed, options).labels;
}

std::vector<std::size_t> spectral_cluster(const ClusterMatrix& m, std::size_t k, std::uint64_t seed,
                                          const KMeansOptions& options) {
  return spectral_cluster(m.full, k, seed, options);
}

TaskGrouping derive_groups(std::span<const std::size_t> labels, std::size_t num_tasks,
                           std::size_t budget) {
  if (labels.size() != 2 * num_tasks) throw InvalidInput("derive_groups: expected 2T labels");
  std::map<std::size_t, std::pair<TaskSubset, TaskSubset>> clusters;  // label -> (targets, sources)
  for (TaskId i = 0; i < num_tasks; ++i) {
    clusters[labels[i]].first.push_back(i);
    clusters[labels[num_tasks + i]].second.push_back(i);
  }
  if (clusters.size() > budget)
    throw InvalidInput("derive_groups: " + std::to_string(clusters.size()) + " clusters exceed budget " +
                       std::to_string(budget));
  std::vector<std::pair<TaskSubset, TaskSubset>> kept;
  for (auto& [label, members] : clusters)
    if (!members.first.empty()) kept.push_back(std::move(members));
  std::sort(kept.begin(), kept.end(), [](const auto& x, const auto& y) { return x.first.front() < y.first.front(); });

  TaskGrouping g;
  g.budget = budget;
  g.assignments.assign(labels.begin(), labels.end());
  g.target_group.assign(num_tasks, 0);
  for (std::size_t gi = 0; gi < kept.size(); ++gi) {
    const auto& [targets, sources] = kept[gi];
    TaskSubset members;
    std::set_union(targets.begin(), targets.end(), sources.begin(), sources.end(), std::back_inserter(members));
    for (TaskId t : targets) g.target_group[t] = gi;
    g.groups.push_back(std::move(members));
  }
  return g;
}

TaskGrouping partition_grouping(std::span<const std::size_t> group_of_task, std::size_t budget) {
  std::map<std::size_t, TaskSubset> by_label;
  for (TaskId i = 0; i < group_of_task.size(); ++i) by_label[group_of_task[i]].push_back(i);
  if (by_label.size() > budget) throw InvalidInput("partition_grouping: more groups than budget");
  std::vector<TaskSubset> groups;
  for (auto& [label, members] : by_label) groups.push_back(std::move(members));
  std::sort(groups.begin(), groups.end(), [](const auto& x, const auto& y) { return x.front() < y.front(); });
  TaskGrouping g;
  g.budget = budget;
  g.target_group.assign(group_of_task.size(), 0);
  for (std::size_t gi = 0; gi < groups.size(); ++gi)
    for (TaskId t : groups[gi]) g.target_group[t] = gi;
  g.groups = std::move(groups);
  return g;
}

std::vector<MtlModel> train_groups(const Dataset& data, const TaskGrouping& grouping,
                                   const LearnerSpec& spec, std::uint64_t seed, std::size_t workers) {
  if (grouping.groups.empty()) throw InvalidInput("train_groups: grouping has no groups");
  std::vector<MtlModel> models(grouping.groups.size());
  parallel_for(grouping.groups.size(), workers, [&](std::size_t g) {
    try {
      models[g] = train_subset(data, grouping.groups[g], spec, derive_seed(seed, Stream::kGrouping, g));
    } catch (const TrainingError& e) {
      throw TrainingError("group " + std::to_string(g), e);
    }
  });
  return models;
}

GroupingScore evaluate_grouping(std::span<const MtlModel> models, const Dataset& data,
                                Metric metric, MaskKind mask) {
  if (models.empty()) throw InvalidInput("evaluate_grouping: no models");
  GroupingScore out;
  out.per_task.resize(data.num_tasks());
  std::vector<CoverageError::Pair> missing;
  for (TaskId i = 0; i < data.num_tasks(); ++i) {
    double best = -std::numeric_limits<double>::infinity();
    bool covered = false;
    for (const MtlModel& m : models) {
      if (m.kind == LearnerKind::kSharedEncoderMlp && !m.has_head(i)) continue;
      best = std::max(best, evaluate(m, data, i, mask, metric));
      covered = true;
    }
    if (!covered) missing.emplace_back(i, i);
    out.per_task[i] = best;
  }
  if (!missing.empty()) throw CoverageError("evaluate_grouping: tasks covered by no model", std::move(missing));
  for (double v : out.per_task) out.objective += v;
  return out;
}

double adjusted_rand_index(std::span<const std::size_t> a, std::span<const std::size_t> b) {
  if (a.size() != b.size()) throw InvalidInput("adjusted_rand_index: length mismatch");
  const auto n = a.size();
  if (n < 2) return 1.0;
  std::map<std::pair<std::size_t, std::size_t>, double> table;
  std::map<std::size_t, double> rows, cols;
  for (std::size_t i = 0; i < n; ++i) {
    table[{a[i], b[i]}] += 1.0;
    rows[a[i]] += 1.0;
    cols[b[i]] += 1.0;
  }
  auto c2 = [](double x) { return x * (x - 1.0) / 2.0; };
  double index = 0.0, sum_rows = 0.0, sum_cols = 0.0;
  for (const auto& [key, v] : table) index += c2(v);
  for (const auto& [key, v] : rows) sum_rows += c2(v);
  for (const auto& [key, v] : cols) sum_cols += c2(v);
  const double expected = sum_rows * sum_cols / c2(static_cast<double>(n));
  const double max_index = (sum_rows + sum_cols) / 2.0;
  if (max_index == expected) return 1.0;
  return (index - expected) / (max_index - expected);
}

void save_grouping(const fs::path& path, const TaskGrouping& g) {
  json j;
  j["groups"] = g.groups;
  j["objective"] = g.objective ? json(*g.objective) : json(nullptr);
  j["per_task_scores"] = g.per_task_scores.empty() ? json(nullptr) : json(g.per_task_scores);
  j["target_group"] = g.target_group;
  j["assignments"] = g.assignments;
  j["budget"] = g.budget;
  io::write_text(path, j.dump(1) + "\n");
}

TaskGrouping load_grouping(const fs::path& path) {
  try {
    const json j = json::parse(io::read_text(path));
    TaskGrouping g;
    g.groups = j.at("groups").get<std::vector<TaskSubset>>();
    if (!j.at("objective").is_null()) g.objective = j.at("objective").get<double>();
    if (!j.at("per_task_scores").is_null()) g.per_task_scores = j.at("per_task_scores").get<std::vector<double>>();
    g.target_group = j.at("target_group").get<std::vector<std::size_t>>();
    g.assignments = j.value("assignments", std::vector<std::size_t>{});
    g.budget = j.at("budget").get<std::size_t>();
    for (std::size_t t = 0; t < g.target_group.size(); ++t)
      if (g.target_group[t] >= g.groups.size() ||
          !std::binary_search(g.groups[g.target_group[t]].begin(), g.groups[g.target_group[t]].end(), t))
        throw InvalidInput("grouping: task " + std::to_string(t) + " missing from its target group");
    return g;
  } catch (const json::exception& e) {
    throw InvalidInput(path.string() + ": " + e.what());
  }
}

}  // namespace taskaff
