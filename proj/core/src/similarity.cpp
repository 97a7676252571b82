#include "taskaff/similarity.hpp"

#include "taskaff/error.hpp"

namespace taskaff {

Matrix task_ppr_vectors(const Graph& g, const TaskSet& tasks, const PprOptions& opts) {
  if (tasks.num_nodes() != g.num_nodes()) throw InvalidInput("ppr: task set and graph disagree on N");
  Matrix out(static_cast<Eigen::Index>(g.num_nodes()), static_cast<Eigen::Index>(tasks.num_tasks()));
  for (TaskId t = 0; t < tasks.num_tasks(); ++t) {
    const Task& task = tasks.task(t);
    if (task.kind != LabelKind::kBinary) throw InvalidInput("ppr: task " + task.name + " is not binary");
    std::vector<NodeId> seeds;
    for (NodeId u : task.train)
      if (task.labels(static_cast<Eigen::Index>(u)) > 0.5) seeds.push_back(u);
    if (seeds.empty()) throw InvalidInput("ppr: task " + task.name + " has no training positives");
    out.col(static_cast<Eigen::Index>(t)) = personalized_pagerank(g, seeds, opts);
  }
  return out;
}

GroupSimilarity ppr_group_similarity(const Graph& g, const TaskSet& tasks,
                                     const TaskGrouping& grouping, const PprOptions& opts) {
  if (grouping.num_tasks() != tasks.num_tasks())
    throw InvalidInput("ppr_group_similarity: grouping covers a different task count");
  const Matrix r = task_ppr_vectors(g, tasks, opts);
  const Vector norms = r.colwise().norm().transpose();
  double within = 0.0, between = 0.0;
  GroupSimilarity out;
  const auto t = r.cols();
  for (Eigen::Index i = 0; i < t; ++i)
    for (Eigen::Index j = i + 1; j < t; ++j) {
      const double cos = r.col(i).dot(r.col(j)) / (norms(i) * norms(j));
      if (grouping.target_group[i] == grouping.target_group[j]) {
        within += cos;
        ++out.within_pairs;
      } else {
        between += cos;
        ++out.between_pairs;
      }
    }
  if (out.within_pairs) out.within_mean = within / static_cast<double>(out.within_pairs);
  if (out.between_pairs) out.between_mean = between / static_cast<double>(out.between_pairs);
  return out;
}

}  // namespace taskaff
