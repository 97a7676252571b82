#pragma once

#include <optional>

#include "taskaff/graph.hpp"
#include "taskaff/grouping.hpp"
#include "taskaff/tasks.hpp"

namespace taskaff {

// Mean pairwise cosine similarity between task PPR vectors, each seeded at
// the task's training positives. Pairs are unordered and counted once; two
// tasks are in the same group when they share a target group. A mean is
// empty when no pair of that kind exists.
struct GroupSimilarity {
  std::optional<double> within_mean;
  std::optional<double> between_mean;
  std::size_t within_pairs = 0;
  std::size_t between_pairs = 0;
};

// Binary tasks only; every task needs at least one training positive.
GroupSimilarity ppr_group_similarity(const Graph& g, const TaskSet& tasks,
                                     const TaskGrouping& grouping, const PprOptions& opts = {});

// PPR vector per task (columns), seeded at training positives.
Matrix task_ppr_vectors(const Graph& g, const TaskSet& tasks, const PprOptions& opts = {});

}  // namespace taskaff
