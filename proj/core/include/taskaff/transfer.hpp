#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "taskaff/affinity.hpp"
#include "taskaff/types.hpp"

namespace taskaff {

// One (target, subset) pair. features = 1_S o theta(target, :), so entries
// outside the subset are exactly zero. `negative` is true when the subset
// scored strictly below the target's single-task score.
struct TransferExample {
  TaskId target = 0;
  TaskSubset subset;
  Vector features;
  bool negative = false;
  double subset_score = 0.0;
};

Vector masked_affinity_features(const AffinityMatrix& aff, TaskId target, const TaskSubset& subset);

// Examples grouped by target task: result[i] holds one example per logged
// subset containing i. Throws InvalidInput when an STL score is missing.
std::vector<std::vector<TransferExample>> build_examples(std::span<const SubsetEvaluation> evals,
                                                         const std::map<TaskId, double>& stl_scores,
                                                         const AffinityMatrix& aff);

struct LogisticModel {
  Vector weights;
  double bias = 0.0;
  TaskId trained_for = 0;
  bool degenerate = false;  // single-class training data; constant prediction

  double probability(const Vector& x) const;
};

struct LogisticOptions {
  double l2 = 1e-4;
  std::size_t epochs = 5000;
  double learning_rate = 0.0;  // 0 picks 1 / (smoothness bound) automatically
  double threshold = 0.5;
  std::uint64_t seed = 0;
};

// Minimizes mean log loss + (l2 / 2) ||w||^2 (bias unpenalized) by
// full-batch gradient descent in standardized coordinates.
LogisticModel fit_logistic(const Matrix& x, const Vector& y, const LogisticOptions& options,
                           TaskId trained_for = 0);
LogisticModel fit_logistic(std::span<const TransferExample> examples, const LogisticOptions& options);

// The objective fit_logistic minimizes, for checking against other solvers.
double logistic_objective(const Matrix& x, const Vector& y, const Vector& weights, double bias,
                          double l2);

// F1 of the positive class; 0 when there are positives but none predicted.
double f1_score(const std::vector<bool>& predicted, const std::vector<bool>& truth);

struct F1Report {
  std::optional<double> macro_f1;            // mean over included tasks
  std::vector<std::optional<double>> per_task;
  std::vector<TaskId> excluded;              // no positive held-out example
};

F1Report evaluate_f1(std::span<const LogisticModel> models,
                     std::span<const std::vector<TransferExample>> held_out,
                     double threshold = 0.5);

// CSV: target,subset_json,label,score.
void save_examples_csv(const std::filesystem::path& path,
                       std::span<const std::vector<TransferExample>> examples,
                       std::span<const LogisticModel> models = {});

}  // namespace taskaff
