#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "taskaff/tasks.hpp"
#include "taskaff/types.hpp"

namespace taskaff {

// Model inputs for every node (diffused features) plus the tasks defined on
// them. Row v of `inputs` belongs to node v.
struct Dataset {
  Matrix inputs;
  TaskSet tasks;

  std::size_t num_tasks() const noexcept { return tasks.num_tasks(); }
};

enum class LearnerKind { kClosedFormLinear, kSharedEncoderMlp };
enum class Metric { kNegCrossEntropy, kNegMse, kF1 };

std::string to_string(LearnerKind kind);
std::string to_string(Metric metric);
LearnerKind parse_learner_kind(const std::string& s);
Metric parse_metric(const std::string& s);

struct LearnerSpec {
  LearnerKind kind = LearnerKind::kClosedFormLinear;
  std::size_t hidden_width = 64;
  std::size_t hidden_layers = 1;
  double learning_rate = 0.05;
  std::size_t epochs = 500;
  double ridge = 0.0;
  Metric metric = Metric::kNegCrossEntropy;
  // Learning rates at or below this are expected to give a non-increasing
  // training loss; increases are recorded in TrainStats, not thrown.
  double stable_learning_rate = 0.1;

  void validate() const;
};

struct DenseLayer {
  Matrix weight;  // out x in
  Vector bias;
};

struct Head {
  Vector weight;
  double bias = 0.0;
};

struct TrainStats {
  double initial_loss = 0.0;
  double final_loss = 0.0;
  bool loss_increased = false;  // only meaningful below stable_learning_rate
  std::size_t epochs_run = 0;
};

// A model trained on one task subset. The linear kind keeps a single shared
// weight vector and no heads; the mlp kind keeps an encoder plus one head per
// subset member (heads[k] serves subset[k]).
struct MtlModel {
  LearnerKind kind = LearnerKind::kClosedFormLinear;
  TaskSubset subset;
  std::uint64_t seed = 0;
  Vector linear_weights;
  std::vector<DenseLayer> encoder;
  std::vector<Head> heads;
  TrainStats stats;

  bool has_head(TaskId task) const;
  std::size_t input_dim() const;
};

// Minimum-norm ridge least squares: (F^T F + ridge I)^+ F^T mean(labels).
// With ridge == 0 singular values below 1e-10 * sigma_max are truncated.
Vector fit_closed_form(const Matrix& features, std::span<const Vector> labels, double ridge);

// Trains on the union of the subset's training masks. The mlp minimizes the
// unweighted task mean of per-task training losses by full-batch gradient
// descent; results depend only on (subset, seed).
MtlModel train_subset(const Dataset& data, const TaskSubset& subset, const LearnerSpec& spec,
                      std::uint64_t seed);

// Raw model outputs for `task` on `rows`: probabilities for binary tasks
// under the mlp, real values otherwise.
Vector predict(const MtlModel& model, const Dataset& data, TaskId task,
               std::span<const NodeId> rows);

// Higher-is-better score of predictions against labels. Probabilities are
// clipped to [1e-12, 1 - 1e-12] for cross-entropy; F1 thresholds at 0.5.
double score_predictions(const Vector& predictions, const Vector& labels, Metric metric);

// f_i(S): the metric averaged over the task's mask nodes.
double evaluate(const MtlModel& model, const Dataset& data, TaskId task, MaskKind mask,
                Metric metric);

// Mean training loss of an mlp model and its gradient, flattened in the
// order of flatten_parameters().
double mlp_loss(const MtlModel& model, const Dataset& data);
Vector mlp_gradient(const MtlModel& model, const Dataset& data);

// Parameter order: encoder layers (weight row-major, then bias), then heads
// (weight, then bias), in subset order.
Vector flatten_parameters(const MtlModel& model);
void assign_parameters(MtlModel& model, const Vector& params);

// Freshly initialized (untrained) mlp for the subset.
MtlModel init_mlp(const Dataset& data, const TaskSubset& subset, const LearnerSpec& spec,
                  std::uint64_t seed);

struct GradientCheck {
  double max_relative_error = 0.0;
  double max_absolute_error = 0.0;
  std::size_t parameters_checked = 0;
};

// Central finite differences (step 1e-5) against the analytic gradient over
// `num_parameters` randomly chosen coordinates (all of them if fewer exist).
// Relative error is |a - f| / max(|a|, |f|, 1e-6).
GradientCheck gradient_check(const MtlModel& model, const Dataset& data,
                             std::size_t num_parameters, std::uint64_t seed);

// `<stem>.json` header plus `<stem>.csv` with one parameter per line.
void save_model(const MtlModel& model, const std::filesystem::path& stem);
MtlModel load_model(const std::filesystem::path& stem);

}  // namespace taskaff
