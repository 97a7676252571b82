#include "taskaff/transfer.hpp"

#include <algorithm>
#include <cmath>

#include "taskaff/error.hpp"
#include "taskaff/io.hpp"
#include "taskaff/rng.hpp"

namespace taskaff {

namespace {

double sigmoid(double z) {
  return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

double log_loss(double z, double y) {
  return std::max(z, 0.0) - y * z + std::log1p(std::exp(-std::abs(z)));
}

}  // namespace

Vector masked_affinity_features(const AffinityMatrix& aff, TaskId target, const TaskSubset& subset) {
  const auto t = static_cast<Eigen::Index>(aff.num_tasks());
  Vector f = Vector::Zero(t);
  for (TaskId j : subset) {
    if (static_cast<Eigen::Index>(j) >= t) throw InvalidInput("subset task outside affinity matrix");
    f[static_cast<Eigen::Index>(j)] = aff.theta(static_cast<Eigen::Index>(target), static_cast<Eigen::Index>(j));
  }
  return f;
}

std::vector<std::vector<TransferExample>> build_examples(std::span<const SubsetEvaluation> evals,
                                                         const std::map<TaskId, double>& stl_scores,
                                                         const AffinityMatrix& aff) {
  std::vector<std::vector<TransferExample>> out(aff.num_tasks());
  for (const auto& ev : evals) {
    for (std::size_t a = 0; a < ev.subset.size(); ++a) {
      const TaskId i = ev.subset[a];
      if (i >= aff.num_tasks()) throw InvalidInput("build_examples: task outside affinity matrix");
      auto stl = stl_scores.find(i);
      if (stl == stl_scores.end())
        throw InvalidInput("build_examples: missing single-task score for task " + std::to_string(i));
      TransferExample ex;
      ex.target = i;
      ex.subset = ev.subset;
      ex.features = masked_affinity_features(aff, i, ev.subset);
      ex.subset_score = ev.scores[a];
      ex.negative = ev.scores[a] < stl->second;
      out[i].push_back(std::move(ex));
    }
  }
  return out;
}

double LogisticModel::probability(const Vector& x) const { return sigmoid(weights.dot(x) + bias); }

double logistic_objective(const Matrix& x, const Vector& y, const Vector& weights, double bias,
                          double l2) {
  const Vector z = (x * weights).array() + bias;
  double total = 0.0;
  for (Eigen::Index r = 0; r < z.size(); ++r) total += log_loss(z[r], y[r]);
  return total / static_cast<double>(z.size()) + 0.5 * l2 * weights.squaredNorm();
}

LogisticModel fit_logistic(const Matrix& x, const Vector& y, const LogisticOptions& options,
                           TaskId trained_for) {
  if (x.rows() != y.size() || x.rows() == 0) throw InvalidInput("fit_logistic: need matching, nonempty data");
  const auto n = static_cast<double>(x.rows());
  const auto d = x.cols();
  LogisticModel model;
  model.trained_for = trained_for;
  model.weights = Vector::Zero(d);

  const double positives = y.sum();
  if (positives == 0.0 || positives == n) {
    const double rate = (positives + 0.5) / (n + 1.0);
    model.bias = std::log(rate / (1.0 - rate));
    model.degenerate = true;
    return model;
  }

  // Work in standardized coordinates u = (x - mu) / s; the objective is the
  // same function of (w, b) expressed through w = v / s.
  const Vector mu = x.colwise().mean();
  Vector s(d);
  for (Eigen::Index j = 0; j < d; ++j) {
    const double sd = std::sqrt((x.col(j).array() - mu[j]).square().mean());
    s[j] = sd > 1e-12 ? sd : 1.0;
  }
  const Matrix u = (x.rowwise() - mu.transpose()).array().rowwise() / s.transpose().array();
  const Vector penalty = options.l2 * s.array().square().inverse();

  double lr = options.learning_rate;
  if (lr <= 0.0) {
    Matrix aug(u.rows(), d + 1);
    aug << u, Vector::Ones(u.rows());
    const Matrix gram = aug.transpose() * aug / n;
    const double lmax = Eigen::SelfAdjointEigenSolver<Matrix>(gram, Eigen::EigenvaluesOnly).eigenvalues().maxCoeff();
    lr = 1.0 / (0.25 * lmax + penalty.maxCoeff());
  }

  Rng rng = make_rng(options.seed, Stream::kLogistic, trained_for);
  std::normal_distribution<double> init(0.0, 0.01);
  Vector v(d);
  for (Eigen::Index j = 0; j < d; ++j) v[j] = init(rng);
  double c = 0.0;
  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    const Vector z = (u * v).array() + c;
    Vector resid(z.size());
    for (Eigen::Index r = 0; r < z.size(); ++r) resid[r] = sigmoid(z[r]) - y[r];
    const Vector gv = u.transpose() * resid / n + penalty.cwiseProduct(v);
    const double gc = resid.sum() / n;
    if (!gv.allFinite() || !std::isfinite(gc)) throw TrainingError("logistic regression diverged", epoch);
    v -= lr * gv;
    c -= lr * gc;
    if (gv.squaredNorm() + gc * gc < 1e-24) break;
  }
  model.weights = v.cwiseQuotient(s);
  model.bias = c - model.weights.dot(mu);
  if (!model.weights.allFinite() || !std::isfinite(model.bias))
    throw TrainingError("logistic regression produced non-finite parameters", options.epochs);
  return model;
}

LogisticModel fit_logistic(std::span<const TransferExample> examples, const LogisticOptions& options) {
  if (examples.empty()) throw InvalidInput("fit_logistic: no examples");
  const auto d = examples.front().features.size();
  Matrix x(static_cast<Eigen::Index>(examples.size()), d);
  Vector y(static_cast<Eigen::Index>(examples.size()));
  for (std::size_t r = 0; r < examples.size(); ++r) {
    x.row(static_cast<Eigen::Index>(r)) = examples[r].features.transpose();
    y[static_cast<Eigen::Index>(r)] = examples[r].negative ? 1.0 : 0.0;
  }
  return fit_logistic(x, y, options, examples.front().target);
}

double f1_score(const std::vector<bool>& predicted, const std::vector<bool>& truth) {
  if (predicted.size() != truth.size()) throw InvalidInput("f1_score: length mismatch");
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    tp += predicted[i] && truth[i];
    fp += predicted[i] && !truth[i];
    fn += !predicted[i] && truth[i];
  }
  if (tp + fp + fn == 0) return 1.0;
  return 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
}

F1Report evaluate_f1(std::span<const LogisticModel> models,
                     std::span<const std::vector<TransferExample>> held_out, double threshold) {
  if (models.size() != held_out.size()) throw InvalidInput("evaluate_f1: one model per task expected");
  F1Report report;
  report.per_task.resize(models.size());
  double total = 0.0;
  std::size_t included = 0;
  for (std::size_t i = 0; i < models.size(); ++i) {
    const auto& examples = held_out[i];
    std::vector<bool> pred, truth;
    for (const auto& ex : examples) {
      pred.push_back(models[i].probability(ex.features) >= threshold);
      truth.push_back(ex.negative);
    }
    if (std::find(truth.begin(), truth.end(), true) == truth.end()) {
      report.excluded.push_back(i);
      continue;
    }
    const double f1 = f1_score(pred, truth);
    report.per_task[i] = f1;
    total += f1;
    ++included;
  }
  if (included > 0) report.macro_f1 = total / static_cast<double>(included);
  return report;
}

void save_examples_csv(const std::filesystem::path& path,
                       std::span<const std::vector<TransferExample>> examples,
                       std::span<const LogisticModel> models) {
  std::string out = models.empty() ? "target,subset_json,label,score\n"
                                   : "target,subset_json,label,score,predicted_probability\n";
  for (std::size_t i = 0; i < examples.size(); ++i) {
    for (const auto& ex : examples[i]) {
      out += std::to_string(ex.target);
      out += ",\"[";
      for (std::size_t a = 0; a < ex.subset.size(); ++a) {
        if (a) out += ',';
        out += std::to_string(ex.subset[a]);
      }
      out += "]\",";
      out += ex.negative ? '1' : '0';
      out += ',';
      out += io::format_double(ex.subset_score);
      if (!models.empty()) {
        out += ',';
        out += io::format_double(models[i].probability(ex.features));
      }
      out += '\n';
    }
  }
  io::write_text(path, out);
}

}  // namespace taskaff
