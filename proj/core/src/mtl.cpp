#include "taskaff/mtl.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "taskaff/error.hpp"
#include "taskaff/io.hpp"
#include "taskaff/rng.hpp"

namespace taskaff {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::string to_string(LearnerKind kind) {
  return kind == LearnerKind::kClosedFormLinear ? "closed-form-linear" : "shared-encoder-mlp";
}

std::string to_string(Metric metric) {
  switch (metric) {
    case Metric::kNegCrossEntropy: return "negative-cross-entropy";
    case Metric::kNegMse: return "negative-mse";
    case Metric::kF1: return "f1";
  }
  return "unknown";
}

LearnerKind parse_learner_kind(const std::string& s) {
  if (s == "closed-form-linear" || s == "linear") return LearnerKind::kClosedFormLinear;
  if (s == "shared-encoder-mlp" || s == "mlp") return LearnerKind::kSharedEncoderMlp;
  throw InvalidInput("unknown learner kind '" + s + "'");
}

Metric parse_metric(const std::string& s) {
  if (s == "negative-cross-entropy" || s == "nce") return Metric::kNegCrossEntropy;
  if (s == "negative-mse" || s == "nmse") return Metric::kNegMse;
  if (s == "f1") return Metric::kF1;
  throw InvalidInput("unknown metric '" + s + "'");
}

void LearnerSpec::validate() const {
  if (kind == LearnerKind::kSharedEncoderMlp && hidden_width < 1)
    throw InvalidInput("mlp hidden_width must be at least 1");
  if (!(ridge >= 0.0)) throw InvalidInput("ridge must be nonnegative");
  if (epochs < 1) throw InvalidInput("epochs must be at least 1");
  if (!(learning_rate > 0.0)) throw InvalidInput("learning_rate must be positive");
}

bool MtlModel::has_head(TaskId task) const {
  return std::binary_search(subset.begin(), subset.end(), task);
}

std::size_t MtlModel::input_dim() const {
  if (kind == LearnerKind::kClosedFormLinear) return static_cast<std::size_t>(linear_weights.size());
  if (!encoder.empty()) return static_cast<std::size_t>(encoder.front().weight.cols());
  return heads.empty() ? 0 : static_cast<std::size_t>(heads.front().weight.size());
}

namespace {

Matrix gather_rows(const Matrix& m, std::span<const NodeId> rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) out.row(static_cast<Eigen::Index>(r)) = m.row(static_cast<Eigen::Index>(rows[r]));
  return out;
}

Vector gather(const Vector& v, std::span<const NodeId> rows) {
  Vector out(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) out[static_cast<Eigen::Index>(r)] = v[static_cast<Eigen::Index>(rows[r])];
  return out;
}

void check_subset(const Dataset& data, const TaskSubset& subset) {
  if (subset.empty()) throw InvalidInput("task subset is empty");
  for (std::size_t k = 0; k < subset.size(); ++k) {
    if (subset[k] >= data.num_tasks()) throw InvalidInput("task id " + std::to_string(subset[k]) + " out of range");
    if (k && subset[k] <= subset[k - 1]) throw InvalidInput("task subset must be sorted and unique");
  }
  if (static_cast<std::size_t>(data.inputs.rows()) != data.tasks.num_nodes())
    throw InvalidInput("dataset inputs and tasks disagree on node count");
}

// Solves min ||A w - b||^2 + ridge ||w||^2 through a thin SVD of A.
Vector svd_solve(const Matrix& a, const Vector& b, double ridge) {
  Eigen::BDCSVD<Matrix> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& s = svd.singularValues();
  const double cutoff = s.size() ? 1e-10 * s[0] : 0.0;
  Vector scale(s.size());
  for (Eigen::Index k = 0; k < s.size(); ++k) {
    if (ridge > 0.0) scale[k] = s[k] / (s[k] * s[k] + ridge);
    else scale[k] = s[k] > cutoff ? 1.0 / s[k] : 0.0;
  }
  return svd.matrixV() * (scale.asDiagonal() * (svd.matrixU().transpose() * b));
}

double sigmoid(double z) {
  return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

// softplus(z) - y z, the logistic loss written to avoid overflow.
double logistic_loss(double z, double y) {
  return std::max(z, 0.0) - y * z + std::log1p(std::exp(-std::abs(z)));
}

// Training data for one subset, gathered once: the union of the members'
// training nodes and, per member, positions into that union.
struct Batch {
  Matrix x;
  std::vector<std::vector<Eigen::Index>> positions;
  std::vector<Vector> labels;
  std::vector<bool> binary;
};

Batch make_batch(const Dataset& data, const TaskSubset& subset) {
  std::vector<NodeId> rows;
  for (TaskId t : subset) {
    const auto& m = data.tasks.task(t).train;
    rows.insert(rows.end(), m.begin(), m.end());
  }
  std::sort(rows.begin(), rows.end());
  rows.erase(std::unique(rows.begin(), rows.end()), rows.end());
  Batch b;
  b.x = gather_rows(data.inputs, rows);
  for (TaskId t : subset) {
    const Task& task = data.tasks.task(t);
    if (task.train.empty()) throw InvalidInput("task " + std::to_string(t) + " has an empty training mask");
    std::vector<Eigen::Index> pos;
    pos.reserve(task.train.size());
    for (NodeId v : task.train)
      pos.push_back(static_cast<Eigen::Index>(std::lower_bound(rows.begin(), rows.end(), v) - rows.begin()));
    b.positions.push_back(std::move(pos));
    b.labels.push_back(gather(task.labels, task.train));
    b.binary.push_back(task.kind == LabelKind::kBinary);
  }
  return b;
}

struct Activations {
  std::vector<Matrix> pre;  // pre[l] for encoder layer l
  std::vector<Matrix> out;  // out[0] = input, out[l + 1] = relu(pre[l])
};

Activations forward(const MtlModel& model, const Matrix& x) {
  Activations a;
  a.out.push_back(x);
  for (const auto& layer : model.encoder) {
    Matrix z = a.out.back() * layer.weight.transpose();
    z.rowwise() += layer.bias.transpose();
    a.out.push_back(z.cwiseMax(0.0));
    a.pre.push_back(std::move(z));
  }
  return a;
}

// Mean over tasks of each task's mean training loss. When `grad` is given it
// receives the gradient in the model's own layout.
double loss_and_grad(const MtlModel& model, const Batch& batch, MtlModel* grad) {
  const Activations act = forward(model, batch.x);
  const Matrix& h = act.out.back();
  const double task_weight = 1.0 / static_cast<double>(model.subset.size());
  Matrix dh;
  if (grad) {
    *grad = model;
    dh = Matrix::Zero(h.rows(), h.cols());
  }
  double total = 0.0;
  for (std::size_t k = 0; k < model.subset.size(); ++k) {
    const Head& head = model.heads[k];
    const auto& pos = batch.positions[k];
    const Vector& y = batch.labels[k];
    const double w = task_weight / static_cast<double>(pos.size());
    double task_loss = 0.0;
    Vector dz(static_cast<Eigen::Index>(pos.size()));
    for (std::size_t r = 0; r < pos.size(); ++r) {
      const auto row = pos[r];
      const double z = h.row(row).dot(head.weight) + head.bias;
      const double yv = y[static_cast<Eigen::Index>(r)];
      if (batch.binary[k]) {
        task_loss += logistic_loss(z, yv);
        dz[static_cast<Eigen::Index>(r)] = w * (sigmoid(z) - yv);
      } else {
        task_loss += (z - yv) * (z - yv);
        dz[static_cast<Eigen::Index>(r)] = w * 2.0 * (z - yv);
      }
    }
    total += w * task_loss;
    if (grad) {
      Head& g = grad->heads[k];
      g.weight.setZero();
      g.bias = dz.sum();
      for (std::size_t r = 0; r < pos.size(); ++r) {
        const double d = dz[static_cast<Eigen::Index>(r)];
        g.weight += d * h.row(pos[r]).transpose();
        dh.row(pos[r]) += d * head.weight.transpose();
      }
    }
  }
  if (grad) {
    Matrix upstream = std::move(dh);
    for (std::size_t l = model.encoder.size(); l-- > 0;) {
      Matrix dpre = upstream.cwiseProduct((act.pre[l].array() > 0.0).cast<double>().matrix());
      grad->encoder[l].weight = dpre.transpose() * act.out[l];
      grad->encoder[l].bias = dpre.colwise().sum().transpose();
      if (l > 0) upstream = dpre * model.encoder[l].weight;
    }
  }
  return total;
}

void axpy_model(MtlModel& model, double step, const MtlModel& grad) {
  for (std::size_t l = 0; l < model.encoder.size(); ++l) {
    model.encoder[l].weight -= step * grad.encoder[l].weight;
    model.encoder[l].bias -= step * grad.encoder[l].bias;
  }
  for (std::size_t k = 0; k < model.heads.size(); ++k) {
    model.heads[k].weight -= step * grad.heads[k].weight;
    model.heads[k].bias -= step * grad.heads[k].bias;
  }
}

MtlModel train_linear(const Dataset& data, const TaskSubset& subset, const LearnerSpec& spec) {
  MtlModel model;
  model.kind = LearnerKind::kClosedFormLinear;
  model.subset = subset;
  const auto& first = data.tasks.task(subset.front()).train;
  const bool shared_mask = std::all_of(subset.begin(), subset.end(), [&](TaskId t) {
    return data.tasks.task(t).train == first;
  });
  if (shared_mask) {
    if (first.empty()) throw InvalidInput("empty training mask");
    const Matrix f = gather_rows(data.inputs, first);
    std::vector<Vector> labels;
    labels.reserve(subset.size());
    for (TaskId t : subset) labels.push_back(gather(data.tasks.task(t).labels, first));
    model.linear_weights = fit_closed_form(f, labels, spec.ridge);
    return model;
  }
  // Masks differ: stack each member's rows weighted so the objective is the
  // task mean of per-task mean squared errors.
  std::size_t total_rows = 0;
  for (TaskId t : subset) total_rows += data.tasks.task(t).train.size();
  const double mean_rows = static_cast<double>(total_rows) / static_cast<double>(subset.size());
  Matrix a(static_cast<Eigen::Index>(total_rows), data.inputs.cols());
  Vector b(static_cast<Eigen::Index>(total_rows));
  Eigen::Index offset = 0;
  for (TaskId t : subset) {
    const Task& task = data.tasks.task(t);
    if (task.train.empty()) throw InvalidInput("empty training mask");
    const double w = std::sqrt(mean_rows / (static_cast<double>(subset.size()) *
                                            static_cast<double>(task.train.size())));
    const auto rows = static_cast<Eigen::Index>(task.train.size());
    a.middleRows(offset, rows) = w * gather_rows(data.inputs, task.train);
    b.segment(offset, rows) = w * gather(task.labels, task.train);
    offset += rows;
  }
  model.linear_weights = svd_solve(a, b, spec.ridge);
  return model;
}

}  // namespace

Vector fit_closed_form(const Matrix& features, std::span<const Vector> labels, double ridge) {
  if (labels.empty()) throw InvalidInput("fit_closed_form: no label vectors");
  if (!(ridge >= 0.0)) throw InvalidInput("fit_closed_form: ridge must be nonnegative");
  Vector mean = Vector::Zero(features.rows());
  for (const Vector& y : labels) {
    if (y.size() != features.rows())
      throw InvalidInput("fit_closed_form: label length " + std::to_string(y.size()) +
                         " differs from feature rows " + std::to_string(features.rows()));
    mean += y;
  }
  mean /= static_cast<double>(labels.size());
  return svd_solve(features, mean, ridge);
}

MtlModel init_mlp(const Dataset& data, const TaskSubset& subset, const LearnerSpec& spec,
                  std::uint64_t seed) {
  spec.validate();
  check_subset(data, subset);
  Rng rng = make_rng(seed, Stream::kTraining);
  MtlModel model;
  model.kind = LearnerKind::kSharedEncoderMlp;
  model.subset = subset;
  model.seed = seed;
  auto in = data.inputs.cols();
  const auto width = static_cast<Eigen::Index>(spec.hidden_width);
  for (std::size_t l = 0; l < spec.hidden_layers; ++l) {
    const double bound = std::sqrt(6.0 / static_cast<double>(std::max<Eigen::Index>(in, 1)));
    std::uniform_real_distribution<double> u(-bound, bound);
    DenseLayer layer{Matrix(width, in), Vector::Zero(width)};
    for (Eigen::Index r = 0; r < width; ++r)
      for (Eigen::Index c = 0; c < in; ++c) layer.weight(r, c) = u(rng);
    model.encoder.push_back(std::move(layer));
    in = width;
  }
  const double bound = std::sqrt(6.0 / static_cast<double>(in + 1));
  std::uniform_real_distribution<double> u(-bound, bound);
  for (std::size_t k = 0; k < subset.size(); ++k) {
    Head head{Vector(in), 0.0};
    for (Eigen::Index c = 0; c < in; ++c) head.weight[c] = u(rng);
    model.heads.push_back(std::move(head));
  }
  return model;
}

MtlModel train_subset(const Dataset& data, const TaskSubset& subset, const LearnerSpec& spec,
                      std::uint64_t seed) {
  spec.validate();
  check_subset(data, subset);
  if (spec.kind == LearnerKind::kClosedFormLinear) {
    MtlModel m = train_linear(data, subset, spec);
    m.seed = seed;
    return m;
  }
  MtlModel model = init_mlp(data, subset, spec, seed);
  const Batch batch = make_batch(data, subset);
  MtlModel grad;
  double prev = 0.0;
  for (std::size_t epoch = 0; epoch < spec.epochs; ++epoch) {
    const double loss = loss_and_grad(model, batch, &grad);
    if (!std::isfinite(loss)) throw TrainingError("training loss is not finite", epoch);
    if (epoch == 0) model.stats.initial_loss = loss;
    else if (loss > prev + 1e-12 && spec.learning_rate <= spec.stable_learning_rate)
      model.stats.loss_increased = true;
    prev = loss;
    axpy_model(model, spec.learning_rate, grad);
  }
  const double final_loss = loss_and_grad(model, batch, nullptr);
  if (!std::isfinite(final_loss)) throw TrainingError("training loss is not finite", spec.epochs);
  if (final_loss > prev + 1e-12 && spec.learning_rate <= spec.stable_learning_rate)
    model.stats.loss_increased = true;
  model.stats.final_loss = final_loss;
  model.stats.epochs_run = spec.epochs;
  return model;
}

Vector predict(const MtlModel& model, const Dataset& data, TaskId task,
               std::span<const NodeId> rows) {
  const Matrix x = gather_rows(data.inputs, rows);
  if (static_cast<std::size_t>(x.cols()) != model.input_dim())
    throw InvalidInput("model input dimension differs from dataset");
  if (model.kind == LearnerKind::kClosedFormLinear) return x * model.linear_weights;
  auto it = std::lower_bound(model.subset.begin(), model.subset.end(), task);
  if (it == model.subset.end() || *it != task)
    throw InvalidInput("model has no head for task " + std::to_string(task));
  const Head& head = model.heads[static_cast<std::size_t>(it - model.subset.begin())];
  const Activations act = forward(model, x);
  Vector z = act.out.back() * head.weight;
  z.array() += head.bias;
  if (data.tasks.task(task).kind == LabelKind::kBinary)
    for (Eigen::Index r = 0; r < z.size(); ++r) z[r] = sigmoid(z[r]);
  return z;
}

double score_predictions(const Vector& predictions, const Vector& labels, Metric metric) {
  if (predictions.size() != labels.size()) throw InvalidInput("prediction/label length mismatch");
  if (labels.size() == 0) throw InvalidInput("cannot score an empty mask");
  const auto n = static_cast<double>(labels.size());
  switch (metric) {
    case Metric::kNegCrossEntropy: {
      double total = 0.0;
      for (Eigen::Index r = 0; r < labels.size(); ++r) {
        const double p = std::clamp(predictions[r], 1e-12, 1.0 - 1e-12);
        const double y = labels[r];
        total += y * std::log(p) + (1.0 - y) * std::log1p(-p);
      }
      return total / n;
    }
    case Metric::kNegMse:
      return -(predictions - labels).squaredNorm() / n;
    case Metric::kF1: {
      std::size_t tp = 0, fp = 0, fn = 0;
      for (Eigen::Index r = 0; r < labels.size(); ++r) {
        const bool pred = predictions[r] >= 0.5;
        const bool truth = labels[r] >= 0.5;
        tp += pred && truth;
        fp += pred && !truth;
        fn += !pred && truth;
      }
      if (tp + fp + fn == 0) return 1.0;
      return 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
    }
  }
  throw InvalidInput("unknown metric");
}

double evaluate(const MtlModel& model, const Dataset& data, TaskId task, MaskKind mask,
                Metric metric) {
  if (task >= data.num_tasks()) throw InvalidInput("task id out of range");
  const Task& t = data.tasks.task(task);
  const auto& rows = t.mask(mask);
  if (rows.empty()) throw InvalidInput("task " + std::to_string(task) + " has an empty evaluation mask");
  return score_predictions(predict(model, data, task, rows), gather(t.labels, rows), metric);
}

double mlp_loss(const MtlModel& model, const Dataset& data) {
  return loss_and_grad(model, make_batch(data, model.subset), nullptr);
}

Vector mlp_gradient(const MtlModel& model, const Dataset& data) {
  MtlModel grad;
  loss_and_grad(model, make_batch(data, model.subset), &grad);
  return flatten_parameters(grad);
}

Vector flatten_parameters(const MtlModel& model) {
  if (model.kind == LearnerKind::kClosedFormLinear) return model.linear_weights;
  std::vector<double> out;
  for (const auto& layer : model.encoder) {
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) out.push_back(layer.weight(r, c));
    out.insert(out.end(), layer.bias.data(), layer.bias.data() + layer.bias.size());
  }
  for (const auto& head : model.heads) {
    out.insert(out.end(), head.weight.data(), head.weight.data() + head.weight.size());
    out.push_back(head.bias);
  }
  return Eigen::Map<const Vector>(out.data(), static_cast<Eigen::Index>(out.size()));
}

void assign_parameters(MtlModel& model, const Vector& params) {
  if (params.size() != flatten_parameters(model).size())
    throw InvalidInput("parameter vector length differs from model");
  if (model.kind == LearnerKind::kClosedFormLinear) {
    model.linear_weights = params;
    return;
  }
  Eigen::Index k = 0;
  for (auto& layer : model.encoder) {
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) layer.weight(r, c) = params[k++];
    for (Eigen::Index r = 0; r < layer.bias.size(); ++r) layer.bias[r] = params[k++];
  }
  for (auto& head : model.heads) {
    for (Eigen::Index r = 0; r < head.weight.size(); ++r) head.weight[r] = params[k++];
    head.bias = params[k++];
  }
}

GradientCheck gradient_check(const MtlModel& model, const Dataset& data,
                             std::size_t num_parameters, std::uint64_t seed) {
  if (model.kind != LearnerKind::kSharedEncoderMlp)
    throw InvalidInput("gradient_check needs an mlp model");
  const Batch batch = make_batch(data, model.subset);
  MtlModel grad_model;
  loss_and_grad(model, batch, &grad_model);
  const Vector analytic = flatten_parameters(grad_model);
  const Vector base = flatten_parameters(model);

  std::vector<Eigen::Index> coords(static_cast<std::size_t>(base.size()));
  std::iota(coords.begin(), coords.end(), 0);
  if (num_parameters < coords.size()) {
    Rng rng(seed);
    std::shuffle(coords.begin(), coords.end(), rng);
    coords.resize(num_parameters);
  }
  constexpr double kStep = 1e-5;
  GradientCheck out;
  MtlModel probe = model;
  for (auto c : coords) {
    Vector p = base;
    p[c] = base[c] + kStep;
    assign_parameters(probe, p);
    const double up = loss_and_grad(probe, batch, nullptr);
    p[c] = base[c] - kStep;
    assign_parameters(probe, p);
    const double down = loss_and_grad(probe, batch, nullptr);
    const double fd = (up - down) / (2.0 * kStep);
    const double abs_err = std::abs(fd - analytic[c]);
    const double denom = std::max({std::abs(fd), std::abs(analytic[c]), 1e-6});
    out.max_absolute_error = std::max(out.max_absolute_error, abs_err);
    out.max_relative_error = std::max(out.max_relative_error, abs_err / denom);
    ++out.parameters_checked;
  }
  return out;
}

void save_model(const MtlModel& model, const fs::path& stem) {
  json header;
  header["kind"] = to_string(model.kind);
  header["subset"] = model.subset;
  header["seed"] = model.seed;
  header["input_dim"] = model.input_dim();
  json layers = json::array();
  for (const auto& layer : model.encoder) layers.push_back({layer.weight.rows(), layer.weight.cols()});
  header["encoder_layers"] = layers;
  header["num_heads"] = model.heads.size();
  const Vector params = flatten_parameters(model);
  header["num_parameters"] = params.size();
  io::write_text(fs::path(stem).concat(".json"), header.dump(1) + "\n");
  std::string body;
  for (Eigen::Index k = 0; k < params.size(); ++k) {
    body += io::format_double(params[k]);
    body += '\n';
  }
  io::write_text(fs::path(stem).concat(".csv"), body);
}

MtlModel load_model(const fs::path& stem) {
  const auto header_path = fs::path(stem).concat(".json");
  const json header = json::parse(io::read_text(header_path));
  MtlModel model;
  model.kind = parse_learner_kind(header.at("kind").get<std::string>());
  model.subset = header.at("subset").get<TaskSubset>();
  model.seed = header.at("seed").get<std::uint64_t>();
  const auto in = header.at("input_dim").get<Eigen::Index>();
  if (model.kind == LearnerKind::kClosedFormLinear) {
    model.linear_weights = Vector::Zero(in);
  } else {
    Eigen::Index width = in;
    for (const auto& shape : header.at("encoder_layers")) {
      const auto rows = shape.at(0).get<Eigen::Index>();
      const auto cols = shape.at(1).get<Eigen::Index>();
      model.encoder.push_back({Matrix::Zero(rows, cols), Vector::Zero(rows)});
      width = rows;
    }
    for (std::size_t k = 0; k < header.at("num_heads").get<std::size_t>(); ++k)
      model.heads.push_back({Vector::Zero(width), 0.0});
  }
  const Matrix flat = io::read_matrix_csv(fs::path(stem).concat(".csv"));
  if (flat.cols() > 1) throw InvalidInput("model weight file must have one value per line");
  assign_parameters(model, Vector(flat.col(0)));
  return model;
}

}  // namespace taskaff
