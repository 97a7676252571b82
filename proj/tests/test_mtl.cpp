#include <doctest.h>

#include <cmath>
#include <random>

#include "support.hpp"
#include "taskaff/error.hpp"
#include "taskaff/mtl.hpp"
#include "taskaff/planted.hpp"

using namespace taskaff;

namespace {

LearnerSpec mlp_spec() {
  LearnerSpec s;
  s.kind = LearnerKind::kSharedEncoderMlp;
  s.hidden_width = 8;
  s.hidden_layers = 1;
  s.learning_rate = 0.05;
  s.epochs = 500;
  return s;
}

// Plain gradient descent on 0.5 ||F w - y||^2 / m as an independent solver.
Vector gd_least_squares(const Matrix& f, const Vector& y) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(f.transpose() * f);
  const double step = 1.0 / eig.eigenvalues().maxCoeff();
  Vector w = Vector::Zero(f.cols());
  for (int it = 0; it < 200000; ++it) {
    const Vector g = f.transpose() * (f * w - y);
    w -= step * g;
    if (g.norm() < 1e-13) break;
  }
  return w;
}

}  // namespace

TEST_CASE("closed form interpolates square invertible systems") {
  std::mt19937_64 rng(1);
  Matrix f = Matrix::Random(6, 6) + 3.0 * Matrix::Identity(6, 6);
  const Vector y = Vector::Random(6);
  const std::vector<Vector> labels{y};
  const Vector w = fit_closed_form(f, labels, 0.0);
  CHECK((f * w - y).norm() < 1e-10);
}

TEST_CASE("closed form of identical labels equals the single-task fit") {
  const Matrix f = Matrix::Random(30, 4);
  const Vector y = Vector::Random(30);
  const std::vector<Vector> one{y}, three{y, y, y};
  CHECK((fit_closed_form(f, three, 0.0) - fit_closed_form(f, one, 0.0)).norm() < 1e-12);
}

TEST_CASE("closed form matches iterative least squares") {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> normal;
  Matrix f(40, 5);
  for (Eigen::Index i = 0; i < f.size(); ++i) f.data()[i] = normal(rng);
  std::vector<Vector> labels;
  for (int k = 0; k < 3; ++k) {
    Vector y(40);
    for (Eigen::Index i = 0; i < 40; ++i) y(i) = normal(rng);
    labels.push_back(y);
  }
  const Vector mean = (labels[0] + labels[1] + labels[2]) / 3.0;
  const Vector w = fit_closed_form(f, labels, 0.0);
  CHECK((w - gd_least_squares(f, mean)).cwiseAbs().maxCoeff() < 1e-6);
  // residual orthogonal to the column space
  CHECK((f.transpose() * (f * w - mean)).cwiseAbs().maxCoeff() < 1e-8);

  // ridge: normal equations
  const Vector wr = fit_closed_form(f, labels, 0.7);
  const Matrix lhs = f.transpose() * f + 0.7 * Matrix::Identity(5, 5);
  CHECK((wr - lhs.ldlt().solve(f.transpose() * mean)).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("closed form handles rank deficiency with minimum norm") {
  Matrix f = Matrix::Random(10, 3);
  f.col(2) = f.col(0) + f.col(1);
  const std::vector<Vector> labels{Vector::Random(10)};
  const Vector w = fit_closed_form(f, labels, 0.0);
  const Vector pinv = f.completeOrthogonalDecomposition().pseudoInverse() * labels[0];
  CHECK((w - pinv).norm() < 1e-10);
  CHECK_THROWS_AS(fit_closed_form(f, std::vector<Vector>{Vector::Zero(9)}, 0.0), InvalidInput);
}

TEST_CASE("metric values") {
  Vector labels(4);
  labels << 1, 0, 1, 0;
  CHECK(score_predictions(labels, labels, Metric::kF1) == 1.0);
  const Vector half = Vector::Constant(4, 0.5);
  CHECK(score_predictions(half, labels, Metric::kNegCrossEntropy) ==
        doctest::Approx(-std::log(2.0)).epsilon(1e-12));
  Vector pred(4);
  pred << 1.5, 0, 1, 0;
  CHECK(score_predictions(pred, labels, Metric::kNegMse) == doctest::Approx(-0.0625));
}

TEST_CASE("a zero network predicts one half everywhere") {
  const Dataset d = testing::toy_binary(20, 2, 1);
  MtlModel m = init_mlp(d, {0, 1}, mlp_spec(), 3);
  assign_parameters(m, Vector::Zero(flatten_parameters(m).size()));
  CHECK(evaluate(m, d, 1, MaskKind::kVal, Metric::kNegCrossEntropy) ==
        doctest::Approx(-std::log(2.0)).epsilon(1e-12));
  const GradientCheck gc = gradient_check(m, d, 1000, 0);
  CHECK(gc.max_absolute_error < 1e-6);
}

TEST_CASE("backprop agrees with finite differences") {
  const Dataset d = testing::toy_binary(10, 2, 7);
  for (std::size_t layers : {0u, 1u, 2u}) {
    LearnerSpec s = mlp_spec();
    s.hidden_layers = layers;
    const MtlModel m = init_mlp(d, {0, 1}, s, 11);
    const GradientCheck gc = gradient_check(m, d, 100, 5);
    CHECK(gc.parameters_checked >= std::min<std::size_t>(100, flatten_parameters(m).size()));
    CHECK(gc.max_relative_error < 1e-4);
  }
}

TEST_CASE("without hidden layers the gradient is the logistic one") {
  const Dataset d = testing::toy_binary(24, 1, 9);
  LearnerSpec s = mlp_spec();
  s.hidden_layers = 0;
  MtlModel m = init_mlp(d, {0}, s, 2);
  Vector params = Vector::Random(flatten_parameters(m).size());
  assign_parameters(m, params);
  const Task& t = d.tasks.task(0);
  Matrix x(static_cast<Eigen::Index>(t.train.size()), d.inputs.cols());
  Vector y(x.rows());
  for (std::size_t r = 0; r < t.train.size(); ++r) {
    x.row(static_cast<Eigen::Index>(r)) = d.inputs.row(static_cast<Eigen::Index>(t.train[r]));
    y(static_cast<Eigen::Index>(r)) = t.labels(static_cast<Eigen::Index>(t.train[r]));
  }
  const Vector w = params.head(x.cols());
  const double b = params(x.cols());
  const Vector p = (1.0 + (-(x * w).array() - b).exp()).inverse().matrix();
  const Vector expected = x.transpose() * (p - y) / static_cast<double>(x.rows());
  const Vector g = mlp_gradient(m, d);
  CHECK((g.head(x.cols()) - expected).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(g(x.cols()) == doctest::Approx((p - y).mean()).epsilon(1e-12));
}

TEST_CASE("mlp training is deterministic and fits a separable toy") {
  const Dataset d = testing::toy_binary(20, 2, 3);
  const LearnerSpec s = mlp_spec();
  const MtlModel a = train_subset(d, {0, 1}, s, 42);
  const MtlModel b = train_subset(d, {0, 1}, s, 42);
  CHECK(flatten_parameters(a) == flatten_parameters(b));
  CHECK(a.stats.final_loss < 0.1);
  CHECK(a.stats.final_loss < a.stats.initial_loss);
  CHECK_FALSE(a.stats.loss_increased);
  CHECK(a.heads.size() == 2);

  const MtlModel c = train_subset(d, {0, 1}, s, 43);
  CHECK(flatten_parameters(a) != flatten_parameters(c));
}

TEST_CASE("a singleton subset is single-task training") {
  const Dataset d = testing::toy_binary(30, 3, 8);
  const LearnerSpec s = mlp_spec();
  const MtlModel m = train_subset(d, {2}, s, 5);
  const Dataset alone{d.inputs, TaskSet(30, {d.tasks.task(2)})};
  const MtlModel n = train_subset(alone, {0}, s, 5);
  CHECK(flatten_parameters(m) == flatten_parameters(n));
}

TEST_CASE("divergence raises a training error with the epoch") {
  const Dataset d = testing::toy_binary(20, 1, 3);
  LearnerSpec s = mlp_spec();
  s.learning_rate = 1e200;
  try {
    train_subset(d, {0}, s, 1);
    FAIL("expected TrainingError");
  } catch (const TrainingError& e) {
    CHECK(e.epoch() < s.epochs);
  }
}

TEST_CASE("linear learner on planted tasks equals the projection formula") {
  const PlantedInstance inst = generate(testing::small_planted(3));
  const Dataset d = to_dataset(inst);
  const Matrix y = inst.observed_labels();
  const double m = static_cast<double>(inst.num_observed());
  LearnerSpec s;
  s.metric = Metric::kNegMse;
  for (const TaskSubset& subset : {TaskSubset{0, 1, 4}, TaskSubset{2}, TaskSubset{0, 1, 2, 3, 4, 5}}) {
    const MtlModel model = train_subset(d, subset, s, 0);
    Vector mean = Vector::Zero(y.rows());
    for (TaskId j : subset) mean += y.col(static_cast<Eigen::Index>(j));
    mean /= static_cast<double>(subset.size());
    for (TaskId i : subset) {
      const double expected = -(inst.sigma_tilde * mean - y.col(static_cast<Eigen::Index>(i))).squaredNorm() / m;
      CHECK(evaluate(model, d, i, MaskKind::kTrain, Metric::kNegMse) ==
            doctest::Approx(expected).epsilon(1e-10));
    }
  }
}

TEST_CASE("evaluate rejects empty masks") {
  const PlantedInstance inst = generate([] {
    auto c = testing::small_planted(1);
    c.observed = c.num_nodes;
    return c;
  }());
  const Dataset d = to_dataset(inst);
  const MtlModel model = train_subset(d, {0}, LearnerSpec{}, 0);
  CHECK_THROWS_AS(evaluate(model, d, 0, MaskKind::kTest, Metric::kNegMse), InvalidInput);
}

TEST_CASE("model checkpoints round trip") {
  const auto dir = testing::scratch("model");
  const Dataset d = testing::toy_binary(20, 2, 3);
  LearnerSpec s = mlp_spec();
  s.epochs = 5;
  const MtlModel a = train_subset(d, {0, 1}, s, 1);
  save_model(a, dir / "m");
  const MtlModel b = load_model(dir / "m");
  CHECK(b.subset == a.subset);
  CHECK(b.seed == a.seed);
  CHECK(flatten_parameters(b) == flatten_parameters(a));
  CHECK(predict(b, d, 1, d.tasks.task(1).test) == predict(a, d, 1, d.tasks.task(1).test));

  const MtlModel lin = train_subset(d, {0, 1}, LearnerSpec{}, 0);
  save_model(lin, dir / "lin");
  CHECK(load_model(dir / "lin").linear_weights == lin.linear_weights);
}

TEST_CASE("learner spec parsing and validation") {
  CHECK(parse_learner_kind("mlp") == LearnerKind::kSharedEncoderMlp);
  CHECK(parse_metric("nce") == Metric::kNegCrossEntropy);
  CHECK(parse_metric(to_string(Metric::kF1)) == Metric::kF1);
  CHECK_THROWS_AS(parse_metric("accuracy"), InvalidInput);
  LearnerSpec s;
  s.ridge = -1.0;
  CHECK_THROWS_AS(s.validate(), InvalidInput);
  s = mlp_spec();
  s.hidden_width = 0;
  CHECK_THROWS_AS(s.validate(), InvalidInput);
}
