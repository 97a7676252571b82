#include <doctest.h>

#include <algorithm>
#include <random>

#include "support.hpp"
#include "taskaff/dataset.hpp"
#include "taskaff/error.hpp"
#include "taskaff/grouping.hpp"
#include "taskaff/planted.hpp"
#include "taskaff/similarity.hpp"

using namespace taskaff;

namespace {

// Two dense blocks joined by a few bridges.
Graph two_block_graph(std::size_t half, double p_in, double p_out, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Graph::Edge> e;
  for (NodeId a = 0; a < 2 * half; ++a)
    for (NodeId b = a + 1; b < 2 * half; ++b)
      if (u(rng) < ((a < half) == (b < half) ? p_in : p_out)) e.emplace_back(a, b);
  return Graph(2 * half, e);
}

Task seeded_task(std::size_t n, std::vector<NodeId> positives, std::vector<NodeId> negatives) {
  Task t;
  t.name = "t";
  t.labels = Vector::Zero(static_cast<Eigen::Index>(n));
  for (NodeId u : positives) t.labels(static_cast<Eigen::Index>(u)) = 1.0;
  t.train = positives;
  t.train.insert(t.train.end(), negatives.begin(), negatives.end());
  std::sort(t.train.begin(), t.train.end());
  return t;
}

}  // namespace

TEST_CASE("generated instances satisfy their invariants") {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const PlantedInstance inst = generate(testing::small_planted(seed));
    CHECK(idempotence_error(inst.sigma) < 1e-8);
    CHECK(idempotence_error(inst.sigma_tilde) < 1e-8);
    CHECK(inst.labels.cwiseAbs().maxCoeff() <= inst.config.label_bound);
    CHECK(inst.label_sup == inst.labels.cwiseAbs().maxCoeff());
    // direct norm check of the separation bounds
    const Matrix proj = inst.sigma * inst.labels;
    for (Eigen::Index i = 0; i < 6; ++i)
      for (Eigen::Index j = i + 1; j < 6; ++j) {
        const double dist = (proj.col(i) - proj.col(j)).norm();
        if (inst.group_of[i] == inst.group_of[j]) CHECK(dist <= 0.5 + 1e-9);
        else CHECK(dist >= 4.0 - 1e-9);
      }
    CHECK(inst.achieved_within < inst.achieved_between);
    CHECK(inst.observed.size() == 40);
    CHECK(inst.val_rows.size() + inst.test_rows.size() == 20);
    // P_G full rank
    CHECK(Eigen::FullPivLU<Matrix>(inst.pg).rank() == 60);
  }
}

TEST_CASE("projection matches the SVD hat matrix") {
  const PlantedInstance inst = generate(testing::small_planted(1));
  const Matrix f = inst.observed_features();
  Eigen::JacobiSVD<Matrix> svd(f, Eigen::ComputeThinU);
  const Matrix u = svd.matrixU();
  CHECK((inst.sigma_tilde - u * u.transpose()).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("generation is deterministic") {
  const auto a = generate(testing::small_planted(4));
  const auto b = generate(testing::small_planted(4));
  CHECK(a.labels == b.labels);
  CHECK(a.observed == b.observed);
  CHECK(a.group_of == b.group_of);
}

TEST_CASE("a single group keeps every distance within a") {
  auto cfg = testing::small_planted(2);
  cfg.num_groups = 1;
  const PlantedInstance inst = generate(cfg);
  const Matrix proj = inst.sigma * inst.labels;
  for (Eigen::Index i = 0; i < 6; ++i)
    for (Eigen::Index j = 0; j < 6; ++j) CHECK((proj.col(i) - proj.col(j)).norm() <= 0.5 + 1e-9);
}

TEST_CASE("identical within-group labels give identical theta rows") {
  auto cfg = testing::small_planted(3);
  cfg.within_sep = 0.0;
  cfg.noise_std = 0.0;
  const PlantedInstance inst = generate(cfg);
  const auto theta = population_theta(inst, 3);
  for (Eigen::Index i = 0; i < 6; ++i)
    for (Eigen::Index j = 0; j < 6; ++j) {
      if (i == j || inst.group_of[i] != inst.group_of[j]) continue;
      CHECK(std::abs(theta.theta(i, j) - theta.theta(j, i)) < 1e-12);
      for (Eigen::Index k = 0; k < 6; ++k)
        if (k != i && k != j) CHECK(std::abs(theta.theta(i, k) - theta.theta(j, k)) < 1e-12);
    }
  // labels lie in the column space, so a pure same-group subset fits exactly
  TaskSubset same;
  for (TaskId t = 0; t < 6; ++t)
    if (inst.group_of[t] == inst.group_of[0]) same.push_back(t);
  CHECK(decompose_loss(inst, same, same[1]).total < 1e-20);
}

TEST_CASE("singleton theta is the projection residual") {
  const PlantedInstance inst = generate(testing::small_planted(5));
  const Matrix y = inst.observed_labels();
  const double m = static_cast<double>(inst.num_observed());
  const std::vector<TaskSubset> ones{{0}, {1}, {2}, {3}, {4}, {5}};
  std::vector<TaskSubset> subsets = ones;
  for_each_subset(6, 2, [&](const TaskSubset& s) { subsets.push_back(s); });
  const auto th = theta_closed_form(inst, subsets);
  const std::vector<TaskSubset> only{{2}, {2, 3}};
  const auto partial = [&] {
    try {
      theta_closed_form(inst, only);
    } catch (const CoverageError& e) {
      return e.uncovered().size();
    }
    return std::size_t{0};
  }();
  CHECK(partial > 0);
  const auto single = [&](TaskId i) {
    const Vector yi = y.col(static_cast<Eigen::Index>(i));
    return (yi - inst.sigma_tilde * yi).squaredNorm() / m;
  };
  // diagonal mixes the singleton with the pairs; check the singleton part
  for (TaskId i = 0; i < 6; ++i)
    CHECK(decompose_loss(inst, {i}, i).total / m == doctest::Approx(single(i)).epsilon(1e-10));
  CHECK(th.orientation == Orientation::kLoss);
}

TEST_CASE("loss decomposes into projected and residual parts") {
  const PlantedInstance inst = generate(testing::small_planted(6));
  std::mt19937_64 rng(1);
  for (int rep = 0; rep < 50; ++rep) {
    TaskSubset s = sample_uniform_subset(6, 1 + rng() % 6, rng);
    const TaskId i = s[rng() % s.size()];
    const auto parts = decompose_loss(inst, s, i);
    CHECK(std::abs(parts.total - parts.projected - parts.residual) <= 1e-8 * std::max(1.0, parts.total));
    CHECK(parts.residual == doctest::Approx(decompose_loss(inst, {i}, i).residual).epsilon(1e-12));
  }
}

TEST_CASE("population theta edge cases") {
  const PlantedInstance inst = generate(testing::small_planted(7));
  const auto full = population_theta(inst, 6);
  const std::vector<TaskSubset> one{{0, 1, 2, 3, 4, 5}};
  CHECK(full.theta == theta_closed_form(inst, one).theta);
  CHECK(full.counts(0, 1) == 1);
  const auto pop = population_theta(inst, 3);
  CHECK(pop.counts(0, 1) == 4);  // C(4, 1)
  CHECK(pop.counts(0, 0) == 10); // C(5, 2)
  CHECK(binomial(40, 20) > 1e6);
  auto big = testing::small_planted(1);
  big.num_tasks = 40;
  big.num_groups = 2;
  CHECK_THROWS_AS(population_theta(generate(big), 20), InvalidInput);
}

TEST_CASE("population theta inherits label symmetries") {
  auto cfg = testing::small_planted(8);
  cfg.noise_std = 0.0;
  PlantedInstance inst = generate(cfg);
  // swap tasks 0 and 1
  PlantedInstance swapped = inst;
  swapped.labels.col(0) = inst.labels.col(1);
  swapped.labels.col(1) = inst.labels.col(0);
  const auto a = population_theta(inst, 3);
  const auto b = population_theta(swapped, 3);
  std::vector<Eigen::Index> p{1, 0, 2, 3, 4, 5};
  for (Eigen::Index i = 0; i < 6; ++i)
    for (Eigen::Index j = 0; j < 6; ++j)
      CHECK(b.theta(p[i], p[j]) == doctest::Approx(a.theta(i, j)).epsilon(1e-12));
}

TEST_CASE("block structure verification") {
  AffinityMatrix aff;
  aff.theta = Matrix::Constant(4, 4, 0.9);
  aff.theta.topLeftCorner(2, 2).setConstant(0.1);
  aff.theta.bottomRightCorner(2, 2).setConstant(0.1);
  aff.orientation = Orientation::kLoss;
  const std::vector<std::size_t> groups{0, 0, 1, 1};
  const auto r = verify_block_structure(aff, groups);
  CHECK(r.global_gap == doctest::Approx(0.8));
  CHECK(r.pass);
  for (const auto& g : r.per_row_gaps) CHECK(*g == doctest::Approx(0.8));
  const std::vector<std::size_t> single{0, 0, 0, 0};
  CHECK_THROWS_AS(verify_block_structure(aff, single), InvalidInput);
}

TEST_CASE("block gap grows with the separation") {
  int monotone = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::vector<double> gaps;
    for (double b : {2.0, 4.0, 8.0}) {
      auto cfg = testing::small_planted(seed);
      cfg.between_sep = b;
      const auto inst = generate(cfg);
      gaps.push_back(verify_block_structure(population_theta(inst, 3), inst.group_of).global_gap);
    }
    monotone += gaps[0] <= gaps[1] && gaps[1] <= gaps[2];
  }
  CHECK(monotone >= 9);
}

TEST_CASE("spectral clustering of the population average recovers the groups") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto inst = generate(testing::small_planted(seed));
    const auto cm = build_cluster_matrix(flip_orientation(population_theta(inst, 3)));
    const auto labels = spectral_cluster(cm.a1, 2, seed);
    CHECK(adjusted_rand_index(labels, inst.group_of) == 1.0);
  }
}

TEST_CASE("impossible separations raise a generation error") {
  auto cfg = testing::small_planted(1);
  cfg.label_bound = 1e-3;  // clipping destroys the planted distances
  try {
    generate(cfg);
    FAIL("expected GenerationError");
  } catch (const GenerationError& e) {
    CHECK(e.achieved_between() < cfg.between_sep);
  }
  cfg = testing::small_planted(1);
  cfg.num_groups = 7;
  CHECK_THROWS_AS(generate(cfg), InvalidInput);
}

TEST_CASE("instances round trip through a directory") {
  const auto dir = testing::scratch("planted_io");
  const auto inst = generate(testing::small_planted(9));
  save_planted_dataset(dir, inst);
  const auto back = load_dataset(dir);
  REQUIRE(back.planted.has_value());
  CHECK(back.planted->labels == inst.labels);
  CHECK(back.planted->pg == inst.pg);
  CHECK(back.planted->observed == inst.observed);
  CHECK(back.planted->test_rows == inst.test_rows);
  CHECK((back.planted->sigma_tilde - inst.sigma_tilde).cwiseAbs().maxCoeff() == 0.0);
  CHECK(back.data.inputs == inst.features);
  CHECK_THROWS_AS(load_dataset(dir / "missing"), MissingInput);
}

TEST_CASE("graph datasets round trip") {
  const auto dir = testing::scratch("graph_ds");
  std::vector<Graph::Edge> e{{0, 1}, {1, 2}, {2, 3}, {3, 0}};
  const Graph g(5, e, Matrix{}, {10, 20, 30, 40, 50});
  Task t = seeded_task(5, {0}, {2});
  t.val = {1};
  t.test = {3, 4};
  const TaskSet tasks(5, {t});
  GraphInputSpec spec;
  spec.hops = 1;
  spec.seed = 4;
  save_graph_dataset(dir, g, tasks, spec);
  const auto back = load_dataset(dir);
  REQUIRE(back.graph.has_value());
  CHECK(back.graph->num_nodes() == 5);
  CHECK(back.graph->edges() == g.edges());
  CHECK(back.graph->original_id(4) == 50);
  CHECK(back.data.inputs == graph_inputs(g, spec));
  CHECK(back.data.inputs.cols() == 32);
}

TEST_CASE("ppr similarity trivial cases") {
  const Graph g = two_block_graph(10, 0.5, 0.05, 1);
  const TaskSet same(20, {seeded_task(20, {1, 2}, {15}), seeded_task(20, {1, 2}, {16})});
  const auto grouped = partition_grouping(std::vector<std::size_t>{0, 0}, 1);
  const auto s = ppr_group_similarity(g, same, grouped);
  REQUIRE(s.within_mean.has_value());
  CHECK(*s.within_mean == doctest::Approx(1.0));
  CHECK_FALSE(s.between_mean.has_value());

  const auto apart = partition_grouping(std::vector<std::size_t>{0, 1}, 2);
  const auto t = ppr_group_similarity(g, same, apart);
  CHECK_FALSE(t.within_mean.has_value());
  CHECK(t.between_pairs == 1);
}

TEST_CASE("ppr similarity is higher within communities") {
  const Graph g = two_block_graph(30, 0.3, 0.01, 3);
  std::vector<Task> tasks;
  std::vector<std::size_t> groups;
  for (int k = 0; k < 6; ++k) {
    const NodeId base = k < 3 ? 0 : 30;
    tasks.push_back(seeded_task(60, {base + NodeId(3 * k % 30), base + NodeId((3 * k + 7) % 30)}, {(base + 45) % 60}));
    groups.push_back(k < 3 ? 0 : 1);
  }
  const auto s = ppr_group_similarity(g, TaskSet(60, tasks), partition_grouping(groups, 2));
  REQUIRE(s.within_mean.has_value());
  REQUIRE(s.between_mean.has_value());
  CHECK(s.within_pairs == 6);
  CHECK(s.between_pairs == 9);
  CHECK(*s.within_mean > *s.between_mean);

  // recompute the cosines independently
  Matrix r(60, 6);
  for (int k = 0; k < 6; ++k) {
    std::vector<NodeId> seeds;
    for (NodeId u : tasks[k].train)
      if (tasks[k].labels(static_cast<Eigen::Index>(u)) == 1.0) seeds.push_back(u);
    r.col(k) = personalized_pagerank(g, seeds);
  }
  double w = 0.0;
  for (int i = 0; i < 6; ++i)
    for (int j = i + 1; j < 6; ++j)
      if (groups[i] == groups[j]) w += r.col(i).normalized().dot(r.col(j).normalized());
  CHECK(*s.within_mean == doctest::Approx(w / 6.0).epsilon(1e-12));
}

TEST_CASE("simplex layout puts every group pair at the same centroid distance") {
  PlantedConfig cfg;
  cfg.num_tasks = 8;
  cfg.num_groups = 4;
  cfg.feature_dim = 5;
  cfg.num_nodes = 80;
  cfg.observed = 60;
  cfg.within_sep = 0.0;
  cfg.between_sep = 3.0;
  cfg.seed = 5;
  const auto inst = generate(cfg);
  // with a = 0 every task sits on its centroid; the projected distance equals b + a for all pairs
  const Matrix proj = inst.sigma * inst.labels;
  for (Eigen::Index i = 0; i < 8; ++i)
    for (Eigen::Index j = i + 1; j < 8; ++j) {
      const double dist = (proj.col(i) - proj.col(j)).norm();
      if (inst.group_of[i] == inst.group_of[j]) CHECK(dist < 1e-9);
      else CHECK(dist == doctest::Approx(3.0).epsilon(1e-9));
    }
  cfg.layout = CentroidLayout::kRandom;
  CHECK(generate(cfg).achieved_between >= 3.0 - 1e-9);
  cfg.layout = CentroidLayout::kSimplex;
  cfg.feature_dim = 3;
  CHECK_THROWS_AS(generate(cfg), InvalidInput);
  CHECK(parse_centroid_layout(to_string(CentroidLayout::kRandom)) == CentroidLayout::kRandom);
}
