#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <random>
#include <set>

#include "support.hpp"
#include "taskaff/error.hpp"
#include "taskaff/io.hpp"
#include "taskaff/tasks.hpp"

using namespace taskaff;

namespace {

Graph path_graph(std::size_t n) {
  std::vector<Graph::Edge> e;
  for (NodeId u = 0; u + 1 < n; ++u) e.emplace_back(u, u + 1);
  return Graph(n, e);
}

}  // namespace

TEST_CASE("load_communities keeps the largest") {
  const auto dir = testing::scratch("cmty");
  const Graph g = path_graph(5);
  io::write_text(dir / "c.txt", "0 1 2\n3 4\n");
  auto list = load_communities(dir / "c.txt", g, 1);
  REQUIRE(list.communities.size() == 1);
  CHECK(list.communities[0] == Community{0, 1, 2});

  try {
    load_communities(dir / "c.txt", g, 5);
    FAIL("expected shortfall");
  } catch (const ShortfallError& e) {
    CHECK(e.available() == 2);
  }

  io::write_text(dir / "d.txt", "0 1 77\n");
  list = load_communities(dir / "d.txt", g, 1);
  CHECK(list.dropped_members == 1);
  CHECK(list.communities[0] == Community{0, 1});
}

TEST_CASE("community sizes come out non-increasing") {
  const auto dir = testing::scratch("cmty20");
  const Graph g = path_graph(100);
  std::mt19937_64 rng(11);
  std::string text;
  std::vector<std::size_t> sizes;
  for (int c = 0; c < 20; ++c) {
    const std::size_t size = 2 + rng() % 30;
    sizes.push_back(size);
    std::vector<int> ids(100);
    std::iota(ids.begin(), ids.end(), 0);
    std::shuffle(ids.begin(), ids.end(), rng);
    for (std::size_t k = 0; k < size; ++k) text += std::to_string(ids[k]) + (k + 1 < size ? " " : "\n");
  }
  io::write_text(dir / "c.txt", text);
  const auto list = load_communities(dir / "c.txt", g, 20);
  std::sort(sizes.rbegin(), sizes.rend());
  for (std::size_t k = 0; k < 20; ++k) CHECK(list.communities[k].size() == sizes[k]);
}

TEST_CASE("split sizes follow the policy arithmetic") {
  const Graph g = path_graph(100);
  Community c(10);
  std::iota(c.begin(), c.end(), NodeId{20});
  const auto r = make_splits({c}, g, {0.1, 0.1, 0.2, 7});
  const Task& t = r.tasks.task(0);
  std::size_t pos = 0, neg = 0;
  for (NodeId u : t.train) (t.labels(static_cast<Eigen::Index>(u)) == 1.0 ? pos : neg)++;
  CHECK(pos == 1);
  CHECK(neg == 1);
  CHECK(t.val.size() == 20);
  CHECK(t.test.size() == 78);
}

TEST_CASE("splits are deterministic and seed changes keep sizes") {
  const Graph g = path_graph(200);
  std::vector<Community> cs;
  std::mt19937_64 rng(5);
  for (int k = 0; k < 50; ++k) {
    Community c;
    for (NodeId u = 0; u < 200; ++u)
      if (rng() % 7 == 0) c.push_back(u);
    cs.push_back(c);
  }
  const auto a = make_splits(cs, g, {0.1, 0.1, 0.2, 1});
  const auto b = make_splits(cs, g, {0.1, 0.1, 0.2, 1});
  const auto c = make_splits(cs, g, {0.1, 0.1, 0.2, 2});
  REQUIRE(a.tasks.num_tasks() == 50);
  bool any_differs = false;
  for (TaskId i = 0; i < 50; ++i) {
    const Task& x = a.tasks.task(i);
    const Task& y = b.tasks.task(i);
    const Task& z = c.tasks.task(i);
    CHECK(x.train == y.train);
    CHECK(x.val == y.val);
    CHECK(x.test == y.test);
    CHECK(x.train.size() == z.train.size());
    CHECK(x.val.size() == z.val.size());
    CHECK(x.test.size() == z.test.size());
    any_differs = any_differs || x.train != z.train;

    std::set<NodeId> seen;
    for (auto* mask : {&x.train, &x.val, &x.test})
      for (NodeId u : *mask) {
        CHECK(u < 200);
        CHECK(seen.insert(u).second);
      }
  }
  CHECK(any_differs);
}

TEST_CASE("tiny and all-covering communities are rejected") {
  const Graph g = path_graph(10);
  Community all(10);
  std::iota(all.begin(), all.end(), NodeId{0});
  const auto r = make_splits({Community{3}, Community{1, 2, 3}, all}, g, {0.1, 0.1, 0.2, 0});
  CHECK(r.tasks.num_tasks() == 1);
  CHECK(r.rejected == std::vector<std::size_t>{0, 2});
}

TEST_CASE("split policy validation") {
  CHECK_THROWS_AS(SplitPolicy({0.0, 0.1, 0.2, 0}).validate(), InvalidInput);
  CHECK_THROWS_AS(SplitPolicy({0.5, 0.1, 0.6, 0}).validate(), InvalidInput);
  CHECK_NOTHROW(SplitPolicy{}.validate());
}

TEST_CASE("task set invariants are enforced") {
  Task t;
  t.name = "x";
  t.labels = Vector::Zero(6);
  t.labels(0) = 1.0;
  t.train = {0, 1};
  t.val = {1, 2};
  CHECK_THROWS_AS(TaskSet(6, {t}), InvalidInput);  // overlap
  t.val = {2};
  t.test = {9};
  CHECK_THROWS_AS(TaskSet(6, {t}), InvalidInput);  // range
  t.test = {3};
  t.train = {1, 2};
  t.val = {4};
  CHECK_THROWS_AS(TaskSet(6, {t}), InvalidInput);  // no training positive
  t.train = {0, 1};
  t.val = {2};
  t.labels(5) = 0.5;
  CHECK_THROWS_AS(TaskSet(6, {t}), InvalidInput);  // non-binary label
  t.labels(5) = 0.0;
  CHECK_NOTHROW(TaskSet(6, {t}));
}

TEST_CASE("task set json round trip") {
  const auto dir = testing::scratch("taskset");
  Dataset d = testing::toy_binary(40, 3, 2);
  std::vector<Task> tasks = d.tasks.tasks();
  Task real = tasks[0];
  real.kind = LabelKind::kReal;
  real.name = "real";
  real.labels = Vector::LinSpaced(40, -1.0, 1.0 / 3.0);
  tasks.push_back(real);
  const TaskSet ts(40, tasks);
  save_taskset(ts, dir / "t.json");
  const TaskSet back = load_taskset(dir / "t.json");
  REQUIRE(back.num_tasks() == 4);
  for (TaskId i = 0; i < 4; ++i) {
    CHECK(back.task(i).name == ts.task(i).name);
    CHECK(back.task(i).kind == ts.task(i).kind);
    CHECK(back.task(i).labels == ts.task(i).labels);
    CHECK(back.task(i).train == ts.task(i).train);
    CHECK(back.task(i).test == ts.task(i).test);
  }
}
