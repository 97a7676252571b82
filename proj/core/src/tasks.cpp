#include "taskaff/tasks.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "taskaff/error.hpp"
#include "taskaff/io.hpp"
#include "taskaff/rng.hpp"

namespace taskaff {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

bool sorted_unique(const std::vector<NodeId>& v) {
  return std::adjacent_find(v.begin(), v.end(), std::greater_equal<>{}) == v.end();
}

bool disjoint(const std::vector<NodeId>& a, const std::vector<NodeId>& b) {
  auto i = a.begin();
  auto j = b.begin();
  while (i != a.end() && j != b.end()) {
    if (*i == *j) return false;
    if (*i < *j) ++i; else ++j;
  }
  return true;
}

// ceil() that ignores representation noise such as 0.1 * 30 = 3.0000000000000004.
std::size_t ceil_count(double x) {
  return static_cast<std::size_t>(std::ceil(x - 1e-9));
}

// First `count` entries of a partial Fisher-Yates shuffle, sorted.
std::vector<NodeId> sample_without_replacement(std::vector<NodeId> pool, std::size_t count,
                                               Rng& rng) {
  count = std::min(count, pool.size());
  for (std::size_t k = 0; k < count; ++k) {
    std::uniform_int_distribution<std::size_t> pick(k, pool.size() - 1);
    std::swap(pool[k], pool[pick(rng)]);
  }
  pool.resize(count);
  std::sort(pool.begin(), pool.end());
  return pool;
}

std::vector<NodeId> set_difference(const std::vector<NodeId>& all, const std::vector<NodeId>& remove) {
  std::vector<NodeId> out;
  std::set_difference(all.begin(), all.end(), remove.begin(), remove.end(), std::back_inserter(out));
  return out;
}

}  // namespace

TaskSet::TaskSet(std::size_t num_nodes, std::vector<Task> tasks)
    : num_nodes_(num_nodes), tasks_(std::move(tasks)) {
  for (std::size_t i = 0; i < tasks_.size(); ++i) {
    const Task& t = tasks_[i];
    const std::string where = "task " + std::to_string(i) + " (" + t.name + ")";
    if (static_cast<std::size_t>(t.labels.size()) != num_nodes)
      throw InvalidInput(where + ": label vector length differs from node count");
    for (const auto* m : {&t.train, &t.val, &t.test}) {
      if (!sorted_unique(*m)) throw InvalidInput(where + ": mask not sorted/unique");
      if (!m->empty() && m->back() >= num_nodes) throw InvalidInput(where + ": mask node out of range");
    }
    if (!disjoint(t.train, t.val) || !disjoint(t.train, t.test) || !disjoint(t.val, t.test))
      throw InvalidInput(where + ": train/val/test masks overlap");
    if (t.kind == LabelKind::kBinary) {
      for (Eigen::Index v = 0; v < t.labels.size(); ++v)
        if (t.labels[v] != 0.0 && t.labels[v] != 1.0)
          throw InvalidInput(where + ": binary labels must be 0 or 1");
      std::size_t pos = 0;
      for (NodeId v : t.train) pos += t.labels[static_cast<Eigen::Index>(v)] == 1.0;
      if (pos == 0 || pos == t.train.size())
        throw InvalidInput(where + ": training mask needs a positive and a negative node");
    }
  }
}

void SplitPolicy::validate() const {
  auto in_unit = [](double f) { return f > 0.0 && f < 1.0; };
  if (!in_unit(train_pos_frac) || !in_unit(train_neg_frac) || !in_unit(val_frac))
    throw InvalidInput("split fractions must lie in (0, 1)");
  if (!(train_pos_frac + val_frac < 1.0))
    throw InvalidInput("train_pos_frac + val_frac must be below 1");
}

CommunityList load_communities(const fs::path& path, const Graph& g, std::size_t top_k) {
  io::require_exists(path);
  std::ifstream in(path);
  const auto name = path.string();
  CommunityList out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto toks = io::split_ws(line);
    if (toks.empty() || toks.front().front() == '#') continue;
    Community c;
    c.reserve(toks.size());
    for (auto tok : toks) {
      std::int64_t id = 0;
      auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), id);
      if (ec != std::errc{} || ptr != tok.data() + tok.size())
        throw ParseError(name, lineno, "bad member id '" + std::string(tok) + "'");
      if (auto node = g.internal_id(id)) c.push_back(*node);
      else ++out.dropped_members;
    }
    std::sort(c.begin(), c.end());
    c.erase(std::unique(c.begin(), c.end()), c.end());
    out.communities.push_back(std::move(c));
  }
  if (out.communities.size() < top_k) throw ShortfallError(top_k, out.communities.size());
  std::stable_sort(out.communities.begin(), out.communities.end(),
                   [](const Community& a, const Community& b) { return a.size() > b.size(); });
  out.communities.resize(top_k);
  return out;
}

SplitResult make_splits(const std::vector<Community>& communities, const Graph& g,
                        const SplitPolicy& policy) {
  policy.validate();
  const std::size_t n = g.num_nodes();
  std::vector<NodeId> all(n);
  for (NodeId v = 0; v < n; ++v) all[v] = v;
  const auto val_target = static_cast<std::size_t>(std::llround(policy.val_frac * static_cast<double>(n)));

  SplitResult result;
  std::vector<Task> tasks;
  for (std::size_t k = 0; k < communities.size(); ++k) {
    Community members = communities[k];
    std::sort(members.begin(), members.end());
    members.erase(std::unique(members.begin(), members.end()), members.end());
    if (members.size() < 2 || members.size() >= n || (!members.empty() && members.back() >= n)) {
      result.rejected.push_back(k);
      continue;
    }
    Rng rng = make_rng(policy.seed, Stream::kSplits, k);
    const auto size = static_cast<double>(members.size());
    auto pos = sample_without_replacement(members, ceil_count(policy.train_pos_frac * size), rng);
    auto neg = sample_without_replacement(set_difference(all, members),
                                          ceil_count(policy.train_neg_frac * size), rng);
    Task t;
    t.name = "community_" + std::to_string(k);
    t.kind = LabelKind::kBinary;
    t.labels = Vector::Zero(static_cast<Eigen::Index>(n));
    for (NodeId v : members) t.labels[static_cast<Eigen::Index>(v)] = 1.0;
    std::merge(pos.begin(), pos.end(), neg.begin(), neg.end(), std::back_inserter(t.train));
    auto rest = set_difference(all, t.train);
    t.val = sample_without_replacement(rest, val_target, rng);
    t.test = set_difference(rest, t.val);
    tasks.push_back(std::move(t));
  }
  result.tasks = TaskSet(n, std::move(tasks));
  return result;
}

void save_taskset(const TaskSet& tasks, const fs::path& path) {
  json j;
  j["num_nodes"] = tasks.num_nodes();
  json arr = json::array();
  for (const Task& t : tasks.tasks()) {
    json jt;
    jt["name"] = t.name;
    if (t.kind == LabelKind::kBinary) {
      jt["kind"] = "binary";
      std::vector<NodeId> positives;
      for (Eigen::Index v = 0; v < t.labels.size(); ++v)
        if (t.labels[v] == 1.0) positives.push_back(static_cast<NodeId>(v));
      jt["positives"] = positives;
    } else {
      jt["kind"] = "real";
      jt["labels"] = std::vector<double>(t.labels.data(), t.labels.data() + t.labels.size());
    }
    jt["train"] = t.train;
    jt["val"] = t.val;
    jt["test"] = t.test;
    arr.push_back(std::move(jt));
  }
  j["tasks"] = std::move(arr);
  io::write_text(path, j.dump(1) + "\n");
}

TaskSet load_taskset(const fs::path& path) {
  json j;
  try {
    j = json::parse(io::read_text(path));
    const auto n = j.at("num_nodes").get<std::size_t>();
    std::vector<Task> tasks;
    for (const auto& jt : j.at("tasks")) {
      Task t;
      t.name = jt.value("name", "");
      const auto kind = jt.at("kind").get<std::string>();
      if (kind == "binary") {
        t.kind = LabelKind::kBinary;
        t.labels = Vector::Zero(static_cast<Eigen::Index>(n));
        for (auto v : jt.at("positives").get<std::vector<NodeId>>()) {
          if (v >= n) throw InvalidInput("positive node out of range");
          t.labels[static_cast<Eigen::Index>(v)] = 1.0;
        }
      } else if (kind == "real") {
        t.kind = LabelKind::kReal;
        auto values = jt.at("labels").get<std::vector<double>>();
        t.labels = Eigen::Map<const Vector>(values.data(), static_cast<Eigen::Index>(values.size()));
      } else {
        throw InvalidInput("unknown task kind '" + kind + "'");
      }
      t.train = jt.at("train").get<std::vector<NodeId>>();
      t.val = jt.at("val").get<std::vector<NodeId>>();
      t.test = jt.at("test").get<std::vector<NodeId>>();
      tasks.push_back(std::move(t));
    }
    return TaskSet(n, std::move(tasks));
  } catch (const json::exception& e) {
    throw InvalidInput(path.string() + ": " + e.what());
  }
}

}  // namespace taskaff
