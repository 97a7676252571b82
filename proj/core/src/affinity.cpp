#include "taskaff/affinity.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <mutex>
#include <set>

#include <json.hpp>

#include "taskaff/error.hpp"
#include "taskaff/io.hpp"
#include "taskaff/parallel.hpp"

namespace taskaff {

namespace fs = std::filesystem;
using json = nlohmann::json;

void SamplingPlan::validate() const {
  if (subset_size < 2 || subset_size > num_tasks)
    throw InvalidInput("subset size must satisfy 2 <= alpha <= T (alpha=" +
                       std::to_string(subset_size) + ", T=" + std::to_string(num_tasks) + ")");
  if (num_subsets < 1) throw InvalidInput("num_subsets must be at least 1");
}

std::size_t default_min_pair_coverage(std::size_t num_tasks) { return num_tasks <= 200 ? 1 : 0; }

TaskSubset sample_uniform_subset(std::size_t num_tasks, std::size_t size, Rng& rng) {
  // Floyd's algorithm: uniform over all size-`size` subsets.
  std::set<TaskId> chosen;
  for (std::size_t j = num_tasks - size; j < num_tasks; ++j) {
    std::uniform_int_distribution<std::size_t> pick(0, j);
    const TaskId t = pick(rng);
    if (!chosen.insert(t).second) chosen.insert(j);
  }
  return TaskSubset(chosen.begin(), chosen.end());
}

namespace {

void add_pairs(IndexMatrix& counts, const TaskSubset& s) {
  for (TaskId i : s)
    for (TaskId j : s) ++counts(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
}

std::vector<CoverageError::Pair> uncovered_pairs(const IndexMatrix& counts, std::size_t min_count) {
  std::vector<CoverageError::Pair> out;
  for (Eigen::Index i = 0; i < counts.rows(); ++i)
    for (Eigen::Index j = i + 1; j < counts.cols(); ++j)
      if (counts(i, j) < static_cast<long>(min_count))
        out.emplace_back(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
  return out;
}

}  // namespace

SampledSubsets sample_subsets(const SamplingPlan& plan) {
  plan.validate();
  const auto t = plan.num_tasks;
  SampledSubsets out;
  out.requested = plan.num_subsets;
  Rng rng = make_rng(plan.seed, Stream::kSubsets);
  IndexMatrix counts = IndexMatrix::Zero(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(t));
  for (std::size_t k = 0; k < plan.num_subsets; ++k) {
    out.subsets.push_back(sample_uniform_subset(t, plan.subset_size, rng));
    add_pairs(counts, out.subsets.back());
  }
  if (plan.min_pair_coverage == 0) return out;

  // Top-up: each appended subset contains the lowest uncovered pair plus a
  // uniform draw of alpha - 2 further tasks.
  const std::size_t cap = 10 * plan.num_subsets;
  Rng topup = make_rng(plan.seed, Stream::kSubsets, 1);
  for (;;) {
    auto missing = uncovered_pairs(counts, plan.min_pair_coverage);
    if (missing.empty()) break;
    if (out.subsets.size() >= cap)
      throw CoverageError("pair coverage not reached within 10n subsets", std::move(missing));
    const auto [a, b] = missing.front();
    std::vector<TaskId> rest;
    for (TaskId x = 0; x < t; ++x)
      if (x != a && x != b) rest.push_back(x);
    TaskSubset s{a, b};
    for (TaskId idx : sample_uniform_subset(rest.size(), plan.subset_size - 2, topup)) s.push_back(rest[idx]);
    std::sort(s.begin(), s.end());
    add_pairs(counts, s);
    out.subsets.push_back(std::move(s));
    ++out.appended;
  }
  return out;
}

double SubsetEvaluation::score_of(TaskId task) const {
  auto it = std::lower_bound(subset.begin(), subset.end(), task);
  if (it == subset.end() || *it != task)
    throw InvalidInput("task " + std::to_string(task) + " not in evaluated subset");
  return scores[static_cast<std::size_t>(it - subset.begin())];
}

std::uint64_t subset_training_seed(std::uint64_t base_seed, std::size_t index) {
  return derive_seed(base_seed, Stream::kTraining, index);
}

std::vector<SubsetEvaluation> collect_evaluations(const Dataset& data,
                                                  std::span<const TaskSubset> subsets,
                                                  const LearnerSpec& spec, std::uint64_t base_seed,
                                                  const CollectOptions& options) {
  spec.validate();
  std::vector<SubsetEvaluation> out(subsets.size());
  std::vector<bool> done(subsets.size(), false);
  std::mutex mu;
  std::size_t next_to_emit = 0;

  parallel_for(subsets.size(), options.workers, [&](std::size_t k) {
    const std::size_t global = options.index_offset + k;
    SubsetEvaluation ev;
    ev.subset = subsets[k];
    ev.metric = spec.metric;
    ev.seed = subset_training_seed(base_seed, global);
    try {
      const MtlModel model = train_subset(data, ev.subset, spec, ev.seed);
      ev.scores.reserve(ev.subset.size());
      for (TaskId t : ev.subset) ev.scores.push_back(evaluate(model, data, t, options.mask, spec.metric));
    } catch (const TrainingError& e) {
      throw TrainingError("subset " + std::to_string(global), e);
    }
    std::lock_guard lock(mu);
    out[k] = std::move(ev);
    done[k] = true;
    while (next_to_emit < out.size() && done[next_to_emit]) {
      if (options.on_complete) options.on_complete(options.index_offset + next_to_emit, out[next_to_emit]);
      ++next_to_emit;
    }
  });
  return out;
}

AffinityMatrix estimate_affinity(std::span<const SubsetEvaluation> evals, std::size_t num_tasks) {
  const auto t = static_cast<Eigen::Index>(num_tasks);
  AffinityMatrix aff;
  aff.theta = Matrix::Zero(t, t);
  aff.counts = IndexMatrix::Zero(t, t);
  aff.imputed = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(t, t, false);
  aff.orientation = Orientation::kPerformance;
  if (evals.empty()) throw InvalidInput("estimate_affinity: empty evaluation log");

  const Metric metric = evals.front().metric;
  double grand_total = 0.0;
  std::size_t grand_count = 0;
  for (const auto& ev : evals) {
    if (ev.metric != metric) throw InvalidInput("estimate_affinity: evaluations mix metrics");
    if (ev.scores.size() != ev.subset.size()) throw InvalidInput("estimate_affinity: score count mismatch");
    for (std::size_t a = 0; a < ev.subset.size(); ++a) {
      const TaskId i = ev.subset[a];
      if (i >= num_tasks)
        throw InvalidInput("estimate_affinity: task id " + std::to_string(i) + " >= T=" + std::to_string(num_tasks));
      grand_total += ev.scores[a];
      ++grand_count;
      for (TaskId j : ev.subset) {
        if (j >= num_tasks) continue;
        aff.theta(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) += ev.scores[a];
        ++aff.counts(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      }
    }
  }
  const double grand_mean = grand_total / static_cast<double>(grand_count);
  for (Eigen::Index i = 0; i < t; ++i) {
    if (aff.counts(i, i) > 0) aff.theta(i, i) /= static_cast<double>(aff.counts(i, i));
    else {
      aff.theta(i, i) = grand_mean;
      aff.imputed(i, i) = true;
    }
  }
  for (Eigen::Index i = 0; i < t; ++i) {
    for (Eigen::Index j = 0; j < t; ++j) {
      if (i == j) continue;
      if (aff.counts(i, j) > 0) {
        aff.theta(i, j) /= static_cast<double>(aff.counts(i, j));
      } else {
        aff.theta(i, j) = aff.theta(i, i);
        aff.imputed(i, j) = true;
      }
    }
  }
  return aff;
}

AffinityMatrix flip_orientation(AffinityMatrix aff) {
  aff.theta = -aff.theta;
  aff.orientation = aff.orientation == Orientation::kLoss ? Orientation::kPerformance : Orientation::kLoss;
  return aff;
}

std::vector<double> convergence_trace(std::span<const SubsetEvaluation> evals,
                                      std::size_t num_tasks,
                                      std::span<const std::size_t> checkpoints) {
  const AffinityMatrix full = estimate_affinity(evals, num_tasks);
  std::vector<double> out;
  std::size_t prev = 0;
  for (std::size_t c : checkpoints) {
    if (c == 0 || c > evals.size()) throw InvalidInput("checkpoint outside 1..n");
    if (c < prev) throw InvalidInput("checkpoints must be ascending");
    prev = c;
    const AffinityMatrix part = estimate_affinity(evals.first(c), num_tasks);
    out.push_back((part.theta - full.theta).cwiseAbs().maxCoeff());
  }
  return out;
}

ScoreLog score_log_for(std::span<const SubsetEvaluation> evals, TaskId task) {
  std::map<TaskSubset, std::pair<double, std::size_t>> acc;
  for (const auto& ev : evals) {
    if (!std::binary_search(ev.subset.begin(), ev.subset.end(), task)) continue;
    auto& [sum, count] = acc[ev.subset];
    sum += ev.score_of(task);
    ++count;
  }
  ScoreLog out;
  for (const auto& [s, v] : acc) out.emplace(s, v.first / static_cast<double>(v.second));
  return out;
}

namespace {

bool is_subset(const TaskSubset& inner, const TaskSubset& outer) {
  return std::includes(outer.begin(), outer.end(), inner.begin(), inner.end());
}

TaskSubset with(const TaskSubset& s, TaskId x) {
  TaskSubset out = s;
  out.insert(std::upper_bound(out.begin(), out.end(), x), x);
  return out;
}

bool contains(const TaskSubset& s, TaskId x) { return std::binary_search(s.begin(), s.end(), x); }

}  // namespace

std::vector<MonotonicityViolation> probe_monotonicity(const ScoreLog& log, TaskId task) {
  std::vector<MonotonicityViolation> out;
  std::size_t comparisons = 0;
  for (const auto& [small, fs] : log) {
    if (!contains(small, task)) continue;
    for (const auto& [large, fl] : log) {
      if (large.size() <= small.size() || !is_subset(small, large)) continue;
      ++comparisons;
      if (fl < fs) out.push_back({small, large, fs, fl});
    }
  }
  if (comparisons == 0) throw EmptyDomain("probe_monotonicity: log has no nested subsets");
  return out;
}

std::vector<SubmodularityViolation> probe_submodularity(const ScoreLog& log, TaskId task) {
  std::set<TaskId> universe;
  for (const auto& [s, f] : log) universe.insert(s.begin(), s.end());
  std::vector<SubmodularityViolation> out;
  std::size_t comparisons = 0;
  for (const auto& [inner, f_inner] : log) {
    if (!contains(inner, task)) continue;
    for (const auto& [outer, f_outer] : log) {
      if (outer.size() < inner.size() || !is_subset(inner, outer)) continue;
      for (TaskId x : universe) {
        if (contains(outer, x)) continue;
        auto inner_x = log.find(with(inner, x));
        auto outer_x = log.find(with(outer, x));
        if (inner_x == log.end() || outer_x == log.end()) continue;
        ++comparisons;
        const double gain_inner = inner_x->second - f_inner;
        const double gain_outer = outer_x->second - f_outer;
        if (gain_outer > gain_inner) out.push_back({inner, outer, x, gain_inner, gain_outer});
      }
    }
  }
  if (comparisons == 0) throw EmptyDomain("probe_submodularity: log has no complete quadruple");
  return out;
}

void save_subsets(const fs::path& path, const SampledSubsets& subsets) {
  json j;
  j["requested"] = subsets.requested;
  j["appended"] = subsets.appended;
  j["subsets"] = subsets.subsets;
  io::write_text(path, j.dump() + "\n");
}

SampledSubsets load_subsets(const fs::path& path) {
  try {
    const json j = json::parse(io::read_text(path));
    SampledSubsets out;
    out.requested = j.at("requested").get<std::size_t>();
    out.appended = j.at("appended").get<std::size_t>();
    out.subsets = j.at("subsets").get<std::vector<TaskSubset>>();
    return out;
  } catch (const json::exception& e) {
    throw InvalidInput(path.string() + ": " + e.what());
  }
}

std::string evaluation_log_header() { return "subset_index,task_id,score,metric,seed\n"; }

std::string evaluation_log_rows(std::size_t index, const SubsetEvaluation& eval) {
  std::string out;
  const auto metric = to_string(eval.metric);
  const auto seed = std::to_string(eval.seed);
  for (std::size_t a = 0; a < eval.subset.size(); ++a) {
    out += std::to_string(index);
    out += ',';
    out += std::to_string(eval.subset[a]);
    out += ',';
    out += io::format_double(eval.scores[a]);
    out += ',';
    out += metric;
    out += ',';
    out += seed;
    out += '\n';
  }
  return out;
}

namespace {

template <typename T>
bool parse_int(std::string_view s, T& out) {
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc{} && ptr == s.data() + s.size();
}

}  // namespace

EvaluationLog read_evaluation_log(const fs::path& path, std::span<const TaskSubset> subsets) {
  EvaluationLog log;
  if (!fs::exists(path)) return log;
  const std::string text = io::read_text(path);
  const std::string header = evaluation_log_header();
  if (text.compare(0, header.size(), header) != 0) {
    if (text.empty()) return log;
    throw InvalidInput(path.string() + ": unexpected evaluation log header");
  }
  std::size_t pos = header.size();
  log.valid_bytes = pos;
  SubsetEvaluation current;
  std::size_t current_index = 0;
  bool ok = true;
  while (ok && pos < text.size() && log.evals.size() < subsets.size()) {
    const std::size_t k = log.evals.size();
    const TaskSubset& expected = subsets[k];
    current = SubsetEvaluation{};
    current.subset = expected;
    for (std::size_t a = 0; a < expected.size(); ++a) {
      const auto eol = text.find('\n', pos);
      if (eol == std::string::npos) { ok = false; break; }
      const std::string_view line(text.data() + pos, eol - pos);
      std::vector<std::string_view> cells;
      std::size_t start = 0;
      for (;;) {
        const auto comma = line.find(',', start);
        cells.push_back(line.substr(start, comma == std::string_view::npos ? comma : comma - start));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
      }
      std::size_t task = 0;
      if (cells.size() != 5 || !parse_int(cells[0], current_index) || current_index != k ||
          !parse_int(cells[1], task) || task != expected[a] || !parse_int(cells[4], current.seed)) {
        ok = false;
        break;
      }
      double score = 0.0;
      auto [ptr, ec] = std::from_chars(cells[2].data(), cells[2].data() + cells[2].size(), score);
      if (ec != std::errc{} || ptr != cells[2].data() + cells[2].size()) { ok = false; break; }
      current.scores.push_back(score);
      current.metric = parse_metric(std::string(cells[3]));
      pos = eol + 1;
    }
    if (ok) {
      log.evals.push_back(std::move(current));
      log.valid_bytes = pos;
    }
  }
  return log;
}

void save_affinity(const fs::path& dir, const AffinityMatrix& aff) {
  io::write_matrix_csv(dir / "theta.csv", aff.theta);
  io::write_index_matrix_csv(dir / "counts.csv", aff.counts);
  json j;
  j["num_tasks"] = aff.num_tasks();
  j["orientation"] = aff.orientation == Orientation::kPerformance ? "performance" : "loss";
  json imputed = json::array();
  for (Eigen::Index i = 0; i < aff.imputed.rows(); ++i)
    for (Eigen::Index k = 0; k < aff.imputed.cols(); ++k)
      if (aff.imputed(i, k)) imputed.push_back({i, k});
  j["imputed"] = imputed;
  io::write_text(dir / "affinity.json", j.dump(1) + "\n");
}

AffinityMatrix load_affinity(const fs::path& dir) {
  AffinityMatrix aff;
  aff.theta = io::read_matrix_csv(dir / "theta.csv");
  aff.counts = io::read_index_matrix_csv(dir / "counts.csv");
  const json j = json::parse(io::read_text(dir / "affinity.json"));
  const auto t = j.at("num_tasks").get<Eigen::Index>();
  if (aff.theta.rows() != t || aff.theta.cols() != t || aff.counts.rows() != t || aff.counts.cols() != t)
    throw InvalidInput(dir.string() + ": affinity matrices are not " + std::to_string(t) + "x" + std::to_string(t));
  aff.orientation = j.at("orientation").get<std::string>() == "loss" ? Orientation::kLoss : Orientation::kPerformance;
  aff.imputed = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(t, t, false);
  for (const auto& e : j.at("imputed")) aff.imputed(e.at(0).get<Eigen::Index>(), e.at(1).get<Eigen::Index>()) = true;
  return aff;
}

}  // namespace taskaff
