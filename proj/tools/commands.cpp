#include "commands.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "json_config.hpp"
#include "taskaff/affinity.hpp"
#include "taskaff/dataset.hpp"
#include "taskaff/error.hpp"
#include "taskaff/grouping.hpp"
#include "taskaff/io.hpp"
#include "taskaff/parallel.hpp"
#include "taskaff/planted.hpp"
#include "taskaff/similarity.hpp"
#include "taskaff/transfer.hpp"

namespace taskaff::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Globals {
  std::uint64_t seed = 0;
  std::string out;
  std::size_t workers = 1;
};

MaskKind parse_mask(const std::string& s) {
  if (s == "train") return MaskKind::kTrain;
  if (s == "val") return MaskKind::kVal;
  if (s == "test") return MaskKind::kTest;
  throw InvalidInput("unknown mask '" + s + "' (expected train, val or test)");
}

struct LearnerFlags {
  std::string learner = "linear";
  std::string metric = "auto";
  std::size_t hidden = 64;
  std::size_t layers = 1;
  double lr = 0.05;
  std::size_t epochs = 500;
  double ridge = 0.0;

  void add_to(CLI::App* sub) {
    sub->add_option("--learner", learner, "linear | mlp")->capture_default_str();
    sub->add_option("--metric", metric, "auto | negce | negmse | f1 (auto: negmse for real labels)")
        ->capture_default_str();
    sub->add_option("--hidden", hidden, "mlp hidden width")->capture_default_str();
    sub->add_option("--layers", layers, "mlp hidden layers")->capture_default_str();
    sub->add_option("--lr", lr, "mlp learning rate")->capture_default_str();
    sub->add_option("--epochs", epochs, "mlp epochs")->capture_default_str();
    sub->add_option("--ridge", ridge, "ridge penalty")->capture_default_str();
  }

  LearnerSpec resolve(const Dataset& data) const {
    LearnerSpec s;
    s.kind = parse_learner_kind(learner);
    s.hidden_width = hidden;
    s.hidden_layers = layers;
    s.learning_rate = lr;
    s.epochs = epochs;
    s.ridge = ridge;
    if (metric == "auto") {
      const auto& tasks = data.tasks.tasks();
      const bool all_real = std::all_of(tasks.begin(), tasks.end(),
                                        [](const Task& t) { return t.kind == LabelKind::kReal; });
      s.metric = all_real ? Metric::kNegMse : Metric::kNegCrossEntropy;
    } else {
      s.metric = parse_metric(metric);
    }
    s.validate();
    return s;
  }
};

json learner_json(const LearnerSpec& s) {
  return {{"learner", to_string(s.kind)}, {"metric", to_string(s.metric)},
          {"hidden", s.hidden_width},     {"layers", s.hidden_layers},
          {"lr", s.learning_rate},        {"epochs", s.epochs},
          {"ridge", s.ridge}};
}

LearnerSpec learner_from_json(const json& j) {
  LearnerSpec s;
  s.kind = parse_learner_kind(j.at("learner"));
  s.metric = parse_metric(j.at("metric"));
  s.hidden_width = j.at("hidden");
  s.hidden_layers = j.at("layers");
  s.learning_rate = j.at("lr");
  s.epochs = j.at("epochs");
  s.ridge = j.at("ridge");
  s.validate();
  return s;
}

std::vector<fs::path> files_under(const fs::path& dir) {
  std::vector<fs::path> out;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

// Tracks the inputs a command read and writes manifest.json next to its
// outputs: resolved config plus content hashes, nothing time-dependent.
class Run {
 public:
  Run(const CLI::App& app, const Globals& g, const CLI::App& sub)
      : app_(app), sub_(sub), dir_(g.out) {
    fs::create_directories(dir_);
  }

  fs::path out(const std::string& name) const { return dir_ / name; }

  // Registers a file the command depends on; throws MissingInput if absent.
  const fs::path& input(const fs::path& p) {
    io::require_exists(p);
    inputs_[p.generic_string()] = io::file_hash(p);
    return p;
  }

  void input_dir(const fs::path& dir) {
    io::require_exists(dir);
    for (const auto& f : files_under(dir))
      if (f.filename() != "manifest.json") input(f);
  }

  void finish() const {
    json config = json::parse(app_.config_to_str(true, false));
    config.erase("out");
    json outputs = json::object();
    for (const auto& f : files_under(dir_)) {
      const auto rel = fs::relative(f, dir_).generic_string();
      if (rel != "manifest.json") outputs[rel] = io::file_hash(f);
    }
    json m = {{"command", sub_.get_name()}, {"config", config}, {"inputs", inputs_}, {"outputs", outputs}};
    io::write_text(dir_ / "manifest.json", m.dump(1) + "\n");
  }

 private:
  const CLI::App& app_;
  const CLI::App& sub_;
  fs::path dir_;
  std::map<std::string, std::string> inputs_;
};

void write_json(const fs::path& p, const json& j) { io::write_text(p, j.dump(1) + "\n"); }

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

LoadedDataset read_dataset(Run& run, const std::string& dir) {
  io::require_exists(fs::path(dir) / "dataset.json");
  run.input_dir(dir);
  return load_dataset(dir);
}

void read_affinity_files(Run& run, const fs::path& dir) {
  for (const char* f : {"theta.csv", "counts.csv", "affinity.json"}) run.input(dir / f);
}

// ---------------------------------------------------------------- generate

struct GenerateArgs {
  PlantedConfig cfg;
  std::string layout = "simplex";
};

void cmd_generate(Run& run, const Globals& g, GenerateArgs a) {
  a.cfg.seed = g.seed;
  a.cfg.layout = parse_centroid_layout(a.layout);
  const auto inst = generate(a.cfg);
  save_planted_dataset(run.out(""), inst);
  std::string csv = "task,group\n";
  for (std::size_t i = 0; i < inst.group_of.size(); ++i)
    csv += std::to_string(i) + "," + std::to_string(inst.group_of[i]) + "\n";
  io::write_text(run.out("groups.csv"), csv);
}

// ---------------------------------------------------------------- split

struct SplitArgs {
  std::string edges, communities, features;
  std::size_t top_k = 100;
  double pos_frac = 0.1, neg_frac = 0.1, val_frac = 0.2;
  std::string diffusion = "sym";
  double teleport = 0.15;
  std::size_t hops = 2;
  std::size_t feature_dim = 16;
};

void cmd_split(Run& run, const Globals& g, const SplitArgs& a) {
  Graph graph = load_edge_list(run.input(a.edges));
  if (!a.features.empty()) graph = graph.with_features(load_feature_csv(run.input(a.features), graph.num_nodes()));
  const auto comms = load_communities(run.input(a.communities), graph, a.top_k);
  SplitPolicy policy{a.pos_frac, a.neg_frac, a.val_frac, g.seed};
  const auto split = make_splits(comms.communities, graph, policy);
  GraphInputSpec spec;
  spec.op.kind = parse_diffusion_kind(a.diffusion);
  spec.op.teleport = a.teleport;
  spec.hops = a.hops;
  spec.random_feature_dim = a.feature_dim;
  spec.seed = g.seed;
  save_graph_dataset(run.out(""), graph, split.tasks, spec);

  std::string csv = "task,name,train,val,test,train_positives\n";
  for (std::size_t i = 0; i < split.tasks.num_tasks(); ++i) {
    const Task& t = split.tasks.task(i);
    std::size_t pos = 0;
    for (NodeId v : t.train) pos += t.labels[static_cast<Eigen::Index>(v)] > 0.5;
    csv += std::to_string(i) + "," + t.name + "," + std::to_string(t.train.size()) + "," +
           std::to_string(t.val.size()) + "," + std::to_string(t.test.size()) + "," + std::to_string(pos) + "\n";
  }
  io::write_text(run.out("split_summary.csv"), csv);
  write_json(run.out("split.json"), {{"tasks", split.tasks.num_tasks()},
                                     {"rejected_communities", split.rejected},
                                     {"dropped_members", comms.dropped_members}});
}

// ---------------------------------------------------------------- affinity

struct AffinityArgs {
  std::string data;
  std::size_t alpha = 10;
  std::size_t num_subsets = 2000;
  int min_coverage = -1;
  std::string mask = "val";
  std::size_t checkpoints = 20;
  std::size_t stop_after = 0;
  LearnerFlags learner;
};

// Returns false when stopped early via --stop-after.
bool cmd_affinity(Run& run, const Globals& g, const AffinityArgs& a, std::ostream& out) {
  const auto ds = read_dataset(run, a.data);
  const std::size_t t = ds.data.num_tasks();
  const LearnerSpec spec = a.learner.resolve(ds.data);
  SamplingPlan plan{t, a.alpha, a.num_subsets, g.seed,
                    a.min_coverage < 0 ? default_min_pair_coverage(t) : static_cast<std::size_t>(a.min_coverage)};
  const auto sampled = sample_subsets(plan);
  const auto& subsets = sampled.subsets;

  const fs::path subsets_path = run.out("subsets.json");
  const fs::path log_path = run.out("evaluations.csv");
  const fs::path learner_path = run.out("learner.json");
  const json learner_cfg = {{"spec", learner_json(spec)}, {"mask", a.mask}, {"seed", g.seed}};

  // resume only a log written for exactly these subsets and this learner
  std::vector<SubsetEvaluation> evals;
  bool resumed = false;
  if (fs::exists(log_path) && fs::exists(subsets_path) && fs::exists(learner_path) &&
      load_subsets(subsets_path).subsets == subsets &&
      json::parse(io::read_text(learner_path)) == learner_cfg) {
    auto log = read_evaluation_log(log_path, subsets);
    fs::resize_file(log_path, log.valid_bytes);
    evals = std::move(log.evals);
    resumed = true;
  }
  if (!resumed) {
    save_subsets(subsets_path, sampled);
    write_json(learner_path, learner_cfg);
    io::write_text(log_path, evaluation_log_header());
  }
  const std::size_t start = evals.size();
  std::size_t end = subsets.size();
  if (a.stop_after > 0) end = std::clamp(a.stop_after, start, end);
  if (start > 0) out << "resuming at subset " << start << " of " << subsets.size() << "\n";

  {
    std::ofstream log(log_path, std::ios::binary | std::ios::app);
    CollectOptions opts;
    opts.workers = g.workers;
    opts.mask = parse_mask(a.mask);
    opts.index_offset = start;
    opts.on_complete = [&](std::size_t index, const SubsetEvaluation& e) {
      log << evaluation_log_rows(index, e);
      log.flush();
    };
    const std::span<const TaskSubset> todo(subsets.data() + start, end - start);
    auto fresh = collect_evaluations(ds.data, todo, spec, g.seed, opts);
    evals.insert(evals.end(), std::make_move_iterator(fresh.begin()), std::make_move_iterator(fresh.end()));
  }
  if (evals.size() < subsets.size()) {
    out << "stopped after " << evals.size() << " of " << subsets.size() << " subsets\n";
    return false;
  }

  const auto aff = estimate_affinity(evals, t);
  save_affinity(run.out(""), aff);

  std::vector<std::size_t> marks;
  const std::size_t n = evals.size();
  const std::size_t steps = std::max<std::size_t>(1, std::min(a.checkpoints, n));
  for (std::size_t k = 1; k <= steps; ++k) marks.push_back(std::max<std::size_t>(1, n * k / steps));
  marks.erase(std::unique(marks.begin(), marks.end()), marks.end());
  const auto trace = convergence_trace(evals, t, marks);
  std::string csv = "num_subsets,max_abs_diff_to_final\n";
  for (std::size_t k = 0; k < marks.size(); ++k)
    csv += std::to_string(marks[k]) + "," + io::format_double(trace[k]) + "\n";
  io::write_text(run.out("convergence.csv"), csv);
  out << "theta estimated from " << n << " subsets (" << sampled.appended << " coverage top-ups)\n";
  return true;
}

// ---------------------------------------------------------------- cluster

struct ClusterArgs {
  std::string affinity;
  std::string data;
  std::size_t budget = 20;
};

void cmd_cluster(Run& run, const Globals& g, const ClusterArgs& a, std::ostream& out) {
  read_affinity_files(run, a.affinity);
  auto aff = load_affinity(a.affinity);
  if (aff.orientation == Orientation::kLoss) aff = flip_orientation(std::move(aff));
  const std::size_t t = aff.num_tasks();
  const auto cm = build_cluster_matrix(aff);
  const auto labels = spectral_cluster(cm, a.budget, g.seed);
  auto grouping = derive_groups(labels, t, a.budget);
  save_grouping(run.out("grouping.json"), grouping);
  io::write_matrix_csv(run.out("cluster_matrix.csv"), cm.full);

  std::string csv = "copy,role,task,cluster,target_group\n";
  for (std::size_t c = 0; c < labels.size(); ++c) {
    const std::size_t task = c % t;
    csv += std::to_string(c) + (c < t ? ",target," : ",source,") + std::to_string(task) + "," +
           std::to_string(labels[c]) + "," + std::to_string(grouping.target_group[task]) + "\n";
  }
  io::write_text(run.out("assignments.csv"), csv);
  out << grouping.groups.size() << " groups from budget " << a.budget << "\n";

  if (!a.data.empty()) {
    const auto ds = read_dataset(run, a.data);
    if (!ds.planted) throw InvalidInput("--data: ground-truth comparison needs a planted dataset");
    if (ds.planted->num_tasks() != t) throw InvalidInput("--data: task count differs from the affinity run");
    const double ari = adjusted_rand_index(grouping.target_group, ds.planted->group_of);
    write_json(run.out("recovery.json"), {{"ari", ari}, {"groups", grouping.groups.size()},
                                          {"planted_groups", ds.planted->config.num_groups}});
    out << "ARI vs planted groups: " << ari << "\n";
  }
}

// ---------------------------------------------------------------- evaluate

struct EvaluateArgs {
  std::string data, grouping;
  std::string mask = "test";
  LearnerFlags learner;
};

void cmd_evaluate(Run& run, const Globals& g, const EvaluateArgs& a, std::ostream& out) {
  const auto ds = read_dataset(run, a.data);
  const auto grouping = load_grouping(run.input(a.grouping));
  if (grouping.num_tasks() != ds.data.num_tasks()) throw InvalidInput("grouping and dataset disagree on task count");
  const LearnerSpec spec = a.learner.resolve(ds.data);
  const MaskKind mask = parse_mask(a.mask);
  const auto models = train_groups(ds.data, grouping, spec, g.seed, g.workers);
  const auto score = evaluate_grouping(models, ds.data, spec.metric, mask);
  const std::vector<std::size_t> zeros(ds.data.num_tasks(), 0);
  const auto single_models = train_groups(ds.data, partition_grouping(zeros, 1), spec, g.seed, g.workers);
  const auto single = evaluate_grouping(single_models, ds.data, spec.metric, mask);

  write_json(run.out("evaluation.json"),
             {{"objective", score.objective}, {"per_task", score.per_task},
              {"single_group_objective", single.objective}, {"groups", grouping.groups.size()},
              {"metric", to_string(spec.metric)}, {"mask", a.mask}});
  std::string csv = "task,target_group,score,single_group_score\n";
  for (std::size_t i = 0; i < score.per_task.size(); ++i)
    csv += std::to_string(i) + "," + std::to_string(grouping.target_group[i]) + "," +
           io::format_double(score.per_task[i]) + "," + io::format_double(single.per_task[i]) + "\n";
  io::write_text(run.out("per_task.csv"), csv);
  out << "objective " << score.objective << " (single group " << single.objective << ")\n";
}

// ---------------------------------------------------------------- predict-nt

struct PredictArgs {
  std::string data, affinity;
  std::size_t held_out = 250;
  double l2 = 1e-4;
  double threshold = 0.5;
};

void cmd_predict_nt(Run& run, const Globals& g, const PredictArgs& a, std::ostream& out) {
  const auto ds = read_dataset(run, a.data);
  const fs::path dir = a.affinity;
  const json learner_cfg = json::parse(io::read_text(run.input(dir / "learner.json")));
  const LearnerSpec spec = learner_from_json(learner_cfg.at("spec"));
  const std::uint64_t train_seed = learner_cfg.at("seed");
  CollectOptions opts;
  opts.workers = g.workers;
  opts.mask = parse_mask(learner_cfg.at("mask"));

  const auto sampled = load_subsets(run.input(dir / "subsets.json"));
  const auto log = read_evaluation_log(run.input(dir / "evaluations.csv"), sampled.subsets);
  if (log.evals.size() < sampled.subsets.size())
    throw InvalidInput(dir.string() + ": affinity run is incomplete (" + std::to_string(log.evals.size()) + " of " +
                       std::to_string(sampled.subsets.size()) + " subsets); resume it first");
  const std::size_t t = ds.data.num_tasks();
  if (sampled.subsets.empty()) throw InvalidInput("affinity run holds no subsets");
  const std::size_t alpha = sampled.subsets.front().size();
  const auto aff = estimate_affinity(log.evals, t);

  // subset indices continue after the logged ones so every training seed is distinct
  std::vector<TaskSubset> singles;
  for (TaskId i = 0; i < t; ++i) singles.push_back({i});
  opts.index_offset = sampled.subsets.size();
  std::map<TaskId, double> stl;
  for (const auto& e : collect_evaluations(ds.data, singles, spec, train_seed, opts)) stl[e.subset[0]] = e.scores[0];

  const auto held = sample_subsets({t, alpha, a.held_out, derive_seed(g.seed, Stream::kHoldout), 0}).subsets;
  opts.index_offset = sampled.subsets.size() + t;
  const auto held_evals = collect_evaluations(ds.data, held, spec, train_seed, opts);

  const auto train_ex = build_examples(log.evals, stl, aff);
  const auto held_ex = build_examples(held_evals, stl, aff);
  std::vector<LogisticModel> models(t);
  parallel_for(t, g.workers, [&](std::size_t i) {
    LogisticOptions lo;
    lo.l2 = a.l2;
    lo.threshold = a.threshold;
    lo.seed = derive_seed(g.seed, Stream::kLogistic, i);
    models[i] = fit_logistic(train_ex[i], lo);
    models[i].trained_for = i;
  });
  const auto report = evaluate_f1(models, held_ex, a.threshold);

  std::vector<LogisticModel> always(t);
  for (std::size_t i = 0; i < t; ++i) {
    always[i].weights = Vector::Zero(static_cast<Eigen::Index>(t));
    always[i].bias = 1.0;
    always[i].trained_for = i;
  }
  const auto baseline = evaluate_f1(always, held_ex, a.threshold);
  std::size_t pos = 0, total = 0;
  for (const auto& xs : held_ex)
    for (const auto& x : xs) {
      pos += x.negative;
      ++total;
    }

  json per_task = json::array();
  for (const auto& v : report.per_task) per_task.push_back(optional_json(v));
  write_json(run.out("nt_report.json"),
             {{"macro_f1", optional_json(report.macro_f1)},
              {"per_task_f1", per_task},
              {"excluded_tasks", report.excluded},
              {"always_negative_f1", optional_json(baseline.macro_f1)},
              {"held_out_positive_rate", total ? static_cast<double>(pos) / static_cast<double>(total) : 0.0},
              {"train_subsets", log.evals.size()},
              {"held_out_subsets", held.size()}});
  std::string csv = "task,f1,stl_score\n";
  for (std::size_t i = 0; i < t; ++i)
    csv += std::to_string(i) + "," + (report.per_task[i] ? io::format_double(*report.per_task[i]) : std::string()) +
           "," + io::format_double(stl.at(i)) + "\n";
  io::write_text(run.out("per_task_f1.csv"), csv);
  save_examples_csv(run.out("held_out_examples.csv"), held_ex, models);
  out << "macro F1 " << (report.macro_f1 ? io::format_double(*report.macro_f1) : "n/a") << "\n";
}

// ---------------------------------------------------------------- verify-theory

struct VerifyArgs {
  std::string data, affinity;
  std::size_t alpha = 5;
  std::size_t num_subsets = 400;
};

void cmd_verify_theory(Run& run, const Globals& g, const VerifyArgs& a, std::ostream& out) {
  const auto ds = read_dataset(run, a.data);
  if (!ds.planted) throw InvalidInput("verify-theory needs a planted dataset");
  const PlantedInstance& inst = *ds.planted;
  const std::size_t t = inst.num_tasks();

  json report_extra = json::object();
  AffinityMatrix theta;
  std::vector<TaskSubset> subsets;
  if (!a.affinity.empty()) {
    const fs::path dir = a.affinity;
    read_affinity_files(run, dir);
    subsets = load_subsets(run.input(dir / "subsets.json")).subsets;
    theta = load_affinity(dir);
    if (theta.orientation == Orientation::kPerformance) theta = flip_orientation(std::move(theta));
    // the pipeline equals the projection formula for the linear learner under
    // negative MSE on the training rows; other learners are reported anyway
    const auto closed = theta_closed_form(inst, subsets);
    const Matrix rel = (theta.theta - closed.theta).cwiseAbs().cwiseQuotient(closed.theta.cwiseAbs());
    report_extra["closed_form_max_rel_diff"] = rel.maxCoeff();
    report_extra["theta_source"] = "pipeline";
  } else {
    subsets = sample_subsets({t, a.alpha, a.num_subsets, g.seed, default_min_pair_coverage(t)}).subsets;
    theta = theta_closed_form(inst, subsets);
    report_extra["theta_source"] = "closed_form";
  }
  io::write_matrix_csv(run.out("theta_loss.csv"), theta.theta);

  const auto report = verify_block_structure(theta, inst.group_of);
  const auto cm = build_cluster_matrix(flip_orientation(theta));
  const auto labels = spectral_cluster(cm.a1, inst.config.num_groups, g.seed);
  const double ari = adjusted_rand_index(labels, inst.group_of);
  const double a2 = inst.config.within_sep * inst.config.within_sep;
  const double b2 = inst.config.between_sep * inst.config.between_sep;
  const double spread = within_group_spread(inst);

  json gaps = json::array();
  std::string csv = "row,group,gap\n";
  for (std::size_t i = 0; i < report.per_row_gaps.size(); ++i) {
    gaps.push_back(optional_json(report.per_row_gaps[i]));
    csv += std::to_string(i) + "," + std::to_string(inst.group_of[i]) + "," +
           (report.per_row_gaps[i] ? io::format_double(*report.per_row_gaps[i]) : std::string()) + "\n";
  }
  io::write_text(run.out("row_gaps.csv"), csv);
  json j = {{"per_row_gaps", gaps},
            {"global_gap", report.global_gap},
            {"pass", report.pass},
            {"spectral_ari", ari},
            {"subsets", subsets.size()},
            {"hypothesis", {{"b_sep2_minus_a2", b2 - a2}, {"within_group_spread", spread},
                            {"ratio", spread > 0.0 ? json((b2 - a2) / spread) : json(nullptr)}}},
            {"config", {{"num_tasks", t},
                        {"num_groups", inst.config.num_groups},
                        {"feature_dim", inst.config.feature_dim},
                        {"num_nodes", inst.config.num_nodes},
                        {"observed", inst.config.observed},
                        {"within_sep", inst.config.within_sep},
                        {"between_sep", inst.config.between_sep},
                        {"noise_std", inst.config.noise_std},
                        {"layout", to_string(inst.config.layout)},
                        {"seed", inst.config.seed}}}};
  j.update(report_extra);
  write_json(run.out("block_report.json"), j);
  out << "global gap " << report.global_gap << (report.pass ? " (pass)" : " (fail)") << ", spectral ARI " << ari
      << "\n";
}

// ---------------------------------------------------------------- ppr-sim

struct PprArgs {
  std::string data, grouping;
  double teleport = 0.15;
};

void cmd_ppr_sim(Run& run, const Globals&, const PprArgs& a, std::ostream& out) {
  const auto ds = read_dataset(run, a.data);
  if (!ds.graph) throw InvalidInput("ppr-sim needs a graph dataset");
  const auto grouping = load_grouping(run.input(a.grouping));
  if (grouping.num_tasks() != ds.data.num_tasks()) throw InvalidInput("grouping and dataset disagree on task count");
  PprOptions opts;
  opts.teleport = a.teleport;
  const auto sim = ppr_group_similarity(*ds.graph, ds.data.tasks, grouping, opts);
  const Matrix v = task_ppr_vectors(*ds.graph, ds.data.tasks, opts);
  std::string csv = "task_a,task_b,same_group,cosine\n";
  for (Eigen::Index i = 0; i < v.cols(); ++i)
    for (Eigen::Index j = i + 1; j < v.cols(); ++j) {
      const double cos = v.col(i).dot(v.col(j)) / (v.col(i).norm() * v.col(j).norm());
      const bool same = grouping.target_group[static_cast<std::size_t>(i)] ==
                        grouping.target_group[static_cast<std::size_t>(j)];
      csv += std::to_string(i) + "," + std::to_string(j) + "," + (same ? "1," : "0,") + io::format_double(cos) + "\n";
    }
  io::write_text(run.out("pair_similarity.csv"), csv);
  write_json(run.out("similarity.json"),
             {{"within_mean", optional_json(sim.within_mean)}, {"between_mean", optional_json(sim.between_mean)},
              {"within_pairs", sim.within_pairs}, {"between_pairs", sim.between_pairs},
              {"teleport", a.teleport}});
  out << "within " << (sim.within_mean ? io::format_double(*sim.within_mean) : "n/a") << ", between "
      << (sim.between_mean ? io::format_double(*sim.between_mean) : "n/a") << "\n";
}

}  // namespace

int run(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Task affinity estimation, task grouping and negative-transfer prediction", "taskaff"};
  app.config_formatter(std::make_shared<JsonConfig>());
  app.set_config("--config", "", "JSON config file; command-line flags override it");
  app.require_subcommand(1);
  app.fallthrough();  // global flags may follow the subcommand
  Globals g;
  app.add_option("--seed", g.seed, "global seed")->capture_default_str();
  app.add_option("--out", g.out, "output directory")->required();
  app.add_option("--workers", g.workers, "parallel training threads")->capture_default_str()->check(CLI::PositiveNumber);

  GenerateArgs gen;
  auto* s_gen = app.add_subcommand("generate", "Write a planted block-model dataset");
  s_gen->add_option("--tasks", gen.cfg.num_tasks, "T")->capture_default_str();
  s_gen->add_option("--groups", gen.cfg.num_groups, "C")->capture_default_str();
  s_gen->add_option("--dim", gen.cfg.feature_dim, "feature dimension d")->capture_default_str();
  s_gen->add_option("--nodes", gen.cfg.num_nodes, "N")->capture_default_str();
  s_gen->add_option("--observed", gen.cfg.observed, "observed rows m")->capture_default_str();
  s_gen->add_option("--within", gen.cfg.within_sep, "max same-group projected distance")->capture_default_str();
  s_gen->add_option("--between", gen.cfg.between_sep, "min cross-group projected distance")->capture_default_str();
  s_gen->add_option("--bound", gen.cfg.label_bound, "label sup-norm cap")->capture_default_str();
  s_gen->add_option("--noise", gen.cfg.noise_std, "off-subspace label noise")->capture_default_str();
  s_gen->add_option("--degree", gen.cfg.graph_degree, "mean degree of the random graph")->capture_default_str();
  s_gen->add_option("--layout", gen.layout, "simplex | random centroid layout")->capture_default_str();

  SplitArgs split;
  auto* s_split = app.add_subcommand("split", "Build a graph dataset from an edge list and communities");
  s_split->add_option("--edges", split.edges, "edge list")->required();
  s_split->add_option("--communities", split.communities, "community file, one per line")->required();
  s_split->add_option("--features", split.features, "node feature CSV in first-appearance order");
  s_split->add_option("--top-k", split.top_k, "largest communities kept")->capture_default_str();
  s_split->add_option("--pos-frac", split.pos_frac)->capture_default_str();
  s_split->add_option("--neg-frac", split.neg_frac)->capture_default_str();
  s_split->add_option("--val-frac", split.val_frac)->capture_default_str();
  s_split->add_option("--diffusion", split.diffusion, "row | sym | ppr")->capture_default_str();
  s_split->add_option("--teleport", split.teleport)->capture_default_str();
  s_split->add_option("--hops", split.hops)->capture_default_str();
  s_split->add_option("--feature-dim", split.feature_dim, "random feature width when none are given")
      ->capture_default_str();

  AffinityArgs aff;
  auto* s_aff = app.add_subcommand("affinity", "Sample subsets, train, and estimate task affinity");
  s_aff->add_option("--data", aff.data, "dataset directory")->required();
  s_aff->add_option("--alpha", aff.alpha, "subset size")->capture_default_str();
  s_aff->add_option("--num-subsets", aff.num_subsets, "sampled subsets n")->capture_default_str();
  s_aff->add_option("--min-coverage", aff.min_coverage, "pair co-occurrence guard (-1: automatic)")
      ->capture_default_str();
  s_aff->add_option("--mask", aff.mask, "train | val | test")->capture_default_str();
  s_aff->add_option("--checkpoints", aff.checkpoints, "points on the convergence curve")->capture_default_str();
  s_aff->add_option("--stop-after", aff.stop_after)->group("")->configurable(false);
  aff.learner.add_to(s_aff);

  ClusterArgs cl;
  auto* s_cl = app.add_subcommand("cluster", "Spectral task grouping from an affinity run");
  s_cl->add_option("--affinity", cl.affinity, "affinity run directory")->required();
  s_cl->add_option("--budget", cl.budget, "number of clusters b")->capture_default_str()->check(CLI::PositiveNumber);
  s_cl->add_option("--data", cl.data, "planted dataset for ground-truth ARI");

  EvaluateArgs ev;
  auto* s_ev = app.add_subcommand("evaluate", "Train one model per group and score the grouping");
  s_ev->add_option("--data", ev.data, "dataset directory")->required();
  s_ev->add_option("--grouping", ev.grouping, "grouping.json")->required();
  s_ev->add_option("--mask", ev.mask, "train | val | test")->capture_default_str();
  ev.learner.add_to(s_ev);

  PredictArgs pr;
  auto* s_pr = app.add_subcommand("predict-nt", "Predict negative transfer from affinity features");
  s_pr->add_option("--data", pr.data, "dataset directory")->required();
  s_pr->add_option("--affinity", pr.affinity, "affinity run directory")->required();
  s_pr->add_option("--held-out", pr.held_out, "held-out subsets")->capture_default_str();
  s_pr->add_option("--l2", pr.l2)->capture_default_str();
  s_pr->add_option("--threshold", pr.threshold)->capture_default_str();

  VerifyArgs vt;
  auto* s_vt = app.add_subcommand("verify-theory", "Check the block structure of theta on a planted dataset");
  s_vt->add_option("--data", vt.data, "planted dataset directory")->required();
  s_vt->add_option("--affinity", vt.affinity, "use this affinity run instead of the closed form");
  s_vt->add_option("--alpha", vt.alpha)->capture_default_str();
  s_vt->add_option("--num-subsets", vt.num_subsets)->capture_default_str();

  PprArgs pp;
  auto* s_pp = app.add_subcommand("ppr-sim", "Within- vs between-group PPR cosine similarity");
  s_pp->add_option("--data", pp.data, "graph dataset directory")->required();
  s_pp->add_option("--grouping", pp.grouping, "grouping.json")->required();
  s_pp->add_option("--teleport", pp.teleport)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    const CLI::App& sub = *app.get_subcommands().front();
    Run run(app, g, sub);
    bool complete = true;
    if (s_gen->parsed()) cmd_generate(run, g, gen);
    else if (s_split->parsed()) cmd_split(run, g, split);
    else if (s_aff->parsed()) complete = cmd_affinity(run, g, aff, out);
    else if (s_cl->parsed()) cmd_cluster(run, g, cl, out);
    else if (s_ev->parsed()) cmd_evaluate(run, g, ev, out);
    else if (s_pr->parsed()) cmd_predict_nt(run, g, pr, out);
    else if (s_vt->parsed()) cmd_verify_theory(run, g, vt, out);
    else if (s_pp->parsed()) cmd_ppr_sim(run, g, pp, out);
    if (complete) run.finish();
    return kOk;
  } catch (const MissingInput& e) {
    err << "error: " << e.what() << "\n";
    return kMissingInput;
  } catch (const TrainingError& e) {
    err << "training error: " << e.what() << "\n";
    return kTrainingError;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kDomainError;
  } catch (const json::exception& e) {
    err << "error: malformed artifact: " << e.what() << "\n";
    return kDomainError;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace taskaff::cli
