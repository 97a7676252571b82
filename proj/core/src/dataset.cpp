#include "taskaff/dataset.hpp"

#include <random>
#include <unordered_map>

#include <json.hpp>

#include "taskaff/error.hpp"
#include "taskaff/io.hpp"
#include "taskaff/rng.hpp"

namespace taskaff {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::string to_string(DiffusionKind kind) {
  switch (kind) {
    case DiffusionKind::kRowNormalized: return "row";
    case DiffusionKind::kSymmetricNormalized: return "sym";
    case DiffusionKind::kPpr: return "ppr";
  }
  return "row";
}

DiffusionKind parse_diffusion_kind(const std::string& s) {
  if (s == "row") return DiffusionKind::kRowNormalized;
  if (s == "sym") return DiffusionKind::kSymmetricNormalized;
  if (s == "ppr") return DiffusionKind::kPpr;
  throw InvalidInput("unknown diffusion kind '" + s + "' (row|sym|ppr)");
}

Matrix graph_inputs(const Graph& g, const GraphInputSpec& spec) {
  if (g.feature_dim() > 0) return diffuse_features(g, spec.op, spec.hops);
  Rng rng = make_rng(spec.seed, Stream::kFeatures);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix x(static_cast<Eigen::Index>(g.num_nodes()),
           static_cast<Eigen::Index>(spec.random_feature_dim));
  for (Eigen::Index c = 0; c < x.cols(); ++c)
    for (Eigen::Index r = 0; r < x.rows(); ++r) x(r, c) = normal(rng);
  return diffuse_features(g.with_features(std::move(x)), spec.op, spec.hops);
}

void save_planted_dataset(const fs::path& dir, const PlantedInstance& inst) {
  save_instance(dir, inst);
  io::write_text(dir / "dataset.json", json{{"kind", "planted"}}.dump(1) + "\n");
}

void save_graph_dataset(const fs::path& dir, const Graph& g, const TaskSet& tasks,
                        const GraphInputSpec& spec) {
  fs::create_directories(dir);
  save_edge_list(g, dir / "edges.txt");
  save_id_map(g, dir / "ids.csv");
  if (g.feature_dim() > 0) io::write_matrix_csv(dir / "features.csv", g.features());
  save_taskset(tasks, dir / "tasks.json");
  json j;
  j["kind"] = "graph";
  j["num_nodes"] = g.num_nodes();
  j["diffusion"] = to_string(spec.op.kind);
  j["teleport"] = spec.op.teleport;
  j["hops"] = spec.hops;
  j["random_feature_dim"] = spec.random_feature_dim;
  j["feature_seed"] = spec.seed;
  j["has_features"] = g.feature_dim() > 0;
  io::write_text(dir / "dataset.json", j.dump(1) + "\n");
}

LoadedDataset load_dataset(const fs::path& dir) {
  io::require_exists(dir / "dataset.json");
  json j;
  try {
    j = json::parse(io::read_text(dir / "dataset.json"));
  } catch (const json::exception& e) {
    throw InvalidInput((dir / "dataset.json").string() + ": " + e.what());
  }
  LoadedDataset out;
  out.kind = j.value("kind", "");
  if (out.kind == "planted") {
    out.planted = load_instance(dir);
    out.data = to_dataset(*out.planted);
    return out;
  }
  if (out.kind != "graph") throw InvalidInput((dir / "dataset.json").string() + ": unknown kind");

  for (const char* name : {"edges.txt", "ids.csv", "tasks.json"}) io::require_exists(dir / name);
  GraphInputSpec spec;
  std::size_t n = 0;
  bool has_features = false;
  try {
    spec.op.kind = parse_diffusion_kind(j.at("diffusion"));
    spec.op.teleport = j.at("teleport");
    spec.hops = j.at("hops");
    spec.random_feature_dim = j.at("random_feature_dim");
    spec.seed = j.at("feature_seed");
    n = j.at("num_nodes");
    has_features = j.at("has_features");
  } catch (const json::exception& e) {
    throw InvalidInput((dir / "dataset.json").string() + ": " + e.what());
  }
  // ids.csv fixes the internal numbering; edges.txt is in original ids
  std::vector<std::int64_t> original(n);
  std::unordered_map<std::int64_t, NodeId> internal;
  {
    const std::string path = (dir / "ids.csv").string();
    const std::string text = io::read_text(dir / "ids.csv");
    std::size_t line_no = 0, pos = 0;
    while (pos < text.size()) {
      const std::size_t end = std::min(text.find('\n', pos), text.size());
      const std::string_view line(text.data() + pos, end - pos);
      pos = end + 1;
      ++line_no;
      if (line.empty()) continue;
      const auto comma = line.find(',');
      if (comma == std::string_view::npos) throw ParseError(path, line_no, "expected internal,original");
      const auto u = static_cast<std::size_t>(io::parse_double(line.substr(0, comma), path, line_no));
      if (u >= n) throw ParseError(path, line_no, "node id out of range");
      original[u] = static_cast<std::int64_t>(io::parse_double(line.substr(comma + 1), path, line_no));
      internal[original[u]] = u;
    }
    if (internal.size() != n) throw InvalidInput(path + ": expected " + std::to_string(n) + " distinct ids");
  }
  const Graph loaded = load_edge_list(dir / "edges.txt");
  std::vector<Graph::Edge> edges;
  for (auto [u, v] : loaded.edges()) {
    const auto a = internal.find(loaded.original_id(u));
    const auto b = internal.find(loaded.original_id(v));
    if (a == internal.end() || b == internal.end())
      throw InvalidInput((dir / "edges.txt").string() + ": node missing from ids.csv");
    edges.emplace_back(a->second, b->second);
  }
  Matrix features;
  if (has_features) features = load_feature_csv(dir / "features.csv", n);
  out.graph = Graph(n, edges, std::move(features), std::move(original));
  out.inputs = spec;
  out.data = Dataset{graph_inputs(*out.graph, spec), load_taskset(dir / "tasks.json")};
  if (out.data.tasks.num_nodes() != n) throw InvalidInput(dir.string() + ": tasks.json node count mismatch");
  return out;
}

}  // namespace taskaff
