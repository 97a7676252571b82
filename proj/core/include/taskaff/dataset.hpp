#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "taskaff/graph.hpp"
#include "taskaff/mtl.hpp"
#include "taskaff/planted.hpp"

namespace taskaff {

// How model inputs are derived for a graph dataset.
struct GraphInputSpec {
  DiffusionOperator op;
  std::size_t hops = 2;
  // Width of the seeded Gaussian node features used when the graph carries none.
  std::size_t random_feature_dim = 16;
  std::uint64_t seed = 0;
};

std::string to_string(DiffusionKind kind);
DiffusionKind parse_diffusion_kind(const std::string& s);

// A dataset directory is one of
//   planted: dataset.json + the instance files (see save_instance)
//   graph:   dataset.json + edges.txt + ids.csv + [features.csv] + tasks.json
struct LoadedDataset {
  std::string kind;  // "planted" or "graph"
  Dataset data;
  std::optional<PlantedInstance> planted;
  std::optional<Graph> graph;
  std::optional<GraphInputSpec> inputs;
};

void save_planted_dataset(const std::filesystem::path& dir, const PlantedInstance& inst);
void save_graph_dataset(const std::filesystem::path& dir, const Graph& g, const TaskSet& tasks,
                        const GraphInputSpec& spec);

// Throws MissingInput when dataset.json (or a file it implies) is absent.
LoadedDataset load_dataset(const std::filesystem::path& dir);

// Diffused inputs for a graph: [X, PX, ..., P^hops X] where X is the
// graph's own features or seeded Gaussian features.
Matrix graph_inputs(const Graph& g, const GraphInputSpec& spec);

}  // namespace taskaff
