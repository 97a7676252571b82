#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "taskaff/graph.hpp"
#include "taskaff/types.hpp"

namespace taskaff {

enum class LabelKind { kBinary, kReal };
enum class MaskKind { kTrain, kVal, kTest };

// One node-labeling task. `labels` covers every node; masks are sorted,
// pairwise disjoint node-id lists.
struct Task {
  std::string name;
  LabelKind kind = LabelKind::kBinary;
  Vector labels;
  std::vector<NodeId> train;
  std::vector<NodeId> val;
  std::vector<NodeId> test;

  const std::vector<NodeId>& mask(MaskKind k) const {
    switch (k) {
      case MaskKind::kTrain: return train;
      case MaskKind::kVal: return val;
      case MaskKind::kTest: return test;
    }
    return train;
  }
};

class TaskSet {
 public:
  TaskSet() = default;
  // Validates mask disjointness, node ranges, binary label values and the
  // one-positive/one-negative rule on binary training masks.
  TaskSet(std::size_t num_nodes, std::vector<Task> tasks);

  std::size_t num_tasks() const noexcept { return tasks_.size(); }
  std::size_t num_nodes() const noexcept { return num_nodes_; }
  const Task& task(TaskId i) const { return tasks_.at(i); }
  const std::vector<Task>& tasks() const noexcept { return tasks_; }

 private:
  std::size_t num_nodes_ = 0;
  std::vector<Task> tasks_;
};

struct SplitPolicy {
  double train_pos_frac = 0.1;
  double train_neg_frac = 0.1;
  double val_frac = 0.2;
  std::uint64_t seed = 0;

  void validate() const;
};

using Community = std::vector<NodeId>;

struct CommunityList {
  std::vector<Community> communities;  // sorted members, largest first
  std::size_t dropped_members = 0;     // ids absent from the graph
};

// SNAP cmty format: one community per line, whitespace-separated member ids
// in the graph's original id space. Keeps the `top_k` largest (stable on
// ties); throws ShortfallError when fewer exist.
CommunityList load_communities(const std::filesystem::path& path, const Graph& g,
                               std::size_t top_k);

struct SplitResult {
  TaskSet tasks;
  std::vector<std::size_t> rejected;  // community indices that could not form a task
};

// Per community: ceil(pos_frac*|C|) training positives from C,
// ceil(neg_frac*|C|) training negatives from V\C, round(val_frac*N)
// validation nodes from the rest, and the remainder as test. Sampling for
// community k depends only on (policy.seed, k).
SplitResult make_splits(const std::vector<Community>& communities, const Graph& g,
                        const SplitPolicy& policy);

// JSON manifest with per-task labels and train/val/test node ids.
void save_taskset(const TaskSet& tasks, const std::filesystem::path& path);
TaskSet load_taskset(const std::filesystem::path& path);

}  // namespace taskaff
