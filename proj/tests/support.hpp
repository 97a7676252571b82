#pragma once

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "taskaff/mtl.hpp"
#include "taskaff/planted.hpp"
#include "taskaff/tasks.hpp"

namespace testing {

using namespace taskaff;

// Fresh empty scratch directory per test name.
inline std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() /
             ("taskaff_" + name + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

// n nodes with 2-d Gaussian inputs plus a constant column; task t labels a
// node positive when it lies on one side of a rotated line through the
// origin. Train / val / test are the first half / next quarter / rest.
inline Dataset toy_binary(std::size_t n, std::size_t num_tasks, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  Matrix x(static_cast<Eigen::Index>(n), 3);
  for (Eigen::Index r = 0; r < x.rows(); ++r) x.row(r) << normal(rng), normal(rng), 1.0;
  std::vector<Task> tasks;
  for (std::size_t t = 0; t < num_tasks; ++t) {
    const double angle = 0.4 * static_cast<double>(t);
    Task task;
    task.name = "t" + std::to_string(t);
    task.labels.resize(static_cast<Eigen::Index>(n));
    for (Eigen::Index r = 0; r < x.rows(); ++r)
      task.labels(r) = std::cos(angle) * x(r, 0) + std::sin(angle) * x(r, 1) > 0 ? 1.0 : 0.0;
    for (NodeId u = 0; u < n; ++u) {
      if (u < n / 2) task.train.push_back(u);
      else if (u < 3 * n / 4) task.val.push_back(u);
      else task.test.push_back(u);
    }
    tasks.push_back(std::move(task));
  }
  return Dataset{x, TaskSet(n, std::move(tasks))};
}

inline PlantedConfig small_planted(std::uint64_t seed) {
  PlantedConfig c;
  c.num_tasks = 6;
  c.num_groups = 2;
  c.feature_dim = 4;
  c.num_nodes = 60;
  c.observed = 40;
  c.within_sep = 0.5;
  c.between_sep = 4.0;
  c.noise_std = 0.1;
  c.seed = seed;
  return c;
}

inline double max_rel_diff(const Matrix& a, const Matrix& b) {
  return ((a - b).array().abs() / b.array().abs().max(1e-300)).maxCoeff();
}

}  // namespace testing
