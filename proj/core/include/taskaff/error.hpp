#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace taskaff {

// Base of every error thrown by the library. The CLI maps subclasses onto
// process exit codes, so keep the hierarchy shallow.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad arguments, dimension mismatches, inconsistent inputs.
class InvalidInput : public Error {
 public:
  using Error::Error;
};

class ParseError : public InvalidInput {
 public:
  ParseError(const std::string& path, std::size_t line, const std::string& what)
      : InvalidInput(path + ":" + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// A required upstream file does not exist.
class MissingInput : public Error {
 public:
  explicit MissingInput(std::string path)
      : Error("missing input: " + path), path_(std::move(path)) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, double residual)
      : Error(what + " (residual " + std::to_string(residual) + ")"), residual_(residual) {}
  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

// Non-finite loss during training. `epoch` is the first epoch that diverged;
// `context` names the subset or group being trained when the error was tagged.
class TrainingError : public Error {
 public:
  TrainingError(const std::string& what, std::size_t epoch)
      : Error(what + " at epoch " + std::to_string(epoch)), epoch_(epoch) {}
  TrainingError(const std::string& context, const TrainingError& inner)
      : Error(context + ": " + inner.what()), epoch_(inner.epoch_) {}
  std::size_t epoch() const noexcept { return epoch_; }

 private:
  std::size_t epoch_;
};

// Some task pairs never co-occur in a subset log.
class CoverageError : public Error {
 public:
  using Pair = std::pair<std::size_t, std::size_t>;
  CoverageError(const std::string& what, std::vector<Pair> uncovered)
      : Error(what + " (" + std::to_string(uncovered.size()) + " uncovered pairs)"),
        uncovered_(std::move(uncovered)) {}
  const std::vector<Pair>& uncovered() const noexcept { return uncovered_; }

 private:
  std::vector<Pair> uncovered_;
};

class DegenerateInput : public Error {
 public:
  using Error::Error;
};

// Fewer communities in a file than requested.
class ShortfallError : public InvalidInput {
 public:
  ShortfallError(std::size_t requested, std::size_t available)
      : InvalidInput("requested " + std::to_string(requested) + " communities but only " +
                     std::to_string(available) + " available"),
        available_(available) {}
  std::size_t available() const noexcept { return available_; }

 private:
  std::size_t available_;
};

class GenerationError : public Error {
 public:
  GenerationError(const std::string& what, double within, double between)
      : Error(what), achieved_within_(within), achieved_between_(between) {}
  double achieved_within() const noexcept { return achieved_within_; }
  double achieved_between() const noexcept { return achieved_between_; }

 private:
  double achieved_within_;
  double achieved_between_;
};

// A structure probe found nothing to compare (no nested subsets in the log).
class EmptyDomain : public Error {
 public:
  using Error::Error;
};

}  // namespace taskaff
