#pragma once

#include <CLI11.hpp>

namespace taskaff::cli {

// Reads --config files as JSON. Top-level scalars set global options; an
// object keyed by a subcommand name sets that subcommand's options. Values
// given on the command line win.
class JsonConfig : public CLI::Config {
 public:
  std::string to_config(const CLI::App* app, bool default_also, bool, std::string) const override;
  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override;
};

}  // namespace taskaff::cli
