#include "json_config.hpp"

#include <json.hpp>

namespace taskaff::cli {

using nlohmann::json;

namespace {

std::string scalar_text(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  return v.dump();
}

void collect(const json& obj, std::vector<std::string> parents, std::vector<CLI::ConfigItem>& out) {
  for (const auto& [key, value] : obj.items()) {
    if (value.is_object()) {
      auto next = parents;
      next.push_back(key);
      collect(value, next, out);
      continue;
    }
    CLI::ConfigItem item;
    item.parents = parents;
    item.name = key;
    if (value.is_array()) {
      for (const auto& v : value) item.inputs.push_back(scalar_text(v));
    } else if (!value.is_null()) {
      item.inputs.push_back(scalar_text(value));
    }
    out.push_back(std::move(item));
  }
}

json options_of(const CLI::App* app, bool default_also) {
  json out = json::object();
  for (const CLI::Option* opt : app->get_options()) {
    if (!opt->get_configurable() || opt->get_lnames().empty()) continue;
    const std::string& name = opt->get_lnames().front();
    if (opt->count() > 0) {
      const auto& res = opt->results();
      out[name] = res.size() == 1 ? json(res.front()) : json(res);
    } else if (default_also && !opt->get_default_str().empty()) {
      out[name] = opt->get_default_str();
    }
  }
  return out;
}

}  // namespace

std::string JsonConfig::to_config(const CLI::App* app, bool default_also, bool, std::string) const {
  json out = options_of(app, default_also);
  for (const CLI::App* sub : app->get_subcommands({}))
    if (sub->parsed()) out[sub->get_name()] = options_of(sub, default_also);
  return out.dump(1);
}

std::vector<CLI::ConfigItem> JsonConfig::from_config(std::istream& input) const {
  json j;
  try {
    j = json::parse(input);
  } catch (const json::exception& e) {
    throw CLI::ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw CLI::ConfigError("config must be a JSON object");
  std::vector<CLI::ConfigItem> items;
  collect(j, {}, items);
  return items;
}

}  // namespace taskaff::cli
