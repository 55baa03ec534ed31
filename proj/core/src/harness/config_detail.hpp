#pragma once

// Internal config parsing shared by config.cpp and runner.cpp; not installed.

#include <cstdint>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "binfer/harness/datasets.hpp"
#include "binfer/nets.hpp"

namespace binfer::harness::detail {

using json = nlohmann::json;

void expect_keys(const json& obj, const std::string& path,
                 std::initializer_list<const char*> allowed);

nets::Architecture parse_arch(const json& j, const std::string& path);
nets::ModelContext parse_model(const json& j, const std::string& path);
DatasetSpec parse_dataset(const json& j, const std::string& path);

struct ParsedExperiment {
  std::string task;
  std::uint64_t seed = 0;
  std::string out_dir = "out";
  std::optional<nets::ModelContext> model;
  std::optional<DatasetSpec> data;
  json method;
  std::string raw_text;
};

/// Full parse with strict validation (including per-task method schemas).
ParsedExperiment parse_experiment(const std::string& text);

}  // namespace binfer::harness::detail
