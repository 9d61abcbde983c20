#pragma once

// Flat `section.key = value` configuration files.
//
//   # comment
//   workload.kind = tpcc
//   workload.arrival_rate_tps = 40000
//   service.NewOrder = 250
//   experiment.policy = balanced_kmeans

#include <istream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mlsched/harness.hpp"

namespace mlsched {

// Applies one setting. Throws ConfigError naming the key when it is unknown
// or the value does not parse.
void apply_setting(ExperimentConfig& cfg, std::string_view key, std::string_view value);

// Applies `key=value`.
void apply_override(ExperimentConfig& cfg, std::string_view assignment);

ExperimentConfig parse_config(std::istream& in, ExperimentConfig base = {});
ExperimentConfig load_config(const std::string& path, ExperimentConfig base = {});

// Every setting with its effective value, in a stable order. Feeding the
// pairs back through apply_setting reproduces the configuration.
std::vector<std::pair<std::string, std::string>> config_entries(const ExperimentConfig& cfg);

std::vector<double> parse_rate_list(std::string_view text);

std::string format_double(double x);

}  // namespace mlsched
