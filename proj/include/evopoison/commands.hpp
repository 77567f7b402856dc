#pragma once
// Command layer behind the CLI verbs. Each command returns a process exit
// code: 0 success, 2 usage/IO error, 3 provider error.

#include <string>

#include "evopoison/config.hpp"

namespace evopoison::cli {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitProvider = 3;

// chunk -> build_kg -> persist the clean snapshot; prints counts.
int cmd_build(const ExperimentConfig& config);

// Runs the single-target attack per target (mode "single"), plus the
// multi-target coordination ("multi"). Per-target failures are recorded and
// the run continues.
int cmd_attack(const ExperimentConfig& config, const std::string& mode);

// Appends the poisoned documents of the chosen arm ("evolution" or
// "baseline") to the corpus and rebuilds the KG into the poisoned snapshot.
int cmd_inject(const ExperimentConfig& config, const std::string& arm);

// Answers one query against a snapshot ("clean" or "poisoned").
int cmd_query(const ExperimentConfig& config, const std::string& query,
              const std::string& snapshot);

// Answers every target on both snapshots, judges, and writes the metrics
// report (ASR, CASR, Hits@n, retention under the configured defense).
int cmd_eval(const ExperimentConfig& config);

// Prints a report summary; optionally writes a CSV copy.
int cmd_report(const ExperimentConfig& config, const std::string& csv_path);

} // namespace evopoison::cli
