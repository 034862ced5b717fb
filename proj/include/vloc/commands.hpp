#pragma once

#include <ostream>

#include "vloc/config.hpp"

namespace vloc {

// Pipeline stages behind the CLI subcommands. Each reads the slice of the
// config it needs, writes its artifact files and prints a short summary to
// `out`. Errors surface as ConfigError / DataError / NumericError.

// Generates the scenario, applies the configured corruptions to the query
// traversals and writes one JSONL file per traversal plus manifest.json
// under paths.dataset_dir.
void cmd_simulate(const RunConfig& cfg, std::ostream& out);

// Cross-validates the database traversals against each other, fits one
// sensor error model per database and writes paths.model_file. Prints a
// per-model bin summary table.
void cmd_calibrate(const RunConfig& cfg, std::ostream& out);

// Localizes every query frame against the databases, runs the filter and
// writes one JSONL record per frame to paths.trajectory_file.
void cmd_localize(const RunConfig& cfg, std::ostream& out);

// Joins the trajectory with the dataset ground truth and writes report.json,
// report.csv and reliability.csv under paths.report_dir.
void cmd_evaluate(const RunConfig& cfg, std::ostream& out);

}  // namespace vloc
