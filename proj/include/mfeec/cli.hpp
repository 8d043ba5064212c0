#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace mfeec::cli {

/// Validated flags of one run; echoed verbatim into every report.
struct RunConfig {
  std::string command;     ///< e.g. "mesh gen", "solve"
  std::string surface = "sphere";
  int level = 1;
  int m = 4;
  int k = 0;
  std::string family = "full";
  int r = 1;
  int geom_degree = 1;
  std::string geometry = "exact";  ///< exact | computational
  std::string eps = "auto";        ///< auto or a positive number
  int quad_order = -1;             ///< -1: module default
  std::string levels = "1:4";
  std::string out;                 ///< empty: standard output
  std::string csv_dir;             ///< converge: directory for CSV tables
  std::string mesh;                ///< mesh info: read this file instead of generating
  int seed = 1;

  bool operator==(const RunConfig&) const = default;
  std::string to_json() const;
  static RunConfig from_json(const std::string& text);
};

/// Version string baked in at configure time (git describe).
std::string version();

/// Writes {"version", "command", "config", "results"} to `path` (standard output when empty).
/// `results_json` must be a non-empty JSON object; throws std::logic_error otherwise and
/// std::ios_base::failure when the path cannot be written.
void emit_report(const RunConfig& config, const std::string& results_json, const std::string& path, std::ostream& out);

/// Runs the command line. Returns 0 on success, 1 when a numerical contract is violated,
/// 2 on configuration errors. Reports go to `out` unless --out is given; diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv);

}  // namespace mfeec::cli
