#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "preformer/evalbench.hpp"

namespace preformer {

/// Everything a subcommand can be configured with. Each field has a flag
/// and a key in the config file.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;

  std::string data;  // CSV path or synth:<kind>
  std::vector<std::string> columns;  // empty: every non-timestamp column
  std::string timestamp_column = "date";
  std::string task = "multivariate";  // or univariate
  std::string target;  // univariate target; empty: last value column
  std::string split = "ratio(7,1,2)";
  Index synth_len = 4000;
  Index period = 24;  // seasonal-naive period

  std::string out_dir;
  std::uint64_t seed = 2021;
};

/// Default output directory: $PREFORMER_OUT_DIR, else "preformer-out".
std::string default_out_dir();

/// Parses an INI-style file: `[section]` headers, `key = value` lines, `#`
/// or `;` comments. Keys are returned as "section.key". Throws ParseError.
std::map<std::string, std::string> parse_config_text(const std::string& text);

/// Applies parsed keys onto `cfg`. Unknown keys or bad values throw
/// InvalidConfig.
void apply_config(RunConfig& cfg, const std::map<std::string, std::string>& entries);

/// The resolved configuration in the same format parse_config_text reads.
std::string render_config(const RunConfig& cfg);

/// Entry point of the command-line tool. Returns 0 on success, 1 on a
/// runtime failure and 2 on a usage or configuration error.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace preformer
