#pragma once

#include <optional>
#include <string>

#include "json.hpp"

#include "defl/market_file.hpp"

namespace defl::cli {

enum class Command { validate, deflate, verify, nupbr, hull, crash, dyadic, clock, example };

std::optional<Command> command_from_string(const std::string& name);
std::string command_name(Command c);

enum class Format { human, machine };

// exit codes: 0 pass/complete, 1 verdict fail, 2 input error, 3 internal/solver error
inline constexpr int kExitPass = 0;
inline constexpr int kExitFail = 1;
inline constexpr int kExitInput = 2;
inline constexpr int kExitInternal = 3;

struct Overrides {
  std::optional<double> tol;
  std::optional<std::size_t> n_cap;
  std::optional<std::size_t> max_level;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> deflator_path;  // for `verify`
};

struct RunReport {
  std::string command;
  std::string input_digest;
  std::string verdict;
  int exit_code = 0;
  std::uint64_t seed = 0;
  nlohmann::ordered_json body;
  double wall_seconds = 0.0;  // human format only; machine reports stay byte-stable
};

std::uint64_t fnv1a64(const std::string& bytes);

/// Dispatches one CLI command against a parsed document.
RunReport run_command(const MarketSpecDocument& doc, Command cmd, const Overrides& overrides);

/// Report for an input that failed validation/parsing.
RunReport invalid_input_report(Command cmd, const std::vector<std::string>& errors,
                               const std::string& source_text);

std::string emit_report(const RunReport& report, Format format);

/// Parses a machine report and checks the schema tag; used for round-trips.
nlohmann::ordered_json parse_machine_report(const std::string& text);

}  // namespace defl::cli
