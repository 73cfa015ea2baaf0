#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"

#include "defl/report.hpp"

namespace {

int write_out(const std::string& text, const std::string& out_path) {
  if (out_path.empty()) {
    std::cout << text;
    return 0;
  }
  std::ofstream os(out_path, std::ios::binary);
  if (!os) {
    std::cerr << "cannot write " << out_path << "\n";
    return defl::cli::kExitInput;
  }
  os << text;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  using namespace defl::cli;

  CLI::App app{"supermartingale deflator toolkit for markets without a numeraire"};
  app.require_subcommand(1);

  std::string market_path, out_path, deflator_path;
  std::string format_name = "human";
  Overrides overrides;
  double tol_flag = -1.0;
  long long n_cap_flag = -1, max_level_flag = -1, seed_flag = -1;

  auto add_common = [&](CLI::App* sub, bool needs_file) {
    if (needs_file)
      sub->add_option("market", market_path, "market specification file")->required();
    else
      sub->add_option("market", market_path, "market specification file");
    sub->add_option("--tol", tol_flag, "verification/solver tolerance");
    sub->add_option("--n-cap", n_cap_flag, "family truncation cap");
    sub->add_option("--max-level", max_level_flag, "maximum dyadic level K");
    sub->add_option("--seed", seed_flag, "RNG seed for hull sampling");
    sub->add_option("--format", format_name, "human|machine")
        ->check(CLI::IsMember({"human", "machine"}));
    sub->add_option("--out", out_path, "write the report to a file");
  };

  for (const char* name : {"validate", "deflate", "verify", "nupbr", "hull", "crash", "dyadic",
                           "clock", "example"}) {
    auto* sub = app.add_subcommand(name, name);
    add_common(sub, std::string(name) != "example");
    if (std::string(name) == "verify")
      sub->add_option("--deflator", deflator_path, "deflator matrix file")->required();
  }

  CLI11_PARSE(app, argc, argv);
  auto* sub = app.get_subcommands().front();
  Command cmd = *command_from_string(sub->get_name());

  if (tol_flag > 0.0) overrides.tol = tol_flag;
  if (n_cap_flag >= 0) overrides.n_cap = static_cast<std::size_t>(n_cap_flag);
  if (max_level_flag >= 0) overrides.max_level = static_cast<std::size_t>(max_level_flag);
  if (seed_flag >= 0) overrides.seed = static_cast<std::uint64_t>(seed_flag);
  if (!deflator_path.empty()) overrides.deflator_path = deflator_path;
  Format format = format_name == "machine" ? Format::machine : Format::human;

  MarketSpecDocument doc;
  if (cmd == Command::example && market_path.empty()) {
    doc = example_2_8_document();
  } else {
    auto parsed = parse_market_file(market_path);
    if (!parsed.ok()) {
      auto rep = invalid_input_report(cmd, parsed.errors, market_path);
      int wrc = write_out(emit_report(rep, format), out_path);
      return wrc != 0 ? wrc : rep.exit_code;
    }
    doc = std::move(*parsed.doc);
  }

  RunReport rep = run_command(doc, cmd, overrides);
  int wrc = write_out(emit_report(rep, format), out_path);
  return wrc != 0 ? wrc : rep.exit_code;
}
