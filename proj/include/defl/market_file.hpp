#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "defl/market.hpp"

namespace defl::cli {

struct MarketConfig {
  double tol = 1e-9;
  std::size_t n_cap = 256;
  std::vector<double> m_schedule = {1e1, 1e2, 1e3, 1e4};
  std::size_t max_level = 8;
  std::uint64_t seed = 1;
  std::size_t hull_samples = 20;
  std::size_t hull_depth = 2;
};

/// Parsed and validated market specification file.
struct MarketSpecDocument {
  std::string version;
  market::Market mkt;
  std::optional<market::CrashTimeProfile> clock;
  bool clock_independence_claimed = false;
  MarketConfig config;
  std::string source_text;  // raw bytes, for the input digest
};

struct ParseResult {
  std::optional<MarketSpecDocument> doc;
  std::vector<std::string> errors;  // every violation, with value-path anchors
  bool ok() const { return errors.empty() && doc.has_value(); }
};

/// Parses the canonical JSON market format (grammar in the README); collects
/// all syntax/semantic violations instead of stopping at the first.
ParseResult parse_market_text(const std::string& text);
ParseResult parse_market_file(const std::string& path);

/// Deflator matrix file ({"version":"deflator/1","values":[[...]]}).
std::vector<std::vector<double>> parse_deflator_file(const std::string& path);

/// Built-in Example (2.3) document: grid step 1/100 on [0,1], family capped
/// at n = 1000, single atom.
MarketSpecDocument example_2_8_document();

}  // namespace defl::cli
