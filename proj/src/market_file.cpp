#include "defl/market_file.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace defl::cli {

using nlohmann::json;

namespace {

double number_or(const json& j, const char* key, double fallback) {
  if (!j.contains(key)) return fallback;
  return j.at(key).get<double>();
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw prob::Error("cannot open file: " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

}  // namespace

ParseResult parse_market_text(const std::string& text) {
  ParseResult res;
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    res.errors.push_back(std::string("syntax: ") + e.what());
    return res;
  }

  auto err = [&](const std::string& where, const std::string& what) {
    res.errors.push_back(where + ": " + what);
  };

  std::string version = j.value("version", "");
  if (version != "market/1") err("version", "expected \"market/1\"");

  std::vector<std::pair<std::string, double>> atoms;
  if (!j.contains("atoms") || !j["atoms"].is_array() || j["atoms"].empty()) {
    err("atoms", "required nonempty array");
  } else {
    for (std::size_t i = 0; i < j["atoms"].size(); ++i) {
      const auto& a = j["atoms"][i];
      std::ostringstream where;
      where << "atoms[" << i << "]";
      if (!a.contains("label") || !a["label"].is_string())
        err(where.str(), "missing string label");
      else if (!a.contains("prob") || !a["prob"].is_number())
        err(where.str(), "missing numeric prob");
      else
        atoms.emplace_back(a["label"].get<std::string>(), a["prob"].get<double>());
    }
  }
  market::SampleSpace space(atoms);

  std::vector<double> times;
  if (!j.contains("times") || !j["times"].is_array() || j["times"].size() < 1) {
    err("times", "required nonempty array of numbers");
  } else {
    for (const auto& t : j["times"]) {
      if (!t.is_number()) { err("times", "non-numeric entry"); break; }
      times.push_back(t.get<double>());
    }
  }

  std::vector<prob::Partition> partitions;
  if (!j.contains("filtration") || !j["filtration"].is_array()) {
    err("filtration", "required array (one partition per time)");
  } else {
    if (j["filtration"].size() != times.size())
      err("filtration", "needs exactly one partition per grid time");
    for (std::size_t t = 0; t < j["filtration"].size(); ++t) {
      prob::Partition part;
      for (std::size_t bi = 0; bi < j["filtration"][t].size(); ++bi) {
        prob::Block block;
        for (const auto& lbl : j["filtration"][t][bi]) {
          auto idx = space.index_of(lbl.get<std::string>());
          if (!idx) {
            std::ostringstream where;
            where << "filtration[" << t << "][" << bi << "]";
            err(where.str(), "unknown atom label '" + lbl.get<std::string>() + "'");
            continue;
          }
          block.push_back(*idx);
        }
        part.push_back(std::move(block));
      }
      partitions.push_back(std::move(part));
    }
  }
  while (partitions.size() < times.size()) partitions.push_back({});
  prob::Filtration filtration(times, partitions);

  for (const auto& v : prob::validate_space(space, filtration)) res.errors.push_back(v);

  std::vector<market::WealthProcess> generators;
  if (j.contains("generators")) {
    for (std::size_t gi = 0; gi < j["generators"].size(); ++gi) {
      const auto& g = j["generators"][gi];
      std::ostringstream where;
      where << "generators[" << gi << "]";
      try {
        std::string name = g.value("name", where.str());
        auto rows = g.at("rows").get<std::vector<std::vector<double>>>();
        if (rows.size() != space.size())
          throw prob::Error("row count differs from atom count");
        if (!rows.empty() && rows[0].size() != times.size())
          throw prob::Error("column count differs from time count");
        generators.push_back(market::make_wealth_process(name, std::move(rows)));
      } catch (const std::exception& e) {
        err(where.str(), e.what());
      }
    }
  }

  std::vector<market::ParametricFamily> families;
  if (j.contains("families")) {
    for (std::size_t fi = 0; fi < j["families"].size(); ++fi) {
      const auto& f = j["families"][fi];
      std::ostringstream where;
      where << "families[" << fi << "]";
      try {
        std::string kind = f.value("kind", "example_2_8");
        market::ParametricFamily fam;
        if (kind == "example_2_8") {
          fam = market::example_family(times);
        } else if (kind == "tabulated") {
          fam.kind = market::ParametricFamily::Kind::tabulated;
          fam.grid = times;
          for (const auto& entry : f.at("members")) {
            std::size_t n = entry.at("n").get<std::size_t>();
            fam.tabulated[n] = entry.at("rows").get<std::vector<std::vector<double>>>();
          }
        } else {
          throw prob::Error("unknown family kind '" + kind + "'");
        }
        if (f.contains("n_min")) fam.n_min = f["n_min"].get<std::size_t>();
        if (f.contains("n_max")) fam.n_max = f["n_max"].get<std::size_t>();
        if (fam.n_min == 0 || fam.n_max < fam.n_min)
          throw prob::Error("invalid n range");
        families.push_back(std::move(fam));
      } catch (const std::exception& e) {
        err(where.str(), e.what());
      }
    }
  }

  std::optional<market::CrashTimeProfile> clock;
  bool independence_claimed = false;
  if (j.contains("clock")) {
    const auto& c = j["clock"];
    market::CrashTimeProfile profile;
    if (!c.contains("values") || c["values"].size() != space.size()) {
      err("clock.values", "needs one entry per atom (number or \"inf\")");
    } else {
      for (const auto& v : c["values"]) {
        if (v.is_string() && v.get<std::string>() == "inf")
          profile.tau.push_back(prob::infinity());
        else if (v.is_number())
          profile.tau.push_back(v.get<double>());
        else
          err("clock.values", "entries must be numbers or \"inf\"");
      }
      if (profile.tau.size() == space.size()) {
        for (std::size_t a = 0; a < profile.tau.size(); ++a)
          profile.distribution[profile.tau[a]] += space.prob(a);
        clock = std::move(profile);
      }
    }
    independence_claimed = c.value("independence_claimed", false);
  }

  MarketConfig config;
  if (j.contains("config")) {
    const auto& c = j["config"];
    config.tol = number_or(c, "tol", config.tol);
    if (c.contains("n_cap")) config.n_cap = c["n_cap"].get<std::size_t>();
    if (c.contains("max_level")) config.max_level = c["max_level"].get<std::size_t>();
    if (c.contains("seed")) config.seed = c["seed"].get<std::uint64_t>();
    if (c.contains("hull_samples")) config.hull_samples = c["hull_samples"].get<std::size_t>();
    if (c.contains("hull_depth")) config.hull_depth = c["hull_depth"].get<std::size_t>();
    if (c.contains("m_schedule")) {
      config.m_schedule = c["m_schedule"].get<std::vector<double>>();
      for (std::size_t i = 0; i + 1 < config.m_schedule.size(); ++i)
        if (!(config.m_schedule[i] < config.m_schedule[i + 1]))
          err("config.m_schedule", "must be strictly increasing");
    }
  }

  if (!res.errors.empty()) return res;

  MarketSpecDocument doc;
  doc.version = version;
  try {
    doc.mkt = market::make_market(std::move(space), std::move(filtration), std::move(generators),
                                  std::move(families));
  } catch (const std::exception& e) {
    res.errors.push_back(std::string("market: ") + e.what());
    return res;
  }
  if (doc.mkt.generators.empty() && doc.mkt.families.empty()) {
    res.errors.push_back("market: needs at least one generator or family");
    return res;
  }
  doc.clock = std::move(clock);
  doc.clock_independence_claimed = independence_claimed;
  doc.config = config;
  doc.source_text = text;
  res.doc = std::move(doc);
  return res;
}

ParseResult parse_market_file(const std::string& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const std::exception& e) {
    ParseResult r;
    r.errors.push_back(e.what());
    return r;
  }
  return parse_market_text(text);
}

std::vector<std::vector<double>> parse_deflator_file(const std::string& path) {
  json j = json::parse(read_file(path));
  if (j.value("version", "") != "deflator/1")
    throw prob::Error("deflator file: expected version \"deflator/1\"");
  return j.at("values").get<std::vector<std::vector<double>>>();
}

MarketSpecDocument example_2_8_document() {
  std::vector<double> times;
  for (int i = 0; i <= 100; ++i) times.push_back(static_cast<double>(i) / 100.0);
  prob::Partition trivial{{0}};
  std::vector<prob::Partition> partitions(times.size(), trivial);

  market::SampleSpace space({{"w0", 1.0}});
  prob::Filtration filtration(times, partitions);
  auto fam = market::example_family(times);
  fam.n_min = 1;
  fam.n_max = 1000;

  MarketSpecDocument doc;
  doc.version = "market/1";
  doc.mkt = market::make_market(space, filtration, {}, {fam});
  doc.config.n_cap = 1000;
  doc.config.m_schedule = {10.0, 100.0, 1000.0};
  doc.source_text = "builtin:example_2_8";
  return doc;
}

}  // namespace defl::cli
