#include "defl/report.hpp"

#include <chrono>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "defl/deflator.hpp"
#include "defl/dyadic.hpp"

namespace defl::cli {

using nlohmann::ordered_json;

std::optional<Command> command_from_string(const std::string& name) {
  if (name == "validate") return Command::validate;
  if (name == "deflate") return Command::deflate;
  if (name == "verify") return Command::verify;
  if (name == "nupbr") return Command::nupbr;
  if (name == "hull") return Command::hull;
  if (name == "crash") return Command::crash;
  if (name == "dyadic") return Command::dyadic;
  if (name == "clock") return Command::clock;
  if (name == "example") return Command::example;
  return std::nullopt;
}

std::string command_name(Command c) {
  switch (c) {
    case Command::validate: return "validate";
    case Command::deflate: return "deflate";
    case Command::verify: return "verify";
    case Command::nupbr: return "nupbr";
    case Command::hull: return "hull";
    case Command::crash: return "crash";
    case Command::dyadic: return "dyadic";
    case Command::clock: return "clock";
    case Command::example: return "example";
  }
  return "?";
}

std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

namespace {

std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

ordered_json time_or_inf(double t) {
  if (std::isinf(t)) return "inf";
  return t;
}

ordered_json tau_json(const market::CrashTimeProfile& tau) {
  ordered_json out;
  out["per_atom"] = ordered_json::array();
  for (double t : tau.tau) out["per_atom"].push_back(time_or_inf(t));
  out["distribution"] = ordered_json::array();
  for (const auto& [t, mass] : tau.distribution) {
    ordered_json row;
    row["t"] = time_or_inf(t);
    row["mass"] = mass;
    out["distribution"].push_back(row);
  }
  return out;
}

ordered_json matrix_json(const std::vector<std::vector<double>>& m) {
  ordered_json out = ordered_json::array();
  for (const auto& row : m) out.push_back(row);
  return out;
}

ordered_json verification_json(const engine::VerificationReport& rep) {
  ordered_json out;
  out["tolerance"] = rep.tolerance;
  out["max_ratio"] = rep.max_ratio;
  out["entry_count"] = rep.entry_count;
  out["positivity_ok"] = rep.positivity_ok;
  out["z0_ok"] = rep.z0_ok;
  out["adapted_ok"] = rep.adapted_ok;
  out["verdict"] = rep.pass ? "pass" : "fail";
  out["entries"] = ordered_json::array();
  for (const auto& e : rep.entries) {
    ordered_json row;
    row["measure"] = e.measure;
    row["asset"] = e.asset;
    row["s"] = e.s_idx;
    row["t"] = e.t_idx;
    row["block"] = e.block;
    row["ratio"] = e.ratio;
    out["entries"].push_back(row);
  }
  return out;
}

ordered_json nupbr_json(const engine::NupbrResult& res, const std::vector<double>& schedule) {
  ordered_json out;
  out["m_schedule"] = schedule;
  out["per_time"] = ordered_json::array();
  for (const auto& d : res.per_time) {
    ordered_json row;
    row["t"] = d.time;
    row["verdict"] = d.diag.verdict;
    row["max_value"] = d.diag.max_value;
    row["sup_tail"] = d.diag.sup_tail;
    row["truncated"] = d.diag.truncated;
    out["per_time"].push_back(row);
  }
  out["divergence_evidence"] = res.divergence_evidence;
  if (res.divergent_time) out["divergent_time"] = *res.divergent_time;
  return out;
}

ordered_json bound_table_json(const dyadic::BoundednessTable& table, bool include_rows) {
  ordered_json out;
  out["m_schedule"] = table.m_schedule;
  out["evidence_threshold"] = table.evidence_threshold;
  out["per_t"] = ordered_json::array();
  for (std::size_t i = 0; i < table.t_values.size(); ++i) {
    ordered_json row;
    row["t"] = table.t_values[i];
    row["sup_per_m"] = table.summary[i];
    row["verdict"] = table.verdict_per_t[i];
    out["per_t"].push_back(row);
  }
  if (include_rows) {
    out["rows"] = ordered_json::array();
    for (const auto& r : table.rows) {
      ordered_json row;
      row["t"] = r.t;
      row["m"] = r.m;
      row["k"] = r.k;
      row["r"] = r.r;
      row["u"] = r.u;
      row["value"] = r.value;
      row["charged"] = r.charged;
      out["rows"].push_back(row);
    }
  }
  return out;
}

engine::BuildOptions build_options(const MarketConfig& cfg) {
  engine::BuildOptions opts;
  opts.n_cap = cfg.n_cap;
  opts.tol = cfg.tol;
  opts.seed = cfg.seed;
  opts.hull_samples = cfg.hull_samples;
  opts.m_schedule = cfg.m_schedule;
  return opts;
}

std::size_t max_attainable_level(const market::Market& m, std::size_t cap) {
  std::size_t best = 0;
  bool any = false;
  const double T = m.filtration.times().back();
  for (std::size_t k = 0; k <= cap; ++k) {
    auto grid = dyadic::dyadic_grid(k, T);
    bool all = true;
    for (double pt : grid.points)
      if (!m.filtration.time_index(pt, 1e-12)) { all = false; break; }
    if (all) { best = k; any = true; }
  }
  if (!any) throw prob::Error("market grid is not dyadic (must contain {0, T})");
  return best;
}

}  // namespace

RunReport invalid_input_report(Command cmd, const std::vector<std::string>& errors,
                               const std::string& source_text) {
  RunReport rep;
  rep.command = command_name(cmd);
  rep.input_digest = hex64(fnv1a64(source_text));
  rep.verdict = "invalid";
  rep.exit_code = kExitInput;
  rep.body["errors"] = errors;
  return rep;
}

RunReport run_command(const MarketSpecDocument& doc, Command cmd, const Overrides& overrides) {
  auto start = std::chrono::steady_clock::now();
  MarketConfig cfg = doc.config;
  if (overrides.tol) cfg.tol = *overrides.tol;
  if (overrides.n_cap) cfg.n_cap = *overrides.n_cap;
  if (overrides.max_level) cfg.max_level = *overrides.max_level;
  if (overrides.seed) cfg.seed = *overrides.seed;

  RunReport rep;
  rep.command = command_name(cmd);
  rep.input_digest = hex64(fnv1a64(doc.source_text));
  rep.seed = cfg.seed;
  rep.verdict = "complete";
  rep.exit_code = kExitPass;
  const market::Market& m = doc.mkt;

  try {
    switch (cmd) {
      case Command::validate: {
        rep.body["valid"] = true;
        rep.body["atoms"] = m.atom_count();
        rep.body["times"] = m.time_count();
        rep.body["generators"] = m.generators.size();
        rep.body["families"] = m.families.size();
        rep.body["adapted"] = m.adapted;
        rep.verdict = "pass";
        break;
      }
      case Command::deflate: {
        auto res = engine::build_discrete_deflator(m, build_options(cfg));
        rep.body["tolerance"] = cfg.tol;
        rep.body["tau"] = tau_json(res.tau);
        rep.body["z"] = matrix_json(res.z.values);
        if (res.z_adapted) rep.body["z_adapted"] = matrix_json(res.z_adapted->values);
        rep.body["locals"] = ordered_json::array();
        for (const auto& [t, y] : res.locals) {
          ordered_json row;
          row["t"] = time_or_inf(t);
          row["y"] = matrix_json(y.values);
          rep.body["locals"].push_back(row);
        }
        rep.body["verification"] = verification_json(res.report);
        if (res.report_adapted)
          rep.body["verification_adapted"] = verification_json(*res.report_adapted);
        bool pass = res.report.pass && (!res.report_adapted || res.report_adapted->pass);
        rep.verdict = pass ? "pass" : "fail";
        rep.exit_code = pass ? kExitPass : kExitFail;
        break;
      }
      case Command::verify: {
        if (!overrides.deflator_path)
          throw prob::Error("verify requires --deflator <path>");
        auto values = parse_deflator_file(*overrides.deflator_path);
        auto z = engine::make_deflator(values);
        bool adapted = true;
        for (std::size_t t = 0; t < m.time_count() && adapted; ++t)
          for (const auto& b : m.filtration.partition(t))
            for (std::size_t i = 1; i < b.size(); ++i)
              if (z.values[b[i]][t] != z.values[b[0]][t]) { adapted = false; break; }
        z.adapted = adapted;
        auto crash = engine::market_crash_time(m, cfg.n_cap, cfg.tol);
        engine::VerifyOptions vopts;
        vopts.hull_samples = cfg.hull_samples;
        vopts.hull_depth = cfg.hull_depth;
        vopts.seed = cfg.seed;
        vopts.n_cap = cfg.n_cap;
        vopts.tol = cfg.tol;
        auto report =
            engine::verify_deflator(m, z, engine::crash_conditionals(m, crash.tau), vopts);
        rep.body["tau"] = tau_json(crash.tau);
        rep.body["verification"] = verification_json(report);
        rep.verdict = report.pass ? "pass" : "fail";
        rep.exit_code = report.pass ? kExitPass : kExitFail;
        break;
      }
      case Command::nupbr: {
        auto res = engine::nupbr_check(m, cfg.n_cap, cfg.m_schedule);
        rep.body = nupbr_json(res, cfg.m_schedule);
        rep.verdict = "complete";
        break;
      }
      case Command::hull: {
        auto samples =
            market::hull_sample(m, cfg.hull_depth, cfg.seed, cfg.hull_samples, cfg.n_cap);
        rep.body["depth"] = cfg.hull_depth;
        rep.body["samples"] = ordered_json::array();
        for (const auto& s : samples) {
          ordered_json row;
          row["name"] = s.name;
          row["values"] = matrix_json(s.values);
          rep.body["samples"].push_back(row);
        }
        rep.verdict = "complete";
        break;
      }
      case Command::crash: {
        auto res = engine::market_crash_time(m, cfg.n_cap, cfg.tol);
        rep.body["tau"] = tau_json(res.tau);
        rep.body["per_time"] = ordered_json::array();
        for (std::size_t t = 0; t < res.per_time.size(); ++t) {
          ordered_json row;
          row["t"] = m.filtration.time(t);
          row["f_hat"] = res.per_time[t].f_hat.v;
          row["support"] = res.per_time[t].support;
          row["kkt_residual"] = res.per_time[t].kkt_residual;
          rep.body["per_time"].push_back(row);
        }
        rep.verdict = "complete";
        break;
      }
      case Command::dyadic: {
        std::size_t K = max_attainable_level(m, cfg.max_level);
        auto crash = engine::market_crash_time(m, cfg.n_cap, cfg.tol);
        rep.body["max_level"] = K;
        rep.body["tau"] = tau_json(crash.tau);
        std::vector<dyadic::LevelDeflator> levels;
        rep.body["levels"] = ordered_json::array();
        bool levels_pass = true;
        for (std::size_t k = 0; k <= K; ++k) {
          auto lv = dyadic::build_level_deflator(m, crash.tau, k, cfg.tol, cfg.n_cap);
          auto check = dyadic::verify_level(m, crash.tau, lv, cfg.tol, cfg.n_cap);
          ordered_json row;
          row["k"] = k;
          row["z"] = matrix_json(lv.z.values);
          row["max_kkt"] = lv.max_kkt;
          row["max_ratio"] = check.max_ratio;
          row["verdict"] = check.pass ? "pass" : "fail";
          rep.body["levels"].push_back(row);
          levels_pass = levels_pass && check.pass;
          levels.push_back(std::move(lv));
        }
        std::vector<std::pair<double, prob::RandomVariable>> z_inf;
        rep.body["limits"] = ordered_json::array();
        bool all_converged = true;
        if (K >= 1) {
          auto lim_grid = dyadic::dyadic_grid(K - 1, m.filtration.times().back());
          for (double t : lim_grid.points) {
            dyadic::ForwardConvexSchedule sched;
            sched.tol = std::max(cfg.tol, 1e-9);
            auto lim = dyadic::forward_convex_limit(levels, t, sched, m.p());
            ordered_json row;
            row["t"] = t;
            row["z_inf"] = lim.z_inf.v;
            row["gaps"] = lim.gaps;
            row["converged"] = lim.converged;
            row["reciprocal_verdict"] = lim.reciprocal_diag.verdict;
            rep.body["limits"].push_back(row);
            all_converged = all_converged && lim.converged;
            z_inf.emplace_back(t, lim.z_inf);
          }
        }
        rep.body["uniform_boundedness"] =
            bound_table_json(dyadic::uniform_boundedness_diag(m, crash.tau, K, cfg.m_schedule,
                                                              cfg.n_cap),
                             false);
        if (!z_inf.empty())
          rep.body["deflator_boundedness"] = bound_table_json(
              dyadic::deflator_bound_diag(z_inf, m, crash.tau, K, cfg.m_schedule), false);
        rep.body["limits_converged"] = all_converged;
        rep.verdict = levels_pass ? "pass" : "fail";
        rep.exit_code = levels_pass ? kExitPass : kExitFail;
        break;
      }
      case Command::clock: {
        if (!doc.clock) throw prob::Error("clock command requires a clock stanza");
        std::size_t K = max_attainable_level(m, cfg.max_level);
        auto res = dyadic::independent_clock_deflator(m, *doc.clock, K, cfg.tol, cfg.n_cap);
        rep.body["max_level"] = K;
        rep.body["accepted"] = res.accepted;
        if (!res.rejection.empty()) rep.body["rejection"] = res.rejection;
        if (res.accepted) {
          rep.body["grid_times"] = res.grid_times;
          rep.body["z"] = matrix_json(res.z.values);
          rep.body["verification"] = verification_json(res.report);
          std::size_t jensen_rows = res.jensen.size(), jensen_ok = 0;
          for (const auto& r : res.jensen) jensen_ok += r.ok ? 1 : 0;
          rep.body["jensen_rows"] = jensen_rows;
          rep.body["jensen_ok"] = jensen_ok;
        }
        rep.verdict = res.accepted ? "pass" : "rejected";
        rep.exit_code = res.accepted ? kExitPass : kExitFail;
        break;
      }
      case Command::example: {
        auto ex = example_2_8_document();
        const auto& em = ex.mkt;
        std::size_t t_last = em.time_count() - 1;
        auto terminal = em.value_set(t_last, ex.config.n_cap);
        bool c_t_zero = true;
        for (const auto& col : terminal)
          for (std::size_t a = 0; a < col.size(); ++a) c_t_zero = c_t_zero && col[a] == 0.0;
        auto nupbr = engine::nupbr_check(em, ex.config.n_cap, ex.config.m_schedule);
        std::string refusal;
        try {
          engine::build_discrete_deflator(em, build_options(ex.config));
        } catch (const engine::StageError& e) {
          refusal = e.what();
        }
        double half_sup = 0.0, half_max = 0.0;
        for (const auto& d : nupbr.per_time)
          if (d.time == 0.5) {
            half_sup = d.diag.sup_tail.empty() ? 0.0 : d.diag.sup_tail.back();
            half_max = d.diag.max_value;
          }
        rep.body["n_cap"] = ex.config.n_cap;
        rep.body["c_T_is_zero"] = c_t_zero;
        rep.body["nupbr"] = nupbr_json(nupbr, ex.config.m_schedule);
        rep.body["sup_tail_at_half"] = half_sup;
        rep.body["max_value_at_half"] = half_max;
        rep.body["refusal"] = refusal;
        bool as_expected = c_t_zero && nupbr.divergence_evidence && !refusal.empty() &&
                           half_max == static_cast<double>(ex.config.n_cap);
        rep.body["as_expected"] = as_expected;
        rep.verdict = as_expected ? "pass" : "fail";
        rep.exit_code = as_expected ? kExitPass : kExitFail;
        break;
      }
    }
  } catch (const engine::StageError& e) {
    rep.verdict = "error";
    rep.exit_code = kExitInternal;
    rep.body["stage"] = e.stage;
    rep.body["error"] = e.what();
  } catch (const std::exception& e) {
    rep.verdict = "error";
    rep.exit_code = kExitInternal;
    rep.body["error"] = e.what();
  }

  rep.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rep;
}

namespace {

void render_human(const ordered_json& j, std::ostream& os, int indent) {
  const std::string pad(static_cast<std::size_t>(indent) * 2, ' ');
  if (j.is_object()) {
    for (const auto& [key, value] : j.items()) {
      if (value.is_object() || (value.is_array() && !value.empty() && value[0].is_object())) {
        os << pad << key << ":\n";
        render_human(value, os, indent + 1);
      } else {
        os << pad << key << ": " << value.dump() << "\n";
      }
    }
  } else if (j.is_array()) {
    for (const auto& item : j) {
      os << pad << "-\n";
      render_human(item, os, indent + 1);
    }
  } else {
    os << pad << j.dump() << "\n";
  }
}

}  // namespace

std::string emit_report(const RunReport& report, Format format) {
  ordered_json out;
  out["schema"] = "defl-report/1";
  out["command"] = report.command;
  out["input_digest"] = report.input_digest;
  out["seed"] = report.seed;
  out["verdict"] = report.verdict;
  out["exit_code"] = report.exit_code;
  out["body"] = report.body;
  if (format == Format::machine) return out.dump(2) + "\n";

  std::ostringstream os;
  os << "== defl " << report.command << " ==\n";
  os << "input digest : " << report.input_digest << "\n";
  os << "seed         : " << report.seed << "\n";
  os << "verdict      : " << report.verdict << " (exit " << report.exit_code << ")\n";
  os << "wall seconds : " << report.wall_seconds << "\n";
  render_human(report.body, os, 0);
  return os.str();
}

nlohmann::ordered_json parse_machine_report(const std::string& text) {
  auto j = ordered_json::parse(text);
  if (j.value("schema", "") != "defl-report/1")
    throw prob::Error("not a defl-report/1 document");
  for (const char* key : {"command", "input_digest", "seed", "verdict", "exit_code", "body"})
    if (!j.contains(key)) throw prob::Error(std::string("report missing key ") + key);
  return j;
}

}  // namespace defl::cli
