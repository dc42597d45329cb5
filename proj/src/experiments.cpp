#include "ftva/experiments.hpp"

#include "ftva/lp_relax.hpp"
#include "ftva/policy_ct.hpp"
#include "ftva/policy_dt.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;

namespace ftva {

std::string fmt_num(double x) {
  if (std::isnan(x)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12g", x);
  return buf;
}

namespace {

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t cell_seed(std::uint64_t master, const std::string& policy, int n_arms, int rep) {
  return stream_seed(master, fnv1a(policy + "#" + std::to_string(n_arms) + "#" + std::to_string(rep)));
}

double parse_fraction(const std::string& tok) {
  const auto slash = tok.find('/');
  std::size_t used = 0;
  if (slash == std::string::npos) {
    const double v = std::stod(tok, &used);
    if (used != tok.size()) throw std::invalid_argument(tok);
    return v;
  }
  const double num = std::stod(tok.substr(0, slash), &used);
  if (used != slash) throw std::invalid_argument(tok);
  const std::string den_text = tok.substr(slash + 1);
  const double den = std::stod(den_text, &used);
  if (used != den_text.size() || den == 0.0) throw std::invalid_argument(tok);
  return num / den;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

bool is_ftva(const std::string& policy) { return policy.rfind("ftva", 0) == 0; }

}  // namespace

InitialProtocol parse_initial(const std::string& text, const RbInstance& inst) {
  const auto colon = text.find(':');
  const std::string head = text.substr(0, colon);
  const std::string rest = colon == std::string::npos ? "" : text.substr(colon + 1);
  const int base = inst.state_label_base;
  try {
    if (head == "all-in" && !rest.empty()) {
      const int s = std::stoi(rest) - base;
      if (s < 0 || s >= inst.n_states()) throw std::invalid_argument("state out of range");
      return InitialProtocol::all_in(s);
    }
    if (head == "fractions" && !rest.empty()) {
      std::vector<std::pair<int, double>> f;
      std::istringstream in(rest);
      std::string item;
      while (std::getline(in, item, ',')) {
        const auto eq = item.find('=');
        if (eq == std::string::npos) throw std::invalid_argument("expected S=F");
        const int s = std::stoi(item.substr(0, eq)) - base;
        if (s < 0 || s >= inst.n_states()) throw std::invalid_argument("state out of range");
        f.emplace_back(s, parse_fraction(item.substr(eq + 1)));
      }
      return InitialProtocol::from_fractions(std::move(f));
    }
    if (head == "random-simplex") return InitialProtocol::random_simplex(rest.empty() ? 0 : std::stoull(rest));
  } catch (const std::exception& e) {
    throw std::invalid_argument("bad initial protocol '" + text + "': " + e.what());
  }
  throw std::invalid_argument("bad initial protocol '" + text + "'");
}

double BoundInfo::at(int n_arms) const {
  if (!available) return std::numeric_limits<double>::quiet_NaN();
  if (theorem == "theorem2") return ct_bound(r_max, g_max, tau, n_arms);
  return r_max * tau / std::sqrt(static_cast<double>(n_arms));
}

double BoundInfo::at_mean(int n_arms) const {
  if (!available || theorem != "theorem2") return at(n_arms);
  return ct_bound(r_max, g_max, tau_mean, n_arms);
}

BoundInfo compute_bound(const RbInstance& inst, const HetSolution& sol, std::uint64_t seed, int workers,
                        const CtSyncOptions& ct) {
  BoundInfo b;
  b.r_max = inst.r_max();
  if (inst.kind == TimeKind::Continuous) {
    const CtMdp& m = inst.ct_types.front();
    const auto est = ct_sync_time_estimate(m, sol.policies.front(), ct.episodes, ct.horizon, seed, workers);
    b.available = true;
    b.theorem = "theorem2";
    b.g_max = g_max(m);
    b.tau = est.upper;
    b.tau_mean = est.mean;
    b.tau_se = est.std_error;
    b.censored = est.censored;
    return b;
  }
  for (int k = 0; k < inst.n_types(); ++k) {
    const auto reach = check_sa_reachability(inst.dt_types[k], sol.policies[k]);
    if (!reach.holds) {
      b.reason = "synchronization fails for type " + std::to_string(k);
      return b;
    }
  }
  const auto reports = per_type_sync(inst, sol);
  b.available = true;
  b.theorem = inst.heterogeneous() ? "theorem3" : "theorem1";
  for (const auto& r : reports) b.tau = std::max(b.tau, r.tau_max);
  b.tau_mean = b.tau;
  return b;
}

std::string gap_csv_header() {
  return "schema_version,experiment,policy,stands_in_for,protocol,replication,N,trajectories,horizon,mean_reward,"
         "ci_half,v_rel,gap,bound,bound_ok,epochs";
}

bool bound_satisfied(const GapRow& r) { return !std::isnan(r.bound) && r.gap <= r.bound + 3.0 * r.ci_half; }

std::string gap_csv_line(const GapRow& r) {
  std::ostringstream os;
  os << kCsvSchemaVersion << ',' << csv_field(r.experiment) << ',' << csv_field(r.policy) << ','
     << csv_field(r.stands_in_for) << ',' << csv_field(r.protocol) << ',' << r.replication << ',' << r.n_arms << ','
     << r.trajectories << ',' << fmt_num(r.horizon) << ',' << fmt_num(r.mean) << ',' << fmt_num(r.ci_half) << ','
     << fmt_num(r.v_rel) << ',' << fmt_num(r.gap) << ',' << fmt_num(r.bound) << ','
     << (std::isnan(r.bound) ? "na" : (bound_satisfied(r) ? "1" : "0")) << ',' << fmt_num(r.mean_epochs);
  return os.str();
}

json gap_json(const GapRow& r) {
  json j;
  j["experiment"] = r.experiment;
  j["policy"] = r.policy;
  j["stands_in_for"] = r.stands_in_for;
  j["protocol"] = r.protocol;
  j["replication"] = r.replication;
  j["N"] = r.n_arms;
  j["trajectories"] = r.trajectories;
  j["horizon"] = r.horizon;
  j["mean_reward"] = r.mean;
  j["ci_half"] = r.ci_half;
  j["v_rel"] = r.v_rel;
  j["gap"] = r.gap;
  j["bound"] = std::isnan(r.bound) ? json(nullptr) : json(r.bound);
  j["bound_ok"] = std::isnan(r.bound) ? json(nullptr) : json(bound_satisfied(r));
  j["epochs"] = r.mean_epochs;
  return j;
}

namespace {

GapRow gap_from_json(const json& j) {
  GapRow r;
  r.experiment = j.at("experiment");
  r.policy = j.at("policy");
  r.stands_in_for = j.at("stands_in_for");
  r.protocol = j.at("protocol");
  r.replication = j.at("replication");
  r.n_arms = j.at("N");
  r.trajectories = j.at("trajectories");
  r.horizon = j.at("horizon");
  r.mean = j.at("mean_reward");
  r.ci_half = j.at("ci_half");
  r.v_rel = j.at("v_rel");
  r.gap = j.at("gap");
  r.bound = j.at("bound").is_null() ? std::numeric_limits<double>::quiet_NaN() : j.at("bound").get<double>();
  r.mean_epochs = j.at("epochs");
  return r;
}

}  // namespace

RunReport run_any(const RbInstance& inst, const RunConfig& cfg) {
  return inst.kind == TimeKind::Continuous ? run_ct(inst, cfg) : run(inst, cfg);
}

GapRow make_row(const std::string& experiment, const RunReport& rep, const RunConfig& cfg, double v_rel,
                const BoundInfo& bound, const std::string& protocol) {
  GapRow r;
  r.experiment = experiment;
  r.policy = cfg.policy;
  r.protocol = protocol;
  r.n_arms = cfg.n_arms;
  r.trajectories = cfg.trajectories;
  r.horizon = cfg.horizon;
  r.mean = rep.mean;
  r.ci_half = rep.ci_half;
  r.v_rel = v_rel;
  r.gap = v_rel - rep.mean;
  r.bound = is_ftva(cfg.policy) ? bound.at(cfg.n_arms) : std::numeric_limits<double>::quiet_NaN();
  r.mean_epochs = rep.mean_epochs;
  return r;
}

RbInstance figure_instance(const std::string& figure) {
  if (figure == "fig2") return builtin_instance("example2");
  if (figure == "fig4") return builtin_instance("example4");
  throw std::invalid_argument("unknown figure '" + figure + "' (expected fig2 or fig4)");
}

std::vector<std::string> figure_policies(const std::string& figure) {
  if (figure == "fig2") return {"ftva", "priority:lagrangian"};
  if (figure == "fig4") return {"ftva", "twoclass:{0,1,2,3}|{4,5,6,7}", "priority:lagrangian:0"};
  throw std::invalid_argument("unknown figure '" + figure + "'");
}

InitialProtocol figure_initial(const std::string& figure) {
  if (figure == "fig2") return InitialProtocol::all_in(0);
  if (figure == "fig4") return InitialProtocol::from_fractions({{1, 1.0 / 3.0}, {2, 2.0 / 3.0}});
  throw std::invalid_argument("unknown figure '" + figure + "'");
}

ReproduceResult reproduce(const ReproduceOptions& opt) {
  const RbInstance inst = figure_instance(opt.figure);
  const auto policies = figure_policies(opt.figure);
  if (!opt.protocol.empty() && opt.protocol != "random-simplex")
    throw std::invalid_argument("reproduce supports --protocol random-simplex only");
  const bool simplex = opt.protocol == "random-simplex";
  const HetSolution sol = solve_het(inst);
  ReproduceResult res;
  res.v_rel = sol.value;
  res.bound = compute_bound(inst, sol, opt.seed, opt.workers);
  const int reps = simplex ? opt.reps : 1;
  for (int rep = 0; rep < reps; ++rep) {
    const InitialProtocol init =
        simplex ? InitialProtocol::random_simplex(stream_seed(opt.seed, 0xd1c1e7ULL + rep)) : figure_initial(opt.figure);
    for (const auto& policy : policies) {
      for (int n_arms : opt.n_list) {
        RunConfig cfg;
        cfg.n_arms = n_arms;
        cfg.horizon = opt.horizon;
        cfg.burn_in = opt.burn_in;
        cfg.trajectories = opt.trajectories;
        cfg.seed = cell_seed(opt.seed, policy, n_arms, rep);
        cfg.policy = policy;
        cfg.initial = init;
        cfg.workers = opt.workers;
        const RunReport rr = run(inst, cfg);
        GapRow row = make_row(opt.figure, rr, cfg, res.v_rel, res.bound, init.describe(inst.state_label_base));
        row.replication = rep;
        if (opt.figure == "fig2" && policy == "priority:lagrangian") row.stands_in_for = "whittle";
        res.rows.push_back(std::move(row));
      }
    }
  }
  if (simplex) {
    for (const auto& policy : policies)
      for (int n_arms : opt.n_list) {
        const GapRow* pick = nullptr;
        for (const auto& r : res.rows) {
          if (r.policy != policy || r.n_arms != n_arms) continue;
          const bool better = is_ftva(policy) ? (!pick || r.mean < pick->mean) : (!pick || r.mean > pick->mean);
          if (better) pick = &r;
        }
        GapRow env = *pick;
        env.protocol = is_ftva(policy) ? "random-simplex:min" : "random-simplex:max";
        res.envelope.push_back(env);
      }
  }
  return res;
}

void write_gap_csv(const std::string& path, const std::vector<GapRow>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << gap_csv_header() << '\n';
  for (const auto& r : rows) out << gap_csv_line(r) << '\n';
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

ExperimentSpec spec_from_json(const json& doc) {
  ExperimentSpec spec;
  try {
    spec.instance = doc.at("instance").get<std::string>();
    spec.policies = doc.at("policies").get<std::vector<std::string>>();
    spec.n_list = doc.at("n_list").get<std::vector<int>>();
    spec.trajectories = doc.value("trajectories", spec.trajectories);
    spec.horizon = doc.value("horizon", spec.horizon);
    spec.burn_in = doc.value("burn_in", spec.burn_in);
    spec.initial = doc.value("initial", std::string());
    spec.seed = doc.value("seed", std::uint64_t{0});
  } catch (const json::exception& e) {
    throw SpecError(std::string("experiment spec: ") + e.what());
  }
  if (spec.policies.empty()) throw SpecError("experiment spec: policy list is empty");
  if (spec.n_list.empty()) throw SpecError("experiment spec: n_list is empty");
  return spec;
}

json lp_report_json(const RbInstance& inst, const HetSolution& sol) {
  json j;
  j["instance"] = inst.name;
  j["kind"] = to_string(inst.kind);
  j["alpha"] = inst.alpha;
  j["state_label_base"] = inst.state_label_base;
  j["v_rel"] = sol.value;
  j["budget_dual"] = sol.occ.budget_dual;
  j["types"] = json::array();
  for (int k = 0; k < sol.occ.n_types(); ++k) {
    json t;
    t["beta"] = sol.occ.betas[k];
    json y = json::array(), pi = json::array();
    for (int s = 0; s < sol.occ.n_states; ++s) {
      y.push_back({sol.occ.at(k, s, 0), sol.occ.at(k, s, 1)});
      pi.push_back({sol.policies[k].prob(s, 0), sol.policies[k].prob(s, 1)});
    }
    t["y"] = y;
    t["policy"] = pi;
    t["marginal"] = sol.marginals[k];
    j["types"].push_back(t);
  }
  return j;
}

json sync_report_json(const SyncReport& rep, int base) {
  json j;
  j["sa_holds"] = rep.sa_holds;
  j["method"] = rep.method;
  j["tau_max"] = rep.tau_max;
  j["argmax"] = {{"s", rep.argmax[0] + base}, {"a", rep.argmax[1]}, {"s_hat", rep.argmax[2] + base},
                 {"a_hat", rep.argmax[3]}};
  j["tau_table"] = json::array();
  const int n = rep.n_states;
  for (int s = 0; s < n; ++s)
    for (int a = 0; a < 2; ++a)
      for (int sh = 0; sh < n; ++sh)
        for (int ah = 0; ah < 2; ++ah)
          j["tau_table"].push_back(
              {{"s", s + base}, {"a", a}, {"s_hat", sh + base}, {"a_hat", ah}, {"tau", rep.tau(s, a, sh, ah)}});
  return j;
}

PipelineResult run_pipeline(const ExperimentSpec& spec, const std::string& out_dir, int workers, bool force) {
  const RbInstance inst = resolve_instance(spec.instance);
  const auto rep = validate(inst);
  if (!rep.ok()) throw InstanceError("instance failed validation: " + rep.summary());
  for (const auto& p : spec.policies) parse_policy_selector(p, inst);
  const InitialProtocol init =
      spec.initial.empty() ? InitialProtocol::all_in(0) : parse_initial(spec.initial, inst);
  const std::string protocol = init.describe(inst.state_label_base);

  fs::create_directories(fs::path(out_dir) / "cells");
  const HetSolution sol = solve_het(inst);
  {
    std::ofstream lp(fs::path(out_dir) / "lp.json", std::ios::binary);
    lp << lp_report_json(inst, sol).dump(2) << '\n';
  }
  BoundInfo bound;
  json sync;
  try {
    bound = compute_bound(inst, sol, spec.seed, workers);
    if (inst.kind == TimeKind::Discrete && bound.available) {
      sync["types"] = json::array();
      for (const auto& r : per_type_sync(inst, sol)) sync["types"].push_back(sync_report_json(r, inst.state_label_base));
    }
    sync["theorem"] = bound.theorem;
    sync["available"] = bound.available;
    sync["tau"] = bound.tau;
    sync["tau_mean"] = bound.tau_mean;
    sync["tau_se"] = bound.tau_se;
    sync["censored"] = bound.censored;
    if (!bound.reason.empty()) sync["reason"] = bound.reason;
  } catch (const std::exception& e) {
    sync["error"] = e.what();
  }
  {
    std::ofstream out(fs::path(out_dir) / "sync.json", std::ios::binary);
    out << sync.dump(2) << '\n';
  }

  const std::string instance_text = instance_to_json(inst).dump();
  PipelineResult res;
  for (const auto& policy : spec.policies) {
    for (int n_arms : spec.n_list) {
      const std::string key = policy + "|" + std::to_string(n_arms);
      std::ostringstream fp_src;
      fp_src << kCsvSchemaVersion << '|' << instance_text << '|' << key << '|' << spec.trajectories << '|'
             << fmt_num(spec.horizon) << '|' << fmt_num(spec.burn_in) << '|' << protocol << '|' << spec.seed;
      char fp[17];
      std::snprintf(fp, sizeof fp, "%016llx", static_cast<unsigned long long>(fnv1a(fp_src.str())));
      std::string stem;
      for (char c : policy) stem += std::isalnum(static_cast<unsigned char>(c)) || c == '-' ? c : '_';
      const fs::path cell = fs::path(out_dir) / "cells" / (stem + "__N" + std::to_string(n_arms) + ".json");
      if (fs::exists(cell)) {
        std::ifstream in(cell);
        json stored;
        try {
          stored = json::parse(in);
        } catch (const json::exception&) {
          stored = json::object();
        }
        if (stored.value("fingerprint", std::string()) == fp) {
          res.rows.push_back(gap_from_json(stored.at("row")));
          ++res.cells_reused;
          continue;
        }
        if (!force) {
          res.failures.push_back(key + ": existing cell " + cell.string() +
                                 " was produced with different settings (use --force to overwrite)");
          continue;
        }
      }
      try {
        RunConfig cfg;
        cfg.n_arms = n_arms;
        cfg.horizon = spec.horizon;
        cfg.burn_in = spec.burn_in;
        cfg.trajectories = spec.trajectories;
        cfg.seed = cell_seed(spec.seed, policy, n_arms, 0);
        cfg.policy = policy;
        cfg.initial = init;
        cfg.workers = workers;
        const RunReport rr = run_any(inst, cfg);
        GapRow row = make_row(inst.name, rr, cfg, sol.value, bound, protocol);
        json stored{{"fingerprint", fp}, {"row", gap_json(row)}};
        const fs::path tmp = cell.string() + ".tmp";
        {
          std::ofstream out(tmp, std::ios::binary);
          out << stored.dump(2) << '\n';
        }
        fs::rename(tmp, cell);
        // re-read so fresh and resumed runs format identically
        res.rows.push_back(gap_from_json(stored.at("row")));
        ++res.cells_run;
      } catch (const std::exception& e) {
        res.failures.push_back(key + ": " + e.what());
      }
    }
  }
  write_gap_csv((fs::path(out_dir) / "gap.csv").string(), res.rows);
  return res;
}

}  // namespace ftva
