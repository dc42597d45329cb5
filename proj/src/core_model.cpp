#include "ftva/core_model.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

namespace ftva {

using nlohmann::json;

std::string to_string(TimeKind kind) { return kind == TimeKind::Discrete ? "dt" : "ct"; }

DtMdp::DtMdp(int n)
    : n_states(n), transition(static_cast<std::size_t>(n) * 2 * n, 0.0), reward(static_cast<std::size_t>(n) * 2, 0.0) {}

double DtMdp::r_max() const {
  double m = 0.0;
  for (double v : reward) m = std::max(m, std::abs(v));
  return m;
}

CtMdp::CtMdp(int n)
    : n_states(n), rates(static_cast<std::size_t>(n) * 2 * n, 0.0), reward_rate(static_cast<std::size_t>(n) * 2, 0.0) {}

double CtMdp::total_rate(int s, int a) const {
  double total = 0.0;
  for (int t = 0; t < n_states; ++t) total += rate(s, a, t);
  return total;
}

double CtMdp::r_max() const {
  double m = 0.0;
  for (double v : reward_rate) m = std::max(m, std::abs(v));
  return m;
}

double g_max(const CtMdp& model) {
  double g = 0.0;
  for (int s = 0; s < model.n_states; ++s)
    for (int a = 0; a < 2; ++a) g = std::max(g, model.total_rate(s, a));
  return g;
}

int RbInstance::n_states() const {
  if (kind == TimeKind::Discrete) return dt_types.empty() ? 0 : dt_types.front().n_states;
  return ct_types.empty() ? 0 : ct_types.front().n_states;
}

double RbInstance::r_max() const {
  double m = 0.0;
  for (const auto& t : dt_types) m = std::max(m, t.r_max());
  for (const auto& t : ct_types) m = std::max(m, t.r_max());
  return m;
}

RbInstance RbInstance::homogeneous(std::string name, DtMdp model, double alpha) {
  RbInstance inst;
  inst.name = std::move(name);
  inst.kind = TimeKind::Discrete;
  inst.alpha = alpha;
  inst.betas = {1.0};
  inst.dt_types.push_back(std::move(model));
  return inst;
}

RbInstance RbInstance::homogeneous(std::string name, CtMdp model, double alpha) {
  RbInstance inst;
  inst.name = std::move(name);
  inst.kind = TimeKind::Continuous;
  inst.alpha = alpha;
  inst.betas = {1.0};
  inst.ct_types.push_back(std::move(model));
  return inst;
}

SingleArmPolicy SingleArmPolicy::deterministic(const std::vector<int>& actions) {
  SingleArmPolicy pol;
  pol.n_states = static_cast<int>(actions.size());
  pol.probs.assign(actions.size() * 2, 0.0);
  for (std::size_t s = 0; s < actions.size(); ++s) pol.probs[s * 2 + (actions[s] ? 1 : 0)] = 1.0;
  return pol;
}

std::string ValidationReport::summary() const {
  if (ok()) return "ok";
  std::ostringstream os;
  for (std::size_t i = 0; i < problems.size(); ++i) os << (i ? "; " : "") << problems[i];
  return os.str();
}

namespace {

std::string prefix(const std::string& where) { return where.empty() ? "" : where + ": "; }

}  // namespace

ValidationReport validate(const DtMdp& m, const std::string& where) {
  ValidationReport rep;
  const auto n = static_cast<std::size_t>(m.n_states);
  if (m.n_states <= 0) {
    rep.problems.push_back(prefix(where) + "n_states must be positive");
    return rep;
  }
  if (m.transition.size() != n * 2 * n || m.reward.size() != n * 2) {
    rep.problems.push_back(prefix(where) + "tensor dimensions do not match n_states");
    return rep;
  }
  for (int s = 0; s < m.n_states; ++s) {
    for (int a = 0; a < 2; ++a) {
      double sum = 0.0;
      bool bad_entry = false;
      for (int t = 0; t < m.n_states; ++t) {
        const double v = m.p(s, a, t);
        if (!std::isfinite(v) || v < 0.0) bad_entry = true;
        sum += v;
      }
      const std::string loc = "(s=" + std::to_string(s) + ",a=" + std::to_string(a) + ")";
      if (bad_entry) rep.problems.push_back(prefix(where) + "negative or non-finite probability at " + loc);
      if (std::abs(sum - 1.0) > kValidationTol) {
        std::ostringstream os;
        os.precision(12);
        os << prefix(where) << "transition row " << loc << " sums to " << sum;
        rep.problems.push_back(os.str());
      }
      if (!std::isfinite(m.r(s, a))) rep.problems.push_back(prefix(where) + "non-finite reward at " + loc);
    }
  }
  return rep;
}

ValidationReport validate(const CtMdp& m, const std::string& where) {
  ValidationReport rep;
  const auto n = static_cast<std::size_t>(m.n_states);
  if (m.n_states <= 0) {
    rep.problems.push_back(prefix(where) + "n_states must be positive");
    return rep;
  }
  if (m.rates.size() != n * 2 * n || m.reward_rate.size() != n * 2) {
    rep.problems.push_back(prefix(where) + "tensor dimensions do not match n_states");
    return rep;
  }
  for (int s = 0; s < m.n_states; ++s) {
    for (int a = 0; a < 2; ++a) {
      for (int t = 0; t < m.n_states; ++t) {
        if (t == s) continue;
        const double v = m.rate(s, a, t);
        const std::string loc = "(s=" + std::to_string(s) + ",a=" + std::to_string(a) + ",s'=" + std::to_string(t) + ")";
        if (!std::isfinite(v)) rep.problems.push_back(prefix(where) + "non-finite rate at " + loc);
        else if (v < 0.0) rep.problems.push_back(prefix(where) + "negative rate at " + loc);
      }
      if (!std::isfinite(m.r(s, a)))
        rep.problems.push_back(prefix(where) + "non-finite reward rate at (s=" + std::to_string(s) + ",a=" +
                               std::to_string(a) + ")");
    }
  }
  return rep;
}

ValidationReport validate(const SingleArmPolicy& pol) {
  ValidationReport rep;
  if (pol.probs.size() != static_cast<std::size_t>(pol.n_states) * 2) {
    rep.problems.push_back("policy dimensions do not match n_states");
    return rep;
  }
  for (int s = 0; s < pol.n_states; ++s) {
    const double p0 = pol.prob(s, 0), p1 = pol.prob(s, 1);
    if (p0 < 0.0 || p1 < 0.0 || !std::isfinite(p0) || !std::isfinite(p1) || std::abs(p0 + p1 - 1.0) > kValidationTol)
      rep.problems.push_back("policy row " + std::to_string(s) + " is not a distribution");
  }
  return rep;
}

ValidationReport validate(const RbInstance& inst) {
  ValidationReport rep;
  auto merge = [&rep](const ValidationReport& other) {
    rep.problems.insert(rep.problems.end(), other.problems.begin(), other.problems.end());
  };
  if (!(inst.alpha > 0.0 && inst.alpha < 1.0)) rep.problems.push_back("alpha must lie in (0,1)");
  const std::size_t k = inst.betas.size();
  if (k == 0) {
    rep.problems.push_back("instance has no arm types");
    return rep;
  }
  const std::size_t n_models = inst.kind == TimeKind::Discrete ? inst.dt_types.size() : inst.ct_types.size();
  const std::size_t n_other = inst.kind == TimeKind::Discrete ? inst.ct_types.size() : inst.dt_types.size();
  if (n_models != k || n_other != 0) {
    rep.problems.push_back("number of models does not match number of betas");
    return rep;
  }
  double beta_sum = 0.0;
  for (double b : inst.betas) {
    if (!(b > 0.0 && b <= 1.0)) rep.problems.push_back("beta must lie in (0,1]");
    beta_sum += b;
  }
  if (std::abs(beta_sum - 1.0) > kValidationTol) rep.problems.push_back("betas must sum to 1");
  const int n = inst.n_states();
  for (std::size_t i = 0; i < k; ++i) {
    const std::string where = k > 1 ? "type " + std::to_string(i) : "";
    if (inst.kind == TimeKind::Discrete) {
      merge(validate(inst.dt_types[i], where));
      if (inst.dt_types[i].n_states != n) rep.problems.push_back(prefix(where) + "state count differs between types");
    } else {
      merge(validate(inst.ct_types[i], where));
      if (inst.ct_types[i].n_states != n) rep.problems.push_back(prefix(where) + "state count differs between types");
    }
  }
  return rep;
}

int exact_count(double fraction, int n, const std::string& what) {
  const double x = fraction * n;
  const double rounded = std::round(x);
  if (std::abs(x - rounded) > kValidationTol) {
    std::ostringstream os;
    os << what << " * N = " << x << " is not an integer (N=" << n << ")";
    throw DivisibilityError(os.str());
  }
  return static_cast<int>(rounded);
}

// ---------------------------------------------------------------------------
// Built-in instances

namespace {

// Published to eight decimals, so a few rows miss 1 by 1e-8; rescale each row.
void normalize_rows(DtMdp& m) {
  for (int s = 0; s < m.n_states; ++s)
    for (int a = 0; a < 2; ++a) {
      double sum = 0.0;
      for (int t = 0; t < m.n_states; ++t) sum += m.p(s, a, t);
      for (int t = 0; t < m.n_states; ++t) m.p(s, a, t) /= sum;
    }
}

DtMdp example2_model() {
  static constexpr double kPassive[3][3] = {{0.02232142, 0.10229283, 0.87538575},
                                            {0.03426605, 0.17175704, 0.79397691},
                                            {0.52324756, 0.45523298, 0.02151947}};
  static constexpr double kActive[3][3] = {{0.14874601, 0.30435809, 0.54689589},
                                           {0.56845754, 0.41117331, 0.02036915},
                                           {0.25265570, 0.27310439, 0.4742399}};
  static constexpr double kActiveReward[3] = {0.37401552, 0.11740814, 0.07866135};
  DtMdp m(3);
  for (int s = 0; s < 3; ++s) {
    for (int t = 0; t < 3; ++t) {
      m.p(s, 0, t) = kPassive[s][t];
      m.p(s, 1, t) = kActive[s][t];
    }
    m.r(s, 1) = kActiveReward[s];
  }
  normalize_rows(m);
  return m;
}

DtMdp example4_model() {
  constexpr int n = 8;
  constexpr double kRight = 0.1;
  static constexpr double kLeft[n] = {1.0, 1.0, 0.48, 0.47, 0.46, 0.45, 0.44, 0.43};
  DtMdp m(n);
  for (int s = 0; s < n; ++s) {
    const int preferred = s < 4 ? 1 : 0;
    const int other = 1 - preferred;
    m.p(s, preferred, (s + 1) % n) += kRight;
    m.p(s, preferred, s) += 1.0 - kRight;
    m.p(s, other, std::max(s - 1, 0)) += kLeft[s];
    m.p(s, other, s) += 1.0 - kLeft[s];
  }
  // one unit of reward per 7 -> 0 crossing, in expected per-step form
  m.r(7, 0) = kRight;
  return m;
}

}  // namespace

std::vector<std::string> builtin_names() { return {"example2", "example4", "example2-ct"}; }

RbInstance builtin_instance(const std::string& name) {
  if (name == "example2") {
    auto inst = RbInstance::homogeneous("example2", example2_model(), 0.4);
    inst.state_label_base = 1;
    return inst;
  }
  if (name == "example4") return RbInstance::homogeneous("example4", example4_model(), 0.5);
  if (name == "example2-ct") {
    const DtMdp dt = example2_model();
    CtMdp ct(dt.n_states);
    for (int s = 0; s < dt.n_states; ++s)
      for (int a = 0; a < 2; ++a) {
        for (int t = 0; t < dt.n_states; ++t)
          if (t != s) ct.rate_ref(s, a, t) = dt.p(s, a, t);
        ct.r(s, a) = dt.r(s, a);
      }
    auto inst = RbInstance::homogeneous("example2-ct", std::move(ct), 0.4);
    inst.state_label_base = 1;
    return inst;
  }
  throw InstanceError("unknown built-in instance '" + name + "'");
}

// ---------------------------------------------------------------------------
// JSON ingestion

namespace {

const json& require(const json& obj, const char* field, const std::string& ctx) {
  auto it = obj.find(field);
  if (it == obj.end()) throw InstanceError(ctx + "missing required field \"" + field + "\"");
  return *it;
}

double as_number(const json& v, const std::string& field) {
  if (!v.is_number()) throw InstanceError("field \"" + field + "\" must be a number");
  return v.get<double>();
}

std::vector<double> read_tensor3(const json& v, int n, const std::string& field) {
  if (!v.is_array() || static_cast<int>(v.size()) != n)
    throw InstanceError("field \"" + field + "\" must be an array of " + std::to_string(n) + " states");
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(n) * 2 * n);
  for (int s = 0; s < n; ++s) {
    const json& per_action = v[s];
    if (!per_action.is_array() || per_action.size() != 2)
      throw InstanceError("field \"" + field + "\"[" + std::to_string(s) + "] must hold 2 actions");
    for (int a = 0; a < 2; ++a) {
      const json& row = per_action[a];
      if (!row.is_array() || static_cast<int>(row.size()) != n)
        throw InstanceError("field \"" + field + "\"[" + std::to_string(s) + "][" + std::to_string(a) + "] must hold " +
                            std::to_string(n) + " entries");
      for (int t = 0; t < n; ++t)
        out.push_back(as_number(row[t], field + "[" + std::to_string(s) + "][" + std::to_string(a) + "][" +
                                            std::to_string(t) + "]"));
    }
  }
  return out;
}

std::vector<double> read_reward(const json& v, int n, const std::string& field) {
  if (!v.is_array() || static_cast<int>(v.size()) != n)
    throw InstanceError("field \"" + field + "\" must be an array of " + std::to_string(n) + " states");
  std::vector<double> out;
  for (int s = 0; s < n; ++s) {
    if (!v[s].is_array() || v[s].size() != 2)
      throw InstanceError("field \"" + field + "\"[" + std::to_string(s) + "] must hold 2 actions");
    for (int a = 0; a < 2; ++a) out.push_back(as_number(v[s][a], field));
  }
  return out;
}

void read_model(const json& obj, TimeKind kind, int n, RbInstance& inst, const std::string& ctx) {
  if (kind == TimeKind::Discrete) {
    DtMdp m(n);
    m.transition = read_tensor3(require(obj, "transition", ctx), n, "transition");
    m.reward = read_reward(require(obj, "reward", ctx), n, "reward");
    inst.dt_types.push_back(std::move(m));
  } else {
    CtMdp m(n);
    m.rates = read_tensor3(require(obj, "rates", ctx), n, "rates");
    for (int s = 0; s < n; ++s)
      for (int a = 0; a < 2; ++a) m.rate_ref(s, a, s) = 0.0;
    m.reward_rate = read_reward(require(obj, "reward", ctx), n, "reward");
    inst.ct_types.push_back(std::move(m));
  }
}

json tensor_to_json(const std::vector<double>& data, int n, bool zero_diag) {
  json out = json::array();
  for (int s = 0; s < n; ++s) {
    json per_action = json::array();
    for (int a = 0; a < 2; ++a) {
      json row = json::array();
      for (int t = 0; t < n; ++t)
        row.push_back(zero_diag && t == s ? 0.0 : data[(static_cast<std::size_t>(s) * 2 + a) * n + t]);
      per_action.push_back(std::move(row));
    }
    out.push_back(std::move(per_action));
  }
  return out;
}

json reward_to_json(const std::vector<double>& r, int n) {
  json out = json::array();
  for (int s = 0; s < n; ++s) out.push_back({r[s * 2], r[s * 2 + 1]});
  return out;
}

}  // namespace

RbInstance instance_from_json(const json& doc) {
  if (!doc.is_object()) throw InstanceError("instance document must be a JSON object");
  RbInstance inst;
  const json& kind = require(doc, "kind", "");
  if (!kind.is_string() || (kind != "dt" && kind != "ct")) throw InstanceError("field \"kind\" must be \"dt\" or \"ct\"");
  inst.kind = kind == "dt" ? TimeKind::Discrete : TimeKind::Continuous;
  const json& ns = require(doc, "n_states", "");
  if (!ns.is_number_integer() || ns.get<int>() <= 0) throw InstanceError("field \"n_states\" must be a positive integer");
  const int n = ns.get<int>();
  inst.alpha = as_number(require(doc, "alpha", ""), "alpha");
  inst.name = doc.value("name", std::string("custom"));
  inst.state_label_base = doc.value("state_label_base", 0);
  if (auto it = doc.find("types"); it != doc.end()) {
    if (!it->is_array() || it->empty()) throw InstanceError("field \"types\" must be a non-empty array");
    for (std::size_t k = 0; k < it->size(); ++k) {
      const json& t = (*it)[k];
      const std::string ctx = "types[" + std::to_string(k) + "]: ";
      inst.betas.push_back(as_number(require(t, "beta", ctx), "beta"));
      read_model(t, inst.kind, n, inst, ctx);
    }
  } else {
    inst.betas = {1.0};
    read_model(doc, inst.kind, n, inst, "");
  }
  return inst;
}

json instance_to_json(const RbInstance& inst) {
  json doc;
  doc["name"] = inst.name;
  doc["kind"] = to_string(inst.kind);
  doc["n_states"] = inst.n_states();
  doc["alpha"] = inst.alpha;
  if (inst.state_label_base != 0) doc["state_label_base"] = inst.state_label_base;
  const int n = inst.n_states();
  auto model_fields = [&](std::size_t k, json& target) {
    if (inst.kind == TimeKind::Discrete) {
      target["transition"] = tensor_to_json(inst.dt_types[k].transition, n, false);
      target["reward"] = reward_to_json(inst.dt_types[k].reward, n);
    } else {
      target["rates"] = tensor_to_json(inst.ct_types[k].rates, n, true);
      target["reward"] = reward_to_json(inst.ct_types[k].reward_rate, n);
    }
  };
  if (inst.heterogeneous()) {
    doc["types"] = json::array();
    for (std::size_t k = 0; k < inst.betas.size(); ++k) {
      json t;
      t["beta"] = inst.betas[k];
      model_fields(k, t);
      doc["types"].push_back(std::move(t));
    }
  } else {
    model_fields(0, doc);
  }
  return doc;
}

RbInstance load_instance(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InstanceError("cannot open instance file '" + path + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw InstanceError("parse error in '" + path + "': " + e.what());
  }
  RbInstance inst = instance_from_json(doc);
  const auto rep = validate(inst);
  if (!rep.ok()) throw InstanceError("instance '" + path + "' failed validation: " + rep.summary());
  return inst;
}

void save_instance(const RbInstance& inst, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InstanceError("cannot write instance file '" + path + "'");
  out << instance_to_json(inst).dump(2) << '\n';
}

RbInstance resolve_instance(const std::string& ref) {
  const auto names = builtin_names();
  if (std::find(names.begin(), names.end(), ref) != names.end()) return builtin_instance(ref);
  return load_instance(ref);
}

SingleArmPolicy policy_from_json(const json& doc, int n_states) {
  const json& probs = doc.is_object() ? require(doc, "probs", "") : doc;
  if (!probs.is_array() || static_cast<int>(probs.size()) != n_states)
    throw InstanceError("policy must list " + std::to_string(n_states) + " rows of [p0, p1]");
  SingleArmPolicy pol;
  pol.n_states = n_states;
  for (int s = 0; s < n_states; ++s) {
    if (!probs[s].is_array() || probs[s].size() != 2) throw InstanceError("policy row must be [p0, p1]");
    pol.probs.push_back(as_number(probs[s][0], "probs"));
    pol.probs.push_back(as_number(probs[s][1], "probs"));
  }
  const auto rep = validate(pol);
  if (!rep.ok()) throw InstanceError("policy failed validation: " + rep.summary());
  return pol;
}

SingleArmPolicy load_policy(const std::string& path, int n_states) {
  std::ifstream in(path);
  if (!in) throw InstanceError("cannot open policy file '" + path + "'");
  try {
    return policy_from_json(json::parse(in), n_states);
  } catch (const json::parse_error& e) {
    throw InstanceError("parse error in '" + path + "': " + e.what());
  }
}

}  // namespace ftva
