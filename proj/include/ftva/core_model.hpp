#pragma once

#include <json.hpp>

#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace ftva {

/// Absolute tolerance used by every stochasticity / sum check in validation.
inline constexpr double kValidationTol = 1e-9;

enum class TimeKind { Discrete, Continuous };

std::string to_string(TimeKind kind);

/// Discrete-time single-armed MDP with actions {0, 1}.
/// transition is stored row-major as [s][a][s'], reward as [s][a].
struct DtMdp {
  int n_states = 0;
  std::vector<double> transition;
  std::vector<double> reward;

  DtMdp() = default;
  explicit DtMdp(int n);

  double p(int s, int a, int next) const { return transition[(static_cast<std::size_t>(s) * 2 + a) * n_states + next]; }
  double& p(int s, int a, int next) { return transition[(static_cast<std::size_t>(s) * 2 + a) * n_states + next]; }
  std::span<const double> row(int s, int a) const {
    return {transition.data() + (static_cast<std::size_t>(s) * 2 + a) * n_states, static_cast<std::size_t>(n_states)};
  }
  double r(int s, int a) const { return reward[static_cast<std::size_t>(s) * 2 + a]; }
  double& r(int s, int a) { return reward[static_cast<std::size_t>(s) * 2 + a]; }
  double r_max() const;

  bool operator==(const DtMdp&) const = default;
};

/// Continuous-time single-armed MDP. rates[s][a][s'] is the rate of jumping
/// s -> s' under action a. The diagonal entry is never read; the outflow
/// G(s,a) = sum_{s' != s} rate is derived on demand.
struct CtMdp {
  int n_states = 0;
  std::vector<double> rates;
  std::vector<double> reward_rate;

  CtMdp() = default;
  explicit CtMdp(int n);

  double rate(int s, int a, int next) const {
    return next == s ? 0.0 : rates[(static_cast<std::size_t>(s) * 2 + a) * n_states + next];
  }
  double& rate_ref(int s, int a, int next) { return rates[(static_cast<std::size_t>(s) * 2 + a) * n_states + next]; }
  double total_rate(int s, int a) const;
  double r(int s, int a) const { return reward_rate[static_cast<std::size_t>(s) * 2 + a]; }
  double& r(int s, int a) { return reward_rate[static_cast<std::size_t>(s) * 2 + a]; }
  double r_max() const;

  bool operator==(const CtMdp&) const = default;
};

/// Largest total outflow rate over all (s, a).
double g_max(const CtMdp& model);

/// An N-armed restless bandit template: one or more arm types sharing a
/// state space, a budget fraction alpha and the mixing fractions beta_k.
/// Exactly one of dt_types / ct_types is populated, matching `kind`.
struct RbInstance {
  std::string name;
  TimeKind kind = TimeKind::Discrete;
  double alpha = 0.0;
  std::vector<double> betas;
  std::vector<DtMdp> dt_types;
  std::vector<CtMdp> ct_types;
  /// Offset added when states are printed or parsed from user input.
  int state_label_base = 0;

  int n_types() const { return static_cast<int>(betas.size()); }
  int n_states() const;
  bool heterogeneous() const { return betas.size() > 1; }
  double r_max() const;

  static RbInstance homogeneous(std::string name, DtMdp model, double alpha);
  static RbInstance homogeneous(std::string name, CtMdp model, double alpha);

  bool operator==(const RbInstance&) const = default;
};

/// Row-stochastic |S| x 2 matrix of pi(a | s).
struct SingleArmPolicy {
  int n_states = 0;
  std::vector<double> probs;

  double prob(int s, int a) const { return probs[static_cast<std::size_t>(s) * 2 + a]; }
  double p_active(int s) const { return probs[static_cast<std::size_t>(s) * 2 + 1]; }

  static SingleArmPolicy deterministic(const std::vector<int>& actions);
  bool operator==(const SingleArmPolicy&) const = default;
};

struct ValidationReport {
  std::vector<std::string> problems;
  bool ok() const { return problems.empty(); }
  std::string summary() const;
};

ValidationReport validate(const RbInstance& instance);
ValidationReport validate(const DtMdp& model, const std::string& where = "");
ValidationReport validate(const CtMdp& model, const std::string& where = "");
ValidationReport validate(const SingleArmPolicy& policy);

/// Raised for malformed instance files and for instances that fail validation.
class InstanceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when alpha*N or beta_k*N is not an integer.
class DivisibilityError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Returns round(x * n) if x * n is integral within kValidationTol, else throws.
int exact_count(double fraction, int n, const std::string& what);

std::vector<std::string> builtin_names();
RbInstance builtin_instance(const std::string& name);

RbInstance instance_from_json(const nlohmann::json& doc);
nlohmann::json instance_to_json(const RbInstance& instance);
RbInstance load_instance(const std::string& path);
void save_instance(const RbInstance& instance, const std::string& path);

/// Accepts a built-in name or a path to an instance file.
RbInstance resolve_instance(const std::string& ref);

SingleArmPolicy policy_from_json(const nlohmann::json& doc, int n_states);
SingleArmPolicy load_policy(const std::string& path, int n_states);

}  // namespace ftva
