#pragma once

#include "ftva/core_model.hpp"
#include "ftva/lp_relax.hpp"
#include "ftva/rng.hpp"

#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace ftva {

enum class TieBreak { GoodFirst, Uniform };

std::string to_string(TieBreak tb);

/// Parsed policy selector:
///   ftva[:good-first|uniform]
///   priority:lagrangian[:lambda]
///   priority:list:s1>s2>...          (states in the instance's label base)
///   twoclass:{a,b,...}|{c,d,...}
struct PolicySelector {
  enum class Kind { Ftva, PriorityLagrangian, PriorityList, TwoClass };
  Kind kind = Kind::Ftva;
  TieBreak tie_break = TieBreak::GoodFirst;
  std::optional<double> lambda;
  std::vector<int> order;
  std::vector<int> high_class;
  std::vector<int> low_class;
  std::string text;

  bool is_ftva() const { return kind == Kind::Ftva; }
};

class SelectorError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Throws SelectorError on malformed text or states out of range.
PolicySelector parse_policy_selector(const std::string& text, const RbInstance& instance);

/// Per-(type, state) priority scores; higher goes first and equal scores form
/// one class filled uniformly at random.
struct PriorityScores {
  int n_states = 0;
  std::vector<std::vector<double>> score;
};

/// Resolves a priority or twoclass selector. Lagrangian scores use the
/// selector's lambda if given, else the relaxation's budget dual.
PriorityScores resolve_priority(const PolicySelector& sel, const RbInstance& instance, const OccupationMeasure& occ);

/// Contiguous blocks: the first beta_0*N arms are type 0 and so on.
std::vector<int> assign_types(const RbInstance& instance, int n_arms);

/// N-armed discrete-time engine. `decide` fixes this step's actions and
/// returns the reward per arm; `transition` moves the states.
class DtEngine {
 public:
  virtual ~DtEngine() = default;
  virtual double decide(Rng& rng) = 0;
  virtual void transition(Rng& rng) = 0;

  double step(Rng& rng) {
    const double r = decide(rng);
    transition(rng);
    return r;
  }

  int n_arms() const { return static_cast<int>(real_.size()); }
  int budget() const { return budget_; }
  const std::vector<int>& real() const { return real_; }
  const std::vector<int>& actions() const { return actions_; }
  const std::vector<int>& types() const { return types_; }

 protected:
  DtEngine(const RbInstance& instance, std::vector<int> types, std::vector<int> initial_real);
  double reward_now() const;
  void move_real(Rng& rng);

  const RbInstance* inst_;
  std::vector<int> types_;
  std::vector<int> real_;
  std::vector<int> actions_;
  int budget_ = 0;
  /// Cumulative transition tables per type.
  std::vector<std::vector<double>> cdf_;
};

class FtvaEngine final : public DtEngine {
 public:
  /// Virtual states are drawn i.i.d. from marginals[type of arm].
  FtvaEngine(const RbInstance& instance, std::vector<SingleArmPolicy> policies,
             const std::vector<std::vector<double>>& marginals, std::vector<int> types, std::vector<int> initial_real,
             TieBreak tie_break, Rng& rng);

  double decide(Rng& rng) override;
  void transition(Rng& rng) override;

  const std::vector<int>& virtual_states() const { return virt_; }
  const std::vector<int>& virtual_actions() const { return vact_; }
  /// Arms with A != A_hat at the last decision.
  int mismatches() const { return mismatches_; }

 private:
  void flip(std::vector<int>& pool, int count, int value, Rng& rng);

  std::vector<SingleArmPolicy> policies_;
  TieBreak tie_break_;
  std::vector<int> virt_;
  std::vector<int> vact_;
  std::vector<int> pool_, scratch_a_, scratch_b_;
  int mismatches_ = 0;
};

class PriorityEngine final : public DtEngine {
 public:
  PriorityEngine(const RbInstance& instance, PriorityScores scores, std::vector<int> types,
                 std::vector<int> initial_real);

  double decide(Rng& rng) override;
  void transition(Rng& rng) override;

 private:
  PriorityScores scores_;
  /// Distinct score levels in decreasing order, per (type, state) the level index.
  std::vector<std::vector<int>> level_of_;
  int n_levels_ = 0;
  std::vector<std::vector<int>> buckets_;
};

/// Samples from a distribution over states given as probabilities.
int sample_state(const std::vector<double>& probs, Rng& rng);

}  // namespace ftva
