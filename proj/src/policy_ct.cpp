#include "ftva/policy_ct.hpp"

#include "ftva/hetero.hpp"

#include <omp.h>

#include <cmath>
#include <stdexcept>

namespace ftva {

namespace {

constexpr int kPassive = 0;   // a_hat = 0, a = 0
constexpr int kPromoted = 1;  // a_hat = 0, a = 1
constexpr int kDemoted = 2;   // a_hat = 1, a = 0
constexpr int kActive = 3;    // a_hat = 1, a = 1

int real_action(int combo) { return combo & 1; }
int virtual_action(int combo) { return combo >> 1; }

}  // namespace

FtvaCtEngine::FtvaCtEngine(const CtMdp& model, double alpha, SingleArmPolicy policy,
                           const std::vector<double>& marginal, std::vector<int> initial_real, TieBreak tie_break,
                           Rng& rng)
    : model_(&model),
      n_(model.n_states),
      budget_(exact_count(alpha, static_cast<int>(initial_real.size()), "alpha")),
      policy_(std::move(policy)),
      tie_break_(tie_break),
      epoch_rate_(2.0 * static_cast<double>(initial_real.size()) * g_max(model)),
      real_(std::move(initial_real)) {
  const int n_arms = static_cast<int>(real_.size());
  virt_.resize(n_arms);
  for (int i = 0; i < n_arms; ++i) virt_[i] = sample_state(marginal, rng);
  members_.assign(static_cast<std::size_t>(n_) * n_, {});
  combos_.assign(static_cast<std::size_t>(n_) * n_, {0, 0, 0, 0});
  slot_.resize(n_arms);
  for (int i = 0; i < n_arms; ++i) {
    auto& m = members_[cls(real_[i], virt_[i])];
    slot_[i] = static_cast<int>(m.size());
    m.push_back(i);
  }
  std::vector<double> probs(static_cast<std::size_t>(n_) * 2 * n_, 0.0);
  for (int s = 0; s < n_; ++s)
    for (int a = 0; a < 2; ++a) {
      const double total = model.total_rate(s, a);
      for (int t = 0; t < n_; ++t)
        probs[(static_cast<std::size_t>(s) * 2 + a) * n_ + t] = total > 0.0 ? model.rate(s, a, t) / total : 0.0;
    }
  jump_cdf_ = cumulative_rows(probs, n_);
  weights_.resize(static_cast<std::size_t>(n_) * n_ * 4);
}

void FtvaCtEngine::move_arm(int arm, int s, int sh) {
  auto& from = members_[cls(real_[arm], virt_[arm])];
  const int last = from.back();
  from[slot_[arm]] = last;
  slot_[last] = slot_[arm];
  from.pop_back();
  real_[arm] = s;
  virt_[arm] = sh;
  auto& to = members_[cls(s, sh)];
  slot_[arm] = static_cast<int>(to.size());
  to.push_back(arm);
}

// Moves `count` arms from combo `from` to combo `to`, sampled uniformly without
// replacement. Good-first drains classes with S != S_hat before coupled ones.
void FtvaCtEngine::flip(int from, int to, int count, Rng& rng) {
  for (int pass = 0; pass < 2 && count > 0; ++pass) {
    const bool uncoupled_pass = pass == 0;
    long pool = 0;
    for (int s = 0; s < n_; ++s)
      for (int sh = 0; sh < n_; ++sh) {
        if (tie_break_ == TieBreak::GoodFirst && (s != sh) != uncoupled_pass) continue;
        if (tie_break_ == TieBreak::Uniform && !uncoupled_pass) continue;
        pool += combos_[cls(s, sh)][from];
      }
    if (pool == 0) continue;
    if (pool <= count) {
      for (int s = 0; s < n_; ++s)
        for (int sh = 0; sh < n_; ++sh) {
          if (tie_break_ == TieBreak::GoodFirst && (s != sh) != uncoupled_pass) continue;
          if (tie_break_ == TieBreak::Uniform && !uncoupled_pass) continue;
          auto& c = combos_[cls(s, sh)];
          c[to] += c[from];
          c[from] = 0;
        }
      count -= static_cast<int>(pool);
      continue;
    }
    for (; count > 0; --count, --pool) {
      long pick = static_cast<long>(rng.below(static_cast<std::uint64_t>(pool)));
      for (int c = 0; c < n_ * n_; ++c) {
        const int s = c / n_, sh = c % n_;
        if (tie_break_ == TieBreak::GoodFirst && (s != sh) != uncoupled_pass) continue;
        if (tie_break_ == TieBreak::Uniform && !uncoupled_pass) continue;
        if (pick < combos_[c][from]) {
          --combos_[c][from];
          ++combos_[c][to];
          break;
        }
        pick -= combos_[c][from];
      }
    }
  }
}

void FtvaCtEngine::decide(Rng& rng) {
  int ones = 0;
  for (int s = 0; s < n_; ++s)
    for (int sh = 0; sh < n_; ++sh) {
      const int c = cls(s, sh);
      const int count = static_cast<int>(members_[c].size());
      const int up = rng.binomial(count, policy_.p_active(sh));
      combos_[c] = {count - up, 0, 0, up};
      ones += up;
    }
  mismatches_ = std::abs(ones - budget_);
  if (ones > budget_) flip(kActive, kDemoted, ones - budget_, rng);
  else if (ones < budget_) flip(kPassive, kPromoted, budget_ - ones, rng);
  refresh_rates();
}

void FtvaCtEngine::refresh_rates() {
  g_real_ = g_virtual_ = 0.0;
  for (int s = 0; s < n_; ++s)
    for (int sh = 0; sh < n_; ++sh) {
      const auto& c = combos_[cls(s, sh)];
      for (int combo = 0; combo < 4; ++combo) {
        if (c[combo] == 0) continue;
        g_real_ += c[combo] * model_->total_rate(s, real_action(combo));
        const bool coupled = s == sh && real_action(combo) == virtual_action(combo);
        if (!coupled) g_virtual_ += c[combo] * model_->total_rate(sh, virtual_action(combo));
      }
    }
}

int FtvaCtEngine::apply_event(Rng& rng) {
  const double u = rng.uniform() * epoch_rate_;
  const bool real_event = u < g_real_;
  if (!real_event && u >= g_real_ + g_virtual_) return 0;
  // pick (class, combo) proportional to its total rate
  double total = 0.0;
  for (int s = 0; s < n_; ++s)
    for (int sh = 0; sh < n_; ++sh) {
      const auto& c = combos_[cls(s, sh)];
      for (int combo = 0; combo < 4; ++combo) {
        double w = 0.0;
        if (c[combo] > 0) {
          if (real_event) {
            w = c[combo] * model_->total_rate(s, real_action(combo));
          } else if (!(s == sh && real_action(combo) == virtual_action(combo))) {
            w = c[combo] * model_->total_rate(sh, virtual_action(combo));
          }
        }
        weights_[static_cast<std::size_t>(cls(s, sh)) * 4 + combo] = w;
        total += w;
      }
    }
  if (total <= 0.0) return 0;
  const int pick = rng.from_weights(weights_, total);
  const int c = pick / 4, combo = pick % 4;
  const int s = c / n_, sh = c % n_;
  const auto& members = members_[c];
  const int arm = members[rng.below(members.size())];
  auto jump = [&](int from, int a) {
    const double* row = jump_cdf_.data() + (static_cast<std::size_t>(from) * 2 + a) * n_;
    return rng.from_cdf({row, static_cast<std::size_t>(n_)});
  };
  auto& counts = combos_[c];
  --counts[combo];
  int ns = s, nsh = sh;
  if (real_event) {
    ns = jump(s, real_action(combo));
    if (s == sh && real_action(combo) == virtual_action(combo)) nsh = ns;
  } else {
    nsh = jump(sh, virtual_action(combo));
  }
  move_arm(arm, ns, nsh);
  ++combos_[cls(ns, nsh)][combo];
  refresh_rates();
  return real_event ? 1 : 2;
}

double FtvaCtEngine::reward_rate() const {
  double total = 0.0;
  for (int s = 0; s < n_; ++s)
    for (int sh = 0; sh < n_; ++sh) {
      const auto& c = combos_[cls(s, sh)];
      for (int combo = 0; combo < 4; ++combo)
        if (c[combo]) total += c[combo] * model_->r(s, real_action(combo));
    }
  return total / static_cast<double>(real_.size());
}

int FtvaCtEngine::active_count() const {
  int k = 0;
  for (const auto& c : combos_) k += c[kPromoted] + c[kActive];
  return k;
}

int FtvaCtEngine::bad_arms() const {
  int k = 0;
  for (int s = 0; s < n_; ++s)
    for (int sh = 0; sh < n_; ++sh) {
      const auto& c = combos_[cls(s, sh)];
      k += s != sh ? c[0] + c[1] + c[2] + c[3] : c[kPromoted] + c[kDemoted];
    }
  return k;
}

double ct_bound(double r_max, double g_max, double tau, int n_arms) {
  return r_max * (1.0 + 2.0 * g_max * tau) / std::sqrt(static_cast<double>(n_arms));
}

namespace {

struct CtContext {
  const RbInstance* inst;
  RunConfig cfg;
  PolicySelector sel;
  HetSolution sol;
  std::vector<int> initial;
};

CtContext make_ct_context(const RbInstance& inst, const RunConfig& cfg) {
  if (inst.kind != TimeKind::Continuous) throw std::invalid_argument("run_ct() needs a continuous-time instance");
  if (inst.heterogeneous()) throw std::invalid_argument("heterogeneous continuous-time instances are not supported");
  if (cfg.trajectories < 1) throw std::invalid_argument("trajectories must be at least 1");
  if (cfg.n_arms < 1) throw std::invalid_argument("N must be positive");
  if (!(cfg.horizon > 0.0) || cfg.window_start() >= cfg.horizon) throw std::invalid_argument("need 0 <= burn_in < horizon");
  CtContext ctx{&inst, cfg, parse_policy_selector(cfg.policy, inst), {}, {}};
  if (!ctx.sel.is_ftva()) throw SelectorError("continuous-time runs support ftva selectors only");
  exact_count(inst.alpha, cfg.n_arms, "alpha");
  ctx.sol = solve_het(inst);
  ctx.initial = expand_counts(initial_counts(cfg.initial, inst.n_states(), cfg.n_arms));
  return ctx;
}

TrajectoryStats simulate_ct(const CtContext& ctx, int traj) {
  const CtMdp& model = ctx.inst->ct_types.front();
  const int n = model.n_states;
  const double horizon = ctx.cfg.horizon;
  const double start = ctx.cfg.window_start();
  Rng rng(stream_seed(ctx.cfg.seed, static_cast<std::uint64_t>(traj)));
  FtvaCtEngine engine(model, ctx.inst->alpha, ctx.sol.policies.front(), ctx.sol.marginals.front(), ctx.initial,
                      ctx.sel.tie_break, rng);
  TrajectoryStats st;
  st.window = horizon - start;
  st.occupancy.assign(n, 0.0);
  st.virtual_law.assign(1, std::vector<double>(static_cast<std::size_t>(n) * 2, 0.0));
  KahanSum reward, bad, mism;
  std::vector<KahanSum> occ(n), law(static_cast<std::size_t>(n) * 2);
  const double inv_n = 1.0 / engine.n_arms();
  const bool frozen = engine.epoch_rate() <= 0.0;
  double t = 0.0;
  while (t < horizon) {
    engine.decide(rng);
    if (engine.active_count() != engine.budget()) throw std::logic_error("budget violated in continuous-time run");
    const double next = frozen ? horizon : t + rng.exponential(engine.epoch_rate());
    const double lo = std::max(t, start), hi = std::min(next, horizon);
    if (hi > lo) {
      const double dt = hi - lo;
      reward.add(dt * engine.reward_rate());
      bad.add(dt * engine.bad_arms());
      mism.add(dt * engine.mismatches());
      for (int s = 0; s < n; ++s)
        for (int sh = 0; sh < n; ++sh)
          for (int combo = 0; combo < 4; ++combo) {
            const int k = engine.combo_count(s, sh, combo);
            if (k == 0) continue;
            occ[s].add(dt * k * inv_n);
            law[sh * 2 + (combo >> 1)].add(dt * k * inv_n);
          }
    }
    if (next >= horizon) break;
    if (next >= start) ++st.epochs;
    engine.apply_event(rng);
    t = next;
  }
  st.mean_reward = reward.value() / st.window;
  st.mean_bad_arms = bad.value() / st.window;
  st.mean_mismatches = mism.value() / st.window;
  for (int s = 0; s < n; ++s) st.occupancy[s] = occ[s].value() / st.window;
  for (int i = 0; i < n * 2; ++i) st.virtual_law[0][i] = law[i].value() / st.window;
  return st;
}

RunReport run_ct_impl(const RbInstance& inst, const RunConfig& cfg, bool parallel) {
  const CtContext ctx = make_ct_context(inst, cfg);
  RunReport rep;
  rep.policy = cfg.policy;
  rep.n_arms = cfg.n_arms;
  rep.has_virtual = true;
  rep.trajectories.resize(cfg.trajectories);
  if (parallel) {
    const int threads = cfg.workers <= 0 ? omp_get_max_threads() : cfg.workers;
    std::string failure;
#pragma omp parallel for schedule(dynamic, 1) num_threads(threads)
    for (int r = 0; r < cfg.trajectories; ++r) {
      try {
        rep.trajectories[r] = simulate_ct(ctx, r);
      } catch (const std::exception& e) {
#pragma omp critical
        if (failure.empty()) failure = e.what();
      }
    }
    if (!failure.empty()) throw std::runtime_error(failure);
  } else {
    for (int r = 0; r < cfg.trajectories; ++r) rep.trajectories[r] = simulate_ct(ctx, r);
  }
  aggregate(rep);
  return rep;
}

}  // namespace

RunReport run_ct(const RbInstance& instance, const RunConfig& config) { return run_ct_impl(instance, config, true); }

RunReport run_ct_serial(const RbInstance& instance, const RunConfig& config) {
  return run_ct_impl(instance, config, false);
}

}  // namespace ftva
