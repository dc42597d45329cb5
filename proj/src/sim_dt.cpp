#include "ftva/sim_dt.hpp"

#include "ftva/hetero.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace ftva {

InitialProtocol InitialProtocol::all_in(int s) {
  InitialProtocol p;
  p.kind = Kind::AllIn;
  p.state = s;
  return p;
}

InitialProtocol InitialProtocol::from_fractions(std::vector<std::pair<int, double>> f) {
  InitialProtocol p;
  p.kind = Kind::Fractions;
  p.fractions = std::move(f);
  return p;
}

InitialProtocol InitialProtocol::random_simplex(std::uint64_t seed) {
  InitialProtocol p;
  p.kind = Kind::RandomSimplex;
  p.seed = seed;
  return p;
}

std::string InitialProtocol::describe(int base) const {
  std::ostringstream os;
  switch (kind) {
    case Kind::AllIn: os << "all-in:" << state + base; break;
    case Kind::Fractions:
      os << "fractions:";
      for (std::size_t i = 0; i < fractions.size(); ++i)
        os << (i ? "," : "") << fractions[i].first + base << "=" << fractions[i].second;
      break;
    case Kind::RandomSimplex: os << "random-simplex:" << seed; break;
  }
  return os.str();
}

std::vector<int> largest_remainder(const std::vector<double>& w, int n) {
  std::vector<int> counts(w.size());
  std::vector<double> rem(w.size());
  int assigned = 0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double x = w[i] * n;
    counts[i] = static_cast<int>(std::floor(x + 1e-9));
    rem[i] = x - counts[i];
    assigned += counts[i];
  }
  std::vector<int> order(w.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return rem[a] > rem[b]; });
  for (int j = 0; assigned < n; ++j, ++assigned) ++counts[order[j % order.size()]];
  for (int j = static_cast<int>(order.size()) - 1; assigned > n; --j)
    if (counts[order[j]] > 0) --counts[order[j]], --assigned;
  return counts;
}

std::vector<int> initial_counts(const InitialProtocol& p, int n_states, int n_arms) {
  std::vector<double> w(n_states, 0.0);
  switch (p.kind) {
    case InitialProtocol::Kind::AllIn:
      if (p.state < 0 || p.state >= n_states) throw std::invalid_argument("initial state out of range");
      w[p.state] = 1.0;
      break;
    case InitialProtocol::Kind::Fractions: {
      double total = 0.0;
      for (const auto& [s, f] : p.fractions) {
        if (s < 0 || s >= n_states) throw std::invalid_argument("initial state out of range");
        if (f < 0.0) throw std::invalid_argument("negative initial fraction");
        w[s] += f;
        total += f;
      }
      if (std::abs(total - 1.0) > 1e-6) throw std::invalid_argument("initial fractions must sum to 1");
      for (auto& x : w) x /= total;
      break;
    }
    case InitialProtocol::Kind::RandomSimplex: {
      Rng rng(stream_seed(p.seed, 0x5eed));
      w = rng.dirichlet_flat(n_states);
      break;
    }
  }
  return largest_remainder(w, n_arms);
}

std::vector<int> expand_counts(const std::vector<int>& counts) {
  std::vector<int> out;
  for (std::size_t s = 0; s < counts.size(); ++s) out.insert(out.end(), counts[s], static_cast<int>(s));
  return out;
}

LittlesLedger littles_law_ledger(const TrajectoryStats& st) {
  LittlesLedger led;
  led.lhs = st.mean_bad_arms;
  if (st.window > 0 && st.periods > 0)
    led.rhs = (static_cast<double>(st.events) / st.window) * (st.period_length_sum / static_cast<double>(st.periods));
  const double scale = std::max(std::abs(led.lhs), std::abs(led.rhs));
  led.relative_gap = scale > 0.0 ? std::abs(led.lhs - led.rhs) / scale : 0.0;
  return led;
}

std::vector<double> window_occupancy(const OccupancySeries& series, int from) {
  std::vector<double> out(series.n_states, 0.0);
  const int steps = series.steps();
  if (from >= steps) return out;
  for (int t = from; t < steps; ++t)
    for (int s = 0; s < series.n_states; ++s) out[s] += series.at(t, s);
  for (auto& x : out) x /= (steps - from);
  return out;
}

namespace {

struct Context {
  const RbInstance* inst;
  RunConfig cfg;
  PolicySelector sel;
  HetSolution sol;
  PriorityScores scores;
  std::vector<int> types;
  std::vector<int> initial;
};

Context make_context(const RbInstance& inst, const RunConfig& cfg) {
  if (inst.kind != TimeKind::Discrete) throw std::invalid_argument("run() needs a discrete-time instance");
  if (cfg.trajectories < 1) throw std::invalid_argument("trajectories must be at least 1");
  if (cfg.n_arms < 1) throw std::invalid_argument("N must be positive");
  if (cfg.horizon < 1 || cfg.window_start() >= cfg.horizon) throw std::invalid_argument("need 0 <= burn_in < horizon");
  Context ctx{&inst, cfg, parse_policy_selector(cfg.policy, inst), {}, {}, {}, {}};
  exact_count(inst.alpha, cfg.n_arms, "alpha");
  ctx.types = assign_types(inst, cfg.n_arms);
  ctx.sol = solve_het(inst);
  if (!ctx.sel.is_ftva()) ctx.scores = resolve_priority(ctx.sel, inst, ctx.sol.occ);
  ctx.initial = expand_counts(initial_counts(cfg.initial, inst.n_states(), cfg.n_arms));
  return ctx;
}

TrajectoryStats simulate(const Context& ctx, int traj, OccupancySeries* series) {
  const RbInstance& inst = *ctx.inst;
  const int n = inst.n_states();
  const int n_arms = ctx.cfg.n_arms;
  const long horizon = static_cast<long>(ctx.cfg.horizon);
  const long start = static_cast<long>(ctx.cfg.window_start());
  Rng rng(stream_seed(ctx.cfg.seed, static_cast<std::uint64_t>(traj)));

  std::unique_ptr<DtEngine> engine;
  FtvaEngine* ftva = nullptr;
  if (ctx.sel.is_ftva()) {
    auto e = std::make_unique<FtvaEngine>(inst, ctx.sol.policies, ctx.sol.marginals, ctx.types, ctx.initial,
                                          ctx.sel.tie_break, rng);
    ftva = e.get();
    engine = std::move(e);
  } else {
    engine = std::make_unique<PriorityEngine>(inst, ctx.scores, ctx.types, ctx.initial);
  }

  TrajectoryStats st;
  st.window = static_cast<double>(horizon - start);
  st.occupancy.assign(n, 0.0);
  if (ftva) st.virtual_law.assign(inst.n_types(), std::vector<double>(static_cast<std::size_t>(n) * 2, 0.0));
  std::vector<long> open(n_arms, -1);
  std::vector<int> before;
  if (series) {
    series->n_states = n;
    series->fractions.assign(static_cast<std::size_t>(horizon) * n, 0.0);
    series->flow_active.assign(n, 0.0);
    series->flow_passive.assign(n, 0.0);
  }
  KahanSum reward, bad_sum, mismatch_sum;
  const double inv_n = 1.0 / n_arms;

  for (long t = 0; t < horizon; ++t) {
    const double r = engine->decide(rng);
    const auto& real = engine->real();
    const auto& act = engine->actions();
    const bool in_window = t >= start;
    int active = 0;
    for (int a : act) active += a;
    if (active != engine->budget())
      throw std::logic_error("budget violated: " + std::to_string(active) + " active arms");

    if (ftva) {
      const auto& virt = ftva->virtual_states();
      const auto& vact = ftva->virtual_actions();
      int bad = 0, mism = 0;
      for (int i = 0; i < n_arms; ++i) {
        const bool disagree = act[i] != vact[i];
        const bool same = real[i] == virt[i];
        if (open[i] >= 0 && (disagree || same)) {
          if (open[i] >= start) {
            const double len = static_cast<double>(t - open[i]);
            ++st.periods;
            st.period_length_sum += len;
            st.period_length_sq_sum += len * len;
          }
          open[i] = -1;
        }
        if (disagree) {
          open[i] = t;
          ++mism;
          if (in_window) ++st.events;
        }
        if (disagree || !same) ++bad;
        if (in_window) st.virtual_law[ctx.types[i]][virt[i] * 2 + vact[i]] += 1.0;
      }
      if (in_window) {
        bad_sum.add(bad);
        mismatch_sum.add(mism);
      }
      if (series) {
        series->bad_arms.push_back(bad);
        series->mismatches.push_back(mism);
      }
    }
    if (in_window) {
      reward.add(r);
      for (int s : real) st.occupancy[s] += 1.0;
    }
    if (series) {
      double* row = series->fractions.data() + static_cast<std::size_t>(t) * n;
      for (int s : real) row[s] += inv_n;
      before = real;
    }
    engine->transition(rng);
    if (series) {
      const auto& after = engine->real();
      for (int i = 0; i < n_arms; ++i) {
        if (before[i] == after[i]) continue;
        auto& flow = act[i] ? series->flow_active : series->flow_passive;
        flow[after[i]] += inv_n;
        flow[before[i]] -= inv_n;
      }
    }
  }

  const double w = st.window;
  st.mean_reward = reward.value() / w;
  st.mean_bad_arms = bad_sum.value() / w;
  st.mean_mismatches = mismatch_sum.value() / w;
  for (auto& x : st.occupancy) x /= w * n_arms;
  if (ftva) {
    std::vector<int> per_type(inst.n_types(), 0);
    for (int k : ctx.types) ++per_type[k];
    for (int k = 0; k < inst.n_types(); ++k)
      for (auto& x : st.virtual_law[k]) x /= w * per_type[k];
  }
  if (series) {
    for (auto& x : series->flow_active) x /= static_cast<double>(horizon);
    for (auto& x : series->flow_passive) x /= static_cast<double>(horizon);
  }
  return st;
}

RunReport run_impl(const RbInstance& inst, const RunConfig& cfg, bool parallel) {
  const Context ctx = make_context(inst, cfg);
  RunReport rep;
  rep.policy = cfg.policy;
  rep.n_arms = cfg.n_arms;
  rep.has_virtual = ctx.sel.is_ftva();
  rep.trajectories.resize(cfg.trajectories);
  OccupancySeries* series = cfg.record_occupancy ? &rep.occupancy : nullptr;
  if (parallel) {
    const int threads = cfg.workers <= 0 ? omp_get_max_threads() : cfg.workers;
    // exceptions may not cross the parallel region; keep the first message
    std::string failure;
#pragma omp parallel for schedule(dynamic, 1) num_threads(threads)
    for (int r = 0; r < cfg.trajectories; ++r) {
      try {
        rep.trajectories[r] = simulate(ctx, r, r == 0 ? series : nullptr);
      } catch (const std::exception& e) {
#pragma omp critical
        if (failure.empty()) failure = e.what();
      }
    }
    if (!failure.empty()) throw std::runtime_error(failure);
  } else {
    for (int r = 0; r < cfg.trajectories; ++r) rep.trajectories[r] = simulate(ctx, r, r == 0 ? series : nullptr);
  }
  aggregate(rep);
  return rep;
}

double sample_sd(const std::vector<double>& v, double mean) {
  if (v.size() < 2) return 0.0;
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

}  // namespace

void aggregate(RunReport& rep) {
  const auto& tr = rep.trajectories;
  const double r = static_cast<double>(tr.size());
  if (tr.empty()) return;
  std::vector<double> means, mism, epochs;
  for (const auto& t : tr) {
    means.push_back(t.mean_reward);
    mism.push_back(t.mean_mismatches);
    epochs.push_back(static_cast<double>(t.epochs));
  }
  auto avg = [](const std::vector<double>& v) {
    KahanSum s;
    for (double x : v) s.add(x);
    return s.value() / static_cast<double>(v.size());
  };
  rep.mean = avg(means);
  rep.std_dev = sample_sd(means, rep.mean);
  rep.ci_half = 1.96 * rep.std_dev / std::sqrt(r);
  rep.mean_mismatches = avg(mism);
  rep.mismatch_se = sample_sd(mism, rep.mean_mismatches) / std::sqrt(r);
  rep.mean_epochs = avg(epochs);
  rep.epochs_se = sample_sd(epochs, rep.mean_epochs) / std::sqrt(r);

  double bad = 0.0, window = 0.0, sum = 0.0, sq = 0.0;
  long events = 0, periods = 0;
  for (const auto& t : tr) {
    bad += t.mean_bad_arms;
    window += t.window;
    events += t.events;
    periods += t.periods;
    sum += t.period_length_sum;
    sq += t.period_length_sq_sum;
  }
  rep.mean_bad_arms = bad / r;
  rep.event_rate = window > 0 ? static_cast<double>(events) / window : 0.0;
  if (periods > 0) {
    rep.mean_period_length = sum / static_cast<double>(periods);
    const double var = periods > 1 ? std::max(0.0, (sq - periods * rep.mean_period_length * rep.mean_period_length) /
                                                       static_cast<double>(periods - 1))
                                    : 0.0;
    rep.period_length_se = std::sqrt(var / static_cast<double>(periods));
  }
  rep.ledger.lhs = rep.mean_bad_arms;
  rep.ledger.rhs = rep.event_rate * rep.mean_period_length;
  const double scale = std::max(std::abs(rep.ledger.lhs), std::abs(rep.ledger.rhs));
  rep.ledger.relative_gap = scale > 0.0 ? std::abs(rep.ledger.lhs - rep.ledger.rhs) / scale : 0.0;
}

RunReport run(const RbInstance& instance, const RunConfig& config) { return run_impl(instance, config, true); }

RunReport run_serial(const RbInstance& instance, const RunConfig& config) {
  return run_impl(instance, config, false);
}

}  // namespace ftva
