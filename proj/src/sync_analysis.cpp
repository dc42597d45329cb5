#include "ftva/sync_analysis.hpp"

#include "ftva/rng.hpp"

#include <Eigen/Dense>
#include <omp.h>

#include <algorithm>
#include <cmath>
#include <deque>
#include <functional>
#include <numeric>
#include <stdexcept>

namespace ftva {

namespace {

using Graph = std::vector<std::vector<int>>;

// Tarjan's SCC, iterative to stay safe on long chains.
std::vector<int> scc_ids(const Graph& g, int& count) {
  const int n = static_cast<int>(g.size());
  std::vector<int> index(n, -1), low(n, 0), comp(n, -1), stack;
  std::vector<char> on_stack(n, 0);
  int next_index = 0;
  count = 0;
  for (int root = 0; root < n; ++root) {
    if (index[root] >= 0) continue;
    std::vector<std::pair<int, std::size_t>> frames{{root, 0}};
    index[root] = low[root] = next_index++;
    stack.push_back(root);
    on_stack[root] = 1;
    while (!frames.empty()) {
      auto& [v, edge] = frames.back();
      if (edge < g[v].size()) {
        const int w = g[v][edge++];
        if (index[w] < 0) {
          index[w] = low[w] = next_index++;
          stack.push_back(w);
          on_stack[w] = 1;
          frames.push_back({w, 0});
        } else if (on_stack[w]) {
          low[v] = std::min(low[v], index[w]);
        }
        continue;
      }
      if (low[v] == index[v]) {
        for (;;) {
          const int w = stack.back();
          stack.pop_back();
          on_stack[w] = 0;
          comp[w] = count;
          if (w == v) break;
        }
        ++count;
      }
      const int done = v;
      frames.pop_back();
      if (!frames.empty()) low[frames.back().first] = std::min(low[frames.back().first], low[done]);
    }
  }
  return comp;
}

std::vector<std::vector<int>> closed_classes(const Graph& g) {
  int count = 0;
  const auto comp = scc_ids(g, count);
  std::vector<char> closed(count, 1);
  for (int v = 0; v < static_cast<int>(g.size()); ++v)
    for (int w : g[v])
      if (comp[w] != comp[v]) closed[comp[v]] = 0;
  std::vector<std::vector<int>> classes(count);
  for (int v = 0; v < static_cast<int>(g.size()); ++v)
    if (closed[comp[v]]) classes[comp[v]].push_back(v);
  std::vector<std::vector<int>> out;
  for (auto& c : classes)
    if (!c.empty()) out.push_back(std::move(c));
  std::sort(out.begin(), out.end());
  return out;
}

Graph policy_graph(const DtMdp& m, const std::function<double(int, int)>& action_prob) {
  Graph g(m.n_states);
  for (int s = 0; s < m.n_states; ++s)
    for (int t = 0; t < m.n_states; ++t) {
      double w = 0.0;
      for (int a = 0; a < 2; ++a) w += action_prob(s, a) * m.p(s, a, t);
      if (w > kEdgeTol) g[s].push_back(t);
    }
  return g;
}

// Lengths (edge counts) of simple cycles inside `allowed`, capped at `cap`
// cycles. Returns false if the cap was hit.
bool cycle_lengths(const Graph& g, const std::vector<char>& allowed, long cap, std::vector<char>& lengths) {
  const int n = static_cast<int>(g.size());
  lengths.assign(n + 1, 0);
  long found = 0;
  std::vector<char> on_path(n, 0);
  // Each simple cycle is enumerated once from its smallest vertex.
  std::function<bool(int, int, int)> dfs = [&](int root, int v, int depth) -> bool {
    for (int w : g[v]) {
      if (!allowed[w] || w < root) continue;
      if (w == root) {
        lengths[depth] = 1;
        if (++found >= cap) return false;
      } else if (!on_path[w]) {
        on_path[w] = 1;
        const bool ok = dfs(root, w, depth + 1);
        on_path[w] = 0;
        if (!ok) return false;
      }
    }
    return true;
  };
  for (int root = 0; root < n; ++root) {
    if (!allowed[root]) continue;
    on_path[root] = 1;
    const bool ok = dfs(root, root, 1);
    on_path[root] = 0;
    if (!ok) return false;
  }
  return true;
}

// Period of the irreducible class `cls` in g.
int class_period(const Graph& g, const std::vector<int>& cls) {
  const int n = static_cast<int>(g.size());
  std::vector<char> in(n, 0);
  for (int v : cls) in[v] = 1;
  std::vector<int> level(n, -1);
  std::deque<int> queue{cls.front()};
  level[cls.front()] = 0;
  int period = 0;
  while (!queue.empty()) {
    const int v = queue.front();
    queue.pop_front();
    for (int w : g[v]) {
      if (!in[w]) continue;
      if (level[w] < 0) {
        level[w] = level[v] + 1;
        queue.push_back(w);
      } else {
        period = std::gcd(period, std::abs(level[v] + 1 - level[w]));
      }
    }
  }
  return period;
}

// Node id of post-step state (s, s_hat, a_hat).
int node(int n, int s, int s_hat, int a_hat) { return (s * n + s_hat) * 2 + a_hat; }

}  // namespace

bool SufficientConditions::has(const std::string& id) const {
  return std::find(satisfied.begin(), satisfied.end(), id) != satisfied.end();
}

std::vector<std::vector<int>> recurrent_classes(const DtMdp& model, const SingleArmPolicy& policy) {
  return closed_classes(policy_graph(model, [&](int s, int a) { return policy.prob(s, a); }));
}

ReachabilityResult check_sa_reachability(const DtMdp& m, const SingleArmPolicy& pol) {
  const int n = m.n_states;
  // good[x]: post-step state x reaches the diagonal. Grown to a fixed point;
  // the graph has 2n^2 nodes so the quadratic sweep is cheap.
  std::vector<char> good(static_cast<std::size_t>(n) * n * 2, 0);
  auto successor_good = [&](int s, int a, int sh, int ah) {
    for (int s2 = 0; s2 < n; ++s2) {
      if (m.p(s, a, s2) <= kEdgeTol) continue;
      for (int sh2 = 0; sh2 < n; ++sh2) {
        if (m.p(sh, ah, sh2) <= kEdgeTol) continue;
        if (s2 == sh2) return true;
        for (int ah2 = 0; ah2 < 2; ++ah2)
          if (pol.prob(sh2, ah2) > kEdgeTol && good[node(n, s2, sh2, ah2)]) return true;
      }
    }
    return false;
  };
  for (bool changed = true; changed;) {
    changed = false;
    for (int s = 0; s < n; ++s)
      for (int sh = 0; sh < n; ++sh)
        for (int ah = 0; ah < 2; ++ah) {
          const int x = node(n, s, sh, ah);
          if (s == sh || good[x]) continue;
          if (successor_good(s, ah, sh, ah)) good[x] = changed = 1;
        }
  }
  ReachabilityResult res;
  res.holds = true;
  for (int s = 0; s < n && res.holds; ++s)
    for (int a = 0; a < 2 && res.holds; ++a)
      for (int sh = 0; sh < n && res.holds; ++sh)
        for (int ah = 0; ah < 2 && res.holds; ++ah) {
          if (s == sh) continue;
          if (!successor_good(s, a, sh, ah)) {
            res.holds = false;
            res.witness = SyncStart{s, a, sh, ah};
          }
        }
  return res;
}

SufficientConditions check_sufficient_conditions(const DtMdp& m, const SingleArmPolicy& pol, long cycle_cap) {
  SufficientConditions out;
  const int n = m.n_states;
  const auto classes = recurrent_classes(m, pol);
  const Graph g1 = policy_graph(m, [](int, int a) { return a == 1 ? 1.0 : 0.0; });
  const auto classes1 = closed_classes(g1);
  if (classes.size() != 1) return out;
  std::vector<char> in_s(n, 0), in_both(n, 0);
  for (int s : classes.front()) in_s[s] = 1;
  const bool single_one_class = classes1.size() == 1;
  if (single_one_class)
    for (int s : classes1.front()) in_both[s] = in_s[s];

  auto self0 = [&](int s) { return m.p(s, 0, s) > kEdgeTol; };
  auto self1 = [&](int s) { return m.p(s, 1, s) > kEdgeTol; };
  auto active = [&](int s) { return pol.p_active(s) > kEdgeTol; };

  bool all_loops = true;
  for (int s : classes.front()) all_loops = all_loops && self0(s) && self1(s);
  if (all_loops) out.satisfied.push_back("self-loop-all-states");

  if (single_one_class) {
    int sa = -1, sb = -1;
    for (int s = 0; s < n && sa < 0; ++s)
      if (in_s[s] && active(s) && self1(s)) sa = s;
    for (int s = 0; s < n && sb < 0; ++s)
      if (in_both[s] && self0(s) && self1(s)) sb = s;
    if (sa >= 0 && sb >= 0) {
      out.satisfied.push_back("self-loop-two-states");
      out.self_loop_pair = std::array<int, 2>{sa, sb};
    }
    for (int s = 0; s < n; ++s)
      if (in_both[s] && active(s) && self1(s)) {
        out.satisfied.push_back("self-loop-one-state");
        out.self_loop_state = s;
        break;
      }

    // Cycles the follower can trace while copying action 1 from the leader.
    Graph g_active(n), g_any(n);
    for (int s = 0; s < n; ++s)
      for (int t = 0; t < n; ++t) {
        if (m.p(s, 1, t) > kEdgeTol) g_active[s].push_back(t);
        if (m.p(s, 0, t) > kEdgeTol && m.p(s, 1, t) > kEdgeTol) g_any[s].push_back(t);
      }
    std::vector<char> active_in_s(n, 0), active_in_both(n, 0);
    for (int s = 0; s < n; ++s) {
      active_in_s[s] = in_s[s] && active(s);
      active_in_both[s] = in_both[s] && active(s);
    }
    std::vector<char> len_a, len_b, len_star;
    const bool ok_a = cycle_lengths(g_active, active_in_s, cycle_cap, len_a);
    const bool ok_b = cycle_lengths(g_any, in_both, cycle_cap, len_b);
    bool coprime = false;
    for (int la = 1; la <= n && !coprime; ++la)
      for (int lb = 1; lb <= n && !coprime; ++lb)
        if (len_a[la] && len_b[lb] && std::gcd(la, lb) == 1) coprime = true;
    if (coprime) out.satisfied.push_back("two-cycles");
    else if (!ok_a || !ok_b) out.inconclusive.push_back("two-cycles");

    const bool ok_star = cycle_lengths(g_active, active_in_both, cycle_cap, len_star);
    const bool has_star = std::any_of(len_star.begin(), len_star.end(), [](char c) { return c != 0; });
    if (has_star && class_period(g1, classes1.front()) == 1) out.satisfied.push_back("one-cycle");
    else if (!ok_star) out.inconclusive.push_back("one-cycle");
  }
  return out;
}

SyncReport exact_sync_times(const DtMdp& m, const SingleArmPolicy& pol) {
  const auto reach = check_sa_reachability(m, pol);
  if (!reach.holds) {
    const auto& w = *reach.witness;
    throw SyncError("diagonal unreachable from (s=" + std::to_string(w[0]) + ",a=" + std::to_string(w[1]) +
                    ",s_hat=" + std::to_string(w[2]) + ",a_hat=" + std::to_string(w[3]) + ")");
  }
  const int n = m.n_states;
  // Unknowns: off-diagonal post-step states whose leader action is possible.
  std::vector<int> var_of(static_cast<std::size_t>(n) * n * 2, -1);
  std::vector<std::array<int, 3>> states;
  for (int s = 0; s < n; ++s)
    for (int sh = 0; sh < n; ++sh)
      for (int ah = 0; ah < 2; ++ah)
        if (s != sh && pol.prob(sh, ah) > kEdgeTol) {
          var_of[node(n, s, sh, ah)] = static_cast<int>(states.size());
          states.push_back({s, sh, ah});
        }
  const int nv = static_cast<int>(states.size());
  // One step from (s, a) / (s_hat, a_hat) with independent moves; returns
  // the coefficients over unknowns.
  auto step_row = [&](int s, int a, int sh, int ah, Eigen::Ref<Eigen::RowVectorXd> row) {
    for (int s2 = 0; s2 < n; ++s2) {
      const double ps = m.p(s, a, s2);
      if (ps <= 0.0) continue;
      for (int sh2 = 0; sh2 < n; ++sh2) {
        const double ph = m.p(sh, ah, sh2);
        if (ph <= 0.0 || s2 == sh2) continue;
        for (int ah2 = 0; ah2 < 2; ++ah2) {
          const int v = var_of[node(n, s2, sh2, ah2)];
          if (v >= 0) row(v) += ps * ph * pol.prob(sh2, ah2);
        }
      }
    }
  };
  Eigen::MatrixXd system = Eigen::MatrixXd::Identity(nv, nv);
  Eigen::RowVectorXd row(nv);
  for (int i = 0; i < nv; ++i) {
    row.setZero();
    step_row(states[i][0], states[i][2], states[i][1], states[i][2], row);
    system.row(i) -= row;
  }
  const Eigen::FullPivLU<Eigen::MatrixXd> lu(system);
  if (!lu.isInvertible()) throw SyncError("synchronization system is singular");
  const Eigen::VectorXd tau = lu.solve(Eigen::VectorXd::Ones(nv));

  SyncReport rep;
  rep.sa_holds = true;
  rep.method = "reachability";
  rep.n_states = n;
  rep.tau_product.assign(static_cast<std::size_t>(n) * n * 2, 0.0);
  for (int i = 0; i < nv; ++i) rep.tau_product[node(n, states[i][0], states[i][1], states[i][2])] = tau(i);
  rep.tau_table.assign(static_cast<std::size_t>(n) * 2 * n * 2, 0.0);
  for (int s = 0; s < n; ++s)
    for (int a = 0; a < 2; ++a)
      for (int sh = 0; sh < n; ++sh)
        for (int ah = 0; ah < 2; ++ah) {
          if (s == sh) continue;
          row.setZero();
          step_row(s, a, sh, ah, row);
          const double v = 1.0 + row.dot(tau);
          const std::size_t idx = ((static_cast<std::size_t>(s) * 2 + a) * n + sh) * 2 + ah;
          rep.tau_table[idx] = v;
          if (v > rep.tau_max) {
            rep.tau_max = v;
            rep.argmax = {s, a, sh, ah};
          }
        }
  const auto conds = check_sufficient_conditions(m, pol);
  if (!conds.satisfied.empty()) rep.method = conds.satisfied.front();
  return rep;
}

UnichainResult check_unichain(const DtMdp& m) {
  const int n = m.n_states;
  if (n > kUnichainMaxStates)
    throw std::invalid_argument("unichain enumeration supports at most " + std::to_string(kUnichainMaxStates) +
                                " states");
  UnichainResult res;
  std::vector<int> actions(n);
  for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
    for (int s = 0; s < n; ++s) actions[s] = (mask >> s) & 1u;
    const Graph g = policy_graph(m, [&](int s, int a) { return actions[s] == a ? 1.0 : 0.0; });
    if (closed_classes(g).size() > 1) {
      res.unichain = false;
      res.witness = actions;
      return res;
    }
  }
  return res;
}

namespace {

struct PairEstimate {
  double mean = 0.0, std_error = 0.0;
  long censored = 0;
};

double ct_episode(const CtMdp& m, const std::vector<double>& p_active, const std::vector<double>& rate_cdf,
                  const std::vector<double>& total, double rate2, int s, int sh, double horizon, Rng& rng,
                  bool& censored) {
  const int n = m.n_states;
  double t = 0.0;
  censored = false;
  while (s != sh) {
    t += rng.exponential(rate2);
    if (t > horizon) {
      censored = true;
      return horizon;
    }
    const int ah = rng.bernoulli(p_active[sh]) ? 1 : 0;
    // [0, 1/2) is the leader's clock, [1/2, 1) the follower's
    const double u = rng.uniform();
    const bool leader = u < 0.5;
    const int who = leader ? sh : s;
    const double jump = (leader ? u : u - 0.5) * rate2;
    if (jump >= total[who * 2 + ah]) continue;
    const std::span<const double> cdf(rate_cdf.data() + (static_cast<std::size_t>(who) * 2 + ah) * n, n);
    const int next = rng.from_cdf(cdf);
    (leader ? sh : s) = next;
  }
  return t;
}

}  // namespace

CtSyncEstimate ct_sync_time_estimate(const CtMdp& m, const SingleArmPolicy& pol, long episodes, double horizon,
                                     std::uint64_t seed, int workers) {
  if (episodes < 1) throw std::invalid_argument("episodes must be at least 1");
  const int n = m.n_states;
  const double gm = g_max(m);
  CtSyncEstimate est;
  est.episodes_per_pair = episodes;
  if (n < 2) return est;
  std::vector<double> p_active(n), total(static_cast<std::size_t>(n) * 2), jump_probs(static_cast<std::size_t>(n) * 2 * n);
  for (int s = 0; s < n; ++s) {
    p_active[s] = pol.p_active(s);
    for (int a = 0; a < 2; ++a) {
      total[s * 2 + a] = m.total_rate(s, a);
      for (int t = 0; t < n; ++t)
        jump_probs[(static_cast<std::size_t>(s) * 2 + a) * n + t] =
            total[s * 2 + a] > 0.0 ? m.rate(s, a, t) / total[s * 2 + a] : 0.0;
    }
  }
  const auto cdf = cumulative_rows(jump_probs, n);
  std::vector<std::array<int, 2>> pairs;
  for (int s = 0; s < n; ++s)
    for (int sh = 0; sh < n; ++sh)
      if (s != sh) pairs.push_back({s, sh});
  const long total_eps = static_cast<long>(pairs.size()) * episodes;
  std::vector<double> times(total_eps);
  std::vector<char> cens(total_eps, 0);
  if (gm <= 0.0) {
    std::fill(times.begin(), times.end(), horizon);
    std::fill(cens.begin(), cens.end(), 1);
  } else {
    const int threads = workers <= 0 ? omp_get_max_threads() : workers;
#pragma omp parallel for schedule(dynamic, 64) num_threads(threads)
    for (long e = 0; e < total_eps; ++e) {
      Rng rng(stream_seed(seed, static_cast<std::uint64_t>(e)));
      const auto& pr = pairs[e / episodes];
      bool c = false;
      times[e] = ct_episode(m, p_active, cdf, total, 2.0 * gm, pr[0], pr[1], horizon, rng, c);
      cens[e] = c;
    }
  }
  bool first = true;
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    double sum = 0.0, sum2 = 0.0;
    long k = 0;
    for (long e = static_cast<long>(p) * episodes; e < static_cast<long>(p + 1) * episodes; ++e) {
      if (cens[e]) {
        ++est.censored;
        continue;
      }
      sum += times[e];
      sum2 += times[e] * times[e];
      ++k;
    }
    const double mean = k > 0 ? sum / k : horizon;
    const double var = k > 1 ? std::max(0.0, (sum2 - k * mean * mean) / (k - 1)) : 0.0;
    if (first || mean > est.mean) {
      first = false;
      est.mean = mean;
      est.std_error = k > 0 ? std::sqrt(var / k) : 0.0;
      est.worst_s = pairs[p][0];
      est.worst_s_hat = pairs[p][1];
    }
  }
  est.upper = est.mean + 1.96 * est.std_error;
  est.total_episodes = total_eps;
  return est;
}

}  // namespace ftva
