#include "ftva/policy_dt.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace ftva {

std::string to_string(TieBreak tb) { return tb == TieBreak::GoodFirst ? "good-first" : "uniform"; }

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) parts.push_back(cur);
  if (!s.empty() && s.back() == sep) parts.emplace_back();
  return parts;
}

int parse_state(const std::string& tok, const RbInstance& inst, const std::string& text) {
  std::size_t used = 0;
  int label = 0;
  try {
    label = std::stoi(tok, &used);
  } catch (const std::exception&) {
    throw SelectorError("bad state '" + tok + "' in policy '" + text + "'");
  }
  const int s = label - inst.state_label_base;
  if (used != tok.size() || s < 0 || s >= inst.n_states())
    throw SelectorError("state '" + tok + "' out of range in policy '" + text + "'");
  return s;
}

std::vector<int> parse_class(std::string tok, const RbInstance& inst, const std::string& text) {
  if (tok.size() < 2 || tok.front() != '{' || tok.back() != '}')
    throw SelectorError("expected {..} class in policy '" + text + "'");
  tok = tok.substr(1, tok.size() - 2);
  std::vector<int> out;
  if (tok.empty()) return out;
  for (const auto& part : split(tok, ',')) out.push_back(parse_state(part, inst, text));
  return out;
}

}  // namespace

PolicySelector parse_policy_selector(const std::string& text, const RbInstance& inst) {
  PolicySelector sel;
  sel.text = text;
  const auto parts = split(text, ':');
  if (parts.empty()) throw SelectorError("empty policy selector");
  const int n = inst.n_states();
  if (parts[0] == "ftva") {
    sel.kind = PolicySelector::Kind::Ftva;
    if (parts.size() > 2) throw SelectorError("bad policy '" + text + "'");
    if (parts.size() == 2) {
      if (parts[1] == "good-first") sel.tie_break = TieBreak::GoodFirst;
      else if (parts[1] == "uniform") sel.tie_break = TieBreak::Uniform;
      else throw SelectorError("unknown tie-break '" + parts[1] + "'");
    }
    return sel;
  }
  if (parts[0] == "priority" && parts.size() >= 2 && parts[1] == "lagrangian") {
    sel.kind = PolicySelector::Kind::PriorityLagrangian;
    if (parts.size() > 3) throw SelectorError("bad policy '" + text + "'");
    if (parts.size() == 3) {
      try {
        std::size_t used = 0;
        sel.lambda = std::stod(parts[2], &used);
        if (used != parts[2].size()) throw std::invalid_argument("trailing");
      } catch (const std::exception&) {
        throw SelectorError("bad lambda '" + parts[2] + "'");
      }
    }
    return sel;
  }
  if (parts[0] == "priority" && parts.size() == 3 && parts[1] == "list") {
    sel.kind = PolicySelector::Kind::PriorityList;
    for (const auto& tok : split(parts[2], '>')) sel.order.push_back(parse_state(tok, inst, text));
    auto sorted = sel.order;
    std::sort(sorted.begin(), sorted.end());
    if (static_cast<int>(sorted.size()) != n || std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
      throw SelectorError("priority list must be a permutation of the states: '" + text + "'");
    return sel;
  }
  if (parts[0] == "twoclass" && parts.size() == 2) {
    sel.kind = PolicySelector::Kind::TwoClass;
    const auto halves = split(parts[1], '|');
    if (halves.size() != 2) throw SelectorError("twoclass needs {A}|{B}: '" + text + "'");
    sel.high_class = parse_class(halves[0], inst, text);
    sel.low_class = parse_class(halves[1], inst, text);
    std::vector<int> all = sel.high_class;
    all.insert(all.end(), sel.low_class.begin(), sel.low_class.end());
    std::sort(all.begin(), all.end());
    if (static_cast<int>(all.size()) != n || std::adjacent_find(all.begin(), all.end()) != all.end())
      throw SelectorError("twoclass classes must partition the states: '" + text + "'");
    return sel;
  }
  throw SelectorError("unknown policy selector '" + text + "'");
}

PriorityScores resolve_priority(const PolicySelector& sel, const RbInstance& inst, const OccupationMeasure& occ) {
  const int n = inst.n_states();
  PriorityScores ps;
  ps.n_states = n;
  for (int k = 0; k < inst.n_types(); ++k) {
    std::vector<double> score(n, 0.0);
    switch (sel.kind) {
      case PolicySelector::Kind::PriorityLagrangian: {
        if (inst.kind != TimeKind::Discrete) throw SelectorError("priority policies are discrete-time only");
        score = lagrangian_indices(inst.dt_types[k], sel.lambda.value_or(occ.budget_dual)).index;
        break;
      }
      case PolicySelector::Kind::PriorityList:
        for (std::size_t i = 0; i < sel.order.size(); ++i) score[sel.order[i]] = -static_cast<double>(i);
        break;
      case PolicySelector::Kind::TwoClass:
        for (int s : sel.high_class) score[s] = 1.0;
        break;
      case PolicySelector::Kind::Ftva:
        throw SelectorError("ftva is not a priority policy");
    }
    ps.score.push_back(std::move(score));
  }
  return ps;
}

std::vector<int> assign_types(const RbInstance& inst, int n_arms) {
  std::vector<int> types;
  types.reserve(n_arms);
  for (int k = 0; k < inst.n_types(); ++k) {
    const int count = exact_count(inst.betas[k], n_arms, "beta[" + std::to_string(k) + "]");
    types.insert(types.end(), count, k);
  }
  if (static_cast<int>(types.size()) != n_arms) throw DivisibilityError("type counts do not sum to N");
  return types;
}

int sample_state(const std::vector<double>& probs, Rng& rng) {
  double u = rng.uniform();
  int last_pos = 0;
  for (int s = 0; s < static_cast<int>(probs.size()); ++s) {
    if (probs[s] <= 0.0) continue;
    last_pos = s;
    if (u < probs[s]) return s;
    u -= probs[s];
  }
  return last_pos;
}

// ---------------------------------------------------------------------------

DtEngine::DtEngine(const RbInstance& instance, std::vector<int> types, std::vector<int> initial_real)
    : inst_(&instance), types_(std::move(types)), real_(std::move(initial_real)) {
  if (instance.kind != TimeKind::Discrete) throw std::invalid_argument("discrete-time engine needs a dt instance");
  if (types_.size() != real_.size()) throw std::invalid_argument("type and state vectors differ in length");
  const int n_arms = static_cast<int>(real_.size());
  budget_ = exact_count(instance.alpha, n_arms, "alpha");
  actions_.assign(n_arms, 0);
  for (const auto& m : instance.dt_types) cdf_.push_back(cumulative_rows(m.transition, m.n_states));
}

double DtEngine::reward_now() const {
  double total = 0.0;
  for (std::size_t i = 0; i < real_.size(); ++i) total += inst_->dt_types[types_[i]].r(real_[i], actions_[i]);
  return total / static_cast<double>(real_.size());
}

void DtEngine::move_real(Rng& rng) {
  const int n = inst_->n_states();
  for (std::size_t i = 0; i < real_.size(); ++i) {
    const double* row = cdf_[types_[i]].data() + (static_cast<std::size_t>(real_[i]) * 2 + actions_[i]) * n;
    real_[i] = rng.from_cdf({row, static_cast<std::size_t>(n)});
  }
}

FtvaEngine::FtvaEngine(const RbInstance& instance, std::vector<SingleArmPolicy> policies,
                       const std::vector<std::vector<double>>& marginals, std::vector<int> types,
                       std::vector<int> initial_real, TieBreak tie_break, Rng& rng)
    : DtEngine(instance, std::move(types), std::move(initial_real)),
      policies_(std::move(policies)),
      tie_break_(tie_break) {
  if (static_cast<int>(policies_.size()) != instance.n_types() || static_cast<int>(marginals.size()) != instance.n_types())
    throw std::invalid_argument("need one single-armed policy and marginal per type");
  virt_.resize(real_.size());
  vact_.assign(real_.size(), 0);
  for (std::size_t i = 0; i < real_.size(); ++i) virt_[i] = sample_state(marginals[types_[i]], rng);
}

// Sets `count` arms of `pool` to action `value`, all of which currently hold
// the opposite action. Good-first spends arms whose virtual state already
// differs from the real one before touching arms that could stay coupled.
void FtvaEngine::flip(std::vector<int>& pool, int count, int value, Rng& rng) {
  if (count <= 0) return;
  if (tie_break_ == TieBreak::Uniform) {
    rng.partial_shuffle(pool, count);
    for (int j = 0; j < count; ++j) actions_[pool[j]] = value;
    return;
  }
  scratch_a_.clear();
  scratch_b_.clear();
  for (int i : pool) (virt_[i] != real_[i] ? scratch_a_ : scratch_b_).push_back(i);
  if (static_cast<int>(scratch_a_.size()) >= count) {
    rng.partial_shuffle(scratch_a_, count);
    for (int j = 0; j < count; ++j) actions_[scratch_a_[j]] = value;
    return;
  }
  for (int i : scratch_a_) actions_[i] = value;
  const int rest = count - static_cast<int>(scratch_a_.size());
  rng.partial_shuffle(scratch_b_, rest);
  for (int j = 0; j < rest; ++j) actions_[scratch_b_[j]] = value;
}

double FtvaEngine::decide(Rng& rng) {
  const int count = n_arms();
  int ones = 0;
  for (int i = 0; i < count; ++i) {
    const double p = policies_[types_[i]].p_active(virt_[i]);
    const int a = p >= 1.0 ? 1 : (p <= 0.0 ? 0 : (rng.uniform() < p ? 1 : 0));
    vact_[i] = actions_[i] = a;
    ones += a;
  }
  mismatches_ = std::abs(ones - budget_);
  if (ones != budget_) {
    const int want = ones > budget_ ? 1 : 0;
    auto& pool = pool_;
    pool.clear();
    for (int i = 0; i < count; ++i)
      if (vact_[i] == want) pool.push_back(i);
    flip(pool, mismatches_, 1 - want, rng);
  }
  return reward_now();
}

void FtvaEngine::transition(Rng& rng) {
  const int n = inst_->n_states();
  for (std::size_t i = 0; i < real_.size(); ++i) {
    const auto& cdf = cdf_[types_[i]];
    const bool coupled = virt_[i] == real_[i] && vact_[i] == actions_[i];
    const int next = rng.from_cdf({cdf.data() + (static_cast<std::size_t>(real_[i]) * 2 + actions_[i]) * n,
                                   static_cast<std::size_t>(n)});
    if (coupled) {
      virt_[i] = next;
    } else {
      virt_[i] = rng.from_cdf({cdf.data() + (static_cast<std::size_t>(virt_[i]) * 2 + vact_[i]) * n,
                               static_cast<std::size_t>(n)});
    }
    real_[i] = next;
  }
}

// ---------------------------------------------------------------------------

PriorityEngine::PriorityEngine(const RbInstance& instance, PriorityScores scores, std::vector<int> types,
                               std::vector<int> initial_real)
    : DtEngine(instance, std::move(types), std::move(initial_real)), scores_(std::move(scores)) {
  std::vector<double> levels;
  for (const auto& row : scores_.score) levels.insert(levels.end(), row.begin(), row.end());
  std::sort(levels.begin(), levels.end(), std::greater<>());
  levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
  n_levels_ = static_cast<int>(levels.size());
  for (const auto& row : scores_.score) {
    std::vector<int> lv(row.size());
    for (std::size_t s = 0; s < row.size(); ++s)
      lv[s] = static_cast<int>(std::find(levels.begin(), levels.end(), row[s]) - levels.begin());
    level_of_.push_back(std::move(lv));
  }
  buckets_.resize(n_levels_);
}

double PriorityEngine::decide(Rng& rng) {
  for (auto& b : buckets_) b.clear();
  for (int i = 0; i < n_arms(); ++i) buckets_[level_of_[types_[i]][real_[i]]].push_back(i);
  int remaining = budget_;
  for (auto& bucket : buckets_) {
    const int size = static_cast<int>(bucket.size());
    if (size <= remaining) {
      for (int i : bucket) actions_[i] = 1;
      remaining -= size;
      continue;
    }
    rng.partial_shuffle(bucket, remaining);
    for (int j = 0; j < size; ++j) actions_[bucket[j]] = j < remaining ? 1 : 0;
    remaining = 0;
  }
  return reward_now();
}

void PriorityEngine::transition(Rng& rng) { move_real(rng); }

}  // namespace ftva
