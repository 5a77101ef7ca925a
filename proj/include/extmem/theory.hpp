#pragma once

// Exact enumeration over small observation-labelled Markov chains: artifact
// detection, mutual information of histories, history reduction and noisy copies.
//
// Time is 1-based: the start state emits O_1. Actions are folded into the
// transition probabilities under a uniform behaviour policy.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "extmem/errors.hpp"

namespace extmem {

inline constexpr double kCertaintySlack = 1e-12;
inline constexpr double kEnumerationGuard = 1e7;

/// Neumaier compensated sum.
class KahanSum {
 public:
  void add(double v) {
    const double t = sum_ + v;
    if (std::abs(sum_) >= std::abs(v))
      c_ += (sum_ - t) + v;
    else
      c_ += (v - t) + sum_;
    sum_ = t;
  }
  double value() const { return sum_ + c_; }

 private:
  double sum_ = 0.0;
  double c_ = 0.0;
};

struct TabularEnv {
  std::vector<std::string> states;
  std::vector<std::string> symbols;
  int start = 0;
  std::vector<std::vector<std::pair<int, double>>> trans;  // (next state, probability)
  std::vector<std::vector<std::pair<int, double>>> emit;   // (symbol, probability)

  int num_states() const { return static_cast<int>(states.size()); }
  int num_symbols() const { return static_cast<int>(symbols.size()); }

  std::optional<int> symbol_index(std::string_view name) const {
    for (std::size_t i = 0; i < symbols.size(); ++i)
      if (symbols[i] == name) return static_cast<int>(i);
    return std::nullopt;
  }
  int symbol(std::string_view name) const {
    const auto i = symbol_index(name);
    if (!i) throw config_error("unknown observation symbol '" + std::string(name) + "'");
    return *i;
  }

  void validate() const {
    if (states.empty()) throw config_error("tabular environment has no states");
    if (start < 0 || start >= num_states()) throw config_error("start state out of range");
    if (trans.size() != states.size() || emit.size() != states.size())
      throw config_error("transition/emission tables do not match the state list");
    auto check = [&](const std::vector<std::pair<int, double>>& row, int bound, const std::string& what) {
      KahanSum s;
      for (const auto& [to, p] : row) {
        if (to < 0 || to >= bound) throw config_error(what + " refers to an unknown index");
        if (!(p >= 0.0 && p <= 1.0)) throw config_error(what + " has a probability outside [0, 1]");
        s.add(p);
      }
      if (std::abs(s.value() - 1.0) > kCertaintySlack)
        throw config_error(what + " probabilities sum to " + std::to_string(s.value()) + ", not 1");
    };
    for (int s = 0; s < num_states(); ++s) {
      check(trans[static_cast<std::size_t>(s)], num_states(), "transitions of state '" + states[static_cast<std::size_t>(s)] + "'");
      check(emit[static_cast<std::size_t>(s)], num_symbols(), "emissions of state '" + states[static_cast<std::size_t>(s)] + "'");
    }
  }
};

// ---------------------------------------------------------------------------
// Text format: one state per line, "state | label | next:prob, next:prob, ...".
// A label is either a symbol or a distribution "A:0.75, B:0.25". Probabilities
// may be decimals or fractions such as 1/3. The first state is the start state.

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (true) {
    const auto next = s.find(sep, pos);
    out.push_back(trim(s.substr(pos, next == std::string_view::npos ? std::string_view::npos : next - pos)));
    if (next == std::string_view::npos) break;
    pos = next + 1;
  }
  return out;
}

inline double parse_probability(const std::string& text, const std::string& where) {
  try {
    std::size_t used = 0;
    const auto slash = text.find('/');
    double v = 0.0;
    if (slash != std::string::npos) {
      const double num = std::stod(text.substr(0, slash), &used);
      if (used != slash) throw std::invalid_argument(text);
      const std::string den_text = text.substr(slash + 1);
      const double den = std::stod(den_text, &used);
      if (used != den_text.size() || den == 0.0) throw std::invalid_argument(text);
      v = num / den;
    } else {
      v = std::stod(text, &used);
      if (used != text.size()) throw std::invalid_argument(text);
    }
    return v;
  } catch (const std::exception&) {
    throw config_error(where + ": bad probability '" + text + "'");
  }
}

}  // namespace detail

inline TabularEnv parse_tabular_env(std::string_view text, std::string_view source = "<text>") {
  struct Row {
    std::string state;
    std::vector<std::pair<std::string, double>> labels;
    std::vector<std::pair<std::string, double>> next;
    std::string where;
  };
  std::vector<Row> rows;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (detail::trim(line).empty()) continue;
    const std::string where = std::string(source) + ":" + std::to_string(line_no);
    const auto fields = detail::split(line, '|');
    if (fields.size() != 3 || fields[0].empty() || fields[1].empty() || fields[2].empty())
      throw config_error(where + ": expected 'state | label | next:prob, ...'");
    Row row{fields[0], {}, {}, where};
    for (const auto& part : detail::split(fields[1], ',')) {
      const auto colon = part.find(':');
      if (colon == std::string::npos)
        row.labels.emplace_back(part, 1.0);
      else
        row.labels.emplace_back(detail::trim(part.substr(0, colon)),
                                detail::parse_probability(detail::trim(part.substr(colon + 1)), where));
    }
    for (const auto& part : detail::split(fields[2], ',')) {
      const auto colon = part.find(':');
      if (colon == std::string::npos) throw config_error(where + ": transition '" + part + "' lacks ':prob'");
      row.next.emplace_back(detail::trim(part.substr(0, colon)),
                            detail::parse_probability(detail::trim(part.substr(colon + 1)), where));
    }
    for (const auto& r : rows)
      if (r.state == row.state) throw config_error(where + ": duplicate state '" + row.state + "'");
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw config_error(std::string(source) + ": no states");

  TabularEnv env;
  for (const auto& r : rows) env.states.push_back(r.state);
  auto state_of = [&](const std::string& name, const std::string& where) {
    for (std::size_t i = 0; i < rows.size(); ++i)
      if (rows[i].state == name) return static_cast<int>(i);
    throw config_error(where + ": unknown state '" + name + "'");
  };
  auto symbol_of = [&](const std::string& name) {
    if (const auto i = env.symbol_index(name)) return *i;
    env.symbols.push_back(name);
    return env.num_symbols() - 1;
  };
  for (const auto& r : rows) {
    std::vector<std::pair<int, double>> e;
    for (const auto& [sym, p] : r.labels) e.emplace_back(symbol_of(sym), p);
    env.emit.push_back(std::move(e));
    std::vector<std::pair<int, double>> t;
    for (const auto& [to, p] : r.next) t.emplace_back(state_of(to, r.where), p);
    env.trans.push_back(std::move(t));
  }
  env.validate();
  return env;
}

inline TabularEnv load_tabular_env(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot open environment file '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_tabular_env(buf.str(), path);
}

inline std::string format_tabular_env(const TabularEnv& env) {
  std::ostringstream out;
  out.precision(17);
  for (int s = 0; s < env.num_states(); ++s) {
    const auto i = static_cast<std::size_t>(s);
    out << env.states[i] << " | ";
    const auto& e = env.emit[i];
    if (e.size() == 1 && e[0].second == 1.0) {
      out << env.symbols[static_cast<std::size_t>(e[0].first)];
    } else {
      for (std::size_t k = 0; k < e.size(); ++k)
        out << (k ? ", " : "") << env.symbols[static_cast<std::size_t>(e[k].first)] << ':' << e[k].second;
    }
    out << " | ";
    for (std::size_t k = 0; k < env.trans[i].size(); ++k)
      out << (k ? ", " : "") << env.states[static_cast<std::size_t>(env.trans[i][k].first)] << ':'
          << env.trans[i][k].second;
    out << '\n';
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// History enumeration

using ObsSeq = std::vector<int>;

/// Exact law of (O_1, ..., O_horizon), sorted by sequence.
struct HistoryDist {
  int horizon = 0;
  std::vector<std::pair<ObsSeq, double>> support;

  double total() const {
    KahanSum s;
    for (const auto& [seq, p] : support) s.add(p);
    return s.value();
  }
};

/// Number of (state, symbol) paths the enumeration would visit.
inline double enumeration_size(const TabularEnv& env, int horizon) {
  std::vector<double> reach(static_cast<std::size_t>(env.num_states()), 0.0);
  reach[static_cast<std::size_t>(env.start)] = 1.0;
  double total = 0.0;
  for (int t = 1; t <= horizon; ++t) {
    std::vector<double> next(reach.size(), 0.0);
    total = 0.0;
    for (int s = 0; s < env.num_states(); ++s) {
      const double paths = reach[static_cast<std::size_t>(s)] * static_cast<double>(env.emit[static_cast<std::size_t>(s)].size());
      total += paths;
      for (const auto& [to, p] : env.trans[static_cast<std::size_t>(s)])
        if (p > 0.0) next[static_cast<std::size_t>(to)] += paths;
    }
    reach = std::move(next);
  }
  return total;
}

inline HistoryDist enumerate_histories(const TabularEnv& env, int horizon) {
  env.validate();
  expects(horizon >= 1, "horizon must be at least 1");
  const double size = enumeration_size(env, horizon);
  if (size > kEnumerationGuard)
    throw enumeration_too_large("enumeration of horizon " + std::to_string(horizon) + " would visit about " +
                                std::to_string(static_cast<long long>(size)) + " paths (limit 1e7)");

  std::map<ObsSeq, KahanSum> acc;
  ObsSeq seq(static_cast<std::size_t>(horizon));
  auto visit = [&](auto&& self, int state, int t, double prob) -> void {
    for (const auto& [sym, pe] : env.emit[static_cast<std::size_t>(state)]) {
      if (pe <= 0.0) continue;
      seq[static_cast<std::size_t>(t - 1)] = sym;
      const double p = prob * pe;
      if (t == horizon) {
        acc[seq].add(p);
        continue;
      }
      for (const auto& [to, pt] : env.trans[static_cast<std::size_t>(state)])
        if (pt > 0.0) self(self, to, t + 1, p * pt);
    }
  };
  visit(visit, env.start, 1, 1.0);

  HistoryDist d;
  d.horizon = horizon;
  d.support.reserve(acc.size());
  for (const auto& [s, p] : acc) d.support.emplace_back(s, p.value());
  return d;
}

// ---------------------------------------------------------------------------
// Artifacts

/// `artifact` observed at `time` guarantees `referent` at `referent_time`.
struct ArtifactRelation {
  int artifact = 0;
  int referent = 0;
  int referent_time = 0;
  int time = 0;
  double certainty = 0.0;

  bool same_relation(const ArtifactRelation& o) const {
    return artifact == o.artifact && referent == o.referent && referent_time == o.referent_time && time == o.time;
  }
};

/// P(O_t' = o' | O_t = o) for every t' < t <= horizon, o != o', P(O_t = o) > 0.
struct CertaintyTable {
  int horizon = 0;
  int symbols = 0;
  std::vector<double> cond;  // [t][o][t'][o'] flattened, 1-based times
  std::vector<double> marginal;  // [t][o]

  double at(int t, int o, int tp, int op) const {
    return cond[index(t, o, tp, op)];
  }
  double p(int t, int o) const { return marginal[static_cast<std::size_t>((t - 1) * symbols + o)]; }
  std::size_t index(int t, int o, int tp, int op) const {
    return ((static_cast<std::size_t>(t - 1) * static_cast<std::size_t>(symbols) + static_cast<std::size_t>(o)) *
                static_cast<std::size_t>(horizon) +
            static_cast<std::size_t>(tp - 1)) *
               static_cast<std::size_t>(symbols) +
           static_cast<std::size_t>(op);
  }
};

inline CertaintyTable certainty_table(const HistoryDist& dist, int num_symbols) {
  CertaintyTable tab;
  tab.horizon = dist.horizon;
  tab.symbols = num_symbols;
  const auto h = static_cast<std::size_t>(dist.horizon);
  const auto k = static_cast<std::size_t>(num_symbols);
  std::vector<KahanSum> joint(h * k * h * k);
  std::vector<KahanSum> marg(h * k);
  for (const auto& [seq, p] : dist.support) {
    for (int t = 1; t <= dist.horizon; ++t) {
      const int o = seq[static_cast<std::size_t>(t - 1)];
      marg[static_cast<std::size_t>(t - 1) * k + static_cast<std::size_t>(o)].add(p);
      for (int tp = 1; tp < t; ++tp) joint[tab.index(t, o, tp, seq[static_cast<std::size_t>(tp - 1)])].add(p);
    }
  }
  tab.marginal.resize(h * k);
  for (std::size_t i = 0; i < marg.size(); ++i) tab.marginal[i] = marg[i].value();
  tab.cond.assign(joint.size(), 0.0);
  for (int t = 1; t <= dist.horizon; ++t)
    for (int o = 0; o < num_symbols; ++o) {
      const double po = tab.p(t, o);
      if (po <= 0.0) continue;
      for (int tp = 1; tp < t; ++tp)
        for (int op = 0; op < num_symbols; ++op)
          tab.cond[tab.index(t, o, tp, op)] = joint[tab.index(t, o, tp, op)].value() / po;
    }
  return tab;
}

/// All relations with conditional certainty 1 (up to kCertaintySlack).
inline std::vector<ArtifactRelation> detect_artifacts(const HistoryDist& dist, int num_symbols) {
  const auto tab = certainty_table(dist, num_symbols);
  std::vector<ArtifactRelation> out;
  for (int t = 2; t <= dist.horizon; ++t)
    for (int o = 0; o < num_symbols; ++o) {
      if (tab.p(t, o) <= 0.0) continue;
      for (int tp = 1; tp < t; ++tp)
        for (int op = 0; op < num_symbols; ++op) {
          if (op == o) continue;
          const double c = tab.at(t, o, tp, op);
          if (c >= 1.0 - kCertaintySlack) out.push_back({o, op, tp, t, c});
        }
    }
  return out;
}

inline std::vector<ArtifactRelation> detect_artifacts(const TabularEnv& env, int horizon) {
  return detect_artifacts(enumerate_histories(env, horizon), env.num_symbols());
}

/// Literal definition: every trajectory with o at t has o' at t'.
inline std::vector<ArtifactRelation> detect_artifacts_by_definition(const HistoryDist& dist, int num_symbols) {
  std::vector<ArtifactRelation> out;
  for (int t = 2; t <= dist.horizon; ++t)
    for (int o = 0; o < num_symbols; ++o)
      for (int tp = 1; tp < t; ++tp)
        for (int op = 0; op < num_symbols; ++op) {
          if (op == o) continue;
          bool seen = false;
          bool holds = true;
          for (const auto& [seq, p] : dist.support) {
            if (seq[static_cast<std::size_t>(t - 1)] != o) continue;
            seen = true;
            if (seq[static_cast<std::size_t>(tp - 1)] != op) {
              holds = false;
              break;
            }
          }
          if (seen && holds) out.push_back({o, op, tp, t, 1.0});
        }
  return out;
}

inline bool is_artifactual(const TabularEnv& env, int horizon) { return !detect_artifacts(env, horizon).empty(); }

/// Largest P(O_t' = o' | O_t = o) over all t' < t <= horizon and o != o'.
inline double max_conditional_certainty(const HistoryDist& dist, int num_symbols) {
  const auto tab = certainty_table(dist, num_symbols);
  double best = 0.0;
  for (int t = 2; t <= dist.horizon; ++t)
    for (int o = 0; o < num_symbols; ++o) {
      if (tab.p(t, o) <= 0.0) continue;
      for (int tp = 1; tp < t; ++tp)
        for (int op = 0; op < num_symbols; ++op)
          if (op != o) best = std::max(best, tab.at(t, o, tp, op));
    }
  return best;
}

// ---------------------------------------------------------------------------
// Mutual information

/// Dense joint table p[x][y].
using JointTable = std::vector<std::vector<double>>;

/// I(X;Y) in bits, with 0 log 0 = 0.
inline double mutual_information(const JointTable& joint) {
  expects(!joint.empty(), "empty joint distribution");
  const std::size_t ny = joint.front().size();
  KahanSum total;
  std::vector<KahanSum> px(joint.size());
  std::vector<KahanSum> py(ny);
  for (std::size_t x = 0; x < joint.size(); ++x) {
    expects(joint[x].size() == ny, "ragged joint table");
    for (std::size_t y = 0; y < ny; ++y) {
      const double p = joint[x][y];
      expects(p >= 0.0, "negative probability in joint table");
      total.add(p);
      px[x].add(p);
      py[y].add(p);
    }
  }
  expects(std::abs(total.value() - 1.0) <= 1e-9, "joint distribution is not normalized");
  KahanSum mi;
  for (std::size_t x = 0; x < joint.size(); ++x)
    for (std::size_t y = 0; y < ny; ++y) {
      const double p = joint[x][y];
      if (p <= 0.0) continue;
      mi.add(p * std::log2(p / (px[x].value() * py[y].value())));
    }
  return std::max(0.0, mi.value());
}

/// A history as (time, symbol) pairs; reductions drop entries but keep the times.
using History = std::vector<std::pair<int, int>>;

/// Joint of (history, O_{target_time}) from the enumerated law, after mapping each
/// history through `reduce`.
template <class Reduce>
JointTable history_joint(const HistoryDist& dist, int num_symbols, int history_length, Reduce&& reduce) {
  expects(history_length >= 1 && history_length < dist.horizon, "history must end before the horizon");
  std::map<History, std::vector<KahanSum>> acc;
  for (const auto& [seq, p] : dist.support) {
    History h;
    for (int t = 1; t <= history_length; ++t) h.emplace_back(t, seq[static_cast<std::size_t>(t - 1)]);
    h = reduce(std::move(h));
    auto& row = acc[h];
    row.resize(static_cast<std::size_t>(num_symbols));
    row[static_cast<std::size_t>(seq[static_cast<std::size_t>(history_length)])].add(p);
  }
  JointTable joint;
  joint.reserve(acc.size());
  for (const auto& [h, row] : acc) {
    std::vector<double> r(row.size());
    for (std::size_t y = 0; y < row.size(); ++y) r[y] = row[y].value();
    joint.push_back(std::move(r));
  }
  return joint;
}

namespace detail {

inline std::optional<int> symbol_at(const History& h, int time) {
  for (const auto& [t, o] : h)
    if (t == time) return o;
  return std::nullopt;
}

inline History drop_time(History h, int time) {
  std::erase_if(h, [&](const auto& e) { return e.first == time; });
  return h;
}

}  // namespace detail

/// Removes the referent observation from every history in which the artifact is present.
inline History reduce_history(History h, const ArtifactRelation& r) {
  if (detail::symbol_at(h, r.time) == r.artifact) return detail::drop_time(std::move(h), r.referent_time);
  return h;
}

struct ReductionCheck {
  std::vector<ArtifactRelation> deleted;
  int history_length = 0;
  double i_full = 0.0;
  double i_reduced = 0.0;    // referent removed where the artifact is present
  double i_coordinate = 0.0; // referent coordinate removed from every history
  bool equal = false;
};

struct ReductionReport {
  int horizon = 0;
  std::vector<ArtifactRelation> relations;
  std::vector<ReductionCheck> checks;

  bool all_equal() const {
    return std::all_of(checks.begin(), checks.end(), [](const ReductionCheck& c) { return c.equal; });
  }
};

inline constexpr double kReductionTolerance = 1e-9;

/// Chooses relations whose referents can be deleted one after another: one deletion
/// per artifact occurrence, distinct referents, and no chosen artifact is itself a
/// deleted referent. Later artifacts are preferred.
inline std::vector<ArtifactRelation> independent_relations(std::vector<ArtifactRelation> rels) {
  std::stable_sort(rels.begin(), rels.end(), [](const ArtifactRelation& a, const ArtifactRelation& b) {
    return a.time != b.time ? a.time > b.time : a.referent_time > b.referent_time;
  });
  std::vector<ArtifactRelation> chosen;
  for (const auto& r : rels) {
    bool ok = true;
    for (const auto& c : chosen)
      if (c.time == r.time || c.referent_time == r.referent_time || c.time == r.referent_time ||
          r.time == c.referent_time || c.referent == r.referent)
        ok = false;
    if (ok) chosen.push_back(r);
  }
  return chosen;
}

/// For the history O_1..O_{horizon-1} and target O_horizon: one check per detected
/// relation inside the history, plus one iterated check over a set of relations with
/// distinct referents when more than one exists.
inline ReductionReport verify_artifact_reduction(const TabularEnv& env, int horizon) {
  expects(horizon >= 2, "reduction needs a history and a next observation");
  const auto dist = enumerate_histories(env, horizon);
  const int k = env.num_symbols();
  const int m = horizon - 1;

  ReductionReport report;
  report.horizon = horizon;
  for (const auto& r : detect_artifacts(dist, k))
    if (r.time <= m) report.relations.push_back(r);

  const double i_full = mutual_information(history_joint(dist, k, m, [](History h) { return h; }));
  auto check = [&](const std::vector<ArtifactRelation>& rels) {
    ReductionCheck c;
    c.deleted = rels;
    c.history_length = m;
    c.i_full = i_full;
    c.i_reduced = mutual_information(history_joint(dist, k, m, [&](History h) {
      for (const auto& r : rels) h = reduce_history(std::move(h), r);
      return h;
    }));
    c.i_coordinate = mutual_information(history_joint(dist, k, m, [&](History h) {
      for (const auto& r : rels) h = detail::drop_time(std::move(h), r.referent_time);
      return h;
    }));
    c.equal = std::abs(c.i_full - c.i_reduced) <= kReductionTolerance;
    report.checks.push_back(std::move(c));
  };
  for (const auto& r : report.relations) check({r});
  const auto multi = independent_relations(report.relations);
  if (multi.size() > 1) check(multi);
  return report;
}

// ---------------------------------------------------------------------------
// Artifactless copy

/// Each state keeps its label with probability 1 - epsilon and emits every other
/// symbol with probability epsilon / (K - 1). Transitions are untouched.
inline TabularEnv make_artifactless_copy(const TabularEnv& env, double epsilon) {
  env.validate();
  const int k = env.num_symbols();
  if (k < 2) throw config_error("an environment with a single observation symbol cannot be de-artifacted");
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw config_error("noise level must lie in (0, 1)");
  if (epsilon > static_cast<double>(k - 1) / k)
    throw config_error("noise level above (K-1)/K would make a substituted symbol likelier than the original");

  TabularEnv copy = env;
  const double spread = epsilon / (k - 1);
  for (auto& row : copy.emit) {
    std::vector<double> p(static_cast<std::size_t>(k), 0.0);
    for (const auto& [sym, q] : row) p[static_cast<std::size_t>(sym)] += q;
    std::vector<std::pair<int, double>> noisy;
    for (int y = 0; y < k; ++y) {
      KahanSum v;
      v.add((1.0 - epsilon) * p[static_cast<std::size_t>(y)]);
      for (int x = 0; x < k; ++x)
        if (x != y) v.add(spread * p[static_cast<std::size_t>(x)]);
      noisy.emplace_back(y, v.value());
    }
    row = std::move(noisy);
  }
  return copy;
}

}  // namespace extmem
