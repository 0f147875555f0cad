#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "nstep/net.hpp"
#include "nstep/replay.hpp"

namespace nstep::targets {

using replay::Segment;
using replay::Transition;

enum class Family { Sarsa, TreeBackup, QSigma, Retrace, QLearning };

enum class SigmaMode { Fixed, Decaying };

inline constexpr double kSigmaDecayInitial = 1.0;
inline constexpr double kSigmaDecayPerEpisode = 0.002;

// Which target family to build, how long the backup is, and how it treats
// the behavior/update policy mismatch. Tree Backup and Retrace are
// intrinsically corrected and Q-learning intrinsically uncorrected, so all
// three ignore off_policy_correction.
struct AlgorithmSpec {
  Family family = Family::Sarsa;
  int n = 1;
  bool off_policy_correction = false;
  SigmaMode sigma_mode = SigmaMode::Fixed;
  double sigma_value = 0.5;  // fixed mode only
  double cutoff_k = 1.0;     // Retrace only

  void validate() const {
    if (n < 1) throw std::invalid_argument("AlgorithmSpec: n must be >= 1");
    if (!(sigma_value >= 0.0 && sigma_value <= 1.0)) {
      throw std::invalid_argument("AlgorithmSpec: sigma must be in [0,1]");
    }
    if (!(cutoff_k > 0.0)) throw std::invalid_argument("AlgorithmSpec: cutoff_k must be > 0");
  }
};

inline const char* family_name(Family f) {
  switch (f) {
    case Family::Sarsa: return "sarsa";
    case Family::TreeBackup: return "tree_backup";
    case Family::QSigma: return "qsigma";
    case Family::Retrace: return "retrace";
    case Family::QLearning: return "qlearning";
  }
  return "?";
}

struct PolicyDist {
  std::vector<double> probs;

  void validate() const {
    double sum = 0.0;
    for (double p : probs) {
      if (!(p >= 0.0)) throw std::invalid_argument("PolicyDist: negative probability");
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-12) {
      throw std::invalid_argument("PolicyDist: probabilities must sum to 1");
    }
  }
};

// probs[a] = eps/|A| + (1-eps) on the greedy action; ties go to the lowest
// action index.
inline PolicyDist epsilon_greedy_probs(const std::vector<double>& q, double epsilon) {
  if (q.empty()) throw std::invalid_argument("epsilon_greedy_probs: empty action values");
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) {
    throw std::invalid_argument("epsilon_greedy_probs: epsilon must be in [0,1]");
  }
  std::size_t greedy = 0;
  for (std::size_t a = 1; a < q.size(); ++a) {
    if (q[a] > q[greedy]) greedy = a;
  }
  PolicyDist d;
  d.probs.assign(q.size(), epsilon / static_cast<double>(q.size()));
  d.probs[greedy] += 1.0 - epsilon;
  return d;
}

// pi / mu with a guard against degenerate stored probabilities.
inline double importance_ratio(double pi_prob, double stored_prob) {
  if (stored_prob < 1e-9) {
    throw std::domain_error("importance ratio: stored behavior probability below 1e-9");
  }
  return pi_prob / stored_prob;
}

namespace detail {

inline void require(bool cond, const char* msg) {
  if (!cond) throw std::invalid_argument(msg);
}

inline void check_segment(const Segment& seg, double gamma, bool need_interior,
                          bool need_pi) {
  require(seg.reward_steps() >= 1, "segment has zero reward steps");
  require(gamma >= 0.0 && gamma <= 1.0, "gamma must be in [0,1]");
  const int m = seg.reward_steps();
  require(static_cast<int>(seg.q.size()) == m + 1 && static_cast<int>(seg.pi.size()) == m + 1,
          "segment q/pi vectors must be sized entries.size()");
  if (!seg.ends_terminal) {
    require(!seg.q[m].empty(), "missing bootstrap action values on non-terminal segment");
    require(seg.entries[m].action >= 0 &&
                seg.entries[m].action < static_cast<int>(seg.q[m].size()),
            "bootstrap action out of range");
    if (need_pi) require(!seg.pi[m].empty(), "missing bootstrap policy on non-terminal segment");
  }
  if (need_interior || need_pi) {
    const int last = seg.ends_terminal ? m - 1 : m;
    for (int i = 1; i <= last; ++i) {
      if (need_interior) require(!seg.q[i].empty(), "missing interior action values");
      if (need_pi) require(!seg.pi[i].empty(), "missing interior policy");
      const std::size_t width = need_interior ? seg.q[i].size() : seg.pi[i].size();
      require(seg.entries[i].action >= 0 && seg.entries[i].action < static_cast<int>(width),
              "interior action out of range");
    }
  }
}

inline double expected_q(const std::vector<double>& pi, const std::vector<double>& q) {
  double e = 0.0;
  for (std::size_t a = 0; a < q.size(); ++a) e += pi[a] * q[a];
  return e;
}

inline double off_action_value(const std::vector<double>& pi, const std::vector<double>& q,
                               int taken) {
  double e = 0.0;
  for (std::size_t a = 0; a < q.size(); ++a) {
    if (static_cast<int>(a) != taken) e += pi[a] * q[a];
  }
  return e;
}

}  // namespace detail

// n-step Sarsa. On-policy: discounted reward sum bootstrapped at the stored
// (S,A) of the last entry. Off-policy: each recursion level multiplies the
// tail by the per-decision ratio pi(A|S)/stored_prob.
inline double sarsa_target(const Segment& seg, double gamma, const AlgorithmSpec& spec) {
  detail::check_segment(seg, gamma, false, spec.off_policy_correction);
  const int m = seg.reward_steps();
  double g;
  if (seg.ends_terminal) {
    g = seg.entries[m].reward;
  } else {
    const Transition& e = seg.entries[m];
    double tail = seg.q[m][e.action];
    if (spec.off_policy_correction) {
      tail *= importance_ratio(seg.pi[m][e.action], e.stored_prob);
    }
    g = e.reward + gamma * tail;
  }
  for (int i = m - 1; i >= 1; --i) {
    const Transition& e = seg.entries[i];
    double w = 1.0;
    if (spec.off_policy_correction) {
      w = importance_ratio(seg.pi[i][e.action], e.stored_prob);
    }
    g = e.reward + gamma * w * g;
  }
  return g;
}

// n-step Tree Backup: the taken action continues the backup weighted by its
// update-policy probability; all other actions terminate with their stored
// action values.
inline double tree_backup_target(const Segment& seg, double gamma, const AlgorithmSpec&) {
  detail::check_segment(seg, gamma, true, true);
  const int m = seg.reward_steps();
  double g;
  if (seg.ends_terminal) {
    g = seg.entries[m].reward;
  } else {
    const Transition& e = seg.entries[m];
    g = e.reward + gamma * (seg.pi[m][e.action] * seg.q[m][e.action] +
                            detail::off_action_value(seg.pi[m], seg.q[m], e.action));
  }
  for (int i = m - 1; i >= 1; --i) {
    const Transition& e = seg.entries[i];
    g = e.reward + gamma * (seg.pi[i][e.action] * g +
                            detail::off_action_value(seg.pi[i], seg.q[i], e.action));
  }
  return g;
}

// n-step Q(sigma): per level, sigma blends the sampled (Sarsa) continuation
// with the Tree Backup expectation. sigma at each level is the value stored
// with that transition. Off-policy additionally weights the sampled part by
// the importance ratio.
inline double qsigma_target(const Segment& seg, double gamma, const AlgorithmSpec& spec) {
  detail::check_segment(seg, gamma, true, true);
  const int m = seg.reward_steps();
  const bool off = spec.off_policy_correction;
  auto level = [&seg, gamma, off](int i, double tail) {
    const Transition& e = seg.entries[i];
    const double sigma = e.stored_sigma;
    double cont = (1.0 - sigma) * seg.pi[i][e.action];
    if (sigma > 0.0) {
      const double rho = off ? importance_ratio(seg.pi[i][e.action], e.stored_prob) : 1.0;
      cont += sigma * rho;
    }
    return e.reward + gamma * (cont * tail +
                               (1.0 - sigma) * detail::off_action_value(seg.pi[i], seg.q[i], e.action));
  };
  double g;
  if (seg.ends_terminal) {
    g = seg.entries[m].reward;
  } else {
    g = level(m, seg.q[m][seg.entries[m].action]);
  }
  for (int i = m - 1; i >= 1; --i) g = level(i, g);
  return g;
}

// Trace coefficient for Retrace; the default is the truncated importance
// ratio min(k, rho).
using TraceCoeff =
    std::function<double(const std::vector<double>& pi, double stored_prob, int action, double cutoff_k)>;

inline double default_trace_coeff(const std::vector<double>& pi, double stored_prob, int action,
                                  double cutoff_k) {
  return std::min(cutoff_k, importance_ratio(pi[action], stored_prob));
}

// n-step Retrace: truncated-ratio continuation with an expectation
// correction term at every level.
inline double retrace_target(const Segment& seg, double gamma, const AlgorithmSpec& spec,
                             const TraceCoeff& coeff) {
  detail::check_segment(seg, gamma, true, true);
  const int m = seg.reward_steps();
  auto level = [&](int i, double tail) {
    const Transition& e = seg.entries[i];
    const double c = coeff(seg.pi[i], e.stored_prob, e.action, spec.cutoff_k);
    if (c > spec.cutoff_k + 1e-12) {
      throw std::logic_error("retrace_target: trace coefficient exceeds cutoff");
    }
    return e.reward + gamma * (c * tail + detail::expected_q(seg.pi[i], seg.q[i]) -
                               c * seg.q[i][e.action]);
  };
  double g;
  if (seg.ends_terminal) {
    g = seg.entries[m].reward;
  } else {
    g = level(m, seg.q[m][seg.entries[m].action]);
  }
  for (int i = m - 1; i >= 1; --i) g = level(i, g);
  return g;
}

inline double retrace_target(const Segment& seg, double gamma, const AlgorithmSpec& spec) {
  return retrace_target(seg, gamma, spec, default_trace_coeff);
}

// n-step Q-learning: uncorrected discounted reward sum with a max bootstrap.
inline double qlearning_target(const Segment& seg, double gamma, const AlgorithmSpec&) {
  detail::check_segment(seg, gamma, false, false);
  const int m = seg.reward_steps();
  double g;
  if (seg.ends_terminal) {
    g = seg.entries[m].reward;
  } else {
    const std::vector<double>& q = seg.q[m];
    g = seg.entries[m].reward + gamma * *std::max_element(q.begin(), q.end());
  }
  for (int i = m - 1; i >= 1; --i) g = seg.entries[i].reward + gamma * g;
  return g;
}

// What segment data a family actually reads. interior refers to entries
// 1..m-1, bootstrap to entry m of a non-terminal segment.
struct FillNeeds {
  bool interior_q = false;
  bool interior_pi = false;
  bool bootstrap_q = false;
  bool bootstrap_pi = false;
};

inline FillNeeds fill_needs(const AlgorithmSpec& spec) {
  switch (spec.family) {
    case Family::Sarsa:
      return {false, spec.off_policy_correction, true, spec.off_policy_correction};
    case Family::QLearning:
      return {false, false, true, false};
    case Family::TreeBackup:
    case Family::QSigma:
    case Family::Retrace:
      return {true, true, true, true};
  }
  return {};
}

// Fills the q/pi slots a family needs, leaving already-filled slots alone.
// Action values come from the target network; policy probabilities are
// eps-greedy over policy_net when given, otherwise over the same target-net
// values.
inline void fill_segment(Segment& seg, const AlgorithmSpec& spec, const net::NetParams& target_net,
                         double epsilon, const net::NetParams* policy_net = nullptr) {
  const int m = seg.reward_steps();
  if (m < 1) throw std::invalid_argument("fill_segment: segment has zero reward steps");
  if (static_cast<int>(seg.q.size()) != m + 1) seg.q.resize(m + 1);
  if (static_cast<int>(seg.pi.size()) != m + 1) seg.pi.resize(m + 1);
  const FillNeeds needs = fill_needs(spec);
  const int last = seg.ends_terminal ? m - 1 : m;
  for (int i = 1; i <= last; ++i) {
    bool need_q = i < m ? needs.interior_q : needs.bootstrap_q;
    const bool need_pi = i < m ? needs.interior_pi : needs.bootstrap_pi;
    if (need_pi && policy_net == nullptr) need_q = true;  // policy derives from target-net values
    if (need_q && seg.q[i].empty()) {
      seg.q[i] = net::forward(target_net, seg.entries[i].state);
    }
    if (need_pi && seg.pi[i].empty()) {
      seg.pi[i] = policy_net
                      ? epsilon_greedy_probs(net::forward(*policy_net, seg.entries[i].state), epsilon).probs
                      : epsilon_greedy_probs(seg.q[i], epsilon).probs;
    }
  }
}

inline double dispatch_target(const Segment& seg, double gamma, const AlgorithmSpec& spec) {
  switch (spec.family) {
    case Family::Sarsa: return sarsa_target(seg, gamma, spec);
    case Family::TreeBackup: return tree_backup_target(seg, gamma, spec);
    case Family::QSigma: return qsigma_target(seg, gamma, spec);
    case Family::Retrace: return retrace_target(seg, gamma, spec);
    case Family::QLearning: return qlearning_target(seg, gamma, spec);
  }
  throw std::logic_error("dispatch_target: unknown family");
}

// Fills per-step data from the target network and dispatches each segment to
// its family-specific target.
inline std::vector<double> compute_targets(std::vector<Segment>& segments, const AlgorithmSpec& spec,
                                           double gamma, const net::NetParams& target_net,
                                           double epsilon, const net::NetParams* policy_net = nullptr) {
  spec.validate();
  std::vector<double> out;
  out.reserve(segments.size());
  for (std::size_t i = 0; i < segments.size(); ++i) {
    try {
      fill_segment(segments[i], spec, target_net, epsilon, policy_net);
      out.push_back(dispatch_target(segments[i], gamma, spec));
    } catch (const std::exception& e) {
      throw std::runtime_error("compute_targets: segment " + std::to_string(i) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace nstep::targets
