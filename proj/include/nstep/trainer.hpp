#pragma once

#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "nstep/env.hpp"
#include "nstep/net.hpp"
#include "nstep/replay.hpp"
#include "nstep/rng.hpp"
#include "nstep/targets.hpp"

namespace nstep::trainer {

enum class PolicySource { TargetNet, OnlineNet };

struct ExperimentConfig {
  targets::AlgorithmSpec algorithm;
  double epsilon = 0.1;
  double gamma = 1.0;
  int episodes = 500;
  int timeout_steps = 5000;
  int hidden_units = 1000;
  double alpha = 0.00025;
  double beta_g = 0.95;
  double beta_s = 0.95;
  double min_sq = 0.01;
  int buffer_capacity = 20000;
  int warmup_actions = 1000;
  int batch_size = 32;
  int target_sync_period = 1000;  // in training updates
  std::uint64_t seed = 0;
  PolicySource policy_source_for_targets = PolicySource::TargetNet;

  void validate() const {
    algorithm.validate();
    if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw std::invalid_argument("config: epsilon in [0,1]");
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw std::invalid_argument("config: gamma in [0,1]");
    if (episodes < 1) throw std::invalid_argument("config: episodes >= 1");
    if (timeout_steps < 1) throw std::invalid_argument("config: timeout_steps >= 1");
    if (hidden_units < 1) throw std::invalid_argument("config: hidden_units >= 1");
    if (!(alpha > 0.0)) throw std::invalid_argument("config: alpha > 0");
    if (buffer_capacity < 2) throw std::invalid_argument("config: buffer_capacity >= 2");
    if (warmup_actions < 0) throw std::invalid_argument("config: warmup_actions >= 0");
    if (batch_size < 1) throw std::invalid_argument("config: batch_size >= 1");
    if (target_sync_period < 1) throw std::invalid_argument("config: target_sync_period >= 1");
  }
};

struct EpisodeRecord {
  int episode_index = 0;
  double ret = 0.0;  // -steps: reward is -1 per step
  int steps = 0;
  bool timed_out = false;
};

struct RunDiagnostics {
  std::uint64_t env_steps = 0;
  std::uint64_t decision_steps_post_warmup = 0;
  std::uint64_t training_updates = 0;
  std::uint64_t target_syncs = 0;  // excluding the initial copy
  std::uint64_t terminal_entries = 0;
  std::uint64_t boundary_entries = 0;  // timeout and warmup-abandon entries
  std::uint64_t stored_entries = 0;
};

struct RunResult {
  ExperimentConfig config;
  std::uint64_t seed = 0;
  std::vector<EpisodeRecord> episodes;
  double wall_seconds = 0.0;
  RunDiagnostics diag;
};

// Fixed mode returns the configured sigma; decaying mode starts at 1 and
// loses 0.002 at each episode end, clamped at zero.
inline double sigma_schedule(const targets::AlgorithmSpec& spec, int episode_index) {
  if (episode_index < 0) throw std::invalid_argument("sigma_schedule: negative episode index");
  if (spec.sigma_mode == targets::SigmaMode::Fixed) return spec.sigma_value;
  const double s = targets::kSigmaDecayInitial - targets::kSigmaDecayPerEpisode * episode_index;
  return s > 0.0 ? s : 0.0;
}

namespace detail {

// Memo of target-network action values per buffer slot, keyed by the slot's
// store stamp and the target-network generation. Cached values are exactly
// what net::forward would return, so results are identical with or without
// the cache.
class TargetQCache {
 public:
  explicit TargetQCache(std::size_t capacity)
      : stamps_(capacity, 0), gens_(capacity, 0), q_(capacity) {}

  void bump_generation() { ++generation_; }

  const std::array<double, env::kNumActions>& get(std::uint32_t slot, std::uint64_t stamp,
                                                  const net::NetParams& target,
                                                  const std::array<double, 2>& state) {
    if (stamps_[slot] != stamp || gens_[slot] != generation_) {
      net::forward(target, state.data(), q_[slot].data());
      stamps_[slot] = stamp;
      gens_[slot] = generation_;
    }
    return q_[slot];
  }

 private:
  std::vector<std::uint64_t> stamps_;
  std::vector<std::uint64_t> gens_;
  std::vector<std::array<double, env::kNumActions>> q_;
  std::uint64_t generation_ = 1;
};

}  // namespace detail

// Executes one seeded training run: warmup with uniform random actions, then
// eps-greedy acting with one gradient update per decision step, sampling
// n-step segments from the replay buffer and building targets from the
// target network. inspect_buffer, when given, receives a copy of the final
// replay buffer (diagnostics only).
inline RunResult run(const ExperimentConfig& cfg, replay::ReplayBuffer* inspect_buffer = nullptr) {
  cfg.validate();
  const auto t_start = std::chrono::steady_clock::now();

  Rng rng(cfg.seed);
  net::NetParams online = net::init_params(cfg.hidden_units, env::kNumActions, rng,
                                           {env::kMaxPosition - env::kMinPosition, 2.0 * env::kMaxVelocity});
  net::NetParams target = net::sync_target(online);
  net::OptState opt(cfg.hidden_units, env::kNumActions, cfg.alpha);
  opt.beta_g = cfg.beta_g;
  opt.beta_s = cfg.beta_s;
  opt.min_sq = cfg.min_sq;
  net::NetParams grads(cfg.hidden_units, env::kNumActions);

  replay::ReplayBuffer buf(cfg.buffer_capacity);
  detail::TargetQCache cache(cfg.buffer_capacity);
  const net::NetParams* policy_net =
      cfg.policy_source_for_targets == PolicySource::OnlineNet ? &online : nullptr;
  const targets::FillNeeds needs = targets::fill_needs(cfg.algorithm);
  const bool policy_from_target = policy_net == nullptr;
  const bool want_interior_q = needs.interior_q || (needs.interior_pi && policy_from_target);
  const bool want_bootstrap_q = needs.bootstrap_q || (needs.bootstrap_pi && policy_from_target);

  RunResult result;
  result.config = cfg;
  result.seed = cfg.seed;

  const double uniform_prob = 1.0 / static_cast<double>(env::kNumActions);
  std::array<double, env::kNumActions> qbuf{};

  auto act_uniform = [&](const env::EnvState&) {
    return std::pair<int, double>(rng.uniform_int(env::kNumActions), uniform_prob);
  };
  auto act_eps_greedy = [&](const env::EnvState& s) {
    const double state[2] = {s.position, s.velocity};
    net::forward(online, state, qbuf.data());
    int greedy = 0;
    for (int a = 1; a < env::kNumActions; ++a) {
      if (qbuf[a] > qbuf[greedy]) greedy = a;
    }
    int a;
    if (rng.uniform01() < cfg.epsilon) {
      a = rng.uniform_int(env::kNumActions);
    } else {
      a = greedy;
    }
    const double prob = cfg.epsilon * uniform_prob + (a == greedy ? 1.0 - cfg.epsilon : 0.0);
    return std::pair<int, double>(a, prob);
  };

  auto store_entry = [&](const env::EnvState& s, int action, double reward, bool terminal,
                         bool first, double prob, double sigma) {
    replay::Transition t;
    t.state = {s.position, s.velocity};
    t.action = action;
    t.reward = first ? 0.0 : reward;
    t.terminal = terminal;
    t.first_step = first;
    t.stored_prob = first ? 0.0 : prob;
    t.stored_sigma = first ? 0.0 : sigma;
    buf.store(t);
  };

  auto do_update = [&]() {
    auto segs_opt = buf.sample_segments(cfg.batch_size, cfg.algorithm.n, rng);
    if (!segs_opt) return;  // nothing sampleable yet: keep acting
    std::vector<replay::Segment>& segs = *segs_opt;
    for (replay::Segment& seg : segs) {
      const int m = seg.reward_steps();
      const int last = seg.ends_terminal ? m - 1 : m;
      for (int i = 1; i <= last; ++i) {
        const bool want = i < m ? want_interior_q : want_bootstrap_q;
        if (want && seg.q[i].empty()) {
          const auto& q = cache.get(seg.slot_ids[i], seg.slot_stamps[i], target, seg.entries[i].state);
          seg.q[i].assign(q.begin(), q.end());
        }
      }
    }
    const std::vector<double> ts =
        targets::compute_targets(segs, cfg.algorithm, cfg.gamma, target, cfg.epsilon, policy_net);

    net::Minibatch mb;
    mb.inputs.reserve(segs.size());
    mb.action_indices.reserve(segs.size());
    mb.targets = ts;
    for (const replay::Segment& seg : segs) {
      mb.inputs.push_back(seg.entries[0].state);
      mb.action_indices.push_back(seg.entries[0].action);
    }
    const double loss = net::loss_and_gradients(online, mb, grads);
    if (!std::isfinite(loss)) {
      throw std::runtime_error("trainer: non-finite loss at update " +
                               std::to_string(result.diag.training_updates) +
                               " (loss=" + std::to_string(loss) + ")");
    }
    net::rmsprop_step(online, opt, grads);
    ++result.diag.training_updates;
    if (result.diag.training_updates % static_cast<std::uint64_t>(cfg.target_sync_period) == 0) {
      target = net::sync_target(online);
      cache.bump_generation();
      ++result.diag.target_syncs;
    }
  };

  env::EnvState s{};
  double pending_reward = 0.0;
  bool first = true;
  int ep_steps = 0;
  bool in_episode = false;

  auto begin_episode = [&]() {
    s = env::reset(rng);
    pending_reward = 0.0;
    first = true;
    ep_steps = 0;
    in_episode = true;
  };

  // Warmup: uniform random actions, no training updates, no episode records.
  double sigma_now = sigma_schedule(cfg.algorithm, 0);
  int warmup_left = cfg.warmup_actions;
  begin_episode();
  while (warmup_left > 0) {
    const auto [a, prob] = act_uniform(s);
    store_entry(s, a, pending_reward, false, first, prob, sigma_now);
    const env::StepOutcome out = env::step(s, a);
    --warmup_left;
    ++result.diag.env_steps;
    ++ep_steps;
    pending_reward = out.reward;
    s = out.next;
    first = false;
    if (out.terminal) {
      store_entry(s, 0, out.reward, true, false, 0.0, 0.0);
      ++result.diag.terminal_entries;
      in_episode = false;
      if (warmup_left > 0) begin_episode();
    } else if (ep_steps >= cfg.timeout_steps) {
      const auto [a2, p2] = act_uniform(s);
      store_entry(s, a2, pending_reward, false, false, p2, sigma_now);
      ++result.diag.boundary_entries;
      in_episode = false;
      if (warmup_left > 0) begin_episode();
    }
  }
  if (in_episode && ep_steps > 0) {
    // Abandon the warmup episode at the data boundary, like a timeout.
    const auto [a2, p2] = act_uniform(s);
    store_entry(s, a2, pending_reward, false, false, p2, sigma_now);
    ++result.diag.boundary_entries;
  }

  result.episodes.reserve(cfg.episodes);
  for (int ep = 0; ep < cfg.episodes; ++ep) {
    sigma_now = sigma_schedule(cfg.algorithm, ep);
    begin_episode();
    bool timed_out = false;
    while (true) {
      const auto [a, prob] = act_eps_greedy(s);
      store_entry(s, a, pending_reward, false, first, prob, sigma_now);
      ++result.diag.decision_steps_post_warmup;
      do_update();
      const env::StepOutcome out = env::step(s, a);
      ++result.diag.env_steps;
      ++ep_steps;
      pending_reward = out.reward;
      s = out.next;
      first = false;
      if (out.terminal) {
        store_entry(s, 0, out.reward, true, false, 0.0, 0.0);
        ++result.diag.terminal_entries;
        break;
      }
      if (ep_steps >= cfg.timeout_steps) {
        const auto [a2, p2] = act_eps_greedy(s);
        store_entry(s, a2, pending_reward, false, false, p2, sigma_now);
        ++result.diag.boundary_entries;
        timed_out = true;
        break;
      }
    }
    result.episodes.push_back({ep, -static_cast<double>(ep_steps), ep_steps, timed_out});
  }

  result.diag.stored_entries = buf.total_stores();
  result.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  if (inspect_buffer != nullptr) *inspect_buffer = buf;
  return result;
}

}  // namespace nstep::trainer
