#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "nstep/rng.hpp"

namespace nstep::net {

// Fully-connected 2 -> hidden (ReLU) -> num_actions (linear) action-value
// network. Weights are stored row-major; the same struct doubles as a
// gradient buffer since shapes match.
struct NetParams {
  int hidden = 0;
  int num_actions = 0;
  std::vector<double> w1;  // hidden x 2
  std::vector<double> b1;  // hidden
  std::vector<double> w2;  // num_actions x hidden
  std::vector<double> b2;  // num_actions

  NetParams() = default;
  NetParams(int hidden_units, int actions)
      : hidden(hidden_units),
        num_actions(actions),
        w1(static_cast<std::size_t>(hidden_units) * 2, 0.0),
        b1(hidden_units, 0.0),
        w2(static_cast<std::size_t>(actions) * hidden_units, 0.0),
        b2(actions, 0.0) {}

  std::size_t param_count() const {
    return w1.size() + b1.size() + w2.size() + b2.size();
  }

  void fill(double v) {
    std::fill(w1.begin(), w1.end(), v);
    std::fill(b1.begin(), b1.end(), v);
    std::fill(w2.begin(), w2.end(), v);
    std::fill(b2.begin(), b2.end(), v);
  }
};

// Centered RMSprop accumulators, one pair per parameter, initialized to zero.
struct OptState {
  double alpha = 0.00025;
  double beta_g = 0.95;
  double beta_s = 0.95;
  double min_sq = 0.01;
  NetParams g;  // gradient momentum
  NetParams s;  // squared-gradient momentum

  OptState() = default;
  OptState(int hidden_units, int actions, double lr)
      : alpha(lr), g(hidden_units, actions), s(hidden_units, actions) {}
};

struct Minibatch {
  std::vector<std::array<double, 2>> inputs;
  std::vector<int> action_indices;
  std::vector<double> targets;

  std::size_t size() const { return inputs.size(); }
};

// Weights and biases uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)], with the
// first-layer range divided by each input's span so both inputs move the
// pre-activations comparably at the start. Nonzero hidden biases matter too:
// with all-zero b1 every ReLU boundary passes through the state-space origin
// and the early value surface is linear over the start region. Both defects
// leave mountain-car runs stuck in the timeout regime.
template <class R>
NetParams init_params(int hidden_units, int actions, R& rng,
                      const std::array<double, 2>& input_ranges = {1.0, 1.0}) {
  NetParams p(hidden_units, actions);
  const double r1 = 1.0 / std::sqrt(2.0);
  for (int j = 0; j < hidden_units; ++j) {
    p.w1[2 * j] = rng.uniform(-r1, r1) / input_ranges[0];
    p.w1[2 * j + 1] = rng.uniform(-r1, r1) / input_ranges[1];
  }
  for (double& b : p.b1) b = rng.uniform(-r1, r1);
  const double r2 = 1.0 / std::sqrt(static_cast<double>(hidden_units));
  for (double& w : p.w2) w = rng.uniform(-r2, r2);
  for (double& b : p.b2) b = rng.uniform(-r2, r2);
  return p;
}

inline void forward(const NetParams& p, const double state[2], double* q_out) {
  const int h = p.hidden;
  const int a_n = p.num_actions;
  const double s0 = state[0];
  const double s1 = state[1];
  for (int a = 0; a < a_n; ++a) q_out[a] = p.b2[a];
  const double* w1 = p.w1.data();
  const double* w2 = p.w2.data();
  for (int j = 0; j < h; ++j) {
    const double z = w1[2 * j] * s0 + w1[2 * j + 1] * s1 + p.b1[j];
    if (z > 0.0) {
      for (int a = 0; a < a_n; ++a) q_out[a] += w2[static_cast<std::size_t>(a) * h + j] * z;
    }
  }
}

inline std::vector<double> forward(const NetParams& p, const std::array<double, 2>& state) {
  std::vector<double> q(p.num_actions);
  forward(p, state.data(), q.data());
  return q;
}

// Mean squared error over the batch against fixed targets; gradients flow
// only through the predicted value of the taken action.
inline double loss_and_gradients(const NetParams& p, const Minibatch& batch, NetParams& grads) {
  const int h = p.hidden;
  const std::size_t b_n = batch.size();
  if (batch.action_indices.size() != b_n || batch.targets.size() != b_n || b_n == 0) {
    throw std::invalid_argument("loss_and_gradients: malformed minibatch");
  }
  for (double t : batch.targets) {
    if (!std::isfinite(t)) {
      throw std::invalid_argument("loss_and_gradients: non-finite target");
    }
  }
  if (grads.hidden != p.hidden || grads.num_actions != p.num_actions) {
    grads = NetParams(p.hidden, p.num_actions);
  } else {
    grads.fill(0.0);
  }

  std::vector<double> hid(h);
  std::vector<double> dz(h);
  const double inv_b = 1.0 / static_cast<double>(b_n);
  double loss = 0.0;
  for (std::size_t i = 0; i < b_n; ++i) {
    const double s0 = batch.inputs[i][0];
    const double s1 = batch.inputs[i][1];
    const int a = batch.action_indices[i];
    if (a < 0 || a >= p.num_actions) {
      throw std::invalid_argument("loss_and_gradients: action index out of range");
    }
    const double* w1 = p.w1.data();
    const double* w2row = p.w2.data() + static_cast<std::size_t>(a) * h;
    // Same accumulation order as net::forward, so a target computed from
    // forward() reproduces exactly.
    double q = p.b2[a];
    for (int j = 0; j < h; ++j) {
      const double z = w1[2 * j] * s0 + w1[2 * j + 1] * s1 + p.b1[j];
      const double hj = z > 0.0 ? z : 0.0;
      hid[j] = hj;
      q += w2row[j] * hj;
    }
    const double err = q - batch.targets[i];
    loss += err * err * inv_b;

    // d loss / d q = 2/B * (q - target)
    const double e = 2.0 * inv_b * err;
    double* gw2row = grads.w2.data() + static_cast<std::size_t>(a) * h;
    double* gw1 = grads.w1.data();
    double* gb1 = grads.b1.data();
    grads.b2[a] += e;
    for (int k = 0; k < h; ++k) {
      gw2row[k] += e * hid[k];
      dz[k] = hid[k] > 0.0 ? e * w2row[k] : 0.0;
    }
    for (int k = 0; k < h; ++k) gb1[k] += dz[k];
    for (int k = 0; k < h; ++k) {
      gw1[2 * k] += dz[k] * s0;
      gw1[2 * k + 1] += dz[k] * s1;
    }
  }
  return loss;
}

// g <- 0.95 g + 0.05 grad;  s <- 0.95 s + 0.05 grad^2;
// theta <- theta - alpha * grad / sqrt(s - g^2 + min_sq)
inline void rmsprop_step(NetParams& p, OptState& o, const NetParams& grads) {
  auto apply = [&o](std::vector<double>& theta, std::vector<double>& g,
                    std::vector<double>& s, const std::vector<double>& grad) {
    const double bg = o.beta_g;
    const double bs = o.beta_s;
    const double one_bg = 1.0 - bg;
    const double one_bs = 1.0 - bs;
    const std::size_t n = theta.size();
    double min_denom = 1.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = grad[i];
      const double gi = bg * g[i] + one_bg * d;
      const double si = bs * s[i] + one_bs * d * d;
      g[i] = gi;
      s[i] = si;
      const double denom_sq = si - gi * gi + o.min_sq;
      min_denom = denom_sq < min_denom ? denom_sq : min_denom;
      theta[i] -= o.alpha * d / std::sqrt(denom_sq);
    }
    // s - g^2 >= 0 holds for any EMA pair, so min_sq keeps this positive.
    if (!(min_denom > 0.0)) {
      throw std::logic_error("rmsprop_step: non-positive denominator");
    }
  };
  apply(p.w1, o.g.w1, o.s.w1, grads.w1);
  apply(p.b1, o.g.b1, o.s.b1, grads.b1);
  apply(p.w2, o.g.w2, o.s.w2, grads.w2);
  apply(p.b2, o.g.b2, o.s.b2, grads.b2);
}

// Value copy; the returned params are unaffected by later online updates.
inline NetParams sync_target(const NetParams& online) { return online; }

// Checkpoint format: 16-byte header (8-byte magic, u32 hidden, u32 actions,
// both little-endian) followed by all parameters as little-endian f64 in
// declaration order (w1 row-major, b1, w2 row-major, b2).
inline constexpr char kSnapshotMagic[8] = {'N', 'S', 'Q', 'P', 'A', 'R', 'M', '1'};

namespace detail {

inline void put_u32_le(std::ostream& os, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(b, 4);
}

inline std::uint32_t get_u32_le(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

inline void put_f64_le(std::ostream& os, double d) {
  std::uint64_t bits;
  std::memcpy(&bits, &d, 8);
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
  os.write(b, 8);
}

inline double get_f64_le(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  double d;
  std::memcpy(&d, &bits, 8);
  return d;
}

}  // namespace detail

inline void save_params(const NetParams& p, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("save_params: cannot open " + path);
  os.write(kSnapshotMagic, 8);
  detail::put_u32_le(os, static_cast<std::uint32_t>(p.hidden));
  detail::put_u32_le(os, static_cast<std::uint32_t>(p.num_actions));
  for (const auto* vec : {&p.w1, &p.b1, &p.w2, &p.b2}) {
    for (double d : *vec) detail::put_f64_le(os, d);
  }
  if (!os) throw std::runtime_error("save_params: write failed for " + path);
}

inline NetParams load_params(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("load_params: cannot open " + path);
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kSnapshotMagic, 8) != 0) {
    throw std::runtime_error("load_params: bad magic in " + path);
  }
  const int hidden = static_cast<int>(detail::get_u32_le(is));
  const int actions = static_cast<int>(detail::get_u32_le(is));
  NetParams p(hidden, actions);
  for (auto* vec : {&p.w1, &p.b1, &p.w2, &p.b2}) {
    for (double& d : *vec) d = detail::get_f64_le(is);
  }
  if (!is) throw std::runtime_error("load_params: truncated file " + path);
  return p;
}

}  // namespace nstep::net
