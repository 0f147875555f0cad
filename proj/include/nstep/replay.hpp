#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

#include "nstep/rng.hpp"

namespace nstep::replay {

// One buffer entry: the state S_k, the action chosen at S_k, the reward
// received on arrival at S_k, and the behavior probability / sigma recorded
// at storage time. Reward, probability and sigma are zero on the first entry
// of an episode; terminal entries carry sentinel zeros for action, prob and
// sigma and end their episode.
struct Transition {
  std::array<double, 2> state{0.0, 0.0};
  int action = 0;
  double reward = 0.0;
  bool terminal = false;
  bool first_step = false;
  double stored_prob = 0.0;
  double stored_sigma = 0.0;
};

// A contiguous same-episode slice used to build one n-step target.
// entries[0] is the (S,A) being updated; entries[1..m] supply the m reward
// steps. q[i] / pi[i] hold target-network action values and update-policy
// probabilities at entries[i].state for i in [1, m]; index m is the
// bootstrap state and is absent (empty) when the segment ends terminal.
// Empty vectors mean "not filled yet" (targets::compute_targets fills them).
struct Segment {
  std::vector<Transition> entries;
  bool ends_terminal = false;
  std::vector<std::vector<double>> q;
  std::vector<std::vector<double>> pi;
  // Buffer provenance of each entry, used by callers that cache network
  // evaluations per slot. Empty for hand-built segments.
  std::vector<std::uint32_t> slot_ids;
  std::vector<std::uint64_t> slot_stamps;

  int reward_steps() const { return static_cast<int>(entries.size()) - 1; }
};

enum class TruncationReason { FullBackup, Terminal, DataBoundary };

inline TruncationReason truncation_reason(const Segment& seg, int n) {
  if (seg.ends_terminal) return TruncationReason::Terminal;
  return seg.reward_steps() == n ? TruncationReason::FullBackup
                                 : TruncationReason::DataBoundary;
}

// Circular experience buffer. Oldest entries are overwritten first; episode
// structure is recoverable from the first_step/terminal flags alone.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity < 2) throw std::invalid_argument("ReplayBuffer: capacity < 2");
    slots_.resize(capacity);
    stamps_.assign(capacity, 0);
  }

  std::size_t capacity() const { return capacity_; }
  std::size_t size() const { return count_; }
  std::size_t write_index() const { return write_index_; }
  std::uint64_t total_stores() const { return total_stores_; }

  const Transition& at(std::size_t slot) const { return slots_[slot]; }
  std::uint64_t stamp(std::size_t slot) const { return stamps_[slot]; }

  void store(const Transition& t) {
    if (t.first_step && (t.reward != 0.0 || t.stored_prob != 0.0 || t.stored_sigma != 0.0)) {
      throw std::invalid_argument("ReplayBuffer::store: first-step entry must zero reward/prob/sigma");
    }
    if (t.first_step && t.terminal) {
      throw std::invalid_argument("ReplayBuffer::store: entry cannot be both first and terminal");
    }
    if (!(t.stored_prob >= 0.0 && t.stored_prob <= 1.0) ||
        !(t.stored_sigma >= 0.0 && t.stored_sigma <= 1.0) || !std::isfinite(t.reward)) {
      throw std::invalid_argument("ReplayBuffer::store: entry fields out of range");
    }
    slots_[write_index_] = t;
    stamps_[write_index_] = ++total_stores_;
    write_index_ = (write_index_ + 1) % capacity_;
    if (count_ < capacity_) ++count_;
  }

  bool occupied(std::size_t slot) const {
    return count_ == capacity_ || slot < count_;
  }

  // A start index is sampleable when its entry is live and non-terminal and
  // its cyclic successor is live, same-episode, and does not cross the
  // overwrite seam at write_index.
  bool sampleable(std::size_t slot) const {
    if (!occupied(slot) || slots_[slot].terminal) return false;
    const std::size_t succ = (slot + 1) % capacity_;
    if (succ == write_index_) return false;
    return !slots_[succ].first_step;
  }

  std::vector<std::size_t> sampleable_indices() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < capacity_; ++i) {
      if (sampleable(i)) out.push_back(i);
    }
    return out;
  }

  // Extends forward from `start` for up to n reward steps, stopping early at
  // a terminal entry, before the next episode's first entry, or before the
  // overwrite seam.
  Segment segment_from(std::size_t start, int n) const {
    Segment seg;
    seg.entries.push_back(slots_[start]);
    seg.slot_ids.push_back(static_cast<std::uint32_t>(start));
    seg.slot_stamps.push_back(stamps_[start]);
    std::size_t cur = start;
    for (int step = 0; step < n; ++step) {
      const std::size_t succ = (cur + 1) % capacity_;
      if (succ == write_index_) break;
      const Transition& next = slots_[succ];
      if (next.first_step) break;
      seg.entries.push_back(next);
      seg.slot_ids.push_back(static_cast<std::uint32_t>(succ));
      seg.slot_stamps.push_back(stamps_[succ]);
      if (next.terminal) {
        seg.ends_terminal = true;
        break;
      }
      cur = succ;
    }
    seg.q.resize(seg.entries.size());
    seg.pi.resize(seg.entries.size());
    return seg;
  }

  // batch_size starts drawn uniformly with replacement from the sampleable
  // set. Returns nullopt when nothing is sampleable yet.
  std::optional<std::vector<Segment>> sample_segments(int batch_size, int n, Rng& rng) const {
    if (batch_size < 1 || n < 1) {
      throw std::invalid_argument("sample_segments: batch_size and n must be >= 1");
    }
    std::vector<Segment> out;
    out.reserve(batch_size);
    // Rejection sampling over slots is uniform over the sampleable subset;
    // fall back to explicit enumeration if the subset is sparse.
    const int max_attempts = 64 * batch_size;
    int attempts = 0;
    while (static_cast<int>(out.size()) < batch_size && attempts < max_attempts) {
      ++attempts;
      const std::size_t slot = static_cast<std::size_t>(rng.uniform_int(static_cast<int>(capacity_)));
      if (sampleable(slot)) out.push_back(segment_from(slot, n));
    }
    if (static_cast<int>(out.size()) < batch_size) {
      const std::vector<std::size_t> idx = sampleable_indices();
      if (idx.empty()) return std::nullopt;
      while (static_cast<int>(out.size()) < batch_size) {
        out.push_back(segment_from(idx[rng.uniform_int(static_cast<int>(idx.size()))], n));
      }
    }
    return out;
  }

 private:
  std::size_t capacity_;
  std::vector<Transition> slots_;
  std::vector<std::uint64_t> stamps_;
  std::size_t write_index_ = 0;
  std::size_t count_ = 0;
  std::uint64_t total_stores_ = 0;
};

}  // namespace nstep::replay
