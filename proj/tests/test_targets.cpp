#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "nstep/net.hpp"
#include "nstep/rng.hpp"
#include "nstep/targets.hpp"
#include "oracles.hpp"

using namespace nstep;
using targets::AlgorithmSpec;
using targets::Family;
using replay::Segment;
using replay::Transition;

namespace {

struct Level {
  double reward = -1.0;
  int action = 0;
  double stored_prob = 1.0;
  double stored_sigma = 0.0;
  std::vector<double> q;
  std::vector<double> pi;
};

Segment build_segment(bool terminal, std::vector<Level> levels, int start_action = 0) {
  Segment seg;
  seg.ends_terminal = terminal;
  Transition start;
  start.state = {-0.5, 0.0};
  start.action = start_action;
  seg.entries.push_back(start);
  const int m = static_cast<int>(levels.size());
  seg.q.resize(m + 1);
  seg.pi.resize(m + 1);
  for (int i = 1; i <= m; ++i) {
    const Level& lv = levels[i - 1];
    Transition t;
    t.state = {-0.4, 0.0};
    t.reward = lv.reward;
    if (terminal && i == m) {
      t.terminal = true;
      t.action = 0;
      t.stored_prob = 0.0;
      t.stored_sigma = 0.0;
    } else {
      t.action = lv.action;
      t.stored_prob = lv.stored_prob;
      t.stored_sigma = lv.stored_sigma;
      seg.q[i] = lv.q;
      seg.pi[i] = lv.pi;
    }
    seg.entries.push_back(t);
  }
  return seg;
}

AlgorithmSpec spec_of(Family f, int n = 1, bool off = false) {
  AlgorithmSpec s;
  s.family = f;
  s.n = n;
  s.off_policy_correction = off;
  return s;
}

double target_of(const Segment& seg, double gamma, const AlgorithmSpec& spec) {
  return targets::dispatch_target(seg, gamma, spec);
}

constexpr Family kAllFamilies[] = {Family::Sarsa, Family::TreeBackup, Family::QSigma,
                                   Family::Retrace, Family::QLearning};

}  // namespace

TEST_CASE("epsilon-greedy probabilities") {
  SECTION("greedy mass plus exploration") {
    const auto d = targets::epsilon_greedy_probs({2.0, 1.0, 1.0}, 0.1);
    CHECK(d.probs[0] == Catch::Approx(0.9 + 0.1 / 3).margin(1e-12));
    CHECK(d.probs[1] == Catch::Approx(0.1 / 3).margin(1e-12));
    CHECK(d.probs[2] == Catch::Approx(0.1 / 3).margin(1e-12));
    d.validate();
  }
  SECTION("pure exploration") {
    const auto d = targets::epsilon_greedy_probs({9.0, -3.0, 0.0}, 1.0);
    for (double p : d.probs) CHECK(p == Catch::Approx(1.0 / 3).margin(1e-15));
  }
  SECTION("ties break toward the lowest index") {
    const auto d = targets::epsilon_greedy_probs({5.0, 5.0, 0.0}, 0.1);
    CHECK(d.probs[0] == Catch::Approx(0.9 + 0.1 / 3).margin(1e-12));
    CHECK(d.probs[1] == Catch::Approx(0.1 / 3).margin(1e-12));
  }
  SECTION("bad inputs") {
    CHECK_THROWS_AS(targets::epsilon_greedy_probs({}, 0.1), std::invalid_argument);
    CHECK_THROWS_AS(targets::epsilon_greedy_probs({1.0}, 1.5), std::invalid_argument);
  }
}

TEST_CASE("one-step terminal segment returns the reward for every family") {
  const Segment seg = build_segment(true, {{-1.0}});
  for (Family f : kAllFamilies) {
    AlgorithmSpec s = spec_of(f, 1);
    CHECK(target_of(seg, 1.0, s) == -1.0);
    s.off_policy_correction = true;
    CHECK(target_of(seg, 1.0, s) == -1.0);
  }
}

TEST_CASE("sarsa examples") {
  SECTION("on-policy two-step sum") {
    const Segment seg = build_segment(
        false, {{-1.0, 0, 1.0, 0.0, {}, {}},
                {-1.0, 1, 1.0, 0.0, {-7.0, -10.0, -3.0}, {0.2, 0.5, 0.3}}});
    CHECK(targets::sarsa_target(seg, 1.0, spec_of(Family::Sarsa, 2)) == Catch::Approx(-12.0));
  }
  SECTION("off-policy per-decision ratios") {
    // rho_1 = 0.5 at the first recursion level, rho_2 = 1 at the bootstrap.
    const Segment seg = build_segment(
        false, {{-1.0, 0, 0.8, 0.0, {0.0, 0.0, 0.0}, {0.4, 0.3, 0.3}},
                {-1.0, 1, 0.5, 0.0, {-7.0, -10.0, -3.0}, {0.25, 0.5, 0.25}}});
    const double got = targets::sarsa_target(seg, 1.0, spec_of(Family::Sarsa, 2, true));
    CHECK(got == Catch::Approx(-6.5).margin(1e-12));
    const oracles::FamilyExpansion fam = oracles::sarsa_expansion(true);
    CHECK(got == Catch::Approx(oracles::expansion_target(seg, 1.0, fam)).margin(1e-12));
  }
  SECTION("degenerate stored probability raises") {
    Segment seg = build_segment(
        false, {{-1.0, 1, 0.5, 0.0, {-7.0, -10.0, -3.0}, {0.25, 0.5, 0.25}}});
    seg.entries[1].stored_prob = 1e-12;
    CHECK_THROWS_AS(targets::sarsa_target(seg, 1.0, spec_of(Family::Sarsa, 1, true)),
                    std::domain_error);
  }
}

TEST_CASE("tree backup examples") {
  SECTION("one-step collapses to the expected-Sarsa form") {
    const Segment seg = build_segment(
        false, {{-1.0, 0, 1.0, 0.0, {-3.0, -5.0}, {0.75, 0.25}}});
    CHECK(targets::tree_backup_target(seg, 1.0, spec_of(Family::TreeBackup, 1)) ==
          Catch::Approx(-4.5).margin(1e-12));
  }
  SECTION("two-level hand expansion") {
    const Segment seg = build_segment(
        false, {{-1.0, 0, 1.0, 0.0, {-99.0, -4.0}, {0.5, 0.5}},
                {-1.0, 0, 1.0, 0.0, {-3.0, -5.0}, {0.75, 0.25}}});
    CHECK(targets::tree_backup_target(seg, 1.0, spec_of(Family::TreeBackup, 2)) ==
          Catch::Approx(-5.25).margin(1e-12));
  }
  SECTION("deterministic policy on the taken path reduces to on-policy sarsa") {
    Rng rng(31);
    for (int t = 0; t < 200; ++t) {
      oracles::SegmentOptions opt;
      opt.n = 4;
      Segment seg = oracles::random_segment(rng, opt);
      const int last = seg.ends_terminal ? seg.reward_steps() - 1 : seg.reward_steps();
      for (int i = 1; i <= last; ++i) {
        seg.pi[i].assign(seg.pi[i].size(), 0.0);
        seg.pi[i][seg.entries[i].action] = 1.0;
      }
      const double tb = targets::tree_backup_target(seg, 1.0, spec_of(Family::TreeBackup, 4));
      const double sa = targets::sarsa_target(seg, 1.0, spec_of(Family::Sarsa, 4));
      REQUIRE(tb == Catch::Approx(sa).margin(1e-12));
    }
  }
}

TEST_CASE("qsigma examples") {
  SECTION("sigma=1 on-policy is bitwise sarsa") {
    Rng rng(17);
    oracles::SegmentOptions opt;
    opt.n = 5;
    opt.sigma_override = 1.0;
    for (int t = 0; t < 200; ++t) {
      const Segment seg = oracles::random_segment(rng, opt);
      REQUIRE(targets::qsigma_target(seg, 1.0, spec_of(Family::QSigma, 5)) ==
              targets::sarsa_target(seg, 1.0, spec_of(Family::Sarsa, 5)));
    }
  }
  SECTION("sigma=0 is bitwise tree backup") {
    Rng rng(18);
    oracles::SegmentOptions opt;
    opt.n = 5;
    opt.sigma_override = 0.0;
    for (int t = 0; t < 200; ++t) {
      const Segment seg = oracles::random_segment(rng, opt);
      REQUIRE(targets::qsigma_target(seg, 1.0, spec_of(Family::QSigma, 5)) ==
              targets::tree_backup_target(seg, 1.0, spec_of(Family::TreeBackup, 5)));
      REQUIRE(targets::qsigma_target(seg, 1.0, spec_of(Family::QSigma, 5, true)) ==
              targets::tree_backup_target(seg, 1.0, spec_of(Family::TreeBackup, 5)));
    }
  }
  SECTION("sigma=0.5 off-policy matches the expansion oracle") {
    Rng rng(19);
    oracles::SegmentOptions opt;
    opt.n = 2;
    opt.sigma_override = 0.5;
    const AlgorithmSpec s = spec_of(Family::QSigma, 2, true);
    const oracles::FamilyExpansion fam = oracles::qsigma_expansion(true);
    for (int t = 0; t < 500; ++t) {
      const Segment seg = oracles::random_segment(rng, opt);
      REQUIRE(targets::qsigma_target(seg, 1.0, s) ==
              Catch::Approx(oracles::expansion_target(seg, 1.0, fam)).margin(1e-12));
    }
  }
}

TEST_CASE("retrace examples") {
  SECTION("full-ratio one-step cancellation leaves the expectation") {
    // pi(A|S') = stored_prob so rho = 1 >= k and c = 1.
    const Segment seg = build_segment(
        false, {{-1.0, 1, 0.5, 0.0, {-3.0, -5.0, -1.0}, {0.25, 0.5, 0.25}}});
    const double expect = 0.25 * -3.0 + 0.5 * -5.0 + 0.25 * -1.0;
    CHECK(targets::retrace_target(seg, 1.0, spec_of(Family::Retrace, 1)) ==
          Catch::Approx(-1.0 + expect).margin(1e-12));
  }
  SECTION("coefficient pi(A|S) turns retrace into tree backup") {
    Rng rng(23);
    const targets::TraceCoeff tb_coeff =
        [](const std::vector<double>& pi, double, int action, double) { return pi[action]; };
    oracles::SegmentOptions opt;
    opt.n = 5;
    for (int t = 0; t < 1000; ++t) {
      const Segment seg = oracles::random_segment(rng, opt);
      const double rt = targets::retrace_target(seg, 1.0, spec_of(Family::Retrace, 5), tb_coeff);
      const double tb = targets::tree_backup_target(seg, 1.0, spec_of(Family::TreeBackup, 5));
      REQUIRE(rt == Catch::Approx(tb).margin(1e-12));
    }
  }
  SECTION("coefficients above the cutoff are rejected") {
    const Segment seg = build_segment(
        false, {{-1.0, 1, 0.5, 0.0, {-3.0, -5.0, -1.0}, {0.25, 0.5, 0.25}}});
    const targets::TraceCoeff too_big =
        [](const std::vector<double>&, double, int, double) { return 2.0; };
    CHECK_THROWS_AS(targets::retrace_target(seg, 1.0, spec_of(Family::Retrace, 1), too_big),
                    std::logic_error);
  }
}

TEST_CASE("qlearning examples") {
  SECTION("one-step max bootstrap") {
    const Segment seg = build_segment(
        false, {{-1.0, 0, 1.0, 0.0, {-9.0, -4.0, -6.0}, {1.0, 0.0, 0.0}}});
    CHECK(targets::qlearning_target(seg, 1.0, spec_of(Family::QLearning, 1)) ==
          Catch::Approx(-5.0).margin(1e-12));
  }
  SECTION("two-step sum") {
    const Segment seg = build_segment(
        false, {{-1.0, 0, 1.0, 0.0, {0.0, 0.0, 0.0}, {1.0, 0.0, 0.0}},
                {-1.0, 0, 1.0, 0.0, {-12.0, -9.0, -10.0}, {1.0, 0.0, 0.0}}});
    CHECK(targets::qlearning_target(seg, 1.0, spec_of(Family::QLearning, 2)) ==
          Catch::Approx(-11.0).margin(1e-12));
  }
  SECTION("terminal three-step segment") {
    const Segment seg = build_segment(true, {{-1.0}, {-1.0}, {-1.0}});
    CHECK(targets::qlearning_target(seg, 1.0, spec_of(Family::QLearning, 3)) == -3.0);
  }
}

TEST_CASE("reduction identities over random segments") {
  Rng rng(4011);
  for (int t = 0; t < 1000; ++t) {
    const double gamma = rng.uniform01() < 0.5 ? 0.5 : 1.0;
    const int n = 1 + rng.uniform_int(5);
    oracles::SegmentOptions opt;
    opt.n = n;
    Segment seg = oracles::random_segment(rng, opt);

    // (a) Q(sigma=1, on-policy) == on-policy Sarsa
    Segment s1 = seg;
    for (auto& e : s1.entries) e.stored_sigma = e.terminal ? 0.0 : 1.0;
    REQUIRE(targets::qsigma_target(s1, gamma, spec_of(Family::QSigma, n)) ==
            Catch::Approx(targets::sarsa_target(s1, gamma, spec_of(Family::Sarsa, n))).margin(1e-12));

    // (b) Q(sigma=1, off-policy) == off-policy Sarsa
    REQUIRE(targets::qsigma_target(s1, gamma, spec_of(Family::QSigma, n, true)) ==
            Catch::Approx(targets::sarsa_target(s1, gamma, spec_of(Family::Sarsa, n, true)))
                .margin(1e-12));

    // (c) Q(sigma=0) == Tree Backup in both modes
    Segment s0 = seg;
    for (auto& e : s0.entries) e.stored_sigma = 0.0;
    const double tb = targets::tree_backup_target(s0, gamma, spec_of(Family::TreeBackup, n));
    REQUIRE(targets::qsigma_target(s0, gamma, spec_of(Family::QSigma, n)) ==
            Catch::Approx(tb).margin(1e-12));
    REQUIRE(targets::qsigma_target(s0, gamma, spec_of(Family::QSigma, n, true)) ==
            Catch::Approx(tb).margin(1e-12));

    // (d) Retrace with coefficient pi(A|S) == Tree Backup
    const targets::TraceCoeff tb_coeff =
        [](const std::vector<double>& pi, double, int action, double) { return pi[action]; };
    REQUIRE(targets::retrace_target(seg, gamma, spec_of(Family::Retrace, n), tb_coeff) ==
            Catch::Approx(targets::tree_backup_target(seg, gamma, spec_of(Family::TreeBackup, n)))
                .margin(1e-12));

    // (e) stored_prob equal to the update policy makes off-policy Sarsa on-policy
    Segment se = seg;
    {
      const int last = se.ends_terminal ? se.reward_steps() - 1 : se.reward_steps();
      for (int i = 1; i <= last; ++i) se.entries[i].stored_prob = se.pi[i][se.entries[i].action];
    }
    REQUIRE(targets::sarsa_target(se, gamma, spec_of(Family::Sarsa, n, true)) ==
            Catch::Approx(targets::sarsa_target(se, gamma, spec_of(Family::Sarsa, n))).margin(1e-12));
  }
}

TEST_CASE("recursive targets equal the expansion oracle") {
  Rng rng(555);
  for (Family f : kAllFamilies) {
    for (double gamma : {0.5, 1.0}) {
      for (int n = 1; n <= 5; ++n) {
        for (bool off : {false, true}) {
          if (off && (f == Family::TreeBackup || f == Family::Retrace || f == Family::QLearning)) {
            continue;
          }
          const AlgorithmSpec s = spec_of(f, n, off);
          const oracles::FamilyExpansion fam = oracles::expansion_for(s);
          for (int t = 0; t < 60; ++t) {
            oracles::SegmentOptions opt;
            opt.n = n;
            const Segment seg = oracles::random_segment(rng, opt);
            const double got = target_of(seg, gamma, s);
            const double want = oracles::expansion_target(seg, gamma, fam);
            REQUIRE(got == Catch::Approx(want).margin(1e-12));
            REQUIRE(std::abs(got) <=
                    oracles::expansion_abs_bound(seg, gamma, fam) + 1e-12);
          }
        }
      }
    }
  }
}

TEST_CASE("gamma zero returns the first reward for every family") {
  Rng rng(808);
  for (int t = 0; t < 100; ++t) {
    oracles::SegmentOptions opt;
    opt.n = 4;
    const Segment seg = oracles::random_segment(rng, opt);
    for (Family f : kAllFamilies) {
      REQUIRE(target_of(seg, 0.0, spec_of(f, 4)) == seg.entries[1].reward);
    }
  }
}

TEST_CASE("segment contract violations") {
  SECTION("zero reward steps") {
    Segment seg;
    seg.entries.push_back(Transition{});
    seg.q.resize(1);
    seg.pi.resize(1);
    CHECK_THROWS_AS(targets::sarsa_target(seg, 1.0, spec_of(Family::Sarsa, 1)),
                    std::invalid_argument);
  }
  SECTION("missing bootstrap data on a non-terminal segment") {
    Segment seg = build_segment(false, {{-1.0, 0, 1.0, 0.0, {-1.0, -2.0, -3.0}, {0.5, 0.25, 0.25}}});
    seg.q[1].clear();
    CHECK_THROWS_AS(targets::qlearning_target(seg, 1.0, spec_of(Family::QLearning, 1)),
                    std::invalid_argument);
  }
  SECTION("gamma out of range") {
    const Segment seg = build_segment(true, {{-1.0}});
    CHECK_THROWS_AS(targets::sarsa_target(seg, 1.5, spec_of(Family::Sarsa, 1)),
                    std::invalid_argument);
  }
}

TEST_CASE("compute_targets fills from the target network and dispatches") {
  Rng rng(2718);
  net::NetParams target_net = net::init_params(16, 3, rng);

  SECTION("matches the directly filled family call") {
    oracles::SegmentOptions opt;
    opt.n = 3;
    std::vector<Segment> segs;
    for (int i = 0; i < 20; ++i) {
      Segment seg = oracles::random_segment(rng, opt);
      // Strip the random q/pi so compute_targets fills them from the net.
      for (auto& v : seg.q) v.clear();
      for (auto& v : seg.pi) v.clear();
      segs.push_back(seg);
    }
    for (Family f : kAllFamilies) {
      const AlgorithmSpec s = spec_of(f, 3);
      std::vector<Segment> work = segs;
      const auto got = targets::compute_targets(work, s, 1.0, target_net, 0.1);
      for (std::size_t i = 0; i < work.size(); ++i) {
        // Re-dispatch on the filled segment: must agree exactly.
        REQUIRE(got[i] == target_of(work[i], 1.0, s));
        REQUIRE(std::isfinite(got[i]));
      }
    }
  }

  SECTION("prefilled and freshly filled segments agree") {
    oracles::SegmentOptions opt;
    opt.n = 4;
    for (int t = 0; t < 50; ++t) {
      Segment fresh = oracles::random_segment(rng, opt);
      for (auto& v : fresh.q) v.clear();
      for (auto& v : fresh.pi) v.clear();
      Segment prefilled = fresh;
      const int m = prefilled.reward_steps();
      const int last = prefilled.ends_terminal ? m - 1 : m;
      for (int i = 1; i <= last; ++i) {
        prefilled.q[i] = net::forward(target_net, prefilled.entries[i].state);
      }
      const AlgorithmSpec s = spec_of(Family::Retrace, 4);
      std::vector<Segment> a{fresh}, b{prefilled};
      const auto va = targets::compute_targets(a, s, 1.0, target_net, 0.1);
      const auto vb = targets::compute_targets(b, s, 1.0, target_net, 0.1);
      REQUIRE(va[0] == vb[0]);
    }
  }

  SECTION("qsigma with stored sigma one matches sarsa on the same batch") {
    oracles::SegmentOptions opt;
    opt.n = 2;
    opt.sigma_override = 1.0;
    std::vector<Segment> segs;
    for (int i = 0; i < 10; ++i) {
      Segment seg = oracles::random_segment(rng, opt);
      for (auto& v : seg.q) v.clear();
      for (auto& v : seg.pi) v.clear();
      segs.push_back(seg);
    }
    AlgorithmSpec qs = spec_of(Family::QSigma, 2);
    qs.sigma_value = 1.0;
    std::vector<Segment> a = segs, b = segs;
    const auto va = targets::compute_targets(a, qs, 1.0, target_net, 0.1);
    const auto vb = targets::compute_targets(b, spec_of(Family::Sarsa, 2), 1.0, target_net, 0.1);
    REQUIRE(va == vb);
  }

  SECTION("propagates errors with the segment index attached") {
    Segment good = build_segment(true, {{-1.0}});
    Segment bad = build_segment(false, {{-1.0, 1, 1e-12, 0.0, {-1.0, -2.0, -3.0}, {0.5, 0.25, 0.25}}});
    std::vector<Segment> segs{good, bad};
    try {
      targets::compute_targets(segs, spec_of(Family::Sarsa, 1, true), 1.0, target_net, 0.1);
      FAIL("expected an exception");
    } catch (const std::runtime_error& e) {
      CHECK(std::string(e.what()).find("segment 1") != std::string::npos);
    }
  }

  SECTION("policy can come from a separate online network") {
    net::NetParams online = net::init_params(16, 3, rng);
    oracles::SegmentOptions opt;
    opt.n = 2;
    Segment seg = oracles::random_segment(rng, opt);
    for (auto& v : seg.q) v.clear();
    for (auto& v : seg.pi) v.clear();
    std::vector<Segment> a{seg};
    targets::compute_targets(a, spec_of(Family::TreeBackup, 2), 1.0, target_net, 0.1, &online);
    const int last = a[0].ends_terminal ? a[0].reward_steps() - 1 : a[0].reward_steps();
    for (int i = 1; i <= last; ++i) {
      const auto want_pi =
          targets::epsilon_greedy_probs(net::forward(online, a[0].entries[i].state), 0.1).probs;
      const auto want_q = net::forward(target_net, a[0].entries[i].state);
      REQUIRE(a[0].pi[i] == want_pi);
      REQUIRE(a[0].q[i] == want_q);
    }
  }
}
