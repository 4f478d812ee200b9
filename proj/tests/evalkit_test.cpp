#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <tuple>

#include "faceq/error.hpp"
#include "faceq/evalkit.hpp"

using namespace faceq;

namespace {

// Mated pairs p<i> vs r<i> with one quality per image.
struct MatedSet {
  std::vector<PairScore> pairs;
  std::map<std::string, double> quality;
};

MatedSet mated_set(const std::vector<double>& scores, const std::vector<double>& pair_quality) {
  MatedSet m;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    char probe[16], ref[16];
    std::snprintf(probe, sizeof probe, "p%03zu", i);
    std::snprintf(ref, sizeof ref, "r%03zu", i);
    m.pairs.push_back({probe, ref, "s", "s", scores[i], true});
    m.quality[probe] = pair_quality[i];
    m.quality[ref] = 1.0;
  }
  return m;
}

std::vector<double> scores_of(const std::vector<PairScore>& pairs) {
  std::vector<double> s;
  for (const auto& p : pairs) s.push_back(p.score);
  return s;
}

// Explicit re-filtering: drop the k lowest-quality pairs one by one and count
// the failures among what is left.
double brute_force_fnmr(const MatedSet& m, double threshold, std::size_t k) {
  std::vector<PairScore> remaining = m.pairs;
  for (std::size_t drop = 0; drop < k; ++drop) {
    auto worst = remaining.begin();
    for (auto it = remaining.begin(); it != remaining.end(); ++it) {
      auto q = [&](const PairScore& p) { return std::min(m.quality.at(p.probe_id), m.quality.at(p.ref_id)); };
      if (std::make_tuple(q(*it), it->probe_id, it->ref_id) < std::make_tuple(q(*worst), worst->probe_id, worst->ref_id))
        worst = it;
    }
    remaining.erase(worst);
  }
  std::size_t fail = 0;
  for (const auto& p : remaining)
    if (p.score < threshold) ++fail;
  return static_cast<double>(fail) / static_cast<double>(remaining.size());
}

}  // namespace

TEST(ComparisonScores, InverseDistance) {
  std::vector<EmbeddingRecord> e{{"a", "s1", "sys0", {0, 0}}, {"b", "s1", "sys0", {0, 0}},
                                 {"c", "s2", "sys0", {1, 0}}, {"d", "s3", "sys0", {0, 3}}};
  std::vector<PairSpec> pairs{{"a", "b", "s1", "s1"}, {"c", "a", "s2", "s1"}, {"d", "a", "s3", "s1"}};
  auto s = comparison_scores(e, pairs);
  ASSERT_EQ(s.size(), 3u);
  EXPECT_EQ(s[0].score, 1.0);
  EXPECT_TRUE(s[0].mated);
  EXPECT_EQ(s[1].score, 0.5);
  EXPECT_FALSE(s[1].mated);
  EXPECT_EQ(s[2].score, 0.25);
  std::vector<PairSpec> bad{{"a", "zz", "s1", "s1"}};
  EXPECT_THROW(comparison_scores(e, bad), Error);
}

TEST(ThresholdAtFnmr, LadderAndEdgeCases) {
  std::vector<double> ladder;
  for (int i = 1; i <= 10; ++i) ladder.push_back(i / 10.0);
  std::shuffle(ladder.begin(), ladder.end(), std::mt19937_64(1));
  double t = threshold_at_fnmr(ladder, 0.10);
  EXPECT_EQ(t, 0.2);
  EXPECT_EQ(fnmr_at(ladder, t), 0.1);

  double low = threshold_at_fnmr(ladder, 0.05);
  EXPECT_EQ(low, 0.1);
  EXPECT_EQ(fnmr_at(ladder, low), 0.0);

  std::vector<double> flat(7, 0.4);
  EXPECT_EQ(fnmr_at(flat, threshold_at_fnmr(flat, 0.5)), 0.0);

  EXPECT_THROW(threshold_at_fnmr(std::vector<double>{}, 0.1), Error);
  EXPECT_THROW(threshold_at_fnmr(ladder, 0.0), Error);
  EXPECT_THROW(threshold_at_fnmr(ladder, 1.0), Error);
}

TEST(ThresholdAtFnmr, NeverExceedsTarget) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::size_t n = 1 + rng() % 300;
    std::vector<double> s(n);
    // Coarse values produce plenty of ties.
    for (auto& v : s) v = std::round(unit(rng) * 20.0) / 20.0;
    double target = 0.01 + 0.98 * unit(rng);
    EXPECT_LE(fnmr_at(s, threshold_at_fnmr(s, target)), target);
  }
}

TEST(ThresholdAtFmr, ExamplesAndTies) {
  std::vector<double> distinct;
  for (int i = 0; i < 1000; ++i) distinct.push_back(i / 1000.0);
  std::shuffle(distinct.begin(), distinct.end(), std::mt19937_64(3));
  double t = threshold_at_fmr(distinct, 0.001);
  EXPECT_EQ(std::count_if(distinct.begin(), distinct.end(), [&](double s) { return s >= t; }), 1);

  double above = threshold_at_fmr(distinct, 0.0005);
  EXPECT_GT(above, 0.999);
  EXPECT_EQ(fmr_at(distinct, above), 0.0);

  std::vector<double> flat(50, 0.3);
  double tf = threshold_at_fmr(flat, 0.1);
  EXPECT_GT(tf, 0.3);
  EXPECT_EQ(fmr_at(flat, tf), 0.0);

  // Ties at the cut move the threshold halfway to the next distinct score.
  std::vector<double> tied{0.1, 0.2, 0.5, 0.5, 0.9};
  double tt = threshold_at_fmr(tied, 0.4);
  EXPECT_DOUBLE_EQ(tt, 0.7);
  EXPECT_LE(fmr_at(tied, tt), 0.4);

  EXPECT_THROW(threshold_at_fmr(std::vector<double>{}, 0.1), Error);
}

TEST(ThresholdAtFmr, NeverExceedsTarget) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::size_t n = 1 + rng() % 500;
    std::vector<double> s(n);
    for (auto& v : s) v = std::round(unit(rng) * 30.0) / 30.0;
    double target = 0.001 + 0.9 * unit(rng);
    EXPECT_LE(fmr_at(s, threshold_at_fmr(s, target)), target);
  }
}

TEST(RejectionFractions, EvenlySpaced) {
  auto f = rejection_fractions(30, 0.9);
  ASSERT_EQ(f.size(), 31u);
  EXPECT_EQ(f.front(), 0.0);
  EXPECT_NEAR(f.back(), 0.9, 1e-15);
  for (std::size_t i = 1; i < f.size(); ++i) EXPECT_GT(f[i], f[i - 1]);
}

TEST(Erc, SingleFailureWithLowestQuality) {
  std::vector<double> scores{0.05, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 0.99};
  std::vector<double> q{0.01, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.95};
  auto m = mated_set(scores, q);
  std::vector<double> fractions{0.0, 0.1};
  auto c = erc(m.pairs, m.quality, 0.2, fractions);
  ASSERT_EQ(c.points.size(), 2u);
  EXPECT_EQ(c.initial_fnmr, 0.1);
  EXPECT_EQ(c.points[0].fnmr, 0.1);
  EXPECT_EQ(c.points[0].perfect, 0.1);
  EXPECT_EQ(c.points[1].fnmr, 0.0);
  EXPECT_EQ(c.points[1].perfect, 0.0);
}

TEST(Erc, RandomQualityLeavesFnmrFlat) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> scores(10000), q(10000);
  for (auto& s : scores) s = unit(rng);
  for (auto& v : q) v = unit(rng);
  auto m = mated_set(scores, q);
  double t = threshold_at_fnmr(scores, 0.10);
  std::vector<double> fractions{0.0, 0.3};
  auto c = erc(m.pairs, m.quality, t, fractions);
  EXPECT_LE(std::abs(c.points[1].fnmr - c.points[0].fnmr), 0.05);
}

TEST(Erc, MatchesBruteForceWhenQualityTracksScore) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int trial = 0; trial < 40; ++trial) {
    std::size_t p = 1 + rng() % 50;
    std::vector<double> scores(p);
    for (auto& s : scores) s = std::round(unit(rng) * 10.0) / 10.0;
    auto m = mated_set(scores, scores);
    double t = threshold_at_fnmr(scores, 0.10);
    auto fractions = rejection_fractions(20, 0.9);
    auto c = erc(m.pairs, m.quality, t, fractions);
    for (std::size_t i = 0; i < fractions.size(); ++i) {
      std::size_t k = static_cast<std::size_t>(std::floor(fractions[i] * static_cast<double>(p) + 1e-9));
      if (k >= p) continue;
      EXPECT_EQ(c.points[i].fnmr, brute_force_fnmr(m, t, k)) << "trial " << trial << " r " << fractions[i];
      EXPECT_NEAR(c.points[i].perfect, std::max(c.points[0].fnmr - fractions[i], 0.0), 1e-12);
    }
    EXPECT_EQ(c.points[0].fnmr, fnmr_at(scores, t));
  }
}

TEST(Erc, ScoreTransformInvariance) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> scores(500), q(500);
  for (auto& s : scores) s = unit(rng);
  for (std::size_t i = 0; i < q.size(); ++i) q[i] = 0.5 * scores[i] + 0.5 * unit(rng);
  auto a = mated_set(scores, q);
  auto b = a;
  for (auto& p : b.pairs) p.score = std::exp(3.0 * p.score) - 7.0;
  auto fractions = rejection_fractions(30, 0.9);
  auto sa = scores_of(a.pairs), sb = scores_of(b.pairs);
  auto ca = erc(a.pairs, a.quality, threshold_at_fnmr(sa, 0.1), fractions);
  auto cb = erc(b.pairs, b.quality, threshold_at_fnmr(sb, 0.1), fractions);
  EXPECT_EQ(ca.initial_fnmr, cb.initial_fnmr);
  for (std::size_t i = 0; i < fractions.size(); ++i) EXPECT_EQ(ca.points[i].fnmr, cb.points[i].fnmr);
}

TEST(Erc, RemainingCountIsExact) {
  // With every score failing, fnmr is 1 and the failures left equal the
  // remaining count; using a single passing pair with the highest quality
  // exposes the denominator as 1 / remaining.
  std::size_t p = 37;
  std::vector<double> scores(p, 0.1), q(p);
  scores.back() = 0.9;
  for (std::size_t i = 0; i < p; ++i) q[i] = static_cast<double>(i) / static_cast<double>(p);
  auto m = mated_set(scores, q);
  auto fractions = rejection_fractions(9, 0.9);
  auto c = erc(m.pairs, m.quality, 0.5, fractions);
  for (std::size_t i = 0; i < fractions.size(); ++i) {
    std::size_t k = static_cast<std::size_t>(std::floor(fractions[i] * static_cast<double>(p) + 1e-9));
    double remaining = static_cast<double>(p - k);
    EXPECT_DOUBLE_EQ(c.points[i].fnmr, (remaining - 1.0) / remaining);
  }
}

TEST(Erc, Errors) {
  auto m = mated_set({0.5, 0.6}, {0.1, 0.2});
  std::vector<double> fractions{0.0, 0.5};
  auto missing = m.quality;
  missing.erase("r001");
  EXPECT_THROW(erc(m.pairs, missing, 0.5, fractions), Error);
  std::vector<double> everything{0.0, 1.0};
  EXPECT_THROW(erc(m.pairs, m.quality, 0.5, everything), Error);
  std::vector<double> unsorted{0.0, 0.5, 0.2};
  EXPECT_THROW(erc(m.pairs, m.quality, 0.5, unsorted), Error);
  EXPECT_THROW(erc({}, m.quality, 0.5, fractions), Error);
}

TEST(QualityHistogram, EdgesAndCounts) {
  auto h = quality_histogram(std::vector<double>{0.0, 0.5, 1.0}, 2);
  EXPECT_EQ(h.counts, (std::vector<std::size_t>{1, 2}));
  EXPECT_EQ(h.bin_edges, (std::vector<double>{0.0, 0.5, 1.0}));
  double integral = 0.0;
  for (std::size_t i = 0; i < h.counts.size(); ++i) integral += h.densities[i] * (h.bin_edges[i + 1] - h.bin_edges[i]);
  EXPECT_NEAR(integral, 1.0, 1e-12);

  auto empty = quality_histogram(std::vector<double>{}, 4);
  EXPECT_EQ(empty.counts, (std::vector<std::size_t>(4, 0)));
  EXPECT_THROW(quality_histogram(std::vector<double>{0.5}, 0), Error);
}

TEST(QualityHistogram, UniformSample) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> v(1000);
  for (auto& x : v) x = unit(rng);
  auto h = quality_histogram(v, 10);
  std::size_t total = 0;
  for (auto c : h.counts) {
    EXPECT_LE(std::abs(static_cast<long>(c) - 100L), 50L);
    total += c;
  }
  EXPECT_EQ(total, 1000u);
}

TEST(ErcAuc, ReferenceAreas) {
  ErcCurve exact{0.1, 0.0, {{0.0, 0.1, 0.1}, {0.1, 0.0, 0.0}, {0.5, 0.0, 0.0}}};
  EXPECT_NEAR(erc_auc(exact), 0.005, 1e-15);
  ErcCurve flat{0.1, 0.0, {{0.0, 0.1, 0.1}, {0.25, 0.1, 0.0}, {0.5, 0.1, 0.0}}};
  EXPECT_NEAR(erc_auc(flat), 0.05, 1e-15);
  EXPECT_LE(erc_auc(exact), erc_auc(flat));
}

TEST(ErcAuc, Monotone) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto fractions = rejection_fractions(30, 0.9);
  for (int trial = 0; trial < 50; ++trial) {
    ErcCurve a, b;
    for (double r : fractions) {
      double x = unit(rng);
      a.points.push_back({r, x, 0.0});
      b.points.push_back({r, x + unit(rng) * 0.1, 0.0});
    }
    EXPECT_LE(erc_auc(a), erc_auc(b));
  }
}

TEST(Pairs, GalleriesAndPolicies) {
  std::vector<EmbeddingRecord> e;
  for (int s = 0; s < 4; ++s)
    for (int i = 0; i < 3; ++i)
      e.push_back({"s" + std::to_string(s) + "_i" + std::to_string(i), "s" + std::to_string(s), "sys0", {0.0}});
  auto galleries = build_galleries(e);
  ASSERT_EQ(galleries.size(), 4u);
  EXPECT_EQ(galleries[0].reference_id, "s0_i0");
  EXPECT_EQ(galleries[0].probe_ids, (std::vector<std::string>{"s0_i1", "s0_i2"}));
  auto chosen = build_galleries(e, {{"s1", "s1_i2"}});
  EXPECT_EQ(chosen[1].reference_id, "s1_i2");

  auto mated = mated_pairs(galleries);
  EXPECT_EQ(mated.size(), 8u);
  for (const auto& p : mated) EXPECT_TRUE(p.mated());

  auto sampled = nonmated_pairs_per_subject(galleries, 2, 1);
  EXPECT_EQ(sampled.size(), 8u);
  std::set<std::pair<std::string, std::string>> seen;
  for (const auto& p : sampled) {
    EXPECT_FALSE(p.mated());
    EXPECT_NE(p.probe_id, p.ref_id);
    EXPECT_TRUE(seen.insert({p.probe_id, p.ref_id}).second);
  }
  EXPECT_EQ(sampled, nonmated_pairs_per_subject(galleries, 2, 1));

  auto all = nonmated_pairs_all(galleries, 1);
  EXPECT_EQ(all.size(), 4u * 3u * 2u);
  auto capped = nonmated_pairs_all(galleries, 1, 5);
  EXPECT_EQ(capped.size(), 5u);
  for (const auto& p : capped) EXPECT_FALSE(p.mated());
}

TEST(QualityMap, DuplicatesRejected) {
  std::vector<QualityLabel> labels{{"a", 0.1}, {"b", 0.2}};
  EXPECT_EQ(quality_map(labels).at("b"), 0.2);
  labels.push_back({"a", 0.3});
  EXPECT_THROW(quality_map(labels), Error);
}
