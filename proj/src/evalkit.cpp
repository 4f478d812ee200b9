#include "faceq/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <tuple>
#include <unordered_map>
#include <unordered_set>

#include "faceq/error.hpp"
#include "faceq/groundtruth.hpp"
#include "faceq/stats.hpp"

namespace faceq {

namespace {

// Floyd's algorithm: k distinct values from [0, n), returned sorted.
std::vector<std::size_t> sample_distinct(std::size_t n, std::size_t k, std::mt19937_64& rng) {
  k = std::min(k, n);
  std::unordered_set<std::size_t> chosen;
  chosen.reserve(k * 2);
  for (std::size_t j = n - k; j < n; ++j) {
    std::uniform_int_distribution<std::size_t> pick(0, j);
    std::size_t t = pick(rng);
    if (!chosen.insert(t).second) chosen.insert(j);
  }
  std::vector<std::size_t> out(chosen.begin(), chosen.end());
  std::sort(out.begin(), out.end());
  return out;
}

struct ProbeIndex {
  std::vector<const std::string*> probe;    // all probes, grouped by subject in gallery order
  std::vector<std::size_t> owner;           // gallery index of each probe
  std::vector<std::size_t> begin;           // first probe index of each gallery
};

ProbeIndex index_probes(std::span<const SubjectGallery> galleries) {
  ProbeIndex idx;
  for (std::size_t g = 0; g < galleries.size(); ++g) {
    idx.begin.push_back(idx.probe.size());
    for (const auto& p : galleries[g].probe_ids) {
      idx.probe.push_back(&p);
      idx.owner.push_back(g);
    }
  }
  return idx;
}

PairSpec nonmated(const SubjectGallery& ref_gallery, const SubjectGallery& probe_gallery,
                  const std::string& probe_id) {
  return {probe_id, ref_gallery.reference_id, probe_gallery.subject_id, ref_gallery.subject_id};
}

}  // namespace

std::vector<SubjectGallery> build_galleries(std::span<const EmbeddingRecord> embeddings,
                                            const std::map<std::string, std::string>& references) {
  std::map<std::string, std::vector<std::string>> by_subject;
  std::unordered_set<std::string> seen;
  for (const auto& r : embeddings) {
    if (!seen.insert(r.image_id).second) continue;  // same image under another system
    by_subject[r.subject_id].push_back(r.image_id);
  }
  std::vector<SubjectGallery> out;
  for (auto& [subject, images] : by_subject) {
    std::sort(images.begin(), images.end());
    SubjectGallery g{subject, images.front(), {}};
    if (auto it = references.find(subject); it != references.end()) {
      if (std::find(images.begin(), images.end(), it->second) == images.end())
        throw Error("reference '" + it->second + "' for subject '" + subject +
                    "' has no embedding");
      g.reference_id = it->second;
    }
    for (const auto& id : images)
      if (id != g.reference_id) g.probe_ids.push_back(id);
    out.push_back(std::move(g));
  }
  return out;
}

std::vector<PairSpec> mated_pairs(std::span<const SubjectGallery> galleries) {
  std::vector<PairSpec> out;
  for (const auto& g : galleries)
    for (const auto& p : g.probe_ids) out.push_back({p, g.reference_id, g.subject_id, g.subject_id});
  return out;
}

std::vector<PairSpec> nonmated_pairs_per_subject(std::span<const SubjectGallery> galleries,
                                                 std::size_t k, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ProbeIndex idx = index_probes(galleries);
  std::vector<PairSpec> out;
  for (std::size_t g = 0; g < galleries.size(); ++g) {
    const std::size_t own_begin = idx.begin[g];
    const std::size_t own = galleries[g].probe_ids.size();
    const std::size_t others = idx.probe.size() - own;
    for (std::size_t s : sample_distinct(others, k, rng)) {
      std::size_t global = s < own_begin ? s : s + own;
      out.push_back(nonmated(galleries[g], galleries[idx.owner[global]], *idx.probe[global]));
    }
  }
  return out;
}

std::vector<PairSpec> nonmated_pairs_all(std::span<const SubjectGallery> galleries,
                                         std::uint64_t seed, std::size_t cap) {
  ProbeIndex idx = index_probes(galleries);
  const std::size_t total_probes = idx.probe.size();
  // Pair (g, s) is numbered offset[g] + s, s ranging over probes outside g.
  std::vector<std::size_t> offset(galleries.size() + 1, 0);
  for (std::size_t g = 0; g < galleries.size(); ++g)
    offset[g + 1] = offset[g] + (total_probes - galleries[g].probe_ids.size());
  const std::size_t total = offset.back();

  auto decode = [&](std::size_t n) {
    auto g = static_cast<std::size_t>(std::upper_bound(offset.begin(), offset.end(), n) - offset.begin()) - 1;
    std::size_t s = n - offset[g];
    std::size_t global = s < idx.begin[g] ? s : s + galleries[g].probe_ids.size();
    return nonmated(galleries[g], galleries[idx.owner[global]], *idx.probe[global]);
  };

  std::vector<PairSpec> out;
  if (total <= cap) {
    out.reserve(total);
    for (std::size_t n = 0; n < total; ++n) out.push_back(decode(n));
  } else {
    std::mt19937_64 rng(seed);
    auto picks = sample_distinct(total, cap, rng);
    out.reserve(picks.size());
    for (std::size_t n : picks) out.push_back(decode(n));
  }
  return out;
}

std::vector<PairScore> comparison_scores(std::span<const EmbeddingRecord> embeddings,
                                         std::span<const PairSpec> pairs) {
  std::unordered_map<std::string, const EmbeddingRecord*> by_image;
  for (const auto& r : embeddings) {
    if (r.system_id != embeddings.front().system_id)
      throw Error("comparison_scores: embeddings mix systems '" + embeddings.front().system_id +
                  "' and '" + r.system_id + "'");
    by_image.emplace(r.image_id, &r);
  }
  auto lookup = [&](const std::string& id) -> const EmbeddingRecord& {
    auto it = by_image.find(id);
    if (it == by_image.end()) throw Error("no embedding for image '" + id + "'");
    return *it->second;
  };
  std::vector<PairScore> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) {
    if (p.probe_id == p.ref_id) throw Error("pair compares image '" + p.probe_id + "' with itself");
    const auto& probe = lookup(p.probe_id);
    const auto& ref = lookup(p.ref_id);
    double d = euclidean_distance(probe.vector, ref.vector);
    out.push_back({p.probe_id, p.ref_id, p.probe_subject, p.ref_subject, 1.0 / (1.0 + d), p.mated()});
  }
  return out;
}

double threshold_at_fnmr(std::span<const double> mated_scores, double target_fnmr) {
  if (mated_scores.empty()) throw Error("threshold_at_fnmr: no mated scores");
  if (!(target_fnmr > 0.0 && target_fnmr < 1.0)) throw Error("target FNMR must be in (0,1)");
  std::vector<double> sorted(mated_scores.begin(), mated_scores.end());
  std::sort(sorted.begin(), sorted.end());
  std::size_t index = std::min(floor_count(target_fnmr, sorted.size()), sorted.size() - 1);
  return sorted[index];
}

double threshold_at_fmr(std::span<const double> nonmated_scores, double target_fmr) {
  if (nonmated_scores.empty()) throw Error("threshold_at_fmr: no non-mated scores");
  if (!(target_fmr > 0.0 && target_fmr < 1.0)) throw Error("target FMR must be in (0,1)");
  std::vector<double> desc(nonmated_scores.begin(), nonmated_scores.end());
  std::sort(desc.begin(), desc.end(), std::greater<>());
  const double inf = std::numeric_limits<double>::infinity();
  const std::size_t allowed = floor_count(target_fmr, desc.size());
  if (allowed == 0) return std::nextafter(desc.front(), inf);

  const double cut = desc[allowed - 1];
  // Number of scores >= cut: first index holding a value below it.
  auto below = std::find_if(desc.begin(), desc.end(), [&](double s) { return s < cut; });
  auto at_or_above = static_cast<std::size_t>(below - desc.begin());
  if (at_or_above <= allowed) return cut;

  // Ties at the cut overshoot: move just above the tied value.
  auto higher = std::find_if(desc.rbegin(), desc.rend(), [&](double s) { return s > cut; });
  if (higher == desc.rend()) return std::nextafter(cut, inf);
  double mid = cut + 0.5 * (*higher - cut);
  return mid > cut ? mid : *higher;
}

double fnmr_at(std::span<const double> mated_scores, double threshold) {
  if (mated_scores.empty()) throw Error("fnmr_at: no mated scores");
  auto n = std::count_if(mated_scores.begin(), mated_scores.end(), [&](double s) { return s < threshold; });
  return static_cast<double>(n) / static_cast<double>(mated_scores.size());
}

double fmr_at(std::span<const double> nonmated_scores, double threshold) {
  if (nonmated_scores.empty()) throw Error("fmr_at: no non-mated scores");
  auto n = std::count_if(nonmated_scores.begin(), nonmated_scores.end(),
                         [&](double s) { return s >= threshold; });
  return static_cast<double>(n) / static_cast<double>(nonmated_scores.size());
}

std::vector<double> rejection_fractions(std::size_t steps, double max_reject) {
  if (steps == 0) throw Error("rejection_fractions: steps must be positive");
  if (!(max_reject > 0.0 && max_reject < 1.0)) throw Error("max rejection must be in (0,1)");
  std::vector<double> out;
  for (std::size_t i = 0; i <= steps; ++i)
    out.push_back(max_reject * static_cast<double>(i) / static_cast<double>(steps));
  return out;
}

ErcCurve erc(std::span<const PairScore> mated, const std::map<std::string, double>& quality,
             double threshold, std::span<const double> fractions) {
  if (mated.empty()) throw Error("erc: no mated pairs");
  if (fractions.empty() || fractions.front() != 0.0) throw Error("erc: fractions must start at 0");
  for (std::size_t i = 0; i < fractions.size(); ++i) {
    if (!(fractions[i] >= 0.0 && fractions[i] < 1.0)) throw Error("erc: fractions must lie in [0,1)");
    if (i > 0 && !(fractions[i] > fractions[i - 1]))
      throw Error("erc: fractions must be strictly increasing");
  }

  auto quality_of = [&](const std::string& id) {
    auto it = quality.find(id);
    if (it == quality.end()) throw Error("erc: no quality for image '" + id + "'");
    return it->second;
  };

  struct Ranked {
    double q_pair;
    const std::string* probe;
    const std::string* ref;
    bool fails;
  };
  std::vector<Ranked> ranked;
  ranked.reserve(mated.size());
  for (const auto& p : mated) {
    if (!p.mated) throw Error("erc: non-mated pair '" + p.probe_id + "' / '" + p.ref_id + "'");
    ranked.push_back({std::min(quality_of(p.probe_id), quality_of(p.ref_id)), &p.probe_id, &p.ref_id,
                      p.score < threshold});
  }
  std::sort(ranked.begin(), ranked.end(), [](const Ranked& a, const Ranked& b) {
    return std::tie(a.q_pair, *a.probe, *a.ref) < std::tie(b.q_pair, *b.probe, *b.ref);
  });

  // failures_before[k]: failing pairs among the k lowest-quality pairs.
  const std::size_t total = ranked.size();
  std::vector<std::size_t> failures_before(total + 1, 0);
  for (std::size_t k = 0; k < total; ++k)
    failures_before[k + 1] = failures_before[k] + (ranked[k].fails ? 1 : 0);

  ErcCurve curve;
  curve.threshold = threshold;
  for (double r : fractions) {
    const std::size_t rejected = floor_count(r, total);
    const std::size_t remaining = total - rejected;
    if (remaining == 0)
      throw Error("erc: rejection fraction " + format_real(r) + " discards all " +
                  std::to_string(total) + " pairs");
    const std::size_t failing = failures_before[total] - failures_before[rejected];
    double fnmr = static_cast<double>(failing) / static_cast<double>(remaining);
    if (curve.points.empty()) curve.initial_fnmr = fnmr;
    curve.points.push_back({r, fnmr, std::max(curve.initial_fnmr - r, 0.0)});
  }
  return curve;
}

Histogram quality_histogram(std::span<const double> values, std::size_t bins) {
  if (bins == 0) throw Error("quality_histogram: bins must be positive");
  Histogram h;
  for (std::size_t i = 0; i <= bins; ++i)
    h.bin_edges.push_back(static_cast<double>(i) / static_cast<double>(bins));
  h.counts.assign(bins, 0);
  for (double v : values) {
    if (!(v >= 0.0 && v <= 1.0)) throw Error("quality_histogram: value outside [0,1]: " + format_real(v));
    auto bin = std::min(static_cast<std::size_t>(std::floor(v * static_cast<double>(bins))), bins - 1);
    // v * bins can land just below an integer for values sitting on an edge.
    if (bin + 1 < bins && v >= h.bin_edges[bin + 1]) ++bin;
    ++h.counts[bin];
  }
  const double width = 1.0 / static_cast<double>(bins);
  for (std::size_t c : h.counts)
    h.densities.push_back(values.empty() ? 0.0
                                         : static_cast<double>(c) /
                                               (static_cast<double>(values.size()) * width));
  return h;
}

double erc_auc(const ErcCurve& curve) {
  CompensatedSum area;
  for (std::size_t i = 1; i < curve.points.size(); ++i) {
    const auto& a = curve.points[i - 1];
    const auto& b = curve.points[i];
    area.add(0.5 * (a.fnmr + b.fnmr) * (b.fraction_rejected - a.fraction_rejected));
  }
  return area.value();
}

std::map<std::string, double> quality_map(std::span<const QualityLabel> labels) {
  std::map<std::string, double> out;
  for (const auto& l : labels)
    if (!out.emplace(l.image_id, l.quality).second)
      throw Error("quality_map: duplicate image_id '" + l.image_id + "'");
  return out;
}

}  // namespace faceq
