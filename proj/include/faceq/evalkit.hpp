#pragma once

// Evaluation of quality measures by Error-versus-Reject analysis.
//
// Decision rule everywhere: a comparison is a match iff score >= threshold.
// Thresholds are order statistics of the score sample (no interpolation), so
// any strictly increasing transform of the scores leaves every rate unchanged.

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "faceq/dataio.hpp"

namespace faceq {

inline constexpr double kDefaultTargetFnmr = 0.10;
inline constexpr double kDefaultTargetFmr = 0.001;
inline constexpr std::size_t kMaxNonmatedPairs = 1'000'000;

struct PairSpec {
  std::string probe_id;
  std::string ref_id;
  std::string probe_subject;
  std::string ref_subject;

  bool mated() const { return probe_subject == ref_subject; }
  bool operator==(const PairSpec&) const = default;
};

/// Images of one subject with the one used as its comparison reference.
struct SubjectGallery {
  std::string subject_id;
  std::string reference_id;
  std::vector<std::string> probe_ids;
};

/// Groups images by subject. The reference is taken from `references`
/// (subject -> image) when present, otherwise the smallest image_id.
/// Output is sorted by subject_id and probe ids are sorted.
std::vector<SubjectGallery> build_galleries(std::span<const EmbeddingRecord> embeddings,
                                            const std::map<std::string, std::string>& references = {});

/// Reference versus every same-subject probe.
std::vector<PairSpec> mated_pairs(std::span<const SubjectGallery> galleries);

/// Per subject, its reference versus `k` probes of other subjects drawn
/// without replacement (fewer if not enough exist).
std::vector<PairSpec> nonmated_pairs_per_subject(std::span<const SubjectGallery> galleries,
                                                 std::size_t k, std::uint64_t seed);

/// Every cross-subject reference-versus-probe pair, or a seeded uniform
/// sample of `cap` of them when there are more.
std::vector<PairSpec> nonmated_pairs_all(std::span<const SubjectGallery> galleries,
                                         std::uint64_t seed, std::size_t cap = kMaxNonmatedPairs);

/// 1 / (1 + Euclidean distance) for each pair, using one system's embeddings.
std::vector<PairScore> comparison_scores(std::span<const EmbeddingRecord> embeddings,
                                         std::span<const PairSpec> pairs);

/// Order statistic at index floor(target * N) of the ascending mated scores.
double threshold_at_fnmr(std::span<const double> mated_scores, double target_fnmr);

/// Threshold whose achieved FMR does not exceed the target. Ties at the cut
/// raise the threshold to the midpoint toward the next higher distinct score,
/// or just above the maximum when there is none.
double threshold_at_fmr(std::span<const double> nonmated_scores, double target_fmr);

/// |{s < threshold}| / N.
double fnmr_at(std::span<const double> mated_scores, double threshold);

/// |{s >= threshold}| / M.
double fmr_at(std::span<const double> nonmated_scores, double threshold);

/// `steps + 1` evenly spaced fractions from 0 to `max_reject`.
std::vector<double> rejection_fractions(std::size_t steps, double max_reject);

/// Error-versus-reject curve. Each mated pair is ranked by
/// min(q_probe, q_ref), ties broken by (probe_id, ref_id); for fraction r the
/// lowest floor(r * P) pairs are discarded and FNMR is recomputed on the rest
/// at the fixed threshold.
ErcCurve erc(std::span<const PairScore> mated, const std::map<std::string, double>& quality,
             double threshold, std::span<const double> fractions);

/// Equal-width bins over [0, 1]; each bin is right-open except the last.
Histogram quality_histogram(std::span<const double> values, std::size_t bins);

/// Trapezoidal area under the FNMR curve.
double erc_auc(const ErcCurve& curve);

std::map<std::string, double> quality_map(std::span<const QualityLabel> labels);

}  // namespace faceq
