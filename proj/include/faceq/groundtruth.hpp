#pragma once

// Machine-generated groundtruth quality labels.
//
// Every subject's most ICAO-compliant image is taken as a reference of
// perfect quality. Each remaining (probe) image is labelled by how close it
// sits to that reference under one or more recognition systems: the mated
// Euclidean distance is standardized per system, mapped through a decreasing
// sigmoid, and the per-system similarities are averaged.

#include <map>
#include <span>
#include <string>
#include <vector>

#include "faceq/dataio.hpp"

namespace faceq {

struct IcaoCompliance {
  std::string image_id;
  double compliance = 0.0;  // [0, 100]
};

struct ReferenceAssignment {
  std::string subject_id;
  std::string reference_image_id;
  double reference_compliance = 0.0;
  std::vector<std::string> probe_image_ids;  // sorted
};

struct SkippedSubject {
  std::string subject_id;
  std::string reason;
};

struct ReferenceSelection {
  std::vector<ReferenceAssignment> references;  // sorted by subject_id
  std::vector<SkippedSubject> skipped;
};

struct DistanceStats {
  double mean_d = 0.0;
  double std_d = 1.0;
};

struct MatedDistance {
  std::string subject_id;
  std::string probe_image_id;
  double distance = 0.0;
};

struct SystemDistanceSet {
  std::string system_id;
  std::vector<MatedDistance> entries;  // ordered by (subject_id, probe_image_id)
  DistanceStats stats;
};

/// Unweighted mean over the ten selected tests. Throws if any is missing.
IcaoCompliance aggregate_icao(const IcaoScores& scores);

/// Picks the highest-compliance image per subject (ties go to the smallest
/// image_id). Subjects with fewer than two images are reported in `skipped`.
ReferenceSelection select_references(
    const std::map<std::string, std::vector<IcaoCompliance>>& compliances_by_subject);

double euclidean_distance(std::span<const double> a, std::span<const double> b);

/// Reference-to-probe distances for one system with population statistics.
/// `embeddings` must all carry the same system_id.
SystemDistanceSet mated_distances(std::span<const EmbeddingRecord> embeddings,
                                  std::span<const ReferenceAssignment> references);

/// The set's distances as z-scores under its own statistics.
std::vector<double> standardized_distances(const SystemDistanceSet& set);

/// 1 / (1 + exp((d - mean) / std)).
double sigmoid_similarity(double distance, const DistanceStats& stats);

/// Arithmetic mean of per-system similarities.
double fuse(std::span<const double> scores);

struct GroundtruthResult {
  std::vector<QualityLabel> labels;  // one per probe, sorted by image_id
  ReferenceSelection selection;
  std::vector<DistanceStatsRecord> stats;  // one per system, sorted by system_id
};

/// Runs the full labelling pipeline. `per_system` holds one embedding list per
/// recognition system; image and subject ids must agree across them.
GroundtruthResult generate_groundtruth(std::span<const std::vector<EmbeddingRecord>> per_system,
                                       std::span<const IcaoScores> icao);

/// Flattens a selection into report lines (references first, then skips).
std::vector<SelectionRecord> selection_report(const ReferenceSelection& selection);

}  // namespace faceq
