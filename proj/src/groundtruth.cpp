#include "faceq/groundtruth.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <unordered_map>

#include "faceq/error.hpp"
#include "faceq/stats.hpp"

namespace faceq {

IcaoCompliance aggregate_icao(const IcaoScores& scores) {
  CompensatedSum sum;
  for (std::string_view test : kIcaoTests) {
    auto it = scores.tests.find(std::string(test));
    if (it == scores.tests.end())
      throw Error("image '" + scores.image_id + "' is missing ICAO test '" + std::string(test) + "'");
    sum.add(it->second);
  }
  return {scores.image_id, sum.value() / static_cast<double>(kIcaoTests.size())};
}

ReferenceSelection select_references(
    const std::map<std::string, std::vector<IcaoCompliance>>& compliances_by_subject) {
  ReferenceSelection selection;
  for (const auto& [subject, images] : compliances_by_subject) {
    if (images.size() < 2) {
      selection.skipped.push_back(
          {subject, images.empty() ? "no images" : "single image, no probe to label"});
      continue;
    }
    const IcaoCompliance* best = &images.front();
    for (const auto& c : images) {
      if (c.compliance > best->compliance ||
          (c.compliance == best->compliance && c.image_id < best->image_id))
        best = &c;
    }
    ReferenceAssignment a{subject, best->image_id, best->compliance, {}};
    for (const auto& c : images)
      if (c.image_id != best->image_id) a.probe_image_ids.push_back(c.image_id);
    std::sort(a.probe_image_ids.begin(), a.probe_image_ids.end());
    selection.references.push_back(std::move(a));
  }
  return selection;
}

double euclidean_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size())
    throw Error("euclidean_distance: dimension mismatch (" + std::to_string(a.size()) + " vs " +
                std::to_string(b.size()) + ")");
  CompensatedSum sum;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double d = a[i] - b[i];
    sum.add(d * d);
  }
  return std::sqrt(sum.value());
}

SystemDistanceSet mated_distances(std::span<const EmbeddingRecord> embeddings,
                                  std::span<const ReferenceAssignment> references) {
  SystemDistanceSet set;
  std::unordered_map<std::string, const EmbeddingRecord*> by_image;
  for (const auto& r : embeddings) {
    if (set.system_id.empty()) set.system_id = r.system_id;
    if (r.system_id != set.system_id)
      throw Error("mated_distances: mixed systems '" + set.system_id + "' and '" + r.system_id + "'");
    by_image.emplace(r.image_id, &r);
  }
  auto lookup = [&](const std::string& image_id, const std::string& subject) -> const EmbeddingRecord& {
    auto it = by_image.find(image_id);
    if (it == by_image.end())
      throw Error("no embedding for image '" + image_id + "' under system '" + set.system_id + "'");
    if (it->second->subject_id != subject)
      throw Error("image '" + image_id + "' belongs to subject '" + it->second->subject_id +
                  "', expected '" + subject + "'");
    return *it->second;
  };

  std::vector<const ReferenceAssignment*> ordered;
  for (const auto& a : references) ordered.push_back(&a);
  std::sort(ordered.begin(), ordered.end(),
            [](const auto* x, const auto* y) { return x->subject_id < y->subject_id; });

  std::vector<double> distances;
  for (const auto* a : ordered) {
    const auto& ref = lookup(a->reference_image_id, a->subject_id);
    std::vector<std::string> probes = a->probe_image_ids;
    std::sort(probes.begin(), probes.end());
    for (const auto& probe_id : probes) {
      const auto& probe = lookup(probe_id, a->subject_id);
      double d = euclidean_distance(ref.vector, probe.vector);
      set.entries.push_back({a->subject_id, probe_id, d});
      distances.push_back(d);
    }
  }
  if (distances.empty())
    throw Error("system '" + set.system_id + "': no mated distances (degenerate dataset)");
  set.stats.mean_d = mean(distances);
  set.stats.std_d = population_std(distances);
  if (!(set.stats.std_d > 0.0))
    throw Error("system '" + set.system_id + "': mated distances have zero spread (degenerate dataset)");
  return set;
}

std::vector<double> standardized_distances(const SystemDistanceSet& set) {
  std::vector<double> z;
  z.reserve(set.entries.size());
  for (const auto& e : set.entries) z.push_back((e.distance - set.stats.mean_d) / set.stats.std_d);
  return z;
}

double sigmoid_similarity(double distance, const DistanceStats& stats) {
  if (!(stats.std_d > 0.0)) throw Error("sigmoid_similarity: std_d must be positive");
  double z = (distance - stats.mean_d) / stats.std_d;
  if (z >= 0.0) {
    double e = std::exp(-z);
    return e / (1.0 + e);
  }
  return 1.0 / (1.0 + std::exp(z));
}

double fuse(std::span<const double> scores) {
  if (scores.empty()) throw Error("fuse: no scores");
  for (double s : scores)
    if (!(s >= 0.0 && s <= 1.0)) throw Error("fuse: score outside [0,1]");
  // Rounding in the division can push the mean a hair outside [min, max];
  // clamping keeps (q, q, q) -> q exact.
  auto [lo, hi] = std::minmax_element(scores.begin(), scores.end());
  return std::clamp(compensated_sum(scores) / static_cast<double>(scores.size()), *lo, *hi);
}

GroundtruthResult generate_groundtruth(std::span<const std::vector<EmbeddingRecord>> per_system,
                                       std::span<const IcaoScores> icao) {
  if (per_system.empty()) throw Error("generate_groundtruth: at least one system is required");

  // Order systems by id so the result does not depend on argument order.
  std::vector<const std::vector<EmbeddingRecord>*> systems;
  std::set<std::string> system_ids;
  for (const auto& records : per_system) {
    if (records.empty()) throw Error("generate_groundtruth: empty embedding set");
    const std::string& id = records.front().system_id;
    for (const auto& r : records)
      if (r.system_id != id)
        throw Error("embedding set mixes systems '" + id + "' and '" + r.system_id + "'");
    if (!system_ids.insert(id).second) throw Error("system '" + id + "' given more than once");
    systems.push_back(&records);
  }
  std::sort(systems.begin(), systems.end(),
            [](const auto* a, const auto* b) { return a->front().system_id < b->front().system_id; });

  std::map<std::string, std::string> subject_of;
  for (const auto* records : systems) {
    for (const auto& r : *records) {
      auto [it, inserted] = subject_of.emplace(r.image_id, r.subject_id);
      if (!inserted && it->second != r.subject_id)
        throw Error("image '" + r.image_id + "' has subject '" + it->second + "' and '" +
                    r.subject_id + "' in different systems");
    }
  }

  std::unordered_map<std::string, const IcaoScores*> icao_by_image;
  for (const auto& s : icao) icao_by_image.emplace(s.image_id, &s);

  std::map<std::string, std::vector<IcaoCompliance>> by_subject;
  for (const auto& [image_id, subject] : subject_of) {
    auto it = icao_by_image.find(image_id);
    if (it == icao_by_image.end()) throw Error("no ICAO scores for image '" + image_id + "'");
    by_subject[subject].push_back(aggregate_icao(*it->second));
  }

  GroundtruthResult result;
  result.selection = select_references(by_subject);

  std::vector<SystemDistanceSet> sets;
  for (const auto* records : systems) {
    sets.push_back(mated_distances(*records, result.selection.references));
    result.stats.push_back(
        {sets.back().system_id, sets.back().stats.mean_d, sets.back().stats.std_d});
  }

  const auto& first = sets.front().entries;
  std::vector<double> similarities(sets.size());
  for (std::size_t i = 0; i < first.size(); ++i) {
    for (std::size_t s = 0; s < sets.size(); ++s) {
      const auto& e = sets[s].entries[i];
      if (e.probe_image_id != first[i].probe_image_id)
        throw Error("internal error: probe order differs between systems");
      similarities[s] = sigmoid_similarity(e.distance, sets[s].stats);
    }
    result.labels.push_back({first[i].probe_image_id, fuse(similarities)});
  }
  std::sort(result.labels.begin(), result.labels.end(),
            [](const auto& a, const auto& b) { return a.image_id < b.image_id; });
  return result;
}

std::vector<SelectionRecord> selection_report(const ReferenceSelection& selection) {
  std::vector<SelectionRecord> out;
  for (const auto& r : selection.references)
    out.push_back({r.subject_id, "reference", r.reference_image_id, r.reference_compliance, ""});
  for (const auto& s : selection.skipped) out.push_back({s.subject_id, "skipped", "", 0.0, s.reason});
  return out;
}

}  // namespace faceq
