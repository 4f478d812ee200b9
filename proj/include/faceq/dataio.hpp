#pragma once

// On-disk formats shared by every stage of the pipeline.
//
// Records are stored one JSON object per line (UTF-8, LF terminated). Reals
// are written with 9 significant digits so identical inputs always produce
// identical bytes. Curve and histogram outputs are CSV with a header row.

#include <array>
#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace faceq {

struct EmbeddingRecord {
  std::string image_id;
  std::string subject_id;
  std::string system_id;
  std::vector<double> vector;

  bool operator==(const EmbeddingRecord&) const = default;
};

/// The compliance tests that make up the aggregated ICAO score.
inline constexpr std::array<std::string_view, 10> kIcaoTests = {
    "blur",  "illumination", "pixelation", "background", "roll",
    "pitch", "yaw",          "hat",        "glasses",    "shadows"};

bool is_icao_test(std::string_view name);

struct IcaoScores {
  std::string image_id;
  std::map<std::string, double> tests;  // test name -> score in [0, 100]

  bool operator==(const IcaoScores&) const = default;
};

struct QualityLabel {
  std::string image_id;
  double quality = 0.0;  // [0, 1]

  bool operator==(const QualityLabel&) const = default;
};

struct PairScore {
  std::string probe_id;
  std::string ref_id;
  std::string probe_subject;
  std::string ref_subject;
  double score = 0.0;
  bool mated = false;

  bool operator==(const PairScore&) const = default;
};

/// Per-system standardization statistics emitted next to groundtruth labels.
struct DistanceStatsRecord {
  std::string system_id;
  double mean_d = 0.0;
  double std_d = 1.0;

  bool operator==(const DistanceStatsRecord&) const = default;
};

/// One line of the groundtruth selection report: either the reference chosen
/// for a subject, or the reason the subject was skipped.
struct SelectionRecord {
  std::string subject_id;
  std::string status;  // "reference" or "skipped"
  std::string image_id;  // reference image (empty when skipped)
  double compliance = 0.0;
  std::string reason;  // empty for references

  bool operator==(const SelectionRecord&) const = default;
};

struct LatentQuality {
  std::string image_id;
  double q_true = 0.0;

  bool operator==(const LatentQuality&) const = default;
};

struct ErcPoint {
  double fraction_rejected = 0.0;
  double fnmr = 0.0;
  double perfect = 0.0;
};

struct ErcCurve {
  double initial_fnmr = 0.0;
  double threshold = 0.0;
  std::vector<ErcPoint> points;
};

struct Histogram {
  std::vector<double> bin_edges;  // bins + 1 edges over [0, 1]
  std::vector<std::size_t> counts;
  std::vector<double> densities;
};

// Readers validate every record invariant and throw DataError naming the
// source and line on the first violation. Blank lines are ignored.
std::vector<EmbeddingRecord> parse_embeddings(std::istream& in, const std::string& source);
std::vector<IcaoScores> parse_icao(std::istream& in, const std::string& source);
std::vector<QualityLabel> parse_labels(std::istream& in, const std::string& source);
std::vector<PairScore> parse_pairs(std::istream& in, const std::string& source);
std::vector<DistanceStatsRecord> parse_distance_stats(std::istream& in, const std::string& source);
std::vector<SelectionRecord> parse_selection(std::istream& in, const std::string& source);
std::vector<LatentQuality> parse_latent(std::istream& in, const std::string& source);

std::vector<EmbeddingRecord> read_embeddings(const std::filesystem::path& path);
std::vector<IcaoScores> read_icao(const std::filesystem::path& path);
std::vector<QualityLabel> read_labels(const std::filesystem::path& path);
std::vector<PairScore> read_pairs(const std::filesystem::path& path);
std::vector<DistanceStatsRecord> read_distance_stats(const std::filesystem::path& path);
std::vector<SelectionRecord> read_selection(const std::filesystem::path& path);
std::vector<LatentQuality> read_latent(const std::filesystem::path& path);

void write_embeddings(std::ostream& out, const std::vector<EmbeddingRecord>& records);
void write_icao(std::ostream& out, const std::vector<IcaoScores>& records);
void write_labels(std::ostream& out, const std::vector<QualityLabel>& records);
void write_pairs(std::ostream& out, const std::vector<PairScore>& records);
void write_distance_stats(std::ostream& out, const std::vector<DistanceStatsRecord>& records);
void write_selection(std::ostream& out, const std::vector<SelectionRecord>& records);
void write_latent(std::ostream& out, const std::vector<LatentQuality>& records);
void write_erc_csv(std::ostream& out, const ErcCurve& curve);
void write_histogram_csv(std::ostream& out, const Histogram& histogram);

void write_embeddings(const std::filesystem::path& path, const std::vector<EmbeddingRecord>& records);
void write_icao(const std::filesystem::path& path, const std::vector<IcaoScores>& records);
void write_labels(const std::filesystem::path& path, const std::vector<QualityLabel>& records);
void write_pairs(const std::filesystem::path& path, const std::vector<PairScore>& records);
void write_distance_stats(const std::filesystem::path& path,
                          const std::vector<DistanceStatsRecord>& records);
void write_selection(const std::filesystem::path& path, const std::vector<SelectionRecord>& records);
void write_latent(const std::filesystem::path& path, const std::vector<LatentQuality>& records);
void write_erc_csv(const std::filesystem::path& path, const ErcCurve& curve);
void write_histogram_csv(const std::filesystem::path& path, const Histogram& histogram);

/// Formats a real with 9 significant digits, the fixed precision of every
/// line-delimited and tabular output.
std::string format_real(double value);

}  // namespace faceq
