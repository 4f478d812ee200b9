#include "faceq/dataio.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <initializer_list>
#include <istream>
#include <ostream>
#include <set>
#include <unordered_map>
#include <utility>

#include <json.hpp>

#include "faceq/error.hpp"

namespace faceq {

namespace {

using json = nlohmann::json;

// Reads `in` line by line and hands every non-blank line to `parse` as a
// JSON object together with its 1-based line number.
template <typename Fn>
void for_each_object(std::istream& in, const std::string& source, Fn&& parse) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (std::all_of(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c); }))
      continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::out_of_range& e) {
      // Number literals beyond double range (1e400) overflow in the parser.
      throw DataError(source, line_no, std::string("non-finite value: ") + e.what());
    } catch (const json::exception& e) {
      throw DataError(source, line_no, std::string("malformed line: ") + e.what());
    }
    if (!obj.is_object()) throw DataError(source, line_no, "malformed line: expected a JSON object");
    parse(obj, line_no);
  }
  if (in.bad()) throw DataError(source, 0, "read failure");
}

class Fields {
 public:
  Fields(const json& obj, const std::string& source, std::size_t line,
         std::initializer_list<const char*> expected)
      : obj_(obj), source_(source), line_(line) {
    for (const char* key : expected) {
      if (!obj.contains(key)) fail(std::string("missing field '") + key + "'");
    }
    for (const auto& item : obj.items()) {
      bool known = std::any_of(expected.begin(), expected.end(),
                               [&](const char* key) { return item.key() == key; });
      if (!known) fail("unknown field '" + item.key() + "'");
    }
  }

  std::string string(const char* key) const {
    const json& v = obj_.at(key);
    if (!v.is_string()) fail(std::string("field '") + key + "' must be a string");
    return v.get<std::string>();
  }

  double real(const char* key) const { return to_real(obj_.at(key), key); }

  bool boolean(const char* key) const {
    const json& v = obj_.at(key);
    if (!v.is_boolean()) fail(std::string("field '") + key + "' must be a boolean");
    return v.get<bool>();
  }

  const json& raw(const char* key) const { return obj_.at(key); }

  double to_real(const json& v, const std::string& what) const {
    // Serializers write NaN and infinities as null.
    if (v.is_null()) fail("non-finite value in '" + what + "'");
    if (!v.is_number()) fail("field '" + what + "' must be a number");
    double x = v.get<double>();
    if (!std::isfinite(x)) fail("non-finite value in '" + what + "'");
    return x;
  }

  [[noreturn]] void fail(const std::string& message) const {
    throw DataError(source_, line_, message);
  }

 private:
  const json& obj_;
  const std::string& source_;
  std::size_t line_;
};

std::string quoted(const std::string& s) {
  try {
    return json(s).dump();
  } catch (const json::exception& e) {
    throw Error(std::string("cannot serialize string: ") + e.what());
  }
}

template <typename Records, typename Writer>
void write_file(const std::filesystem::path& path, const Records& records, Writer writer) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError(path.string(), 0, "cannot open for writing");
  writer(out, records);
  out.flush();
  if (!out) throw DataError(path.string(), 0, "write failure");
}

template <typename Parser>
auto read_file(const std::filesystem::path& path, Parser parser) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(path.string(), 0, "cannot open for reading");
  return parser(in, path.string());
}

void check_id(const Fields& f, const std::string& value, const char* key) {
  if (value.empty()) f.fail(std::string("field '") + key + "' must not be empty");
}

}  // namespace

bool is_icao_test(std::string_view name) {
  return std::find(kIcaoTests.begin(), kIcaoTests.end(), name) != kIcaoTests.end();
}

std::string format_real(double value) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", value);
  return buf;
}

// ---- readers ---------------------------------------------------------------

std::vector<EmbeddingRecord> parse_embeddings(std::istream& in, const std::string& source) {
  std::vector<EmbeddingRecord> records;
  std::unordered_map<std::string, std::pair<std::size_t, std::size_t>> dims;  // system -> (dim, line)
  std::set<std::pair<std::string, std::string>> seen;
  for_each_object(in, source, [&](const json& obj, std::size_t line) {
    Fields f(obj, source, line, {"image_id", "subject_id", "system_id", "vector"});
    EmbeddingRecord r;
    r.image_id = f.string("image_id");
    r.subject_id = f.string("subject_id");
    r.system_id = f.string("system_id");
    check_id(f, r.image_id, "image_id");
    check_id(f, r.subject_id, "subject_id");
    check_id(f, r.system_id, "system_id");
    const json& v = f.raw("vector");
    if (!v.is_array()) f.fail("field 'vector' must be an array");
    if (v.empty()) f.fail("field 'vector' must not be empty");
    r.vector.reserve(v.size());
    for (const json& x : v) r.vector.push_back(f.to_real(x, "vector"));

    auto [it, inserted] = dims.try_emplace(r.system_id, r.vector.size(), line);
    if (!inserted && it->second.first != r.vector.size()) {
      f.fail("dimension mismatch for system '" + r.system_id + "': got " +
             std::to_string(r.vector.size()) + ", expected " + std::to_string(it->second.first) +
             " (from line " + std::to_string(it->second.second) + ")");
    }
    if (!seen.emplace(r.image_id, r.system_id).second)
      f.fail("duplicate image '" + r.image_id + "' for system '" + r.system_id + "'");
    records.push_back(std::move(r));
  });
  return records;
}

std::vector<IcaoScores> parse_icao(std::istream& in, const std::string& source) {
  std::vector<IcaoScores> records;
  std::set<std::string> seen;
  for_each_object(in, source, [&](const json& obj, std::size_t line) {
    Fields f(obj, source, line, {"image_id", "tests"});
    IcaoScores r;
    r.image_id = f.string("image_id");
    check_id(f, r.image_id, "image_id");
    const json& tests = f.raw("tests");
    if (!tests.is_object()) f.fail("field 'tests' must be an object");
    for (const auto& item : tests.items()) {
      if (!is_icao_test(item.key())) f.fail("unknown ICAO test '" + item.key() + "'");
      double score = f.to_real(item.value(), item.key());
      if (score < 0.0 || score > 100.0)
        f.fail("score for '" + item.key() + "' out of range [0,100]: " + format_real(score));
      r.tests.emplace(item.key(), score);
    }
    if (!seen.insert(r.image_id).second) f.fail("duplicate image '" + r.image_id + "'");
    records.push_back(std::move(r));
  });
  return records;
}

std::vector<QualityLabel> parse_labels(std::istream& in, const std::string& source) {
  std::vector<QualityLabel> records;
  std::set<std::string> seen;
  for_each_object(in, source, [&](const json& obj, std::size_t line) {
    Fields f(obj, source, line, {"image_id", "quality"});
    QualityLabel r{f.string("image_id"), f.real("quality")};
    check_id(f, r.image_id, "image_id");
    if (r.quality < 0.0 || r.quality > 1.0)
      f.fail("quality out of range [0,1]: " + format_real(r.quality));
    if (!seen.insert(r.image_id).second) f.fail("duplicate image '" + r.image_id + "'");
    records.push_back(std::move(r));
  });
  return records;
}

std::vector<PairScore> parse_pairs(std::istream& in, const std::string& source) {
  std::vector<PairScore> records;
  for_each_object(in, source, [&](const json& obj, std::size_t line) {
    Fields f(obj, source, line,
             {"probe_id", "ref_id", "probe_subject", "ref_subject", "score", "mated"});
    PairScore r;
    r.probe_id = f.string("probe_id");
    r.ref_id = f.string("ref_id");
    r.probe_subject = f.string("probe_subject");
    r.ref_subject = f.string("ref_subject");
    r.score = f.real("score");
    r.mated = f.boolean("mated");
    check_id(f, r.probe_id, "probe_id");
    check_id(f, r.ref_id, "ref_id");
    if (r.probe_id == r.ref_id) f.fail("probe_id equals ref_id '" + r.probe_id + "'");
    if (r.mated != (r.probe_subject == r.ref_subject))
      f.fail("'mated' flag disagrees with subject ids");
    records.push_back(std::move(r));
  });
  return records;
}

std::vector<DistanceStatsRecord> parse_distance_stats(std::istream& in, const std::string& source) {
  std::vector<DistanceStatsRecord> records;
  for_each_object(in, source, [&](const json& obj, std::size_t line) {
    Fields f(obj, source, line, {"system_id", "mean_d", "std_d"});
    DistanceStatsRecord r{f.string("system_id"), f.real("mean_d"), f.real("std_d")};
    if (!(r.std_d > 0.0)) f.fail("std_d must be positive");
    records.push_back(std::move(r));
  });
  return records;
}

std::vector<SelectionRecord> parse_selection(std::istream& in, const std::string& source) {
  std::vector<SelectionRecord> records;
  for_each_object(in, source, [&](const json& obj, std::size_t line) {
    if (obj.contains("status") && obj["status"] == "skipped") {
      Fields f(obj, source, line, {"subject_id", "status", "reason"});
      records.push_back({f.string("subject_id"), "skipped", "", 0.0, f.string("reason")});
    } else {
      Fields f(obj, source, line, {"subject_id", "status", "image_id", "compliance"});
      SelectionRecord r{f.string("subject_id"), f.string("status"), f.string("image_id"),
                        f.real("compliance"), ""};
      if (r.status != "reference") f.fail("status must be 'reference' or 'skipped'");
      if (r.compliance < 0.0 || r.compliance > 100.0) f.fail("compliance out of range [0,100]");
      records.push_back(std::move(r));
    }
  });
  return records;
}

std::vector<LatentQuality> parse_latent(std::istream& in, const std::string& source) {
  std::vector<LatentQuality> records;
  for_each_object(in, source, [&](const json& obj, std::size_t line) {
    Fields f(obj, source, line, {"image_id", "q_true"});
    LatentQuality r{f.string("image_id"), f.real("q_true")};
    if (r.q_true < 0.0 || r.q_true > 1.0) f.fail("q_true out of range [0,1]");
    records.push_back(std::move(r));
  });
  return records;
}

std::vector<EmbeddingRecord> read_embeddings(const std::filesystem::path& path) {
  return read_file(path, [](std::istream& in, const std::string& s) { return parse_embeddings(in, s); });
}
std::vector<IcaoScores> read_icao(const std::filesystem::path& path) {
  return read_file(path, [](std::istream& in, const std::string& s) { return parse_icao(in, s); });
}
std::vector<QualityLabel> read_labels(const std::filesystem::path& path) {
  return read_file(path, [](std::istream& in, const std::string& s) { return parse_labels(in, s); });
}
std::vector<PairScore> read_pairs(const std::filesystem::path& path) {
  return read_file(path, [](std::istream& in, const std::string& s) { return parse_pairs(in, s); });
}
std::vector<DistanceStatsRecord> read_distance_stats(const std::filesystem::path& path) {
  return read_file(path,
                   [](std::istream& in, const std::string& s) { return parse_distance_stats(in, s); });
}
std::vector<SelectionRecord> read_selection(const std::filesystem::path& path) {
  return read_file(path, [](std::istream& in, const std::string& s) { return parse_selection(in, s); });
}
std::vector<LatentQuality> read_latent(const std::filesystem::path& path) {
  return read_file(path, [](std::istream& in, const std::string& s) { return parse_latent(in, s); });
}

// ---- writers ---------------------------------------------------------------

void write_embeddings(std::ostream& out, const std::vector<EmbeddingRecord>& records) {
  for (const auto& r : records) {
    out << "{\"image_id\":" << quoted(r.image_id) << ",\"subject_id\":" << quoted(r.subject_id)
        << ",\"system_id\":" << quoted(r.system_id) << ",\"vector\":[";
    for (std::size_t i = 0; i < r.vector.size(); ++i) {
      if (i) out << ',';
      out << format_real(r.vector[i]);
    }
    out << "]}\n";
  }
}

void write_icao(std::ostream& out, const std::vector<IcaoScores>& records) {
  for (const auto& r : records) {
    out << "{\"image_id\":" << quoted(r.image_id) << ",\"tests\":{";
    bool first = true;
    for (const auto& [name, score] : r.tests) {
      if (!first) out << ',';
      first = false;
      out << quoted(name) << ':' << format_real(score);
    }
    out << "}}\n";
  }
}

void write_labels(std::ostream& out, const std::vector<QualityLabel>& records) {
  for (const auto& r : records)
    out << "{\"image_id\":" << quoted(r.image_id) << ",\"quality\":" << format_real(r.quality)
        << "}\n";
}

void write_pairs(std::ostream& out, const std::vector<PairScore>& records) {
  for (const auto& r : records) {
    out << "{\"probe_id\":" << quoted(r.probe_id) << ",\"ref_id\":" << quoted(r.ref_id)
        << ",\"probe_subject\":" << quoted(r.probe_subject)
        << ",\"ref_subject\":" << quoted(r.ref_subject) << ",\"score\":" << format_real(r.score)
        << ",\"mated\":" << (r.mated ? "true" : "false") << "}\n";
  }
}

void write_distance_stats(std::ostream& out, const std::vector<DistanceStatsRecord>& records) {
  for (const auto& r : records)
    out << "{\"system_id\":" << quoted(r.system_id) << ",\"mean_d\":" << format_real(r.mean_d)
        << ",\"std_d\":" << format_real(r.std_d) << "}\n";
}

void write_selection(std::ostream& out, const std::vector<SelectionRecord>& records) {
  for (const auto& r : records) {
    out << "{\"subject_id\":" << quoted(r.subject_id) << ",\"status\":" << quoted(r.status);
    if (r.status == "skipped")
      out << ",\"reason\":" << quoted(r.reason);
    else
      out << ",\"image_id\":" << quoted(r.image_id) << ",\"compliance\":" << format_real(r.compliance);
    out << "}\n";
  }
}

void write_latent(std::ostream& out, const std::vector<LatentQuality>& records) {
  for (const auto& r : records)
    out << "{\"image_id\":" << quoted(r.image_id) << ",\"q_true\":" << format_real(r.q_true) << "}\n";
}

void write_erc_csv(std::ostream& out, const ErcCurve& curve) {
  out << "fraction_rejected,fnmr,perfect\n";
  for (const auto& p : curve.points)
    out << format_real(p.fraction_rejected) << ',' << format_real(p.fnmr) << ','
        << format_real(p.perfect) << '\n';
}

void write_histogram_csv(std::ostream& out, const Histogram& histogram) {
  out << "bin_low,bin_high,count,density\n";
  for (std::size_t i = 0; i < histogram.counts.size(); ++i)
    out << format_real(histogram.bin_edges[i]) << ',' << format_real(histogram.bin_edges[i + 1])
        << ',' << histogram.counts[i] << ',' << format_real(histogram.densities[i]) << '\n';
}

void write_embeddings(const std::filesystem::path& path, const std::vector<EmbeddingRecord>& records) {
  write_file(path, records, [](std::ostream& o, const auto& r) { write_embeddings(o, r); });
}
void write_icao(const std::filesystem::path& path, const std::vector<IcaoScores>& records) {
  write_file(path, records, [](std::ostream& o, const auto& r) { write_icao(o, r); });
}
void write_labels(const std::filesystem::path& path, const std::vector<QualityLabel>& records) {
  write_file(path, records, [](std::ostream& o, const auto& r) { write_labels(o, r); });
}
void write_pairs(const std::filesystem::path& path, const std::vector<PairScore>& records) {
  write_file(path, records, [](std::ostream& o, const auto& r) { write_pairs(o, r); });
}
void write_distance_stats(const std::filesystem::path& path,
                          const std::vector<DistanceStatsRecord>& records) {
  write_file(path, records, [](std::ostream& o, const auto& r) { write_distance_stats(o, r); });
}
void write_selection(const std::filesystem::path& path, const std::vector<SelectionRecord>& records) {
  write_file(path, records, [](std::ostream& o, const auto& r) { write_selection(o, r); });
}
void write_latent(const std::filesystem::path& path, const std::vector<LatentQuality>& records) {
  write_file(path, records, [](std::ostream& o, const auto& r) { write_latent(o, r); });
}
void write_erc_csv(const std::filesystem::path& path, const ErcCurve& curve) {
  write_file(path, curve, [](std::ostream& o, const auto& c) { write_erc_csv(o, c); });
}
void write_histogram_csv(const std::filesystem::path& path, const Histogram& histogram) {
  write_file(path, histogram, [](std::ostream& o, const auto& h) { write_histogram_csv(o, h); });
}

}  // namespace faceq
