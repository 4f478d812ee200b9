#include "faceq/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>

#include "faceq/error.hpp"

namespace faceq {

namespace {

// Square orthonormal matrix (row-major) from modified Gram-Schmidt on a
// Gaussian matrix.
std::vector<double> random_rotation(std::size_t dim, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> m(dim * dim);
  for (auto& v : m) v = normal(rng);
  auto col = [&](std::size_t r, std::size_t c) -> double& { return m[r * dim + c]; };
  for (std::size_t c = 0; c < dim; ++c) {
    for (std::size_t p = 0; p < c; ++p) {
      double dot = 0.0;
      for (std::size_t r = 0; r < dim; ++r) dot += col(r, c) * col(r, p);
      for (std::size_t r = 0; r < dim; ++r) col(r, c) -= dot * col(r, p);
    }
    double norm = 0.0;
    for (std::size_t r = 0; r < dim; ++r) norm += col(r, c) * col(r, c);
    norm = std::sqrt(norm);
    if (!(norm > 1e-12)) throw Error("random_rotation: degenerate draw");
    for (std::size_t r = 0; r < dim; ++r) col(r, c) /= norm;
  }
  return m;
}

std::vector<double> rotate(const std::vector<double>& rotation, const std::vector<double>& v) {
  const std::size_t dim = v.size();
  std::vector<double> out(dim, 0.0);
  for (std::size_t r = 0; r < dim; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < dim; ++c) s += rotation[r * dim + c] * v[c];
    out[r] = s;
  }
  return out;
}

}  // namespace

void SynthConfig::validate() const {
  if (n_subjects == 0) throw Error("synth: n_subjects must be positive");
  if (images_per_subject < 2) throw Error("synth: images_per_subject must be at least 2");
  if (dim == 0) throw Error("synth: dim must be positive");
  if (n_systems == 0) throw Error("synth: n_systems must be positive");
  if (!(sigma_min > 0.0) || !(sigma_max > 0.0)) throw Error("synth: sigmas must be positive");
  // Equal sigmas are accepted: they decouple distance from quality.
  if (sigma_min > sigma_max) throw Error("synth: sigma_min must not exceed sigma_max");
  if (!(icao_noise >= 0.0)) throw Error("synth: icao_noise must be nonnegative");
}

std::string synth_subject_id(std::size_t subject) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "s%06zu", subject);
  return buf;
}

std::string synth_image_id(std::size_t subject, std::size_t image) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "s%06zu_i%03zu", subject, image);
  return buf;
}

std::string synth_system_id(std::size_t system) { return "sys" + std::to_string(system); }

SynthDataset generate(const SynthConfig& config) {
  config.validate();
  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);

  std::vector<std::vector<double>> rotations;
  for (std::size_t s = 0; s < config.n_systems; ++s) rotations.push_back(random_rotation(config.dim, rng));

  SynthDataset data;
  data.embeddings.resize(config.n_systems);
  for (std::size_t subject = 0; subject < config.n_subjects; ++subject) {
    const std::string subject_id = synth_subject_id(subject);
    std::vector<double> centroid(config.dim);
    for (auto& c : centroid) c = normal(rng);
    std::vector<std::vector<double>> rotated;
    for (const auto& r : rotations) rotated.push_back(rotate(r, centroid));

    SubjectGallery gallery{subject_id, synth_image_id(subject, 0), {}};
    for (std::size_t image = 0; image < config.images_per_subject; ++image) {
      const std::string image_id = synth_image_id(subject, image);
      const bool reference = image == 0;
      const double q = reference ? 1.0 : uniform(rng);
      const double sigma = config.sigma_min + (1.0 - q) * (config.sigma_max - config.sigma_min);
      for (std::size_t s = 0; s < config.n_systems; ++s) {
        EmbeddingRecord rec{image_id, subject_id, synth_system_id(s), rotated[s]};
        for (auto& v : rec.vector) v += sigma * normal(rng);
        data.embeddings[s].push_back(std::move(rec));
      }
      IcaoScores scores{image_id, {}};
      for (std::string_view test : kIcaoTests) {
        double noise = config.icao_noise > 0.0 ? config.icao_noise * normal(rng) : 0.0;
        scores.tests.emplace(std::string(test),
                             reference ? 100.0 : std::clamp(100.0 * q + noise, 0.0, 100.0));
      }
      data.icao.push_back(std::move(scores));
      data.latent.push_back({image_id, q});
      if (!reference) gallery.probe_ids.push_back(image_id);
    }
    data.galleries.push_back(std::move(gallery));
  }
  return data;
}

std::vector<std::filesystem::path> write_dataset(const SynthDataset& dataset,
                                                 const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw DataError(dir.string(), 0, "cannot create directory: " + ec.message());
  std::vector<std::filesystem::path> written;
  for (const auto& records : dataset.embeddings) {
    auto path = dir / ("embeddings_" + records.front().system_id + ".jsonl");
    write_embeddings(path, records);
    written.push_back(path);
  }
  written.push_back(dir / "icao.jsonl");
  write_icao(written.back(), dataset.icao);
  written.push_back(dir / "latent.jsonl");
  write_latent(written.back(), dataset.latent);
  return written;
}

std::vector<PairSpec> make_pairs(const SynthDataset& dataset, MatedOnly) {
  return mated_pairs(dataset.galleries);
}

std::vector<PairSpec> make_pairs(const SynthDataset& dataset, NonmatedSample policy) {
  return nonmated_pairs_per_subject(dataset.galleries, policy.per_subject, policy.seed);
}

}  // namespace faceq
