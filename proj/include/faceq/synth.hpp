#pragma once

// Synthetic multi-system face-embedding datasets with known latent quality.
//
// Each subject gets a standard-normal centroid. Each image gets a latent
// quality q ~ U(0, 1), except one reference per subject with q = 1. Under
// system s an image embeds as R_s * centroid + N(0, sigma(q)^2 I) where R_s is
// a random rotation and sigma(q) = sigma_min + (1 - q) (sigma_max - sigma_min).
// ICAO test scores are clamp(100 q + N(0, icao_noise^2), 0, 100), with the
// reference forced to 100 on every test.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "faceq/dataio.hpp"
#include "faceq/evalkit.hpp"

namespace faceq {

struct SynthConfig {
  std::size_t n_subjects = 200;
  std::size_t images_per_subject = 10;
  std::size_t dim = 64;
  std::size_t n_systems = 3;
  double sigma_min = 0.05;
  double sigma_max = 1.0;
  double icao_noise = 2.0;
  std::uint64_t seed = 42;

  void validate() const;
};

struct SynthDataset {
  std::vector<std::vector<EmbeddingRecord>> embeddings;  // one list per system
  std::vector<IcaoScores> icao;
  std::vector<LatentQuality> latent;
  std::vector<SubjectGallery> galleries;  // designated references
};

std::string synth_subject_id(std::size_t subject);
std::string synth_image_id(std::size_t subject, std::size_t image);
std::string synth_system_id(std::size_t system);

SynthDataset generate(const SynthConfig& config);

/// Writes embeddings_<system>.jsonl, icao.jsonl and latent.jsonl into `dir`
/// and returns the paths written.
std::vector<std::filesystem::path> write_dataset(const SynthDataset& dataset,
                                                 const std::filesystem::path& dir);

struct MatedOnly {};
struct NonmatedSample {
  std::size_t per_subject = 1;
  std::uint64_t seed = 0;
};

std::vector<PairSpec> make_pairs(const SynthDataset& dataset, MatedOnly);
std::vector<PairSpec> make_pairs(const SynthDataset& dataset, NonmatedSample policy);

}  // namespace faceq
