#pragma once

// Quality regression head trained on top of frozen recognition embeddings.
//
//   x_hat = mask * (x - mean) / std        (inverted dropout, training only)
//   y     = w2 . relu(W1^T x_hat + b1) + b2
//
// Training minimizes mean squared error with plain mini-batch SGD. Every
// random draw (initialization, shuffling, validation split, dropout masks)
// comes from one seeded engine, so identical inputs give bit-identical heads.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "faceq/dataio.hpp"

namespace faceq {

struct TrainConfig {
  std::size_t hidden_dim = 32;
  double learning_rate = 1e-3;
  std::size_t epochs = 200;
  std::size_t batch_size = 64;
  double dropout_rate = 0.5;
  std::uint64_t seed = 0;
  double validation_fraction = 0.1;

  void validate() const;
};

struct EpochLoss {
  std::size_t epoch = 0;  // 1-based
  double train_mse = 0.0;
  std::optional<double> validation_mse;
};

struct RegressionHead {
  std::size_t input_dim = 0;
  std::size_t hidden_dim = 0;
  std::vector<double> w1;  // input_dim x hidden_dim, row-major
  std::vector<double> b1;  // hidden_dim
  std::vector<double> w2;  // hidden_dim
  double b2 = 0.0;
  double dropout_rate = 0.0;
  std::vector<double> feature_mean;  // input_dim
  std::vector<double> feature_std;   // input_dim, all > 0
  std::string system_id;             // recognizer the features came from
  TrainConfig config;                // configuration used for training
  std::vector<EpochLoss> loss_trace;

  /// Zero weights, identity standardization.
  static RegressionHead zeros(std::size_t input_dim, std::size_t hidden_dim);

  /// Throws faceq::Error when dimensions disagree or a value is non-finite.
  void validate() const;

  double& w1_at(std::size_t input, std::size_t hidden) { return w1[input * hidden_dim + hidden]; }
  double w1_at(std::size_t input, std::size_t hidden) const { return w1[input * hidden_dim + hidden]; }
};

/// Per-input multipliers: 0 for dropped inputs, 1 / (1 - rate) for kept ones.
struct DropoutMask {
  std::vector<double> scale;

  static DropoutMask sample(std::size_t dim, double rate, std::mt19937_64& rng);
};

/// Inference-mode forward pass on a raw (unstandardized) embedding.
double forward(const RegressionHead& head, std::span<const double> x);

/// Training-mode forward pass with a fixed dropout mask.
double forward(const RegressionHead& head, std::span<const double> x, const DropoutMask& mask);

struct Batch {
  std::vector<std::vector<double>> inputs;  // raw embeddings
  std::vector<double> targets;
  std::vector<DropoutMask> masks;  // empty, or one per input
};

struct Gradients {
  std::vector<double> w1;
  std::vector<double> b1;
  std::vector<double> w2;
  double b2 = 0.0;
};

/// Mean squared error of the head over the batch.
double batch_loss(const RegressionHead& head, const Batch& batch);

/// Mean squared error plus its analytic gradient with respect to every
/// trainable parameter.
double loss_and_gradients(const RegressionHead& head, const Batch& batch, Gradients& grads);

/// Maximum relative error between analytic gradients and central differences
/// with the given step. Relative error is |a - n| / max(|a|, |n|, 1e-6); the
/// floor keeps parameters with vanishing gradient from dividing roundoff by
/// zero.
double gradient_check(const RegressionHead& head, const Batch& batch, double step = 1e-5);

struct TrainResult {
  RegressionHead head;
  std::vector<EpochLoss> trace;
};

/// Fits a head mapping `features` (one system) to `labels`. Raises
/// faceq::Error for missing features, degenerate labels, or divergence.
TrainResult train(std::span<const EmbeddingRecord> features, std::span<const QualityLabel> labels,
                  const TrainConfig& config);

/// Inference over every record, clamped to [0, 1].
std::vector<QualityLabel> predict(const RegressionHead& head,
                                  std::span<const EmbeddingRecord> features);

inline constexpr int kModelFormatVersion = 1;

void save_model(const std::filesystem::path& path, const RegressionHead& head);
RegressionHead load_model(const std::filesystem::path& path);
std::string serialize_model(const RegressionHead& head);
RegressionHead deserialize_model(const std::string& text, const std::string& source);

}  // namespace faceq
