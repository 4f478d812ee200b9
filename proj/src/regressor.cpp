#include "faceq/regressor.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "faceq/error.hpp"
#include "faceq/stats.hpp"

namespace faceq {

namespace {

struct Activations {
  std::vector<double> x_hat;
  std::vector<double> pre;     // W1^T x_hat + b1
  std::vector<double> hidden;  // relu(pre)
  double output = 0.0;
};

void check_input(const RegressionHead& head, std::span<const double> x) {
  if (x.size() != head.input_dim)
    throw Error("feature dimension " + std::to_string(x.size()) + " does not match model input " +
                std::to_string(head.input_dim));
}

void run_forward(const RegressionHead& head, std::span<const double> x, const DropoutMask* mask,
                 Activations& act) {
  check_input(head, x);
  if (mask && mask->scale.size() != head.input_dim) throw Error("dropout mask dimension mismatch");
  const std::size_t n_in = head.input_dim;
  const std::size_t n_hid = head.hidden_dim;
  act.x_hat.resize(n_in);
  for (std::size_t i = 0; i < n_in; ++i) {
    double v = (x[i] - head.feature_mean[i]) / head.feature_std[i];
    act.x_hat[i] = mask ? v * mask->scale[i] : v;
  }
  act.pre.assign(head.b1.begin(), head.b1.end());
  for (std::size_t i = 0; i < n_in; ++i) {
    const double xi = act.x_hat[i];
    if (xi == 0.0) continue;
    const double* row = head.w1.data() + i * n_hid;
    for (std::size_t j = 0; j < n_hid; ++j) act.pre[j] += xi * row[j];
  }
  act.hidden.resize(n_hid);
  double y = head.b2;
  for (std::size_t j = 0; j < n_hid; ++j) {
    act.hidden[j] = act.pre[j] > 0.0 ? act.pre[j] : 0.0;
    y += head.w2[j] * act.hidden[j];
  }
  act.output = y;
}

void check_batch(const RegressionHead& head, const Batch& batch) {
  if (batch.inputs.empty()) throw Error("empty batch");
  if (batch.targets.size() != batch.inputs.size()) throw Error("batch targets/inputs size mismatch");
  if (!batch.masks.empty() && batch.masks.size() != batch.inputs.size())
    throw Error("batch masks/inputs size mismatch");
  (void)head;
}

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

// Visits every trainable parameter in a fixed order.
template <typename Head, typename Fn>
void for_each_parameter(Head& head, Fn&& fn) {
  for (auto& w : head.w1) fn(w);
  for (auto& b : head.b1) fn(b);
  for (auto& w : head.w2) fn(w);
  fn(head.b2);
}

}  // namespace

void TrainConfig::validate() const {
  if (hidden_dim == 0) throw Error("hidden_dim must be positive");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw Error("learning_rate must be positive");
  if (epochs == 0) throw Error("epochs must be positive");
  if (batch_size == 0) throw Error("batch_size must be positive");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw Error("dropout_rate must be in [0,1)");
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0))
    throw Error("validation_fraction must be in [0,1)");
}

RegressionHead RegressionHead::zeros(std::size_t input_dim, std::size_t hidden_dim) {
  RegressionHead h;
  h.input_dim = input_dim;
  h.hidden_dim = hidden_dim;
  h.w1.assign(input_dim * hidden_dim, 0.0);
  h.b1.assign(hidden_dim, 0.0);
  h.w2.assign(hidden_dim, 0.0);
  h.feature_mean.assign(input_dim, 0.0);
  h.feature_std.assign(input_dim, 1.0);
  h.config.hidden_dim = hidden_dim;
  h.config.dropout_rate = 0.0;
  return h;
}

void RegressionHead::validate() const {
  if (input_dim == 0 || hidden_dim == 0) throw Error("model dimensions must be positive");
  if (w1.size() != input_dim * hidden_dim) throw Error("W1 has wrong size");
  if (b1.size() != hidden_dim) throw Error("b1 has wrong size");
  if (w2.size() != hidden_dim) throw Error("W2 has wrong size");
  if (feature_mean.size() != input_dim || feature_std.size() != input_dim)
    throw Error("feature standardization has wrong size");
  if (!all_finite(w1) || !all_finite(b1) || !all_finite(w2) || !std::isfinite(b2) ||
      !all_finite(feature_mean) || !all_finite(feature_std))
    throw Error("model contains non-finite parameters");
  if (std::any_of(feature_std.begin(), feature_std.end(), [](double s) { return !(s > 0.0); }))
    throw Error("feature standardization std entries must be positive");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw Error("dropout_rate must be in [0,1)");
}

DropoutMask DropoutMask::sample(std::size_t dim, double rate, std::mt19937_64& rng) {
  DropoutMask m;
  m.scale.assign(dim, 1.0);
  if (rate <= 0.0) return m;
  const double keep_scale = 1.0 / (1.0 - rate);
  std::bernoulli_distribution drop(rate);
  for (auto& s : m.scale) s = drop(rng) ? 0.0 : keep_scale;
  return m;
}

double forward(const RegressionHead& head, std::span<const double> x) {
  Activations act;
  run_forward(head, x, nullptr, act);
  return act.output;
}

double forward(const RegressionHead& head, std::span<const double> x, const DropoutMask& mask) {
  Activations act;
  run_forward(head, x, &mask, act);
  return act.output;
}

double batch_loss(const RegressionHead& head, const Batch& batch) {
  check_batch(head, batch);
  Activations act;
  CompensatedSum sum;
  for (std::size_t k = 0; k < batch.inputs.size(); ++k) {
    run_forward(head, batch.inputs[k], batch.masks.empty() ? nullptr : &batch.masks[k], act);
    double r = act.output - batch.targets[k];
    sum.add(r * r);
  }
  return sum.value() / static_cast<double>(batch.inputs.size());
}

double loss_and_gradients(const RegressionHead& head, const Batch& batch, Gradients& grads) {
  check_batch(head, batch);
  const std::size_t n_in = head.input_dim;
  const std::size_t n_hid = head.hidden_dim;
  grads.w1.assign(n_in * n_hid, 0.0);
  grads.b1.assign(n_hid, 0.0);
  grads.w2.assign(n_hid, 0.0);
  grads.b2 = 0.0;

  const double inv_n = 1.0 / static_cast<double>(batch.inputs.size());
  Activations act;
  std::vector<double> delta(n_hid);
  CompensatedSum loss;
  for (std::size_t k = 0; k < batch.inputs.size(); ++k) {
    run_forward(head, batch.inputs[k], batch.masks.empty() ? nullptr : &batch.masks[k], act);
    const double r = act.output - batch.targets[k];
    loss.add(r * r);
    const double dy = 2.0 * r * inv_n;
    grads.b2 += dy;
    for (std::size_t j = 0; j < n_hid; ++j) {
      grads.w2[j] += dy * act.hidden[j];
      delta[j] = act.pre[j] > 0.0 ? dy * head.w2[j] : 0.0;
      grads.b1[j] += delta[j];
    }
    for (std::size_t i = 0; i < n_in; ++i) {
      const double xi = act.x_hat[i];
      if (xi == 0.0) continue;
      double* row = grads.w1.data() + i * n_hid;
      for (std::size_t j = 0; j < n_hid; ++j) row[j] += xi * delta[j];
    }
  }
  return loss.value() * inv_n;
}

double gradient_check(const RegressionHead& head, const Batch& batch, double step) {
  Gradients analytic;
  loss_and_gradients(head, batch, analytic);
  std::vector<double> flat_analytic;
  for_each_parameter(analytic, [&](double g) { flat_analytic.push_back(g); });

  RegressionHead probe = head;
  std::vector<double*> params;
  for_each_parameter(probe, [&](double& p) { params.push_back(&p); });

  double worst = 0.0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    const double saved = *params[k];
    *params[k] = saved + step;
    const double up = batch_loss(probe, batch);
    *params[k] = saved - step;
    const double down = batch_loss(probe, batch);
    *params[k] = saved;
    const double numeric = (up - down) / (2.0 * step);
    const double a = flat_analytic[k];
    const double denom = std::max({std::abs(a), std::abs(numeric), 1e-6});
    worst = std::max(worst, std::abs(a - numeric) / denom);
  }
  return worst;
}

TrainResult train(std::span<const EmbeddingRecord> features, std::span<const QualityLabel> labels,
                  const TrainConfig& config) {
  config.validate();
  if (features.empty()) throw Error("train: no features");
  const std::string& system_id = features.front().system_id;
  std::unordered_map<std::string, const EmbeddingRecord*> by_image;
  for (const auto& r : features) {
    if (r.system_id != system_id)
      throw Error("train: features mix systems '" + system_id + "' and '" + r.system_id + "'");
    by_image.emplace(r.image_id, &r);
  }

  std::vector<const QualityLabel*> ordered;
  for (const auto& l : labels) ordered.push_back(&l);
  std::sort(ordered.begin(), ordered.end(),
            [](const auto* a, const auto* b) { return a->image_id < b->image_id; });

  std::vector<const std::vector<double>*> xs;
  std::vector<double> ys;
  for (const auto* l : ordered) {
    auto it = by_image.find(l->image_id);
    if (it == by_image.end()) throw Error("train: no feature for labelled image '" + l->image_id + "'");
    xs.push_back(&it->second->vector);
    ys.push_back(l->quality);
  }
  if (ordered.empty()) throw Error("train: no labels");

  const std::size_t n = xs.size();
  const std::size_t dim = xs.front()->size();
  std::mt19937_64 rng(config.seed);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  const std::size_t n_val = floor_count(config.validation_fraction, n);
  if (n - n_val < 1) throw Error("train: validation split leaves no training samples");
  std::vector<std::size_t> val_idx(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<std::size_t> train_idx(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
  std::sort(val_idx.begin(), val_idx.end());
  std::sort(train_idx.begin(), train_idx.end());

  RegressionHead head = RegressionHead::zeros(dim, config.hidden_dim);
  head.system_id = system_id;
  head.dropout_rate = config.dropout_rate;
  head.config = config;

  // Standardization is fitted on the training rows only.
  for (std::size_t i = 0; i < dim; ++i) {
    std::vector<double> column;
    column.reserve(train_idx.size());
    for (std::size_t k : train_idx) column.push_back((*xs[k])[i]);
    head.feature_mean[i] = mean(column);
    double s = population_std(column);
    head.feature_std[i] = s > 0.0 ? s : 1.0;
  }

  const double limit1 = std::sqrt(6.0 / static_cast<double>(dim + config.hidden_dim));
  std::uniform_real_distribution<double> init1(-limit1, limit1);
  for (auto& w : head.w1) w = init1(rng);
  // Output weights start at zero and b2 at the label mean, so the untrained
  // head already predicts the mean and a constant target is a fixed point.
  std::fill(head.w2.begin(), head.w2.end(), 0.0);
  {
    std::vector<double> train_targets;
    for (std::size_t k : train_idx) train_targets.push_back(ys[k]);
    head.b2 = mean(train_targets);
  }

  auto subset_mse = [&](const std::vector<std::size_t>& idx) {
    CompensatedSum sum;
    for (std::size_t k : idx) {
      double r = forward(head, *xs[k]) - ys[k];
      sum.add(r * r);
    }
    return sum.value() / static_cast<double>(idx.size());
  };

  TrainResult result;
  Gradients grads;
  Batch batch;
  std::vector<std::size_t> epoch_order = train_idx;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(epoch_order.begin(), epoch_order.end(), rng);
    for (std::size_t start = 0; start < epoch_order.size(); start += config.batch_size) {
      const std::size_t end = std::min(start + config.batch_size, epoch_order.size());
      batch.inputs.clear();
      batch.targets.clear();
      batch.masks.clear();
      for (std::size_t k = start; k < end; ++k) {
        batch.inputs.push_back(*xs[epoch_order[k]]);
        batch.targets.push_back(ys[epoch_order[k]]);
        if (config.dropout_rate > 0.0)
          batch.masks.push_back(DropoutMask::sample(dim, config.dropout_rate, rng));
      }
      loss_and_gradients(head, batch, grads);
      for (std::size_t k = 0; k < head.w1.size(); ++k) head.w1[k] -= config.learning_rate * grads.w1[k];
      for (std::size_t k = 0; k < head.b1.size(); ++k) head.b1[k] -= config.learning_rate * grads.b1[k];
      for (std::size_t k = 0; k < head.w2.size(); ++k) head.w2[k] -= config.learning_rate * grads.w2[k];
      head.b2 -= config.learning_rate * grads.b2;
    }

    EpochLoss entry{epoch, subset_mse(train_idx), std::nullopt};
    if (!val_idx.empty()) entry.validation_mse = subset_mse(val_idx);
    if (!std::isfinite(entry.train_mse) ||
        (entry.validation_mse && !std::isfinite(*entry.validation_mse)))
      throw Error("train: loss became non-finite at epoch " + std::to_string(epoch) +
                  " (learning rate " + format_real(config.learning_rate) + " too large?)");
    result.trace.push_back(entry);
  }
  head.loss_trace = result.trace;
  result.head = std::move(head);
  return result;
}

std::vector<QualityLabel> predict(const RegressionHead& head,
                                  std::span<const EmbeddingRecord> features) {
  std::vector<QualityLabel> out;
  out.reserve(features.size());
  for (const auto& r : features) {
    if (!head.system_id.empty() && r.system_id != head.system_id)
      throw Error("image '" + r.image_id + "': features from system '" + r.system_id +
                  "' but the model was trained on '" + head.system_id + "'");
    if (r.vector.size() != head.input_dim)
      throw Error("image '" + r.image_id + "': feature dimension " + std::to_string(r.vector.size()) +
                  " does not match model input " + std::to_string(head.input_dim));
    out.push_back({r.image_id, std::clamp(forward(head, r.vector), 0.0, 1.0)});
  }
  return out;
}

// ---- persistence -----------------------------------------------------------

std::string serialize_model(const RegressionHead& head) {
  head.validate();
  nlohmann::ordered_json j;
  j["format"] = "faceq-regression-head";
  j["version"] = kModelFormatVersion;
  j["system_id"] = head.system_id;
  j["input_dim"] = head.input_dim;
  j["hidden_dim"] = head.hidden_dim;
  j["dropout_rate"] = head.dropout_rate;
  j["feature_mean"] = head.feature_mean;
  j["feature_std"] = head.feature_std;
  j["w1"] = head.w1;
  j["b1"] = head.b1;
  j["w2"] = head.w2;
  j["b2"] = head.b2;
  j["train_config"] = {{"hidden_dim", head.config.hidden_dim},
                       {"learning_rate", head.config.learning_rate},
                       {"epochs", head.config.epochs},
                       {"batch_size", head.config.batch_size},
                       {"dropout_rate", head.config.dropout_rate},
                       {"seed", head.config.seed},
                       {"validation_fraction", head.config.validation_fraction}};
  auto trace = nlohmann::ordered_json::array();
  for (const auto& e : head.loss_trace) {
    nlohmann::ordered_json row = {{"epoch", e.epoch}, {"train_mse", e.train_mse}};
    row["validation_mse"] = e.validation_mse ? nlohmann::ordered_json(*e.validation_mse) : nullptr;
    trace.push_back(std::move(row));
  }
  j["loss_trace"] = std::move(trace);
  return j.dump() + "\n";
}

RegressionHead deserialize_model(const std::string& text, const std::string& source) {
  using json = nlohmann::json;
  RegressionHead head;
  try {
    json j = json::parse(text);
    if (j.at("format").get<std::string>() != "faceq-regression-head")
      throw DataError(source, 0, "not a regression head model file");
    if (j.at("version").get<int>() != kModelFormatVersion)
      throw DataError(source, 0, "unsupported model format version");
    head.system_id = j.at("system_id").get<std::string>();
    head.input_dim = j.at("input_dim").get<std::size_t>();
    head.hidden_dim = j.at("hidden_dim").get<std::size_t>();
    head.dropout_rate = j.at("dropout_rate").get<double>();
    head.feature_mean = j.at("feature_mean").get<std::vector<double>>();
    head.feature_std = j.at("feature_std").get<std::vector<double>>();
    head.w1 = j.at("w1").get<std::vector<double>>();
    head.b1 = j.at("b1").get<std::vector<double>>();
    head.w2 = j.at("w2").get<std::vector<double>>();
    head.b2 = j.at("b2").get<double>();
    const json& c = j.at("train_config");
    head.config.hidden_dim = c.at("hidden_dim").get<std::size_t>();
    head.config.learning_rate = c.at("learning_rate").get<double>();
    head.config.epochs = c.at("epochs").get<std::size_t>();
    head.config.batch_size = c.at("batch_size").get<std::size_t>();
    head.config.dropout_rate = c.at("dropout_rate").get<double>();
    head.config.seed = c.at("seed").get<std::uint64_t>();
    head.config.validation_fraction = c.at("validation_fraction").get<double>();
    for (const json& row : j.at("loss_trace")) {
      EpochLoss e{row.at("epoch").get<std::size_t>(), row.at("train_mse").get<double>(), std::nullopt};
      if (!row.at("validation_mse").is_null()) e.validation_mse = row.at("validation_mse").get<double>();
      head.loss_trace.push_back(e);
    }
  } catch (const json::exception& e) {
    throw DataError(source, 0, std::string("corrupt model file: ") + e.what());
  }
  try {
    head.validate();
  } catch (const DataError&) {
    throw;
  } catch (const Error& e) {
    throw DataError(source, 0, std::string("invalid model: ") + e.what());
  }
  return head;
}

void save_model(const std::filesystem::path& path, const RegressionHead& head) {
  std::string text = serialize_model(head);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError(path.string(), 0, "cannot open for writing");
  out << text;
  out.flush();
  if (!out) throw DataError(path.string(), 0, "write failure");
}

RegressionHead load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(path.string(), 0, "cannot open for reading");
  std::ostringstream buf;
  buf << in.rdbuf();
  return deserialize_model(buf.str(), path.string());
}

}  // namespace faceq
