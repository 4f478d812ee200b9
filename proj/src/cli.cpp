#include "faceq/cli.hpp"

#include <algorithm>
#include <exception>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>

#include "faceq/dataio.hpp"
#include "faceq/error.hpp"
#include "faceq/evalkit.hpp"
#include "faceq/groundtruth.hpp"
#include "faceq/regressor.hpp"
#include "faceq/synth.hpp"

namespace faceq {

namespace {

std::string version_string() {
  std::ostringstream s;
  s << "faceq " << kToolkitVersion << " (record format 1, model format " << kModelFormatVersion << ")";
  return s.str();
}

std::string join(const std::vector<std::filesystem::path>& paths) {
  std::string out;
  for (const auto& p : paths) {
    if (!out.empty()) out += ", ";
    out += p.string();
  }
  return out;
}

std::string single_system(const std::vector<EmbeddingRecord>& records, const std::string& path) {
  if (records.empty()) throw DataError(path, 0, "no embeddings");
  for (const auto& r : records)
    if (r.system_id != records.front().system_id)
      throw DataError(path, 0,
                      "expected a single system, found '" + records.front().system_id + "' and '" +
                          r.system_id + "'");
  return records.front().system_id;
}

struct SynthArgs {
  SynthConfig config;
  std::string out_dir;
};

struct GroundtruthArgs {
  std::vector<std::string> embeddings;
  std::string icao;
  std::string out;
  std::string stats_out;
  std::string report_out;
};

struct TrainArgs {
  std::string features;
  std::string labels;
  TrainConfig config;
  std::string out;
};

struct PredictArgs {
  std::string model;
  std::string features;
  std::string out;
  bool scale_100 = false;
};

struct ScoresArgs {
  std::string embeddings;
  bool mated_only = false;
  std::size_t nonmated_per_subject = 0;
  std::uint64_t seed = 0;
  std::string references;
  std::string out;
};

struct ErcArgs {
  std::string scores;
  std::string quality;
  double target_fnmr = kDefaultTargetFnmr;
  double target_fmr = kDefaultTargetFmr;
  std::size_t steps = 30;
  double max_reject = 0.9;
  std::string out;
};

struct DistArgs {
  std::string quality;
  std::size_t bins = 20;
  std::string out;
};

void cmd_synth(const SynthArgs& a, std::ostream& out) {
  SynthDataset data = generate(a.config);
  auto written = write_dataset(data, a.out_dir);
  out << "synth: " << a.config.n_subjects << " subjects x " << a.config.images_per_subject
      << " images, " << a.config.n_systems << " systems, dim " << a.config.dim << " -> "
      << join(written) << '\n';
}

void cmd_groundtruth(const GroundtruthArgs& a, std::ostream& out) {
  std::vector<std::vector<EmbeddingRecord>> per_system;
  for (const auto& path : a.embeddings) {
    per_system.push_back(read_embeddings(path));
    single_system(per_system.back(), path);
  }
  auto icao = read_icao(a.icao);
  GroundtruthResult result = generate_groundtruth(per_system, icao);
  write_labels(a.out, result.labels);
  std::vector<std::filesystem::path> written{a.out};
  if (!a.stats_out.empty()) {
    write_distance_stats(a.stats_out, result.stats);
    written.emplace_back(a.stats_out);
  }
  if (!a.report_out.empty()) {
    write_selection(a.report_out, selection_report(result.selection));
    written.emplace_back(a.report_out);
  }
  out << "groundtruth: " << result.labels.size() << " labels, "
      << result.selection.references.size() << " references, " << result.selection.skipped.size()
      << " skipped subjects, " << per_system.size() << " systems -> " << join(written) << '\n';
}

void cmd_train(const TrainArgs& a, std::ostream& out) {
  auto features = read_embeddings(a.features);
  single_system(features, a.features);
  auto labels = read_labels(a.labels);
  TrainResult result = train(features, labels, a.config);
  save_model(a.out, result.head);
  const EpochLoss& last = result.trace.back();
  out << "train: " << labels.size() << " labels, " << result.trace.size()
      << " epochs, final train MSE " << format_real(last.train_mse);
  if (last.validation_mse) out << ", validation MSE " << format_real(*last.validation_mse);
  out << " -> " << a.out << '\n';
}

void cmd_predict(const PredictArgs& a, std::ostream& out) {
  RegressionHead head = load_model(a.model);
  auto features = read_embeddings(a.features);
  auto labels = predict(head, features);
  std::sort(labels.begin(), labels.end(),
            [](const auto& x, const auto& y) { return x.image_id < y.image_id; });
  if (a.scale_100) {
    std::ofstream file(a.out, std::ios::binary | std::ios::trunc);
    if (!file) throw DataError(a.out, 0, "cannot open for writing");
    file << "image_id,quality_100\n";
    for (const auto& l : labels) file << l.image_id << ',' << format_real(100.0 * l.quality) << '\n';
    if (!file.flush()) throw DataError(a.out, 0, "write failure");
  } else {
    write_labels(a.out, labels);
  }
  out << "predict: " << labels.size() << " qualities" << (a.scale_100 ? " (0-100 scale)" : "")
      << " -> " << a.out << '\n';
}

void cmd_scores(const ScoresArgs& a, std::ostream& out) {
  auto embeddings = read_embeddings(a.embeddings);
  single_system(embeddings, a.embeddings);
  std::map<std::string, std::string> references;
  if (!a.references.empty()) {
    for (const auto& r : read_selection(a.references))
      if (r.status == "reference") references[r.subject_id] = r.image_id;
  }
  auto galleries = build_galleries(embeddings, references);
  auto pairs = mated_pairs(galleries);
  const std::size_t n_mated = pairs.size();
  if (!a.mated_only && a.nonmated_per_subject > 0) {
    auto nonmated = nonmated_pairs_per_subject(galleries, a.nonmated_per_subject, a.seed);
    pairs.insert(pairs.end(), nonmated.begin(), nonmated.end());
  }
  auto scores = comparison_scores(embeddings, pairs);
  write_pairs(a.out, scores);
  out << "scores: " << n_mated << " mated, " << (scores.size() - n_mated) << " non-mated pairs -> "
      << a.out << '\n';
}

void cmd_erc(const ErcArgs& a, bool use_fmr, std::ostream& out) {
  auto pairs = read_pairs(a.scores);
  auto labels = read_labels(a.quality);
  std::vector<PairScore> mated;
  std::vector<double> mated_scores, nonmated_scores;
  for (const auto& p : pairs) {
    if (p.mated) {
      mated.push_back(p);
      mated_scores.push_back(p.score);
    } else {
      nonmated_scores.push_back(p.score);
    }
  }
  if (mated.empty()) throw DataError(a.scores, 0, "no mated pairs");
  double threshold = 0.0;
  if (use_fmr) {
    if (nonmated_scores.empty())
      throw DataError(a.scores, 0, "--target-fmr needs non-mated pairs in the score file");
    threshold = threshold_at_fmr(nonmated_scores, a.target_fmr);
  } else {
    threshold = threshold_at_fnmr(mated_scores, a.target_fnmr);
  }
  auto fractions = rejection_fractions(a.steps, a.max_reject);
  ErcCurve curve = erc(mated, quality_map(labels), threshold, fractions);
  write_erc_csv(a.out, curve);
  out << "erc: " << mated.size() << " mated pairs, threshold " << format_real(threshold)
      << ", initial FNMR " << format_real(curve.initial_fnmr);
  if (!nonmated_scores.empty()) out << ", FMR " << format_real(fmr_at(nonmated_scores, threshold));
  out << ", auc " << format_real(erc_auc(curve)) << " -> " << a.out << '\n';
}

void cmd_dist(const DistArgs& a, std::ostream& out) {
  auto labels = read_labels(a.quality);
  std::vector<double> values;
  for (const auto& l : labels) values.push_back(l.quality);
  Histogram h = quality_histogram(values, a.bins);
  write_histogram_csv(a.out, h);
  out << "dist: " << values.size() << " qualities in " << a.bins << " bins -> " << a.out << '\n';
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Face quality toolkit: groundtruth generation, regression head training, ERC evaluation",
               "faceq"};
  app.set_version_flag("--version", version_string());
  app.require_subcommand(1);

  SynthArgs synth;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic dataset");
  synth_cmd->add_option("--subjects", synth.config.n_subjects)->capture_default_str();
  synth_cmd->add_option("--images-per-subject", synth.config.images_per_subject)->capture_default_str();
  synth_cmd->add_option("--dim", synth.config.dim)->capture_default_str();
  synth_cmd->add_option("--systems", synth.config.n_systems)->capture_default_str();
  synth_cmd->add_option("--sigma-min", synth.config.sigma_min)->capture_default_str();
  synth_cmd->add_option("--sigma-max", synth.config.sigma_max)->capture_default_str();
  synth_cmd->add_option("--icao-noise", synth.config.icao_noise)->capture_default_str();
  synth_cmd->add_option("--seed", synth.config.seed)->capture_default_str();
  synth_cmd->add_option("--out-dir", synth.out_dir)->required();

  GroundtruthArgs gt;
  auto* gt_cmd = app.add_subcommand("groundtruth", "Generate groundtruth quality labels");
  gt_cmd->add_option("--embeddings", gt.embeddings, "One embedding file per system")->required();
  gt_cmd->add_option("--icao", gt.icao)->required();
  gt_cmd->add_option("--out", gt.out)->required();
  gt_cmd->add_option("--stats-out", gt.stats_out, "Per-system distance statistics");
  gt_cmd->add_option("--report-out", gt.report_out, "Reference selection and skipped subjects");

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Train the quality regression head");
  train_cmd->add_option("--features", tr.features)->required();
  train_cmd->add_option("--labels", tr.labels)->required();
  train_cmd->add_option("--hidden", tr.config.hidden_dim)->capture_default_str();
  train_cmd->add_option("--dropout", tr.config.dropout_rate)->capture_default_str();
  train_cmd->add_option("--lr", tr.config.learning_rate)->capture_default_str();
  train_cmd->add_option("--batch", tr.config.batch_size)->capture_default_str();
  train_cmd->add_option("--epochs", tr.config.epochs)->capture_default_str();
  train_cmd->add_option("--val-frac", tr.config.validation_fraction)->capture_default_str();
  train_cmd->add_option("--seed", tr.config.seed)->capture_default_str();
  train_cmd->add_option("--out", tr.out)->required();

  PredictArgs pr;
  auto* predict_cmd = app.add_subcommand("predict", "Predict quality with a trained head");
  predict_cmd->add_option("--model", pr.model)->required();
  predict_cmd->add_option("--features", pr.features)->required();
  predict_cmd->add_option("--out", pr.out)->required();
  predict_cmd->add_flag("--scale-100", pr.scale_100, "Write image_id,quality_100 CSV");

  ScoresArgs sc;
  auto* scores_cmd = app.add_subcommand("scores", "Compute comparison scores");
  scores_cmd->add_option("--embeddings", sc.embeddings)->required();
  auto* mated_opt = scores_cmd->add_flag("--mated-only", sc.mated_only);
  auto* nonmated_opt = scores_cmd->add_option("--nonmated-per-subject", sc.nonmated_per_subject);
  mated_opt->excludes(nonmated_opt);
  scores_cmd->add_option("--seed", sc.seed)->capture_default_str();
  scores_cmd->add_option("--references", sc.references, "Selection report naming each reference");
  scores_cmd->add_option("--out", sc.out)->required();

  ErcArgs ec;
  auto* erc_cmd = app.add_subcommand("erc", "Error-versus-reject curve");
  erc_cmd->add_option("--scores", ec.scores)->required();
  erc_cmd->add_option("--quality", ec.quality)->required();
  auto* fnmr_opt = erc_cmd->add_option("--target-fnmr", ec.target_fnmr)->capture_default_str();
  auto* fmr_opt = erc_cmd->add_option("--target-fmr", ec.target_fmr);
  fnmr_opt->excludes(fmr_opt);
  erc_cmd->add_option("--steps", ec.steps)->capture_default_str();
  erc_cmd->add_option("--max-reject", ec.max_reject)->capture_default_str();
  erc_cmd->add_option("--out", ec.out)->required();

  DistArgs di;
  auto* dist_cmd = app.add_subcommand("dist", "Quality histogram");
  dist_cmd->add_option("--quality", di.quality)->required();
  dist_cmd->add_option("--bins", di.bins)->capture_default_str();
  dist_cmd->add_option("--out", di.out)->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*synth_cmd) cmd_synth(synth, out);
    else if (*gt_cmd) cmd_groundtruth(gt, out);
    else if (*train_cmd) cmd_train(tr, out);
    else if (*predict_cmd) cmd_predict(pr, out);
    else if (*scores_cmd) cmd_scores(sc, out);
    else if (*erc_cmd) cmd_erc(ec, fmr_opt->count() > 0, out);
    else if (*dist_cmd) cmd_dist(di, out);
  } catch (const Error& e) {
    err << "faceq: error: " << e.what() << '\n';
    return kExitDataError;
  } catch (const std::exception& e) {
    err << "faceq: error: " << e.what() << '\n';
    return kExitDataError;
  }
  return kExitOk;
}

}  // namespace faceq
