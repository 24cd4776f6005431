// Command-line surface for the ball-cluster-learning toolkit:
// synth, train, finetune, cluster, eval, sweep, bench.
//
// Exit codes: 0 success, 2 usage error, 3 data/parse error, 4 numerical
// failure.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "bcl/bcl.hpp"

using nlohmann::json;

namespace {

// ---------------------------------------------------------------- manifests

std::uint64_t fnv1a_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open for hashing: " + path);
  std::uint64_t h = 1469598103934665603ull;
  char buf[1 << 14];
  while (is.read(buf, sizeof(buf)) || is.gcount() > 0) {
    for (std::streamsize i = 0; i < is.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ull;
    }
    if (!is) break;
  }
  return h;
}

std::string hash_string(std::uint64_t h) {
  std::ostringstream os;
  os << "fnv1a64:" << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

class RunManifest {
 public:
  RunManifest(std::string command, std::vector<std::string> argv)
      : start_(std::chrono::steady_clock::now()) {
    body_["command"] = std::move(command);
    body_["argv"] = std::move(argv);
  }

  void config(json cfg) { body_["config"] = std::move(cfg); }
  void seed(std::uint64_t s) { body_["seed"] = s; }
  void input(const std::string& path) { body_["inputs"][path] = hash_string(fnv1a_file(path)); }
  void output(const std::string& path) { body_["outputs"].push_back(path); }

  // Written next to the primary output as <out>.manifest.json.
  void write(const std::string& primary_output) {
    const auto wall =
        std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start_);
    body_["wall_ms"] = wall.count();
    std::ofstream os(primary_output + ".manifest.json");
    if (!os) throw std::runtime_error("cannot write manifest for: " + primary_output);
    os << body_.dump(2) << '\n';
  }

 private:
  json body_;
  std::chrono::steady_clock::time_point start_;
};

std::vector<std::string> collect_argv(int argc, char** argv) {
  std::vector<std::string> out;
  for (int i = 0; i < argc; ++i) out.emplace_back(argv[i]);
  return out;
}

// ------------------------------------------------------------------ helpers

bcl::SpaceKind parse_space(const std::string& s) {
  if (s == "euclidean") return bcl::SpaceKind::Euclidean;
  if (s == "sphere") return bcl::SpaceKind::Hypersphere;
  throw CLI::ValidationError("--space", "must be euclidean or sphere");
}

bcl::LossKind parse_loss(const std::string& s) {
  if (s == "bcl") return bcl::LossKind::Bcl;
  if (s == "contrastive") return bcl::LossKind::Contrastive;
  if (s == "triplet") return bcl::LossKind::Triplet;
  if (s == "ldml") return bcl::LossKind::Ldml;
  if (s == "proto") return bcl::LossKind::Prototypical;
  if (s == "ce") return bcl::LossKind::CrossEntropy;
  throw CLI::ValidationError("--loss", "unknown loss: " + s);
}

void write_assignment_csv(const std::string& path, const bcl::TrackDataset& ds,
                          const bcl::ClusterAssignment& a) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write: " + path);
  os << "track_id,cluster\n";
  for (std::size_t i = 0; i < ds.tracks.size(); ++i)
    os << ds.tracks[i].id << ',' << a.labels[i] << '\n';
}

std::vector<bcl::Vec> cluster_points(const bcl::TrackDataset& ds,
                                     const std::optional<bcl::MlpModel>& model) {
  if (model) return bcl::embed_tracks(*model, ds);
  std::vector<bcl::Vec> pts;
  pts.reserve(ds.tracks.size());
  for (const auto& t : ds.tracks) pts.push_back(bcl::track_input_mean(t));
  return pts;
}

double round2(double v) { return std::round(v * 100.0) / 100.0; }

// ----------------------------------------------------------------- commands

struct SynthArgs {
  std::string out;
  bcl::SynthSpec spec;
  std::string feature_space{"euclidean"};
  std::uint64_t seed{0};
};

int run_synth(const SynthArgs& a, RunManifest& manifest) {
  bcl::SynthSpec spec = a.spec;
  spec.feature_space = parse_space(a.feature_space);
  std::mt19937_64 rng(a.seed);
  const bcl::TrackDataset ds = bcl::synth_generate(spec, rng);
  bcl::save_features(ds, a.out);

  json sidecar;  // dataset provenance sidecar
  sidecar["name"] = a.out;
  sidecar["seed"] = a.seed;
  sidecar["generator"] = {{"k", spec.num_identities},
                          {"zipf", spec.zipf_exponent},
                          {"tracks", spec.total_tracks},
                          {"frames_min", spec.frames_min},
                          {"frames_max", spec.frames_max},
                          {"dim", spec.dim},
                          {"separation", spec.separation},
                          {"within_std", spec.within_std},
                          {"feature_space", a.feature_space},
                          {"spans", spec.with_spans}};
  sidecar["content_hash"] = hash_string(fnv1a_file(a.out));
  std::ofstream side(a.out + ".json");
  side << sidecar.dump(2) << '\n';

  manifest.seed(a.seed);
  manifest.config(sidecar["generator"]);
  manifest.output(a.out);
  manifest.write(a.out);
  std::cout << "wrote " << a.out << " (" << ds.tracks.size() << " tracks, "
            << ds.identity_count << " identities)\n";
  return 0;
}

struct TrainArgs {
  std::string loss{"bcl"};
  std::string train_path;
  std::string val_path;
  std::string out;
  std::string report_path;
  bcl::TrainConfig cfg;
  std::string space{"sphere"};
  int embed_dim{64};
  std::vector<int> hidden;
  double initial_radius_sq{0.25};
};

int run_train(const TrainArgs& a, RunManifest& manifest) {
  bcl::TrainConfig cfg = a.cfg;
  cfg.loss = parse_loss(a.loss);

  const bcl::TrackDataset train_ds = bcl::load_features(a.train_path);
  manifest.input(a.train_path);
  std::optional<bcl::TrackDataset> val_ds;
  if (!a.val_path.empty()) {
    val_ds = bcl::load_features(a.val_path);
    manifest.input(a.val_path);
  }

  std::array<int, 3> hidden = bcl::default_hidden_dims(train_ds.input_dim, a.embed_dim);
  if (!a.hidden.empty()) {
    if (a.hidden.size() != 3) throw CLI::ValidationError("--hidden", "need exactly 3 sizes");
    hidden = {a.hidden[0], a.hidden[1], a.hidden[2]};
  }

  std::mt19937_64 init_rng(cfg.seed);
  bcl::MlpModel model = bcl::init_mlp(train_ds.input_dim, hidden, a.embed_dim,
                                      parse_space(a.space), init_rng, a.initial_radius_sq);

  const auto result = bcl::train(train_ds, val_ds ? &*val_ds : nullptr, std::move(model), cfg);
  bcl::save_checkpoint(result.model, a.out);

  const std::string report_path = a.report_path.empty() ? a.out + ".report.csv" : a.report_path;
  {
    std::ofstream os(report_path);
    os << "epoch,loss,b,val_clusters,val_nmi,val_wcp\n";
    os.precision(10);
    for (const auto& e : result.report.epochs) {
      os << e.epoch << ',' << e.loss << ',' << e.radius_sq << ',';
      if (e.has_validation)
        os << e.val_clusters << ',' << 100.0 * e.val_nmi << ',' << 100.0 * e.val_wcp;
      else
        os << ",,";
      os << '\n';
    }
  }

  manifest.seed(cfg.seed);
  manifest.config({{"loss", a.loss},
                   {"epochs", cfg.epochs},
                   {"batch", cfg.batch_size},
                   {"lr", cfg.learning_rate},
                   {"momentum", cfg.momentum},
                   {"lr_decay", cfg.lr_decay},
                   {"decay_every", cfg.lr_decay_every},
                   {"radius_scale", cfg.radius_lr_scale},
                   {"freeze_epochs", cfg.radius_freeze_epochs},
                   {"alpha", cfg.alpha},
                   {"eps", cfg.epsilon_margin},
                   {"triplet_margin", cfg.triplet_margin},
                   {"embed_dim", a.embed_dim},
                   {"hidden", hidden},
                   {"space", a.space},
                   {"b0", a.initial_radius_sq}});
  manifest.output(a.out);
  manifest.output(report_path);
  manifest.write(a.out);

  std::cout << "trained " << a.loss << " for " << cfg.epochs << " epochs; b = "
            << bcl::softplus(result.model.raw_radius);
  if (result.report.best_checkpoint_epoch > 0)
    std::cout << "; best val epoch " << result.report.best_checkpoint_epoch;
  std::cout << "\nwrote " << a.out << " and " << report_path << '\n';
  return 0;
}

struct FinetuneArgs {
  std::string model_path;
  std::string data_path;
  std::string out;
  std::size_t max_pairs{1000};
  bcl::FinetuneConfig cfg;
};

int run_finetune(const FinetuneArgs& a, RunManifest& manifest) {
  const bcl::MlpModel model = bcl::load_checkpoint(a.model_path);
  const bcl::TrackDataset ds = bcl::load_features(a.data_path);
  manifest.input(a.model_path);
  manifest.input(a.data_path);

  std::mt19937_64 rng(a.cfg.seed);
  const bcl::PairSet pairs = bcl::mine_pairs(ds, model, a.max_pairs, rng);
  const bcl::MlpModel tuned = bcl::finetune(model, ds, pairs, a.cfg);
  bcl::save_checkpoint(tuned, a.out);

  manifest.seed(a.cfg.seed);
  manifest.config({{"iters", a.cfg.iterations},
                   {"lr", a.cfg.learning_rate},
                   {"momentum", a.cfg.momentum},
                   {"eps", a.cfg.epsilon_margin},
                   {"max_pairs", a.max_pairs},
                   {"mined_positives", pairs.positives.size()},
                   {"mined_negatives", pairs.negatives.size()}});
  manifest.output(a.out);
  manifest.write(a.out);
  std::cout << "fine-tuned on " << pairs.positives.size() << " positive / "
            << pairs.negatives.size() << " negative pairs\nwrote " << a.out << '\n';
  return 0;
}

struct ClusterArgs {
  std::string data_path;
  std::string model_path;
  std::string out;
  std::string mode{"tau4b"};
  std::string dendrogram_path;
  int kmax{100};
  double significance{1e-4};
  std::uint64_t seed{0};
};

int run_cluster(const ClusterArgs& a, RunManifest& manifest) {
  const bcl::TrackDataset ds = bcl::load_features(a.data_path);
  manifest.input(a.data_path);
  std::optional<bcl::MlpModel> model;
  if (!a.model_path.empty()) {
    model = bcl::load_checkpoint(a.model_path);
    manifest.input(a.model_path);
  }
  const std::vector<bcl::Vec> pts = cluster_points(ds, model);
  std::mt19937_64 rng(a.seed);

  bcl::ClusterAssignment assignment;
  auto hac_cut = [&](auto cut_fn) {
    const bcl::Dendrogram dg = bcl::hac_complete(pts);
    if (!a.dendrogram_path.empty()) {
      std::ofstream os(a.dendrogram_path);
      bcl::write_dendrogram(dg, os);
      manifest.output(a.dendrogram_path);
    }
    return cut_fn(dg);
  };

  if (a.mode == "tau4b") {
    if (!model) throw CLI::ValidationError("--mode", "tau4b requires --model");
    const double tau = 4.0 * bcl::softplus(model->raw_radius);
    std::cout << "tau = " << tau << '\n';
    assignment = hac_cut([&](const bcl::Dendrogram& dg) { return bcl::cut_threshold(dg, tau); });
  } else if (a.mode.rfind("threshold=", 0) == 0) {
    const double tau = std::stod(a.mode.substr(10));
    assignment = hac_cut([&](const bcl::Dendrogram& dg) { return bcl::cut_threshold(dg, tau); });
  } else if (a.mode.rfind("k=", 0) == 0) {
    const int k = std::stoi(a.mode.substr(2));
    assignment = hac_cut([&](const bcl::Dendrogram& dg) { return bcl::cut_k(dg, k); });
  } else if (a.mode.rfind("kmeans=", 0) == 0) {
    assignment = bcl::kmeans(pts, std::stoi(a.mode.substr(7)), rng);
  } else if (a.mode == "xmeans") {
    assignment = bcl::xmeans(pts, a.kmax, rng);
  } else if (a.mode == "gmeans") {
    assignment = bcl::gmeans(pts, a.significance, a.kmax, rng);
  } else {
    throw CLI::ValidationError("--mode", "unknown mode: " + a.mode);
  }

  write_assignment_csv(a.out, ds, assignment);
  manifest.seed(a.seed);
  manifest.config({{"mode", a.mode}, {"kmax", a.kmax}, {"significance", a.significance}});
  manifest.output(a.out);
  manifest.write(a.out);
  std::cout << "clusters = " << assignment.num_clusters << "\nwrote " << a.out << '\n';
  return 0;
}

struct EvalArgs {
  std::string pred_path;
  std::string truth_path;
  std::string out;
};

int run_eval(const EvalArgs& a, RunManifest& manifest) {
  const bcl::TrackDataset ds = bcl::load_features(a.truth_path);
  manifest.input(a.truth_path);
  manifest.input(a.pred_path);

  std::ifstream is(a.pred_path);
  if (!is) throw std::runtime_error("cannot open: " + a.pred_path);
  std::map<std::uint64_t, int> pred_of;
  std::string line;
  if (!std::getline(is, line) || line.rfind("track_id,cluster", 0) != 0)
    throw bcl::ParseError("prediction CSV must start with 'track_id,cluster'", 0);
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos)
      throw bcl::ParseError("bad prediction CSV line " + std::to_string(line_no), line_no);
    try {
      pred_of[std::stoull(line.substr(0, comma))] = std::stoi(line.substr(comma + 1));
    } catch (const std::exception&) {
      throw bcl::ParseError("bad prediction CSV line " + std::to_string(line_no), line_no);
    }
  }

  std::vector<int> pred;
  pred.reserve(ds.tracks.size());
  for (const auto& t : ds.tracks) {
    const auto it = pred_of.find(t.id);
    if (it == pred_of.end())
      throw bcl::ParseError("prediction missing track id " + std::to_string(t.id), 0);
    pred.push_back(it->second);
  }
  if (pred_of.size() != ds.tracks.size())
    throw bcl::ParseError("prediction has extra track ids", 0);

  const auto truth = ds.labels();
  const bcl::ContingencyTable tab = bcl::ContingencyTable::from(pred, truth);
  int clusters = static_cast<int>(tab.counts.size());
  const double nmi_pct = 100.0 * bcl::nmi(pred, truth);
  const double wcp_pct = 100.0 * bcl::wcp(pred, truth);

  std::cout << "#Cl  " << clusters << '\n';
  std::cout << "NMI  " << round2(nmi_pct) << '\n';
  std::cout << "WCP  " << round2(wcp_pct) << '\n';

  json out;
  out["num_clusters"] = clusters;
  out["nmi"] = nmi_pct;
  out["wcp"] = wcp_pct;
  out["num_samples"] = ds.tracks.size();
  out["true_identities"] = ds.identity_count;
  std::ofstream os(a.out);
  if (!os) throw std::runtime_error("cannot write: " + a.out);
  os << out.dump(2) << '\n';

  manifest.output(a.out);
  manifest.write(a.out);
  return 0;
}

struct SweepArgs {
  std::string data_path;
  std::string model_path;
  std::string out;
  double tau{-1.0};
  int stride{1};
};

int run_sweep(const SweepArgs& a, RunManifest& manifest) {
  const bcl::TrackDataset ds = bcl::load_features(a.data_path);
  manifest.input(a.data_path);
  std::optional<bcl::MlpModel> model;
  if (!a.model_path.empty()) {
    model = bcl::load_checkpoint(a.model_path);
    manifest.input(a.model_path);
  }
  double tau = a.tau;
  if (tau < 0.0) {
    if (!model) throw CLI::ValidationError("--tau", "give --tau or --model (for tau = 4b)");
    tau = 4.0 * bcl::softplus(model->raw_radius);
  }

  const std::vector<bcl::Vec> pts = cluster_points(ds, model);
  const bcl::Dendrogram dg = bcl::hac_complete(pts);
  const auto curve = bcl::sweep_curves(dg, ds.labels(), a.stride);
  std::ofstream os(a.out);
  if (!os) throw std::runtime_error("cannot write: " + a.out);
  bcl::write_sweep_csv(curve, dg, ds.labels(), tau, os);

  manifest.config({{"tau", tau}, {"stride", a.stride}});
  manifest.output(a.out);
  manifest.write(a.out);
  std::cout << "wrote " << a.out << " (" << curve.size() << " cuts, operating tau = " << tau
            << ")\n";
  return 0;
}

struct BenchArgs {
  std::string out;
  int n{2000};
  int k{450};
  int dim{64};
  int runs{3};
  std::uint64_t seed{0};
};

int run_bench(const BenchArgs& a, RunManifest& manifest) {
  std::mt19937_64 rng(a.seed);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<bcl::Vec> emb(a.n, bcl::Vec(a.dim));
  for (auto& f : emb)
    for (double& v : f) v = g(rng);
  std::vector<int> labels(a.n);
  for (int i = 0; i < a.n; ++i) labels[i] = i % a.k;
  std::shuffle(labels.begin(), labels.end(), rng);
  const auto batch = bcl::LabeledBatch::from(emb, labels);
  const bcl::EmbeddingSpace space(bcl::SpaceKind::Euclidean, a.dim);

  bcl::LinearClassifier clf;
  clf.weight.assign(a.k, bcl::Vec(a.dim, 0.0));
  clf.bias.assign(a.k, 0.0);
  std::uniform_real_distribution<double> u(-0.1, 0.1);
  for (auto& row : clf.weight)
    for (double& v : row) v = u(rng);

  const bcl::BallParams params = bcl::BallParams::with_radius_sq(0.25, 0.01, 4.0);
  const double raw = bcl::softplus_inverse(0.5);

  struct Row {
    const char* name;
    std::function<void()> eval;
    std::vector<double> ms;
  };
  std::vector<Row> rows;
  rows.push_back({"bcl", [&] { bcl::bcl_loss(batch, params, space); }, {}});
  rows.push_back({"proto", [&] { bcl::prototypical_loss(batch, 0.0, 0.0, space); }, {}});
  rows.push_back({"contrastive", [&] { bcl::contrastive_loss(batch, raw, space); }, {}});
  rows.push_back({"ldml", [&] { bcl::ldml_loss(batch, raw, space); }, {}});
  rows.push_back({"triplet", [&] { bcl::triplet_loss(batch, 0.2, space); }, {}});
  rows.push_back({"ce", [&] { bcl::cross_entropy_loss(batch, clf, space); }, {}});

  for (auto& row : rows) {
    for (int r = 0; r < a.runs; ++r) {
      const auto t0 = std::chrono::steady_clock::now();
      row.eval();
      const auto t1 = std::chrono::steady_clock::now();
      row.ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
  }

  std::ofstream os(a.out);
  if (!os) throw std::runtime_error("cannot write: " + a.out);
  os << "loss,avg_ms,runs\n";
  std::cout << "loss          avg_ms  (average of " << a.runs << " runs, N=" << a.n
            << " K=" << a.k << " D=" << a.dim << ")\n";
  for (auto& row : rows) {
    double avg = 0.0;
    for (double v : row.ms) avg += v;
    avg /= row.ms.size();
    os << row.name << ',' << avg << ',' << row.ms.size() << '\n';
    std::cout << std::left << std::setw(13) << row.name << ' ' << std::fixed
              << std::setprecision(3) << avg << '\n';
  }

  manifest.seed(a.seed);
  manifest.config({{"n", a.n}, {"k", a.k}, {"dim", a.dim}, {"runs", a.runs}});
  manifest.output(a.out);
  manifest.write(a.out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ball cluster learning toolkit"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic track dataset");
  synth_cmd->add_option("--k", synth.spec.num_identities, "number of identities")->required();
  synth_cmd->add_option("--out", synth.out, "output BCLT path")->required();
  synth_cmd->add_option("--dim", synth.spec.dim, "feature dimension");
  synth_cmd->add_option("--tracks", synth.spec.total_tracks, "total track count");
  synth_cmd->add_option("--zipf", synth.spec.zipf_exponent, "Zipf exponent for tracks/identity");
  synth_cmd->add_option("--frames-min", synth.spec.frames_min, "min frames per track");
  synth_cmd->add_option("--frames-max", synth.spec.frames_max, "max frames per track");
  synth_cmd->add_option("--sep", synth.spec.separation, "center separation (x within-std)");
  synth_cmd->add_option("--within-std", synth.spec.within_std, "per-coordinate frame noise");
  synth_cmd->add_option("--feature-space", synth.feature_space, "euclidean|sphere");
  synth_cmd->add_flag("--spans", synth.spec.with_spans, "assign time spans");
  synth_cmd->add_option("--seed", synth.seed, "rng seed");

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "train an embedding model");
  train_cmd->add_option("--loss", train.loss, "bcl|contrastive|triplet|ldml|proto|ce");
  train_cmd->add_option("--train", train.train_path, "training BCLT")->required();
  train_cmd->add_option("--val", train.val_path, "validation BCLT");
  train_cmd->add_option("--out", train.out, "checkpoint output path")->required();
  train_cmd->add_option("--report", train.report_path, "per-epoch CSV (default <out>.report.csv)");
  train_cmd->add_option("--epochs", train.cfg.epochs, "training epochs")->required();
  train_cmd->add_option("--batch", train.cfg.batch_size, "mini-batch size");
  train_cmd->add_option("--lr", train.cfg.learning_rate, "learning rate");
  train_cmd->add_option("--momentum", train.cfg.momentum, "SGD momentum");
  train_cmd->add_option("--lr-decay", train.cfg.lr_decay, "decay factor");
  train_cmd->add_option("--decay-every", train.cfg.lr_decay_every, "epochs between decays");
  train_cmd->add_option("--radius-scale", train.cfg.radius_lr_scale, "radius lr multiplier");
  train_cmd->add_option("--freeze-epochs", train.cfg.radius_freeze_epochs, "radius freeze epochs");
  train_cmd->add_option("--alpha", train.cfg.alpha, "similar-loss weight");
  train_cmd->add_option("--eps", train.cfg.epsilon_margin, "dissimilar margin epsilon");
  train_cmd->add_option("--triplet-margin", train.cfg.triplet_margin, "triplet margin");
  train_cmd->add_option("--dim", train.embed_dim, "embedding dimension");
  train_cmd->add_option("--hidden", train.hidden, "three hidden sizes")->expected(3);
  train_cmd->add_option("--space", train.space, "euclidean|sphere");
  train_cmd->add_option("--b0", train.initial_radius_sq, "initial squared radius");
  train_cmd->add_option("--seed", train.cfg.seed, "rng seed");

  FinetuneArgs ft;
  auto* ft_cmd = app.add_subcommand("finetune", "fine-tune with mined pairwise constraints");
  ft_cmd->add_option("--model", ft.model_path, "pretrained checkpoint")->required();
  ft_cmd->add_option("--data", ft.data_path, "BCLT with time spans")->required();
  ft_cmd->add_option("--out", ft.out, "checkpoint output path")->required();
  ft_cmd->add_option("--max-pairs", ft.max_pairs, "cap per pair list");
  ft_cmd->add_option("--iters", ft.cfg.iterations, "SGD iterations");
  ft_cmd->add_option("--lr", ft.cfg.learning_rate, "learning rate");
  ft_cmd->add_option("--momentum", ft.cfg.momentum, "SGD momentum");
  ft_cmd->add_option("--eps", ft.cfg.epsilon_margin, "negative-pair margin");
  ft_cmd->add_option("--seed", ft.cfg.seed, "rng seed");

  ClusterArgs cluster;
  auto* cluster_cmd = app.add_subcommand("cluster", "cluster a dataset");
  cluster_cmd->add_option("--data", cluster.data_path, "BCLT path")->required();
  cluster_cmd->add_option("--out", cluster.out, "assignment CSV path")->required();
  cluster_cmd->add_option("--model", cluster.model_path, "checkpoint (omit to use raw features)");
  cluster_cmd->add_option("--mode", cluster.mode,
                          "tau4b|threshold=T|k=K|kmeans=K|xmeans|gmeans");
  cluster_cmd->add_option("--dendrogram", cluster.dendrogram_path, "export merges (HAC modes)");
  cluster_cmd->add_option("--kmax", cluster.kmax, "cluster cap for xmeans/gmeans");
  cluster_cmd->add_option("--significance", cluster.significance, "gmeans AD significance");
  cluster_cmd->add_option("--seed", cluster.seed, "rng seed");

  EvalArgs eval;
  auto* eval_cmd = app.add_subcommand("eval", "score a predicted assignment");
  eval_cmd->add_option("--pred", eval.pred_path, "assignment CSV")->required();
  eval_cmd->add_option("--truth", eval.truth_path, "BCLT with ground-truth labels")->required();
  eval_cmd->add_option("--out", eval.out, "metrics JSON path")->required();

  SweepArgs sweep;
  auto* sweep_cmd = app.add_subcommand("sweep", "NMI/WCP vs cluster-count curve");
  sweep_cmd->add_option("--data", sweep.data_path, "BCLT path")->required();
  sweep_cmd->add_option("--out", sweep.out, "curve CSV path")->required();
  sweep_cmd->add_option("--model", sweep.model_path, "checkpoint (omit to use raw features)");
  sweep_cmd->add_option("--tau", sweep.tau, "operating threshold (default 4b from --model)");
  sweep_cmd->add_option("--stride", sweep.stride, "keep every stride-th cut");

  BenchArgs bench;
  auto* bench_cmd = app.add_subcommand("bench", "wall-clock per loss on a fixed batch");
  bench_cmd->add_option("--out", bench.out, "timing CSV path")->required();
  bench_cmd->add_option("--n", bench.n, "batch size");
  bench_cmd->add_option("--k", bench.k, "labels in batch");
  bench_cmd->add_option("--dim", bench.dim, "embedding dimension");
  bench_cmd->add_option("--runs", bench.runs, "runs to average");
  bench_cmd->add_option("--seed", bench.seed, "rng seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  const auto argv_copy = collect_argv(argc, argv);
  try {
    if (synth_cmd->parsed()) {
      RunManifest m("synth", argv_copy);
      return run_synth(synth, m);
    }
    if (train_cmd->parsed()) {
      RunManifest m("train", argv_copy);
      return run_train(train, m);
    }
    if (ft_cmd->parsed()) {
      RunManifest m("finetune", argv_copy);
      return run_finetune(ft, m);
    }
    if (cluster_cmd->parsed()) {
      RunManifest m("cluster", argv_copy);
      return run_cluster(cluster, m);
    }
    if (eval_cmd->parsed()) {
      RunManifest m("eval", argv_copy);
      return run_eval(eval, m);
    }
    if (sweep_cmd->parsed()) {
      RunManifest m("sweep", argv_copy);
      return run_sweep(sweep, m);
    }
    if (bench_cmd->parsed()) {
      RunManifest m("bench", argv_copy);
      return run_bench(bench, m);
    }
  } catch (const CLI::ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const bcl::TrainAbortError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return 4;
  } catch (const bcl::DegenerateCentroidError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return 4;
  } catch (const bcl::DegenerateInputError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return 4;
  } catch (const bcl::ParseError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 3;
  } catch (const bcl::CheckpointError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 3;
  } catch (const bcl::UnsupportedDatasetError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 3;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
