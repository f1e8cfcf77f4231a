#include "maldistill/cli/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include "maldistill/core/random.hpp"
#include "maldistill/eval/dataset.hpp"
#include "maldistill/eval/metrics.hpp"
#include "maldistill/eval/timing.hpp"
#include "maldistill/featurize/api.hpp"
#include "maldistill/featurize/ember.hpp"
#include "maldistill/featurize/opcode.hpp"
#include "maldistill/featurize/selection.hpp"
#include "maldistill/nn/model.hpp"

extern "C" void openblas_set_num_threads(int num_threads);

namespace maldistill::cli {

namespace fs = std::filesystem;
using featurize::View;
using nlohmann::json;

namespace {

const std::set<std::string> kConfigKeys = {
    "command", "seed",   "inputs", "labels",     "data",      "teachers", "checkpoint",
    "arch",    "views",  "view",   "ngram",      "hash_dim",  "method",   "percentile",
    "threshold", "split", "samples", "train",    "distill",   "synthetic", "simulation", "pool"};

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

void write_json_file(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << "\n";
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

std::vector<std::uint8_t> read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

/// Files named directly plus the regular files of named directories, each
/// directory listed in name order.
std::vector<fs::path> expand_inputs(const std::vector<std::string>& inputs,
                                    const std::string& required_suffix = "") {
  std::vector<fs::path> files;
  for (const auto& in : inputs) {
    if (fs::is_directory(in)) {
      std::vector<fs::path> found;
      for (const auto& e : fs::directory_iterator(in)) {
        const auto name = e.path().filename().string();
        if (!e.is_regular_file() || ends_with(name, ".parsed.json")) continue;
        if (!required_suffix.empty() && !ends_with(name, required_suffix)) continue;
        found.push_back(e.path());
      }
      std::sort(found.begin(), found.end());
      files.insert(files.end(), found.begin(), found.end());
    } else {
      files.emplace_back(in);
    }
  }
  if (files.empty()) throw std::invalid_argument("no input files found");
  return files;
}

/// Removes what a failed run wrote into its output directory.
class OutputGuard {
 public:
  explicit OutputGuard(const std::string& dir) : dir_(dir) {
    if (dir.empty()) throw std::invalid_argument("--out is required");
    created_ = !fs::exists(dir_);
    if (!created_) {
      if (!fs::is_directory(dir_)) throw std::invalid_argument("--out is not a directory: " + dir);
      for (const auto& e : fs::directory_iterator(dir_)) before_.insert(e.path().filename().string());
    }
    fs::create_directories(dir_);
  }
  OutputGuard(const OutputGuard&) = delete;
  OutputGuard& operator=(const OutputGuard&) = delete;

  ~OutputGuard() {
    if (committed_) return;
    std::error_code ec;
    if (created_) {
      fs::remove_all(dir_, ec);
      return;
    }
    std::vector<fs::path> fresh;
    for (const auto& e : fs::directory_iterator(dir_, ec)) {
      if (!before_.count(e.path().filename().string())) fresh.push_back(e.path());
    }
    for (const auto& p : fresh) fs::remove_all(p, ec);
  }

  fs::path operator/(const std::string& name) const { return dir_ / name; }
  void commit() { committed_ = true; }

 private:
  fs::path dir_;
  bool created_ = false;
  bool committed_ = false;
  std::set<std::string> before_;
};

void require_path(const std::string& path, const std::string& what) {
  if (path.empty()) throw std::invalid_argument(what + " is required");
  if (!fs::exists(path)) throw std::invalid_argument(what + " does not exist: " + path);
}

void write_manifest(const OutputGuard& out, const RunConfig& cfg) {
  write_json_file(out / "manifest.json", to_json(cfg));
}

std::map<std::string, int> read_labels(const std::string& path) {
  std::map<std::string, int> labels;
  if (path.empty()) return labels;
  const auto j = read_json_file(path);
  if (!j.is_object()) throw std::invalid_argument(path + ": labels must be an object of id: 0|1");
  for (const auto& [id, v] : j.items()) {
    const int y = v.get<int>();
    if (y != 0 && y != 1) throw std::invalid_argument(path + ": label of " + id + " must be 0 or 1");
    labels[id] = y;
  }
  return labels;
}

bool all_binary(const std::vector<int>& labels) {
  return std::all_of(labels.begin(), labels.end(), [](int y) { return y == 0 || y == 1; });
}

/// Labelled inputs become a one-view dataset directory; others a bare feature file.
void store_extracted(const OutputGuard& out, featurize::FeatureMatrix m, featurize::SampleMeta meta) {
  m.validate();
  if (all_binary(meta.labels)) {
    eval::Dataset ds{meta.ids, meta.labels, {std::move(m)}, meta.provenance};
    eval::save_dataset((out / "").string(), ds);
  } else {
    featurize::store_feature_file((out / (featurize::to_string(m.view()) + ".mdf")).string(), m, meta);
  }
}

json cmd_extract(const RunConfig& cfg, const OutputGuard& out) {
  const View view = featurize::parse_view(cfg.view);
  const auto labels = read_labels(cfg.labels);
  featurize::SampleMeta meta;
  meta.provenance = {{"extractor", cfg.view}, {"run", to_json(cfg)}};
  auto label_of = [&](const std::string& id) {
    const auto it = labels.find(id);
    return it == labels.end() ? -1 : it->second;
  };

  featurize::FeatureMatrix m;
  if (view == View::ember) {
    const auto files = expand_inputs(cfg.inputs);
    m = featurize::FeatureMatrix::dense(View::ember, 0, featurize::kEmberDim);
    for (const auto& f : files) {
      const auto bytes = read_bytes(f);
      fs::path sidecar = f;
      sidecar += ".parsed.json";
      featurize::FeatureVector row;
      if (fs::exists(sidecar)) {
        const auto parsed = read_json_file(sidecar).get<std::vector<float>>();
        if (parsed.size() != featurize::kParsedDim) {
          throw std::invalid_argument(sidecar.string() + ": expected " +
                                      std::to_string(featurize::kParsedDim) + " parsed values");
        }
        row = featurize::ember_lite(bytes, std::span<const float>(parsed));
      } else {
        row = featurize::ember_lite(bytes);
      }
      m.push_dense(row);
      meta.ids.push_back(f.filename().string());
      meta.labels.push_back(label_of(meta.ids.back()));
    }
  } else if (view == View::apiarg) {
    const auto files = expand_inputs(cfg.inputs, ".json");
    m = featurize::FeatureMatrix::sparse(View::apiarg, cfg.hash_dim);
    for (const auto& f : files) {
      m.push_sparse(featurize::report_row(featurize::parse_behavior_report(read_json_file(f)), cfg.hash_dim));
      meta.ids.push_back(f.stem().string());
      meta.labels.push_back(label_of(meta.ids.back()));
    }
  } else if (view == View::opcode) {
    std::vector<featurize::OpcodeListing> listings;
    for (const auto& f : expand_inputs(cfg.inputs)) {
      std::ifstream in(f);
      if (!in) throw std::runtime_error("cannot open " + f.string());
      auto part = featurize::parse_opcode_listing(in);
      listings.insert(listings.end(), std::make_move_iterator(part.begin()),
                      std::make_move_iterator(part.end()));
    }
    std::vector<featurize::OpcodeSequence> corpus;
    for (auto& l : listings) {
      meta.ids.push_back(l.id);
      meta.labels.push_back(labels.empty() ? l.label : label_of(l.id));
      corpus.push_back(std::move(l.opcodes));
    }
    const auto vocab = featurize::NgramVocabulary::build(corpus, cfg.ngram);
    m = featurize::ngram_matrix(corpus, vocab);
    m.vocabulary() = vocab.grams();
  } else {
    throw std::invalid_argument("extract supports the ember, opcode and apiarg views");
  }
  const json summary = {{"view", cfg.view}, {"n_samples", m.n_samples()}, {"n_features", m.n_features()}};
  store_extracted(out, std::move(m), std::move(meta));
  return summary;
}

json cmd_select(const RunConfig& cfg, const OutputGuard& out) {
  if (cfg.inputs.size() != 1) throw std::invalid_argument("select takes exactly one --input feature file");
  require_path(cfg.inputs[0], "--input");
  auto file = featurize::load_feature_file(cfg.inputs[0]);
  featurize::SelectionReport report;
  if (cfg.method == "mi") {
    if (!all_binary(file.meta.labels)) {
      throw std::invalid_argument("mutual-information selection needs every sample labelled 0 or 1");
    }
    report = featurize::select_by_mi(file.matrix, file.meta.labels, cfg.percentile);
  } else if (cfg.method == "prune") {
    report = featurize::prune_correlated(file.matrix, cfg.threshold);
  } else {
    throw std::invalid_argument("unknown selection method: " + cfg.method + " (expected mi or prune)");
  }
  json pruned = json::array();
  for (const auto& [kept, dropped] : report.pruned) pruned.push_back({{"kept", kept}, {"dropped", dropped}});
  const json rep = {{"kept", report.kept},         {"mi", report.mi},
                    {"pruned", pruned},            {"constant", report.constant},
                    {"warning", report.warning},   {"n_features_in", file.matrix.n_features()},
                    {"run", to_json(cfg)}};
  write_json_file(out / "selection.json", rep);
  if (report.kept.empty()) {
    throw std::invalid_argument("selection kept no columns" + (report.warning.empty() ? "" : ": " + report.warning));
  }
  auto reduced = file.matrix.select_columns(report.kept);
  auto meta = file.meta;
  meta.provenance = {{"selected_from", file.meta.provenance}, {"run", to_json(cfg)}};
  store_extracted(out, std::move(reduced), std::move(meta));
  return {{"method", cfg.method}, {"kept", report.kept.size()}, {"of", file.matrix.n_features()}};
}

json cmd_gen_data(const RunConfig& cfg, const OutputGuard& out) {
  auto ds = eval::generate_synthetic(cfg.synthetic);
  ds.provenance["run"] = to_json(cfg);
  eval::save_dataset((out / "").string(), ds);
  return {{"n_samples", ds.size()}, {"views", ds.views.size()}};
}

std::vector<nn::ArchitectureSpec> resolve_arch(const RunConfig& cfg) {
  if (cfg.arch.empty()) throw std::invalid_argument("--arch is required");
  std::vector<nn::ArchitectureSpec> specs;
  for (const auto& a : cfg.arch) specs.push_back(nn::resolve_spec(a));
  return specs;
}

std::vector<View> resolve_views(const RunConfig& cfg, const std::vector<nn::ArchitectureSpec>& specs,
                                const eval::Dataset& ds) {
  std::vector<View> views;
  if (!cfg.views.empty()) {
    if (cfg.views.size() != specs.size()) {
      throw std::invalid_argument("--views lists " + std::to_string(cfg.views.size()) + " views for " +
                                  std::to_string(specs.size()) + " architectures");
    }
    for (const auto& v : cfg.views) views.push_back(featurize::parse_view(v));
  } else {
    for (const auto& s : specs) {
      std::optional<View> pick;
      for (const auto& m : ds.views) {
        if (featurize::to_string(m.view()) == s.name) pick = m.view();
      }
      if (!pick) {
        std::size_t matches = 0;
        for (const auto& m : ds.views) {
          if (m.n_features() == s.input_dim) {
            pick = m.view();
            ++matches;
          }
        }
        if (matches != 1) {
          throw std::invalid_argument("cannot infer the view for architecture " + s.name + "; pass --views");
        }
      }
      views.push_back(*pick);
    }
  }
  for (std::size_t i = 0; i < views.size(); ++i) {
    if (!ds.has_view(views[i])) {
      throw std::invalid_argument("dataset has no " + featurize::to_string(views[i]) + " view");
    }
    if (ds.view(views[i]).n_features() != specs[i].input_dim) {
      throw std::invalid_argument("architecture " + specs[i].name + " expects " +
                                  std::to_string(specs[i].input_dim) + " features but the " +
                                  featurize::to_string(views[i]) + " view has " +
                                  std::to_string(ds.view(views[i]).n_features()));
    }
  }
  return views;
}

std::unique_ptr<nn::Network<float>> build_network(std::vector<nn::ArchitectureSpec> specs, std::uint64_t seed) {
  if (specs.size() == 1) return std::make_unique<nn::Model<float>>(std::move(specs[0]), derive_seed(seed, 1));
  std::vector<nn::Model<float>> extractors;
  for (std::size_t i = 0; i < specs.size(); ++i) extractors.emplace_back(std::move(specs[i]), derive_seed(seed, 1 + i));
  const auto n = extractors.size();
  return nn::build_latent_agg(std::move(extractors), nn::latent_agg_head(n), derive_seed(seed, 100));
}

json view_names(const std::vector<View>& views) {
  json j = json::array();
  for (auto v : views) j.push_back(featurize::to_string(v));
  return j;
}

std::vector<View> views_of_checkpoint(const json& manifest) {
  std::vector<View> views;
  for (const auto& v : manifest.at("metadata").at("views")) views.push_back(featurize::parse_view(v.get<std::string>()));
  return views;
}

/// Trains and stores a student; distillation when `teachers` is non-empty.
json fit_and_store(const RunConfig& cfg, const OutputGuard& out,
                   std::vector<nn::LoadedCheckpoint>* teachers) {
  require_path(cfg.data, "--data");
  const auto ds = eval::load_dataset(cfg.data);
  const auto specs = resolve_arch(cfg);
  const auto views = resolve_views(cfg, specs, ds);
  const auto parts = eval::split_dataset(ds, cfg.seed);
  const auto train_data = parts.train.train_data(views);
  const auto val_data = parts.val.train_data(views);
  auto net = build_network(specs, cfg.seed);

  std::ofstream log(out / "train_log.jsonl");
  if (!log) throw std::runtime_error("cannot write the training log");
  auto on_epoch = [&](const distill::EpochLog& e) { log << to_json(e).dump() << "\n"; };

  distill::TrainResult result;
  if (teachers) {
    const auto teacher_views = views_of_checkpoint(teachers->front().manifest);
    std::vector<nn::Network<float>*> members;
    for (auto& t : *teachers) {
      if (views_of_checkpoint(t.manifest) != teacher_views) {
        throw std::invalid_argument("teacher checkpoints were trained on different views");
      }
      members.push_back(t.network.get());
    }
    const auto teacher_data = parts.train.train_data(teacher_views);
    result = distill::train_distilled(*net, train_data, members, teacher_data, cfg.distill, cfg.train,
                                      &val_data, on_epoch);
  } else {
    result = distill::train_supervised(*net, train_data, cfg.train, &val_data, on_epoch);
  }
  if (!log) throw std::runtime_error("training log write failed");

  const json metadata = {{"views", view_names(views)}, {"split_seed", cfg.seed}, {"run", to_json(cfg)}};
  nn::save_checkpoint((out / "checkpoint").string(), *net, metadata);
  const auto& last = result.log.back();
  return {{"epochs", result.log.size()}, {"train_accuracy", last.train_accuracy}, {"val_accuracy", last.val_accuracy}};
}

json cmd_train(const RunConfig& cfg, const OutputGuard& out) { return fit_and_store(cfg, out, nullptr); }

json cmd_distill(const RunConfig& cfg, const OutputGuard& out) {
  if (cfg.teachers.empty()) throw std::invalid_argument("distill needs at least one --teacher checkpoint");
  std::vector<nn::LoadedCheckpoint> teachers;
  for (const auto& t : cfg.teachers) {
    require_path(t, "--teacher");
    teachers.push_back(nn::load_checkpoint(t));
  }
  return fit_and_store(cfg, out, &teachers);
}

eval::Dataset split_part(const eval::Dataset& ds, const std::string& split, std::uint64_t seed) {
  if (split == "all") return ds;
  auto parts = eval::split_dataset(ds, seed);
  if (split == "train") return std::move(parts.train);
  if (split == "val") return std::move(parts.val);
  if (split == "test") return std::move(parts.test);
  throw std::invalid_argument("unknown split: " + split + " (expected train, val, test or all)");
}

json cmd_eval(const RunConfig& cfg, const OutputGuard& out) {
  require_path(cfg.checkpoint, "--checkpoint");
  require_path(cfg.data, "--data");
  auto ckpt = nn::load_checkpoint(cfg.checkpoint);
  const auto views = views_of_checkpoint(ckpt.manifest);
  const auto split_seed = ckpt.manifest.at("metadata").at("split_seed").get<std::uint64_t>();
  const auto part = split_part(eval::load_dataset(cfg.data), cfg.split, split_seed);
  const auto preds = distill::argmax_rows(distill::infer_logits(*ckpt.network, part.train_data(views)));
  const auto m = eval::compute_metrics(preds, part.labels);
  const json report = {{"metrics", to_json(m)},
                       {"split", cfg.split},
                       {"n_samples", part.size()},
                       {"checkpoint_run", ckpt.manifest.at("metadata").at("run")},
                       {"run", to_json(cfg)}};
  write_json_file(out / "metrics.json", report);
  return to_json(m);
}

json cmd_bench(const RunConfig& cfg, const OutputGuard& out) {
  require_path(cfg.checkpoint, "--checkpoint");
  require_path(cfg.data, "--data");
  auto ckpt = nn::load_checkpoint(cfg.checkpoint);
  const auto views = views_of_checkpoint(ckpt.manifest);
  const auto ds = eval::load_dataset(cfg.data);
  const auto data = ds.train_data(views);
  const std::size_t n = std::min(cfg.samples, ds.size());
  if (n == 0) throw std::invalid_argument("bench needs at least one sample");

  // Raw inputs, when given, are re-featurized inside the timed stages: JSON
  // files as sandbox reports, anything else as binaries for the static view.
  std::vector<fs::path> binaries, reports;
  if (!cfg.inputs.empty()) {
    for (const auto& f : expand_inputs(cfg.inputs)) (ends_with(f.string(), ".json") ? reports : binaries).push_back(f);
  }
  const bool dynamic = std::any_of(views.begin(), views.end(), [](View v) { return v != View::ember; });
  const std::size_t report_dim = ds.has_view(View::apiarg) ? ds.view(View::apiarg).n_features() : cfg.hash_dim;

  std::vector<featurize::ApiCallRecord> calls;
  std::vector<core::TensorF> batch;
  eval::Pipeline p;
  if (dynamic && !reports.empty()) {
    p.analysis = [&](std::size_t i) { calls = featurize::parse_behavior_report(read_json_file(reports[i % reports.size()])); };
  }
  p.feature_extraction = [&](std::size_t i) {
    if (!binaries.empty()) {
      const auto row = featurize::ember_lite(read_bytes(binaries[i % binaries.size()]));
      if (row.size() != featurize::kEmberDim) throw std::logic_error("unexpected static row width");
    }
    if (dynamic && !reports.empty()) {
      if (featurize::report_row(calls, report_dim).empty() && !calls.empty()) {
        throw std::logic_error("report produced no tokens");
      }
    }
    const std::size_t rows[1] = {i};
    batch = data.batch(rows);
  };
  p.inference = [&](std::size_t) {
    const auto logits = ckpt.network->forward(std::span<const core::TensorF>(batch), core::Mode::eval).logits;
    if (!logits.all_finite()) throw std::runtime_error("non-finite logits");
  };
  const auto report = eval::time_breakdown(p, n);
  std::string name;
  for (const auto& a : ckpt.manifest.at("metadata").at("run").at("arch")) {
    name += (name.empty() ? "" : "+") + a.get<std::string>();
  }
  const auto table = eval::render_timing_table({{name, report}});
  json j = to_json(report);
  j["run"] = to_json(cfg);
  write_json_file(out / "timing.json", j);
  std::ofstream txt(out / "timing.txt");
  txt << table;
  if (!txt) throw std::runtime_error("cannot write timing.txt");
  return to_json(report);
}

json cmd_orchestrate_sim(const RunConfig& cfg, const OutputGuard& out) {
  const auto result = orchestrator::run_simulation(cfg.simulation);
  std::ofstream log(out / "events.jsonl");
  if (!log) throw std::runtime_error("cannot write events.jsonl");
  orchestrator::write_event_log(log, result.events);
  if (!log) throw std::runtime_error("event log write failed");
  auto summary = orchestrator::summary_json(result);
  summary["run"] = to_json(cfg);
  write_json_file(out / "summary.json", summary);
  return orchestrator::summary_json(result);
}

/// Flag values; only those given on the command line override the config.
struct Flags {
  std::string config, out;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> arch, views, view, labels, data, checkpoint, loss, method, split;
  std::vector<std::string> inputs, teachers;
  std::optional<double> alpha, tau, lr, percentile, threshold, crash_prob;
  std::optional<std::size_t> epochs, batch_size, ngram, hash_dim, samples, n_jobs, workers, n_samples;
};

void add_flags(CLI::App& sub, Flags& f, const std::set<std::string>& extra) {
  sub.add_option("--config", f.config, "JSON run config or a manifest.json from an earlier run");
  sub.add_option("--seed", f.seed, "Seed for every random draw of the run");
  sub.add_option("--out", f.out, "Output directory")->required();
  auto want = [&](const char* name) { return extra.count(name) > 0; };
  if (want("inputs")) sub.add_option("--input", f.inputs, "Input file or directory (repeatable)");
  if (want("labels")) sub.add_option("--labels", f.labels, "JSON object mapping sample id to 0 or 1");
  if (want("view")) sub.add_option("--view", f.view, "ember, opcode or apiarg");
  if (want("ngram")) sub.add_option("--ngram", f.ngram, "Opcode n-gram length");
  if (want("hash_dim")) sub.add_option("--hash-dim", f.hash_dim, "API-argument hash width (power of two)");
  if (want("method")) sub.add_option("--method", f.method, "mi or prune");
  if (want("percentile")) sub.add_option("--percentile", f.percentile, "MI percentile threshold");
  if (want("threshold")) sub.add_option("--threshold", f.threshold, "Correlation threshold for pruning");
  if (want("n_samples")) sub.add_option("--samples", f.n_samples, "Number of synthetic samples");
  if (want("data")) sub.add_option("--data", f.data, "Dataset directory");
  if (want("arch")) sub.add_option("--arch", f.arch, "Architecture name or spec path; comma list aggregates");
  if (want("views")) sub.add_option("--views", f.views, "Comma list of views, one per architecture");
  if (want("train")) {
    sub.add_option("--epochs", f.epochs, "Training epochs");
    sub.add_option("--lr", f.lr, "Initial learning rate");
    sub.add_option("--batch-size", f.batch_size, "Mini-batch size");
  }
  if (want("distill")) {
    sub.add_option("--teacher", f.teachers, "Teacher checkpoint directory (repeatable)");
    sub.add_option("--alpha", f.alpha, "Weight of the label loss");
    sub.add_option("--tau", f.tau, "Softmax temperature");
    sub.add_option("--loss", f.loss, "kd-kl or kd-mse")->check(CLI::IsMember({"kd-kl", "kd-mse", "kd_kl", "kd_mse"}));
  }
  if (want("checkpoint")) sub.add_option("--checkpoint", f.checkpoint, "Checkpoint directory");
  if (want("split")) sub.add_option("--split", f.split, "train, val, test or all");
  if (want("bench_samples")) sub.add_option("--samples", f.samples, "Samples to time");
  if (want("sim")) {
    sub.add_option("--jobs", f.n_jobs, "Jobs to submit");
    sub.add_option("--workers", f.workers, "Sandbox workers");
    sub.add_option("--crash-prob", f.crash_prob, "Probability that an execution crashes");
  }
}

RunConfig build_config(const std::string& command, const Flags& f) {
  RunConfig cfg;
  if (!f.config.empty()) {
    require_path(f.config, "--config");
    cfg = run_config_from_json(read_json_file(f.config));
    if (!cfg.command.empty() && cfg.command != command) {
      throw std::invalid_argument("config was written by '" + cfg.command + "', not '" + command + "'");
    }
  }
  cfg.command = command;
  if (f.seed) cfg.seed = *f.seed;
  if (!f.inputs.empty()) cfg.inputs = f.inputs;
  if (f.labels) cfg.labels = *f.labels;
  if (f.view) cfg.view = *f.view;
  if (f.ngram) cfg.ngram = *f.ngram;
  if (f.hash_dim) cfg.hash_dim = *f.hash_dim;
  if (f.method) cfg.method = *f.method;
  if (f.percentile) cfg.percentile = *f.percentile;
  if (f.threshold) cfg.threshold = *f.threshold;
  if (f.n_samples) cfg.synthetic.n_samples = *f.n_samples;
  if (f.data) cfg.data = *f.data;
  if (f.arch) cfg.arch = split_list(*f.arch);
  if (f.views) cfg.views = split_list(*f.views);
  if (f.epochs) cfg.train.epochs = *f.epochs;
  if (f.lr) cfg.train.lr = *f.lr;
  if (f.batch_size) cfg.train.batch_size = *f.batch_size;
  if (!f.teachers.empty()) cfg.teachers = f.teachers;
  if (f.alpha) cfg.distill.alpha = *f.alpha;
  if (f.tau) cfg.distill.tau = *f.tau;
  if (f.loss) cfg.distill.loss = distill::parse_loss_kind(*f.loss);
  if (f.checkpoint) cfg.checkpoint = *f.checkpoint;
  if (f.split) cfg.split = *f.split;
  if (f.samples) cfg.samples = *f.samples;
  if (f.n_jobs) cfg.simulation.n_jobs = *f.n_jobs;
  if (f.workers) cfg.simulation.pool.n_workers = *f.workers;
  if (f.crash_prob) cfg.simulation.crash_prob = *f.crash_prob;
  if (cfg.command == "distill") cfg.distill.teacher_count = cfg.teachers.size();
  cfg.apply_seed();
  cfg.validate();
  return cfg;
}

json run_command(const RunConfig& cfg, const OutputGuard& out) {
  if (cfg.command == "extract") return cmd_extract(cfg, out);
  if (cfg.command == "select") return cmd_select(cfg, out);
  if (cfg.command == "gen-data") return cmd_gen_data(cfg, out);
  if (cfg.command == "train") return cmd_train(cfg, out);
  if (cfg.command == "distill") return cmd_distill(cfg, out);
  if (cfg.command == "eval") return cmd_eval(cfg, out);
  if (cfg.command == "bench") return cmd_bench(cfg, out);
  if (cfg.command == "orchestrate-sim") return cmd_orchestrate_sim(cfg, out);
  throw std::invalid_argument("unknown command: " + cfg.command);
}

void report_error(std::ostream& err, const std::string& kind, const std::string& message) {
  err << json{{"error", kind}, {"message", message}}.dump() << std::endl;
}

}  // namespace

void RunConfig::apply_seed() {
  train.seed = seed;
  synthetic.seed = seed;
  simulation.seed = seed;
}

void RunConfig::validate() const {
  if (!command.empty() && std::find(kCommands.begin(), kCommands.end(), command) == kCommands.end()) {
    throw std::invalid_argument("unknown command: " + command);
  }
  train.validate();
  distill.validate();
  synthetic.validate();
  simulation.validate();
  if (ngram < 1) throw std::invalid_argument("ngram must be >= 1");
  if (hash_dim == 0 || (hash_dim & (hash_dim - 1)) != 0) {
    throw std::invalid_argument("hash_dim must be a power of two");
  }
  if (!(percentile > 0 && percentile <= 100)) throw std::invalid_argument("percentile must lie in (0, 100]");
  if (!(threshold > 0 && threshold <= 1)) throw std::invalid_argument("threshold must lie in (0, 1]");
}

json to_json(const RunConfig& c) {
  return {{"command", c.command},   {"seed", c.seed},
          {"inputs", c.inputs},     {"labels", c.labels},
          {"data", c.data},         {"teachers", c.teachers},
          {"checkpoint", c.checkpoint}, {"arch", c.arch},
          {"views", c.views},       {"view", c.view},
          {"ngram", c.ngram},       {"hash_dim", c.hash_dim},
          {"method", c.method},     {"percentile", c.percentile},
          {"threshold", c.threshold}, {"split", c.split},
          {"samples", c.samples},   {"train", to_json(c.train)},
          {"distill", to_json(c.distill)}, {"synthetic", to_json(c.synthetic)},
          {"simulation", to_json(c.simulation)}};
}

RunConfig run_config_from_json(const json& j) {
  if (!j.is_object()) throw std::invalid_argument("run config must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (!kConfigKeys.count(key)) throw std::invalid_argument("unknown config key: " + key);
  }
  RunConfig c;
  c.command = j.value("command", c.command);
  c.seed = j.value("seed", c.seed);
  c.inputs = j.value("inputs", c.inputs);
  c.labels = j.value("labels", c.labels);
  c.data = j.value("data", c.data);
  c.teachers = j.value("teachers", c.teachers);
  c.checkpoint = j.value("checkpoint", c.checkpoint);
  if (j.contains("arch")) c.arch = j.at("arch").is_string() ? split_list(j.at("arch").get<std::string>())
                                                          : j.at("arch").get<std::vector<std::string>>();
  if (j.contains("views")) c.views = j.at("views").is_string() ? split_list(j.at("views").get<std::string>())
                                                             : j.at("views").get<std::vector<std::string>>();
  c.view = j.value("view", c.view);
  c.ngram = j.value("ngram", c.ngram);
  c.hash_dim = j.value("hash_dim", c.hash_dim);
  c.method = j.value("method", c.method);
  c.percentile = j.value("percentile", c.percentile);
  c.threshold = j.value("threshold", c.threshold);
  c.split = j.value("split", c.split);
  c.samples = j.value("samples", c.samples);
  if (j.contains("train")) c.train = distill::train_config_from_json(j.at("train"));
  if (j.contains("distill")) c.distill = distill::distill_config_from_json(j.at("distill"));
  if (j.contains("synthetic")) c.synthetic = eval::synthetic_spec_from_json(j.at("synthetic"));
  if (j.contains("simulation")) c.simulation = orchestrator::simulation_config_from_json(j.at("simulation"));
  if (j.contains("pool")) c.simulation.pool = orchestrator::pool_config_from_json(j.at("pool"));
  return c;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t salt) {
  return core::Rng(seed).fork(salt).bits();
}

void apply_thread_limit() {
  const char* env = std::getenv("MALDISTILL_THREADS");
  if (!env || !*env) return;
  char* end = nullptr;
  const long n = std::strtol(env, &end, 10);
  if (*end != '\0' || n < 1 || n > 4096) {
    throw std::invalid_argument(std::string("MALDISTILL_THREADS must be a positive integer, got '") + env + "'");
  }
  openblas_set_num_threads(static_cast<int>(n));
}

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app("Malware detection with knowledge distillation", args.empty() ? "maldistill" : args[0]);
  app.require_subcommand(1);
  Flags flags;
  const std::map<std::string, std::pair<std::string, std::set<std::string>>> commands = {
      {"extract", {"Featurize raw samples, opcode listings or sandbox reports",
                   {"inputs", "labels", "view", "ngram", "hash_dim"}}},
      {"select", {"Mutual-information selection or correlation pruning of a feature file",
                  {"inputs", "method", "percentile", "threshold"}}},
      {"gen-data", {"Generate a synthetic multi-view dataset", {"n_samples"}}},
      {"train", {"Train a model on a dataset", {"data", "arch", "views", "train"}}},
      {"distill", {"Train a student against teacher checkpoints", {"data", "arch", "views", "train", "distill"}}},
      {"eval", {"Detection metrics of a checkpoint on a dataset split", {"data", "checkpoint", "split"}}},
      {"bench", {"Per-stage timing of a detection pipeline", {"data", "checkpoint", "inputs", "bench_samples"}}},
      {"orchestrate-sim", {"Simulate the sandbox pool with crash injection", {"sim"}}},
  };
  for (const auto& [name, desc] : commands) add_flags(*app.add_subcommand(name, desc.first), flags, desc.second);

  std::vector<std::string> rest(args.size() > 1 ? args.begin() + 1 : args.end(), args.end());
  std::reverse(rest.begin(), rest.end());
  try {
    app.parse(rest);
  } catch (const CLI::CallForHelp&) {
    const auto subs = app.get_subcommands();
    out << (subs.empty() ? app.help() : subs.front()->help());
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    report_error(err, "usage", e.what());
    return 2;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    apply_thread_limit();
    const auto cfg = build_config(command, flags);
    OutputGuard guard(flags.out);
    auto summary = run_command(cfg, guard);
    write_manifest(guard, cfg);
    guard.commit();
    out << json{{"command", command}, {"out", flags.out}, {"result", summary}}.dump() << std::endl;
    return 0;
  } catch (const std::invalid_argument& e) {
    report_error(err, "invalid_argument", e.what());
  } catch (const std::exception& e) {
    report_error(err, "runtime_error", e.what());
  }
  return 1;
}

int dispatch(int argc, const char* const* argv) {
  std::vector<std::string> args(argv, argv + argc);
  return dispatch(args, std::cout, std::cerr);
}

}  // namespace maldistill::cli
