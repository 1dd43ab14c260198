#pragma once

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "vrd/vrd.hpp"

// Command-line front end: ingest, split-zeroshot, train, eval, spatial-encode,
// report. Exit codes: 0 success, 1 user error, 2 internal error.
//
// Options may also come from a key=value config file (--config, or the
// VRD_CONFIG environment variable). Keys are long option names, optionally
// scoped as "<subcommand>.<key>". Command-line flags win.

namespace vrd::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUser = 1;
inline constexpr int kExitInternal = 2;
inline constexpr const char* kConfigEnv = "VRD_CONFIG";

namespace detail {

inline std::ifstream open_in(const std::string& path, bool binary = false) {
  std::ifstream in(path, binary ? std::ios::binary : std::ios::in);
  if (!in) throw Error("cannot open '" + path + "'");
  return in;
}

// "-" is standard output.
class Output {
 public:
  Output(const std::string& path, std::ostream& stdout_stream) {
    if (path == "-") {
      os_ = &stdout_stream;
    } else {
      file_ = std::make_unique<std::ofstream>(path, std::ios::binary);
      if (!*file_) throw Error("cannot open '" + path + "' for writing");
      os_ = file_.get();
    }
  }
  std::ostream& stream() { return *os_; }

 private:
  std::unique_ptr<std::ofstream> file_;
  std::ostream* os_ = nullptr;
};

inline Vocabulary load_vocab(const std::string& path) {
  auto in = open_in(path);
  try {
    return read_vocabulary(in);
  } catch (const ParseError& e) {
    throw ParseError(0, path + ": " + e.what());
  }
}

inline Corpus load_corpus(const std::string& path, const Vocabulary& vocab) {
  auto in = open_in(path);
  try {
    return parse_corpus(in, vocab);
  } catch (const ParseError& e) {
    throw ParseError(0, path + ": " + e.what());
  }
}

inline std::vector<std::size_t> parse_size_list(const std::string& s, const char* what) {
  std::vector<std::size_t> out;
  std::stringstream ss(s);
  for (std::string tok; std::getline(ss, tok, ',');) {
    tok = vrd::detail::trim(tok);
    if (tok.empty()) continue;
    std::size_t pos = 0;
    unsigned long long v = 0;
    try {
      v = std::stoull(tok, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos != tok.size() || v == 0 || tok.front() == '-') {
      throw InvalidArgument(std::string(what) + ": '" + tok + "' is not a positive integer");
    }
    out.push_back(static_cast<std::size_t>(v));
  }
  if (out.empty()) throw InvalidArgument(std::string(what) + " list is empty");
  return out;
}

inline std::vector<std::string> parse_name_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string tok; std::getline(ss, tok, ',');) {
    tok = vrd::detail::trim(tok);
    if (!tok.empty()) out.push_back(tok);
  }
  return out;
}

inline void print_stats(std::ostream& os, const Corpus& corpus, const Vocabulary& vocab) {
  const auto stats = triple_key_stats(corpus);
  os << "images: " << corpus.size() << "\n"
     << "triples: " << stats.total << "\n"
     << "distinct triples: " << stats.triples.size() << "\n";
  if (!stats.predicates.empty()) os << "predicates:\n";
  for (const auto& [pid, count] : stats.predicates) {
    os << "  " << vocab.predicate_name(pid) << ": " << count << "\n";
  }
}

// Visual-feature source shared by train and eval.
struct FeatureOptions {
  std::string path;
  long long synthetic_seed = -1;
  std::size_t dim = 0;

  void add_to(CLI::App* app) {
    app->add_option("--features", path, "Feature file (JSONL or binary)");
    app->add_option("--synthetic-features", synthetic_seed,
                    "Use deterministic synthetic features with this seed");
    app->add_option("--feature-dim", dim, "Feature dimension (synthetic features, or file check)");
  }

  std::unique_ptr<FeatureProvider> load() const {
    if (!path.empty() && synthetic_seed >= 0) {
      throw InvalidArgument("--features and --synthetic-features are mutually exclusive");
    }
    if (!path.empty()) {
      auto in = open_in(path, true);
      try {
        return std::make_unique<FileFeatureProvider>(load_features(in, dim));
      } catch (const Error& e) {
        throw Error(path + ": " + e.what());
      }
    }
    if (synthetic_seed >= 0) {
      if (dim == 0) throw InvalidArgument("--synthetic-features requires --feature-dim");
      return std::make_unique<SyntheticFeatureProvider>(static_cast<std::uint64_t>(synthetic_seed), dim);
    }
    return nullptr;
  }
};

inline std::unique_ptr<EmbeddingStore> load_store(const std::string& path, std::size_t dim) {
  if (path.empty()) return nullptr;
  auto in = open_in(path);
  try {
    return std::make_unique<EmbeddingStore>(load_embeddings(in, dim));
  } catch (const ParseError& e) {
    throw ParseError(0, path + ": " + e.what());
  }
}

inline void check_inputs(const ModelConfig& cfg, const EmbeddingStore* store, const FeatureProvider* features) {
  if (cfg.needs_embeddings() && store == nullptr) {
    throw InvalidArgument("variant " + cfg.variant_name() + " needs word embeddings (--embeddings)");
  }
  if (cfg.needs_features() && features == nullptr) {
    throw InvalidArgument("variant " + cfg.variant_name() +
                          " needs visual features (--features or --synthetic-features)");
  }
}

// ---------------------------------------------------------------------------

struct IngestArgs {
  std::string input;
  std::string vocab;
  std::string output = "-";
  std::string format = "vrd";
};

inline int cmd_ingest(const IngestArgs& a, std::ostream& out, std::ostream& err) {
  const auto vocab = load_vocab(a.vocab);
  auto in = open_in(a.input);
  Corpus corpus;
  try {
    if (a.format == "vrd") {
      corpus = parse_vrd_corpus(in, vocab);
    } else if (a.format == "canonical") {
      corpus = parse_corpus(in, vocab);
    } else {
      throw InvalidArgument("unknown --format '" + a.format + "' (expected vrd|canonical)");
    }
  } catch (const ParseError& e) {
    throw ParseError(0, a.input + ": " + e.what());
  }
  Output o(a.output, out);
  write_corpus(o.stream(), corpus, vocab);
  print_stats(err, corpus, vocab);
  return kExitOk;
}

struct SplitArgs {
  std::string train;
  std::string test;
  std::string vocab;
  std::string output = "-";
};

inline int cmd_split(const SplitArgs& a, std::ostream& out, std::ostream& err) {
  const auto vocab = load_vocab(a.vocab);
  const auto train = load_corpus(a.train, vocab);
  const auto test = load_corpus(a.test, vocab);
  const auto kept = zero_shot_filter(train, test);
  Output o(a.output, out);
  write_corpus(o.stream(), kept, vocab);

  const auto before = triple_key_stats(test).total;
  const auto after = triple_key_stats(kept).total;
  err << "test images: " << test.size() << " -> " << kept.size() << "\n"
      << "test triples: " << before << " -> " << after << " unseen\n";
  if (kept.empty()) err << "warning: no unseen triples; zero-shot split is empty\n";
  return kExitOk;
}

struct TrainArgs {
  std::string vocab;
  std::string annotations;
  std::string variant;
  std::string embeddings;
  std::size_t embedding_dim = 300;
  FeatureOptions features;
  std::string output;
  std::string log;
  double lr = 0.01;
  std::size_t batch_size = 64;
  std::size_t epochs = 50;
  std::uint64_t seed = 0;
  double l2 = 0.0;
  std::string fusion_space = "logit_product";
  std::string spatial_encoding = "proposed";
  bool separate = false;
  std::string init_from;
  std::string class_weights = "none";
};

inline std::vector<double> resolve_class_weights(const std::string& spec, const Corpus& corpus,
                                                 std::size_t num_predicates) {
  if (spec.empty() || spec == "none") return {};
  if (spec == "inverse_frequency") {
    const auto stats = triple_key_stats(corpus);
    std::vector<double> w(num_predicates, 0.0);
    const double total = static_cast<double>(stats.total);
    for (const auto& [pid, count] : stats.predicates) {
      w[pid] = total / (static_cast<double>(num_predicates) * static_cast<double>(count));
    }
    return w;
  }
  std::vector<double> w;
  for (const auto& tok : parse_name_list(spec)) {
    std::size_t pos = 0;
    double v = 0.0;
    try {
      v = std::stod(tok, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos != tok.size()) throw InvalidArgument("--class-weights: '" + tok + "' is not a number");
    w.push_back(v);
  }
  return w;
}

inline int cmd_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  ModelConfig cfg = ModelConfig::from_variant(a.variant);
  cfg.fusion_space = parse_fusion_space(a.fusion_space);
  cfg.spatial_encoding = parse_spatial_encoding(a.spatial_encoding);
  if (cfg.needs_embeddings() && a.embeddings.empty()) {
    throw InvalidArgument("variant " + cfg.variant_name() + " needs word embeddings (--embeddings)");
  }
  if (cfg.needs_features() && a.features.path.empty() && a.features.synthetic_seed < 0) {
    throw InvalidArgument("variant " + cfg.variant_name() +
                          " needs visual features (--features or --synthetic-features)");
  }
  if (a.output.empty()) throw InvalidArgument("--output is required");

  const auto vocab = load_vocab(a.vocab);
  const auto corpus = load_corpus(a.annotations, vocab);
  const auto store = cfg.needs_embeddings() ? load_store(a.embeddings, a.embedding_dim) : nullptr;
  const auto features = cfg.needs_features() ? a.features.load() : nullptr;
  check_inputs(cfg, store.get(), features.get());

  const InputBuilder builder(cfg, vocab, store.get(), features.get());
  const ModelDims dims{vocab.num_predicates(), store ? store->dimension() : 0,
                       features ? features->dimension() : 0};
  const auto examples = build_examples(corpus, builder);
  if (examples.empty()) throw InvalidArgument(a.annotations + ": no ground-truth triples to train on");

  TrainConfig tc;
  tc.learning_rate = a.lr;
  tc.batch_size = a.batch_size;
  tc.epochs = a.epochs;
  tc.seed = a.seed;
  tc.l2 = a.l2;
  tc.fusion_space = cfg.fusion_space;
  tc.class_weights = resolve_class_weights(a.class_weights, corpus, vocab.num_predicates());

  std::optional<Model> init;
  if (!a.init_from.empty()) init = load_checkpoint(a.init_from);
  const auto trained = train_model(cfg, dims, examples, tc,
                                   a.separate ? CombineMode::separate : CombineMode::joint,
                                   init ? &*init : nullptr);

  save_checkpoint(a.output, trained.model);
  {
    auto sidecar = checkpoint_sidecar(trained.model, vocab.predicates());
    nlohmann::ordered_json t;
    t["learning_rate"] = tc.learning_rate;
    t["batch_size"] = tc.batch_size;
    t["epochs"] = tc.epochs;
    t["l2"] = tc.l2;
    t["mode"] = a.separate ? "separate" : "joint";
    t["examples"] = examples.size();
    for (const auto& m : trained.reports) t["final_accuracy"][m.module] = m.report.final_accuracy;
    sidecar["training"] = std::move(t);
    Output o(a.output + ".json", out);
    o.stream() << sidecar.dump(2) << '\n';
  }
  if (!a.log.empty()) {
    Output o(a.log, out);
    for (const auto& m : trained.reports) {
      for (const auto& e : m.report.epochs) {
        nlohmann::ordered_json j;
        j["module"] = m.module;
        j["epoch"] = e.epoch;
        j["loss"] = e.loss;
        j["accuracy"] = e.accuracy;
        o.stream() << j.dump() << '\n';
      }
    }
  }
  out << "variant: " << cfg.variant_name() << "\n";
  for (const auto& m : trained.reports) {
    out << m.module << ": final loss " << m.report.epochs.back().loss << ", training accuracy "
        << m.report.final_accuracy << "\n";
  }
  out << "checksum: " << hex64(trained.model.checksum()) << "\n";
  err << "wrote " << a.output << "\n";
  return kExitOk;
}

struct EvalArgs {
  std::string vocab;
  std::string annotations;
  std::string checkpoint;
  std::string embeddings;
  FeatureOptions features;
  std::string tasks = "predicate";
  std::string n_values = "50,100";
  std::string k_values = "1";
  bool zero_shot = false;
  std::string train_annotations;
  std::string rank = "product";
  double iou = 0.5;
  std::size_t threads = 1;
  std::string json;
  std::string csv;
  std::string label;
};

inline int cmd_eval(const EvalArgs& a, std::ostream& out, std::ostream&) {
  const auto model = load_checkpoint(a.checkpoint);
  const auto& cfg = model.config();
  const auto vocab = load_vocab(a.vocab);
  if (vocab.num_predicates() != model.dims().num_predicates) {
    throw InvalidArgument("vocabulary has " + std::to_string(vocab.num_predicates()) +
                          " predicates but the checkpoint was trained on " +
                          std::to_string(model.dims().num_predicates));
  }
  if (cfg.needs_embeddings() && a.embeddings.empty()) {
    throw InvalidArgument("variant " + cfg.variant_name() + " needs word embeddings (--embeddings)");
  }
  if (cfg.needs_features() && a.features.path.empty() && a.features.synthetic_seed < 0) {
    throw InvalidArgument("variant " + cfg.variant_name() +
                          " needs visual features (--features or --synthetic-features)");
  }
  if (a.zero_shot && a.train_annotations.empty()) {
    throw InvalidArgument("--zero-shot requires --train-annotations");
  }
  std::vector<Task> tasks;
  for (const auto& t : parse_name_list(a.tasks)) tasks.push_back(parse_task(t));
  if (tasks.empty()) throw InvalidArgument("--tasks is empty");

  EvalParams params;
  params.n_values = parse_size_list(a.n_values, "--n");
  params.k_values = parse_size_list(a.k_values, "--k");
  params.rank = parse_rank_key(a.rank);
  params.iou_threshold = a.iou;
  params.threads = a.threads == 0 ? 1 : a.threads;
  for (auto k : params.k_values) {
    if (k > vocab.num_predicates()) {
      throw InvalidArgument("k=" + std::to_string(k) + " exceeds the " +
                            std::to_string(vocab.num_predicates()) + " predicates");
    }
  }

  const auto corpus = load_corpus(a.annotations, vocab);
  std::set<TripleKey> train_keys;
  if (a.zero_shot) train_keys = triple_keys(load_corpus(a.train_annotations, vocab));

  FeatureOptions fo = a.features;
  if (fo.dim == 0) fo.dim = model.dims().feature_dim;
  const auto store = cfg.needs_embeddings() ? load_store(a.embeddings, model.dims().word_dim) : nullptr;
  const auto features = cfg.needs_features() ? fo.load() : nullptr;
  check_inputs(cfg, store.get(), features.get());
  if (features && features->dimension() != model.dims().feature_dim) {
    throw InvalidArgument("feature dimension " + std::to_string(features->dimension()) +
                          " does not match the checkpoint's " + std::to_string(model.dims().feature_dim));
  }
  const InputBuilder builder(cfg, vocab, store.get(), features.get());
  const ModelScorer scorer{model, builder};

  VariantResults results;
  results.variant = a.label.empty() ? cfg.variant_name() : a.label;
  for (Task t : tasks) {
    params.task = t;
    params.zero_shot_train_keys = nullptr;
    for (auto& r : evaluate_recall(corpus, scorer, params)) results.reports.push_back(r);
    if (a.zero_shot) {
      params.zero_shot_train_keys = &train_keys;
      for (auto& r : evaluate_recall(corpus, scorer, params)) results.reports.push_back(r);
    }
  }

  write_table(out, {results});
  if (!a.json.empty()) {
    Output o(a.json, out);
    o.stream() << to_json(results).dump(2) << '\n';
  }
  if (!a.csv.empty()) {
    Output o(a.csv, out);
    write_csv(o.stream(), {results});
  }
  return kExitOk;
}

struct EncodeArgs {
  std::string annotations;
  std::string vocab;
  std::string output = "-";
  std::string encoding = "proposed";
  std::string source = "gt";
};

inline int cmd_spatial_encode(const EncodeArgs& a, std::ostream& out, std::ostream&) {
  const auto enc = parse_spatial_encoding(a.encoding);
  if (a.source != "gt" && a.source != "detections") {
    throw InvalidArgument("unknown --source '" + a.source + "' (expected gt|detections)");
  }
  const auto vocab = load_vocab(a.vocab);
  const auto corpus = load_corpus(a.annotations, vocab);
  Output o(a.output, out);
  for (const auto& img : corpus) {
    const auto& objs = source_objects(img, a.source == "gt" ? PairSource::gt_pairs : PairSource::detections);
    for (const auto& [i, j] : candidate_pairs(objs)) {
      nlohmann::ordered_json row;
      row["image_id"] = img.image_id;
      row["subj"] = i;
      row["obj"] = j;
      row["vector"] = encode_spatial(enc, objs[i].box, objs[j].box, img.dims);
      o.stream() << row.dump() << '\n';
    }
  }
  return kExitOk;
}

struct ReportArgs {
  std::vector<std::string> inputs;
  std::string csv;
  std::string json;
};

inline int cmd_report(const ReportArgs& a, std::ostream& out, std::ostream&) {
  if (a.inputs.empty()) throw InvalidArgument("report needs at least one --input");
  std::vector<VariantResults> rows;
  for (const auto& path : a.inputs) {
    auto in = open_in(path);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(0, path + ": malformed JSON: " + e.what());
    }
    if (j.is_array()) {
      for (const auto& v : j) rows.push_back(variant_results_from_json(v));
    } else {
      rows.push_back(variant_results_from_json(j));
    }
  }
  write_table(out, rows);
  if (!a.csv.empty()) {
    Output o(a.csv, out);
    write_csv(o.stream(), rows);
  }
  if (!a.json.empty()) {
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const auto& r : rows) arr.push_back(to_json(r));
    Output o(a.json, out);
    o.stream() << arr.dump(2) << '\n';
  }
  return kExitOk;
}

// key=value lines; '#' comments; optional "[section]" headers scope the
// following keys to a subcommand, as does a "sub.key" prefix.
inline std::vector<std::pair<std::string, std::string>> read_config(const std::string& path,
                                                                    const std::string& subcommand) {
  auto in = open_in(path);
  std::vector<std::pair<std::string, std::string>> out;
  std::string section;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto t = vrd::detail::trim(line);
    if (t.empty() || t.front() == '#' || t.front() == ';') continue;
    if (t.front() == '[' && t.back() == ']') {
      section = vrd::detail::trim(std::string_view(t).substr(1, t.size() - 2));
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ParseError(line_no, path + ": expected key=value");
    std::string key = vrd::detail::trim(std::string_view(t).substr(0, eq));
    std::string value = vrd::detail::trim(std::string_view(t).substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
    std::string scope = section;
    if (const auto dot = key.find('.'); dot != std::string::npos) {
      scope = key.substr(0, dot);
      key = key.substr(dot + 1);
    }
    if (!scope.empty() && scope != subcommand) continue;
    out.emplace_back(key, value);
  }
  return out;
}

}  // namespace detail

inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout,
               std::ostream& err = std::cerr) {
  using namespace detail;
  CLI::App app{"Visual relationship detection: training and Recall@n evaluation", "vrd"};
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  std::string config_path;
  app.add_option("--config", config_path, "key=value config file (default: $VRD_CONFIG)");

  IngestArgs ingest;
  auto* c_ingest = app.add_subcommand("ingest", "Convert annotations to canonical JSONL and print statistics");
  c_ingest->add_option("--input", ingest.input, "Raw annotation file")->required();
  c_ingest->add_option("--vocab", ingest.vocab, "Vocabulary file")->required();
  c_ingest->add_option("--output", ingest.output, "Canonical JSONL output ('-' = stdout)");
  c_ingest->add_option("--format", ingest.format, "Input format: vrd|canonical");

  SplitArgs split;
  auto* c_split = app.add_subcommand("split-zeroshot", "Keep only test triples never seen in training");
  c_split->add_option("--train", split.train, "Training corpus")->required();
  c_split->add_option("--test", split.test, "Test corpus")->required();
  c_split->add_option("--vocab", split.vocab, "Vocabulary file")->required();
  c_split->add_option("--output", split.output, "Filtered test JSONL ('-' = stdout)");

  TrainArgs train;
  auto* c_train = app.add_subcommand("train", "Train a model variant and write a checkpoint");
  c_train->add_option("--vocab", train.vocab, "Vocabulary file")->required();
  c_train->add_option("--annotations", train.annotations, "Training corpus (canonical JSONL)")->required();
  c_train->add_option("--variant", train.variant, "Model variant, e.g. L, LS, SVW, LS+SV")->required();
  c_train->add_option("--embeddings", train.embeddings, "Word-vector text file");
  c_train->add_option("--embedding-dim", train.embedding_dim, "Word-vector dimension");
  train.features.add_to(c_train);
  c_train->add_option("--output", train.output, "Checkpoint path")->required();
  c_train->add_option("--log", train.log, "Training log (JSONL)");
  c_train->add_option("--lr", train.lr, "Learning rate");
  c_train->add_option("--batch-size", train.batch_size, "Minibatch size");
  c_train->add_option("--epochs", train.epochs, "Epochs");
  c_train->add_option("--seed", train.seed, "Random seed");
  c_train->add_option("--l2", train.l2, "L2 weight decay");
  c_train->add_option("--fusion-space", train.fusion_space, "logit_product|log_space_sum");
  c_train->add_option("--spatial-encoding", train.spatial_encoding, "proposed|sf");
  c_train->add_flag("--separate", train.separate, "Train the two modules of a '+' variant separately");
  c_train->add_option("--init-from", train.init_from, "Initial parameters from a checkpoint");
  c_train->add_option("--class-weights", train.class_weights, "none|inverse_frequency|w0,w1,...");

  EvalArgs eval;
  auto* c_eval = app.add_subcommand("eval", "Recall@n for predicate, phrase and relationship tasks");
  c_eval->add_option("--vocab", eval.vocab, "Vocabulary file")->required();
  c_eval->add_option("--annotations", eval.annotations, "Test corpus (canonical JSONL)")->required();
  c_eval->add_option("--checkpoint", eval.checkpoint, "Checkpoint from 'train'")->required();
  c_eval->add_option("--embeddings", eval.embeddings, "Word-vector text file");
  eval.features.add_to(c_eval);
  c_eval->add_option("--tasks", eval.tasks, "Comma list of predicate,phrase,relationship");
  c_eval->add_option("--n", eval.n_values, "Comma list of n for R@n");
  c_eval->add_option("--k", eval.k_values, "Comma list of predictions per pair");
  c_eval->add_flag("--zero-shot", eval.zero_shot, "Also report recall on triples unseen in training");
  c_eval->add_option("--train-annotations", eval.train_annotations, "Training corpus for --zero-shot");
  c_eval->add_option("--rank", eval.rank, "Ranking key: pred_only|product");
  c_eval->add_option("--iou", eval.iou, "IoU threshold for detection tasks");
  c_eval->add_option("--threads", eval.threads, "Worker threads");
  c_eval->add_option("--json", eval.json, "Write the report as JSON");
  c_eval->add_option("--csv", eval.csv, "Write the report as CSV");
  c_eval->add_option("--label", eval.label, "Row label (default: variant name)");

  EncodeArgs encode;
  auto* c_encode = app.add_subcommand("spatial-encode", "Spatial vectors for every candidate pair");
  c_encode->add_option("--annotations", encode.annotations, "Corpus (canonical JSONL)")->required();
  c_encode->add_option("--vocab", encode.vocab, "Vocabulary file")->required();
  c_encode->add_option("--output", encode.output, "JSONL output ('-' = stdout)");
  c_encode->add_option("--encoding", encode.encoding, "proposed|sf");
  c_encode->add_option("--source", encode.source, "Pair source: gt|detections");

  ReportArgs report;
  auto* c_report = app.add_subcommand("report", "Merge eval JSON reports into one table");
  c_report->add_option("--input", report.inputs, "Eval JSON report(s)")
      ->required()
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  c_report->add_option("--csv", report.csv, "Write CSV");
  c_report->add_option("--json", report.json, "Write merged JSON");

  // Splice config values in ahead of the user's flags so the latter win.
  std::vector<std::string> argv_in(args.begin(), args.end());
  try {
    std::string cfg_path;
    for (std::size_t i = 0; i < argv_in.size(); ++i) {
      if (argv_in[i] == "--config" && i + 1 < argv_in.size()) cfg_path = argv_in[i + 1];
      if (argv_in[i].rfind("--config=", 0) == 0) cfg_path = argv_in[i].substr(9);
    }
    if (cfg_path.empty()) {
      if (const char* env = std::getenv(kConfigEnv); env != nullptr && *env != '\0') cfg_path = env;
    }
    if (!cfg_path.empty()) {
      std::size_t sub_pos = argv_in.size();
      CLI::App* sub = nullptr;
      for (std::size_t i = 0; i < argv_in.size() && sub == nullptr; ++i) {
        for (auto* s : app.get_subcommands({})) {
          if (s->get_name() == argv_in[i]) {
            sub = s;
            sub_pos = i;
            break;
          }
        }
      }
      if (sub != nullptr) {
        std::vector<std::string> injected;
        for (const auto& [key, value] : read_config(cfg_path, sub->get_name())) {
          const auto* opt = sub->get_option_no_throw("--" + key);
          if (opt == nullptr) {
            err << "warning: config key '" << key << "' is not an option of '" << sub->get_name() << "'\n";
            continue;
          }
          injected.push_back("--" + key + "=" + value);
        }
        argv_in.insert(argv_in.begin() + static_cast<std::ptrdiff_t>(sub_pos) + 1, injected.begin(),
                       injected.end());
      }
    }

    std::vector<std::string> reversed(argv_in.rbegin(), argv_in.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUser;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitUser;
  }

  try {
    if (c_ingest->parsed()) return cmd_ingest(ingest, out, err);
    if (c_split->parsed()) return cmd_split(split, out, err);
    if (c_train->parsed()) return cmd_train(train, out, err);
    if (c_eval->parsed()) return cmd_eval(eval, out, err);
    if (c_encode->parsed()) return cmd_spatial_encode(encode, out, err);
    if (c_report->parsed()) return cmd_report(report, out, err);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitUser;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
  return kExitInternal;
}

}  // namespace vrd::cli
