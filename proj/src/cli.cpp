#include "moto/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "moto/chargrains.hpp"
#include "moto/config.hpp"
#include "moto/error.hpp"
#include "moto/model.hpp"
#include "moto/neural.hpp"
#include "moto/train.hpp"

namespace moto::cli {

namespace fs = std::filesystem;

namespace {

enum class Level { quiet, info, debug };

Level log_level() {
  const char* env = std::getenv("MOTO_LOG");
  if (env == nullptr) return Level::info;
  const std::string v = env;
  if (v == "quiet" || v == "0" || v == "off") return Level::quiet;
  if (v == "debug" || v == "2") return Level::debug;
  return Level::info;
}

class Log {
 public:
  explicit Log(std::ostream& err) : err_(err), level_(log_level()) {}
  void info(const std::string& msg) const {
    if (level_ >= Level::info) err_ << "moto: " << msg << '\n';
  }
  void debug(const std::string& msg) const {
    if (level_ >= Level::debug) err_ << "moto: " << msg << '\n';
  }

 private:
  std::ostream& err_;
  Level level_;
};

std::string hex64(std::uint64_t v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, v);
  return buf;
}

std::string fmt17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string vocab_file(Granularity g) { return "vocab." + std::string(short_name(g)) + ".tsv"; }

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  checkpoint::write_file(path, text);
}

const fs::path& require_path(const fs::path& p, const char* flag) {
  if (p.empty()) throw InputError(std::string("missing required --") + flag);
  return p;
}

std::array<Dictionary, 3> load_dictionaries(const Config& cfg) {
  return {load_dictionary(require_path(cfg.dict_radical, "dict-radical"), Granularity::radical),
          load_dictionary(require_path(cfg.dict_wubi, "dict-wubi"), Granularity::wubi),
          load_dictionary(require_path(cfg.dict_pinyin, "dict-pinyin"), Granularity::pinyin)};
}

std::string labels_text(const LabelSet& labels) {
  std::string s;
  for (const auto& name : labels.names()) s += name + '\n';
  return s;
}

LabelSet load_labels(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  std::vector<std::string> names;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) names.push_back(line);
  }
  if (names.empty()) throw InputError(path.string() + ": no labels");
  return LabelSet(std::move(names));
}

std::string targets_text(const Featurizer& f, std::span<const RawSample> samples) {
  std::string s = "granularity\ttarget\tmean\tmax\n";
  for (Granularity g : kGranularities) {
    std::size_t total = 0;
    std::size_t longest = 0;
    for (const auto& sample : samples) {
      const std::size_t n = f.tokens(sample.text, g).size();
      total += n;
      longest = std::max(longest, n);
    }
    char mean[64];
    std::snprintf(mean, sizeof mean, "%.6f",
                  samples.empty() ? 0.0 : static_cast<double>(total) / samples.size());
    s += std::string(short_name(g)) + '\t' + std::to_string(f.target(g)) + '\t' + mean + '\t' +
         std::to_string(longest) + '\n';
  }
  return s;
}

std::string encoded_text(std::span<const EncodedSample> samples) {
  std::string s;
  for (const auto& sample : samples) {
    s += std::to_string(sample.class_id);
    for (Granularity g : kGranularities) {
      s += '\t';
      const auto& ids = sample.stream(g);
      for (std::size_t i = 0; i < ids.size(); ++i) {
        if (i > 0) s += ' ';
        s += std::to_string(ids[i]);
      }
    }
    s += '\n';
  }
  return s;
}

void write_vocabs(const fs::path& dir, const Featurizer& f) {
  for (Granularity g : kGranularities) {
    std::ostringstream os;
    f.vocab(g).save(os);
    write_text(dir / vocab_file(g), os.str());
  }
}

CorpusOptions corpus_options(const Config& cfg) {
  CorpusOptions o;
  o.max_non_chinese = cfg.max_non_chinese;
  return o;
}

void report_corpus(const Log& log, const fs::path& path, const Corpus& c) {
  log.info(path.string() + ": " + std::to_string(c.samples.size()) + " samples, " +
           std::to_string(c.labels.size()) + " labels, " + std::to_string(c.skipped_empty) +
           " empty, " + std::to_string(c.skipped_filtered) + " filtered");
}

/// Maps `--embeddings` to per-granularity files. A bare path is the
/// character table.
std::map<Granularity, fs::path> embedding_files(const std::string& spec) {
  std::map<Granularity, fs::path> files;
  if (spec.empty()) return files;
  if (spec.find('=') == std::string::npos) {
    files[Granularity::character] = spec;
    return files;
  }
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw InputError("--embeddings: expected g=path, got '" + item + "'");
    const auto g = parse_granularity(item.substr(0, eq));
    if (!g) throw InputError("--embeddings: unknown granularity '" + item.substr(0, eq) + "'");
    files[*g] = item.substr(eq + 1);
  }
  return files;
}

// Checkpoint directory layout: model.ckpt plus the vocabularies, labels and
// target-length report needed to featurize new text the same way.
struct Artifacts {
  ModelParams params;
  checkpoint::Meta meta;
  LabelSet labels;
  Featurizer featurizer;
};

Config resolve_dictionaries(Config cfg, const checkpoint::Meta& meta) {
  const auto fill = [&](fs::path& p, const char* key) {
    if (!p.empty()) return;
    if (auto it = meta.find(std::string("config.") + key); it != meta.end()) p = it->second;
  };
  fill(cfg.dict_radical, "dict-radical");
  fill(cfg.dict_wubi, "dict-wubi");
  fill(cfg.dict_pinyin, "dict-pinyin");
  return cfg;
}

Artifacts load_artifacts(const Config& given, const Log& log) {
  const fs::path& dir = require_path(given.ckpt, "ckpt");
  const fs::path model_path = dir / "model.ckpt";
  if (!fs::exists(model_path)) throw InputError("cannot open " + model_path.string());
  checkpoint::Meta meta;
  ModelParams params = checkpoint::load(model_path, &meta);

  std::array<Vocab, 4> vocabs;
  for (Granularity g : kGranularities) {
    const auto k = static_cast<std::size_t>(g);
    vocabs[k] = Vocab::load(dir / vocab_file(g));
    const std::string key = "vocab." + std::string(short_name(g));
    const auto it = meta.find(key);
    if (it == meta.end() || it->second != hex64(vocabs[k].fingerprint()) ||
        vocabs[k].size() != params.spec.vocab_sizes[k]) {
      throw CompatibilityError((dir / vocab_file(g)).string() +
                               " does not match the vocabulary the checkpoint was trained with");
    }
  }
  LabelSet labels = load_labels(dir / "labels.tsv");
  if (labels.size() != params.spec.classes) {
    throw CompatibilityError("labels.tsv lists " + std::to_string(labels.size()) +
                             " classes but the checkpoint has " +
                             std::to_string(params.spec.classes));
  }
  const Config cfg = resolve_dictionaries(given, meta);
  Featurizer featurizer(load_dictionaries(cfg), std::move(vocabs), params.spec.lengths);
  for (Granularity g : kGranularities) {
    if (featurizer.pad_id(g) != params.spec.pad_ids[static_cast<std::size_t>(g)]) {
      throw CompatibilityError("dictionary for " + std::string(long_name(g)) +
                               " pads differently from the checkpoint");
    }
  }
  log.debug("loaded " + model_path.string() + " with " +
            std::to_string(params.parameter_count()) + " parameters");
  return {std::move(params), std::move(meta), std::move(labels), std::move(featurizer)};
}

EncodedSample encode_text(const Featurizer& f, const std::string& text) {
  EncodedSample s;
  for (Granularity g : kGranularities) s.ids[static_cast<std::size_t>(g)] = f.encode_stream(text, g);
  return s;
}

// ---------------------------------------------------------------------------

int cmd_featurize(const Config& cfg, std::ostream& out, const Log& log) {
  const fs::path& dir = require_path(cfg.out, "out");
  const fs::path& train_path = require_path(cfg.train, "train");
  auto dicts = load_dictionaries(cfg);
  Corpus train = load_corpus(train_path, corpus_options(cfg));
  report_corpus(log, train_path, train);
  const Featurizer f = Featurizer::fit(std::move(dicts), train.samples);

  write_vocabs(dir, f);
  write_text(dir / "labels.tsv", labels_text(train.labels));
  write_text(dir / "targets.tsv", targets_text(f, train.samples));
  write_text(dir / "train.ids.tsv", encoded_text(f.encode_all(train.samples, train.labels)));
  if (!cfg.test.empty()) {
    CorpusOptions o = corpus_options(cfg);
    o.labels = train.labels;
    const Corpus test = load_corpus(cfg.test, o);
    report_corpus(log, cfg.test, test);
    write_text(dir / "test.ids.tsv", encoded_text(f.encode_all(test.samples, train.labels)));
  }
  for (Granularity g : kGranularities) {
    out << short_name(g) << "\tvocab=" << f.vocab(g).size() << "\ttarget=" << f.target(g) << '\n';
  }
  return kOk;
}

int cmd_train(const Config& cfg, std::ostream& out, const Log& log) {
  const fs::path& dir = require_path(cfg.ckpt, "ckpt");
  const fs::path& train_path = require_path(cfg.train, "train");
  auto dicts = load_dictionaries(cfg);
  Corpus train = load_corpus(train_path, corpus_options(cfg));
  report_corpus(log, train_path, train);
  const Featurizer f = Featurizer::fit(std::move(dicts), train.samples);
  const auto training = f.encode_all(train.samples, train.labels);

  std::vector<EncodedSample> dev;
  if (!cfg.dev.empty()) {
    CorpusOptions o = corpus_options(cfg);
    o.labels = train.labels;
    const Corpus d = load_corpus(cfg.dev, o);
    report_corpus(log, cfg.dev, d);
    dev = f.encode_all(d.samples, train.labels);
  }

  ModelSpec spec;
  spec.dim = cfg.dim;
  spec.classes = train.labels.size();
  spec.streams = cfg.streams;
  spec.sigmoid_head = cfg.sigmoid_head;
  spec.dropout = cfg.dropout;
  spec.downsample_target = cfg.downsample_target;
  spec.downsample_threshold = cfg.downsample_threshold;
  spec.lengths = f.targets();
  for (Granularity g : kGranularities) {
    const auto k = static_cast<std::size_t>(g);
    spec.vocab_sizes[k] = f.vocab(g).size();
    spec.pad_ids[k] = f.pad_id(g);
  }
  Rng rng(cfg.seed);
  ModelParams params = ModelParams::initialize(spec, rng);

  for (const auto& [g, path] : embedding_files(cfg.embeddings)) {
    auto& table = params.embeddings[static_cast<std::size_t>(g)];
    if (!table) continue;
    std::ifstream in(path);
    if (!in) throw InputError("cannot open " + path.string());
    const EmbeddingImport imp = import_embeddings(in, path.string(), f.vocab(g), *table);
    *table = imp.table;
    log.info(path.string() + ": " + std::to_string(imp.hits) + " vectors used, " +
             std::to_string(imp.misses) + " tokens without a vector");
  }

  checkpoint::Meta extra;
  extra["seed"] = std::to_string(cfg.seed);
  for (Granularity g : kGranularities) {
    extra["vocab." + std::string(short_name(g))] = hex64(f.vocab(g).fingerprint());
  }
  for (const auto& [k, v] : cfg.effective()) extra["config." + k] = v;

  fs::create_directories(dir);
  write_vocabs(dir, f);
  write_text(dir / "labels.tsv", labels_text(train.labels));
  write_text(dir / "targets.tsv", targets_text(f, train.samples));
  log.info("training " + std::to_string(params.parameter_count()) + " parameters on " +
           std::to_string(training.size()) + " samples");

  TrainConfig tc;
  tc.batch = cfg.batch;
  tc.max_epochs = cfg.max_epochs;
  tc.seed = cfg.seed;
  tc.threads = cfg.threads;
  tc.adam.lr = cfg.lr;

  std::string log_text;
  const auto on_epoch = [&](const EpochReport& r, const ModelParams& p) {
    std::string lines = log_line(r.epoch, "train", r.train) + '\n';
    if (r.dev) lines += log_line(r.epoch, "dev", *r.dev) + '\n';
    log_text += lines;
    out << lines << std::flush;
    write_text(dir / "train.log", log_text);
    checkpoint::save(dir / "model.ckpt", p, extra);
    return true;
  };
  moto::train(params, training, dev, tc, on_epoch);
  checkpoint::save(dir / "model.ckpt", params, extra);
  write_text(dir / "train.log", log_text);
  log.info("wrote " + (dir / "model.ckpt").string());
  return kOk;
}

int cmd_eval(const Config& cfg, std::ostream& out, const Log& log) {
  const fs::path& test_path = require_path(cfg.test, "test");
  const Artifacts a = load_artifacts(cfg, log);
  const Corpus test = load_corpus(test_path, corpus_options(cfg));
  report_corpus(log, test_path, test);
  for (const auto& s : test.samples) {
    if (!a.labels.find(s.label)) {
      throw CompatibilityError(test_path.string() + ": label '" + s.label +
                               "' is not known to the checkpoint");
    }
  }
  const auto samples = a.featurizer.encode_all(test.samples, a.labels);
  const EvalResult r = evaluate(a.params, samples, cfg.threads);
  out << metrics_text(r.metrics, a.labels);
  if (!cfg.report.empty()) write_text(cfg.report, metrics_tsv(r.metrics, a.labels));
  return kOk;
}

int cmd_predict(const Config& cfg, std::ostream& out, const Log& log) {
  if (cfg.text.empty()) throw InputError("missing required --text");
  const Artifacts a = load_artifacts(cfg, log);
  const EncodedSample sample = encode_text(a.featurizer, cfg.text);
  const Prediction p = predict_sample(a.params, sample);

  out << "label\t" << a.labels.name(p.class_id) << '\n';
  for (std::size_t k = 0; k < a.labels.size(); ++k) {
    out << "prob\t" << a.labels.name(k) << '\t' << fmt17(p.probabilities[k]) << '\n';
  }
  if (!cfg.dump_attention.empty()) {
    std::string tsv = "stream\tj\ti\talpha\n";
    for (std::size_t s = 0; s < kAuxGranularities.size(); ++s) {
      if (!p.alpha[s]) continue;
      const Tensor& alpha = *p.alpha[s];  // [l_aux x lc]
      const std::string name(short_name(kAuxGranularities[s]));
      for (std::size_t j = 0; j < alpha.cols(); ++j) {
        for (std::size_t i = 0; i < alpha.rows(); ++i) {
          tsv += name + '\t' + std::to_string(j) + '\t' + std::to_string(i) + '\t' +
                 fmt17(alpha.at(i, j)) + '\n';
        }
      }
    }
    write_text(cfg.dump_attention, tsv);
  }
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multi-granularity Chinese text classifier", "moto"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  app.add_option("--config", config_path, "key = value file; flags override it");
  std::map<std::string, std::string> flags;
  for (const auto& key : config_keys()) {
    app.add_option("--" + key, flags[key])->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  }

  auto* featurize = app.add_subcommand("featurize", "write vocabularies and encoded corpora");
  auto* train_cmd = app.add_subcommand("train", "train a model and write a checkpoint directory");
  auto* eval = app.add_subcommand("eval", "report metrics of a checkpoint on a corpus");
  auto* predict = app.add_subcommand("predict", "classify one text");

  const Log log(err);
  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kInputError;
  }

  try {
    Config cfg;
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      if (!in) throw InputError("cannot open " + config_path);
      for (const auto& [k, v] : parse_config(in, config_path)) cfg.set(k, v);
    }
    for (const auto& key : config_keys()) {
      if (app.get_option("--" + key)->count() > 0) cfg.set(key, flags[key]);
    }
    cfg.validate();

    if (featurize->parsed()) return cmd_featurize(cfg, out, log);
    if (train_cmd->parsed()) return cmd_train(cfg, out, log);
    if (eval->parsed()) return cmd_eval(cfg, out, log);
    if (predict->parsed()) return cmd_predict(cfg, out, log);
    return kFailure;
  } catch (const CompatibilityError& e) {
    err << "moto: " << e.what() << '\n';
    return kCompatibilityError;
  } catch (const NumericError& e) {
    err << "moto: " << e.what() << '\n';
    return kNumericError;
  } catch (const InputError& e) {
    err << "moto: " << e.what() << '\n';
    return kInputError;
  } catch (const ShapeError& e) {
    err << "moto: " << e.what() << '\n';
    return kCompatibilityError;
  } catch (const fs::filesystem_error& e) {
    err << "moto: " << e.what() << '\n';
    return kInputError;
  } catch (const std::exception& e) {
    err << "moto: " << e.what() << '\n';
    return kFailure;
  }
}

}  // namespace moto::cli
