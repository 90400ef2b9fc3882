#include "cli.hpp"

#include <openssl/evp.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <memory>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "kattn/checkpoint.hpp"
#include "kattn/errors.hpp"
#include "kattn/lexicon.hpp"
#include "kattn/synthetic.hpp"
#include "kattn/train.hpp"
#include "kattn/visualize.hpp"

#ifndef KATTN_VERSION
#define KATTN_VERSION "unknown"
#endif

namespace kattn::cli {

namespace fs = std::filesystem;

const char* version() { return KATTN_VERSION; }

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) {
    throw Error("sha256: digest initialisation failed");
  }
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof buf);
    if (in.gcount() > 0) EVP_DigestUpdate(ctx.get(), buf, static_cast<std::size_t>(in.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), md, &len);
  std::string hex;
  char byte[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(byte, sizeof byte, "%02x", md[i]);
    hex += byte;
  }
  return hex;
}

std::string RunManifest::to_json() const {
  nlohmann::ordered_json j;
  j["version"] = version;
  j["config"] = nlohmann::ordered_json::parse(config.to_json());
  j["ablations"] = ablations;
  j["inputs"] = nlohmann::ordered_json::array();
  for (const InputDigest& d : inputs) {
    j["inputs"].push_back({{"path", d.path}, {"bytes", d.bytes}, {"sha256", d.sha256}});
  }
  j["seeds"] = seeds;
  j["output_dir"] = output_dir;
  return j.dump(2);
}

namespace {

// Thrown for conditions with a dedicated exit code.
struct ExitError : Error {
  ExitError(int code, const std::string& what) : Error(what), code(code) {}
  int code;
};

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!text.empty() && text.back() != '\n') out << '\n';
}

InputDigest digest(const fs::path& path) {
  return {path.string(), static_cast<std::uint64_t>(fs::file_size(path)), sha256_file(path)};
}

std::vector<std::string> split_list(const std::vector<std::string>& items) {
  std::vector<std::string> out;
  for (const std::string& item : items) {
    std::stringstream ss(item);
    std::string part;
    while (std::getline(ss, part, ',')) {
      if (!part.empty()) out.push_back(part);
    }
  }
  return out;
}

void apply_seed_env(ModelConfig& config) {
  const char* env = std::getenv("KATTN_SEED");
  if (env == nullptr || *env == '\0') return;
  try {
    std::size_t used = 0;
    const unsigned long long seed = std::stoull(env, &used);
    if (used != std::string(env).size()) throw std::invalid_argument(env);
    config.seed = seed;
  } catch (const std::logic_error&) {
    throw ConfigError("KATTN_SEED must be a non-negative integer, got \"" + std::string(env) + "\"");
  }
}

void apply_sets(ModelConfig& config, const std::vector<std::string>& sets) {
  for (const std::string& s : sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw ConfigError("--set expects key=value, got \"" + s + "\"");
    }
    config.set(s.substr(0, eq), s.substr(eq + 1));
  }
}

struct TrainArgs {
  std::string config;
  std::string data;
  std::string out;
  std::string lexicon;
  std::string embeddings;
  bool no_embeddings = false;
  std::vector<std::string> ablate;
  std::vector<std::string> sets;
  std::size_t seeds = 0;
  bool quiet = false;
};

int cmd_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  ModelConfig config = a.config.empty() ? ModelConfig{} : ModelConfig::load(a.config);
  apply_seed_env(config);
  const auto ablations = split_list(a.ablate);
  for (const std::string& name : ablations) config.apply_ablation(name);
  apply_sets(config, a.sets);
  if (a.seeds > 0) config.seeds = a.seeds;
  config.validate();

  const fs::path data_dir(a.data);
  const fs::path out_dir(a.out);
  const fs::path lexicon_path = a.lexicon.empty() ? data_dir / "lexicon.jsonl" : fs::path(a.lexicon);
  std::optional<fs::path> embeddings;
  if (!a.no_embeddings) {
    if (!a.embeddings.empty()) {
      embeddings = a.embeddings;
    } else if (fs::exists(data_dir / "embeddings.txt")) {
      embeddings = data_dir / "embeddings.txt";
    }
  }

  const RawSplits raw = load_splits(data_dir);
  std::vector<LexiconEntry> lexicon;
  const bool lexicon_needed = config.kind != ModelKind::Self;
  if (lexicon_needed || fs::exists(lexicon_path)) lexicon = load_lexicon(lexicon_path);

  RunManifest manifest;
  manifest.config = config;
  manifest.ablations = ablations;
  for (const char* split : {"train.jsonl", "dev.jsonl", "test.jsonl"}) {
    manifest.inputs.push_back(digest(data_dir / split));
  }
  if (!lexicon.empty()) manifest.inputs.push_back(digest(lexicon_path));
  if (embeddings) manifest.inputs.push_back(digest(*embeddings));
  if (!a.config.empty()) manifest.inputs.push_back(digest(a.config));
  for (std::size_t s = 0; s < config.seeds; ++s) manifest.seeds.push_back(config.seed + s);
  fs::create_directories(out_dir);
  manifest.output_dir = fs::absolute(out_dir).string();
  manifest.version = version();
  write_file(out_dir / "manifest.json", manifest.to_json());

  const Vocab vocab = build_vocab(raw, lexicon, config);
  const EncodedSplits data = encode_splits(raw, vocab, encode_options(config));

  TrainOptions options;
  options.embeddings = embeddings;
  std::uint64_t current_seed = config.seed;
  const auto start = std::chrono::steady_clock::now();
  std::ofstream history(out_dir / "history.jsonl", std::ios::binary);
  options.on_epoch = [&](const EpochRecord& r) {
    nlohmann::ordered_json j{{"seed", current_seed}, {"epoch", r.epoch},
                             {"lr", r.lr},           {"train_loss", r.train_loss},
                             {"dev_precision", r.dev.precision},
                             {"dev_recall", r.dev.recall},
                             {"dev_f1", r.dev.f1}};
    history << j.dump() << '\n';
    if (!a.quiet) {
      const double secs =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      char line[160];
      std::snprintf(line, sizeof line,
                    "seed %llu epoch %zu lr %.4f loss %.4f dev P %.4f R %.4f F1 %.4f (%.0fs)\n",
                    static_cast<unsigned long long>(current_seed), r.epoch, r.lr, r.train_loss,
                    r.dev.precision, r.dev.recall, r.dev.f1, secs);
      err << line << std::flush;
    }
  };

  ExperimentResult result;
  std::vector<double> dev_f1;
  for (std::uint64_t seed : manifest.seeds) {
    current_seed = seed;
    ModelConfig c = config;
    c.seed = seed;
    result.runs.push_back(train_model(c, vocab, lexicon, data, options));
    fs::create_directories(out_dir / "checkpoints");
    save_checkpoint(out_dir / "checkpoints" / ("seed-" + std::to_string(seed) + ".ckpt"),
                    *result.runs.back().model);
    dev_f1.push_back(result.runs.back().dev.f1);
  }
  result.selected = median_index(dev_f1);
  save_checkpoint(out_dir / "model.ckpt", *result.best().model);
  write_file(out_dir / "metrics.json", result.to_json());
  out << "selected seed " << result.best().seed << ": dev F1 " << result.best().dev.f1
      << ", test P " << result.best().test.precision << " R " << result.best().test.recall
      << " F1 " << result.best().test.f1 << "\n";
  return kExitOk;
}

std::vector<EncodedExample> encode_for(const RelationModel& model,
                                       const std::vector<RawExample>& raw) {
  return encode_all(raw, model.vocab(), encode_options(model.config()));
}

int cmd_eval(const std::string& checkpoint, const std::string& data, const std::string& out_path,
             std::ostream& out) {
  const auto model = load_checkpoint(checkpoint);
  const auto raw = load_dataset(data);
  const MetricsReport report = evaluate(*model, encode_for(*model, raw), model->config().batch_size);
  if (out_path.empty()) {
    out << report.to_json() << "\n";
  } else {
    write_file(out_path, report.to_json());
  }
  return kExitOk;
}

int cmd_sweep(const std::string& checkpoint, const std::string& data,
              const std::vector<double>& grid_arg, std::size_t steps, const std::string& out_path,
              std::ostream& out) {
  const auto model = load_checkpoint(checkpoint);
  if (model->config().kind != ModelKind::Si) {
    throw ExitError(kExitNotSi, std::string("sweep-beta needs a softmax-interpolation (si) "
                                            "checkpoint; this one is ") +
                                    to_string(model->config().kind));
  }
  const std::vector<double> grid = grid_arg.empty() ? beta_grid(steps) : grid_arg;
  for (double b : grid) {
    if (!(b >= 0.0 && b <= 1.0)) throw ConfigError("beta grid values must lie in [0, 1]");
  }
  const auto raw = load_dataset(data);
  // One evaluation pass; every grid point reuses the cached channel outputs.
  const Predictions p = predict(*model, encode_for(*model, raw), model->config().batch_size);
  const auto points = sweep_beta(p, grid, model->vocab().negative_id());
  if (out_path.empty()) {
    out << sweep_csv(points);
  } else {
    write_file(out_path, sweep_csv(points));
  }
  out << sweep_trend(points);
  return kExitOk;
}

int cmd_visualize(const std::string& checkpoint, const std::string& data,
                  const std::vector<std::string>& ids_arg, const std::string& html_path,
                  const std::string& json_arg, std::ostream& out) {
  const auto model = load_checkpoint(checkpoint);
  const auto raw = load_dataset(data);
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < raw.size(); ++i) index.emplace(raw[i].id, i);
  const auto ids = split_list(ids_arg);
  if (ids.empty()) throw ConfigError("visualize needs at least one example id");
  std::vector<AttentionRecord> records;
  for (const std::string& id : ids) {
    const auto it = index.find(id);
    if (it == index.end()) {
      throw ExitError(kExitUnknownExample, "no example with id \"" + id + "\" in " + data);
    }
    const RawExample& ex = raw[it->second];
    records.push_back(trace_attention(*model, ex,
                                      encode_example(ex, model->vocab(), encode_options(model->config()))));
  }
  const fs::path json_path =
      json_arg.empty() ? fs::path(html_path).replace_extension(".json") : fs::path(json_arg);
  write_file(html_path, render_html(records));
  write_file(json_path, attention_json(records));
  out << "wrote " << html_path << " and " << json_path.string() << "\n";
  return kExitOk;
}

int cmd_gen(const SyntheticOptions& opt, bool seed_given, const std::string& dir,
            std::ostream& out) {
  SyntheticOptions o = opt;
  if (!seed_given) {
    ModelConfig c;
    c.seed = o.seed;
    apply_seed_env(c);
    o.seed = c.seed;
  }
  const SyntheticData data = generate_synthetic(o);
  write_synthetic(data, dir);
  out << "wrote " << data.splits.train.size() << "/" << data.splits.dev.size() << "/"
      << data.splits.test.size() << " examples and " << data.lexicon.size()
      << " lexicon entries to " << dir << "\n";
  return kExitOk;
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int cmd_build_lexicon(const std::string& frames, const std::string& units,
                      const std::string& synonyms, const std::string& out_path,
                      std::ostream& out) {
  const FrameMap map = load_frame_map(frames);
  const auto entries = assemble_lexicon(map, read_text(units),
                                        synonyms.empty() ? std::string() : read_text(synonyms),
                                        units, synonyms.empty() ? "synonyms" : synonyms);
  save_lexicon(out_path, entries);
  std::size_t syn = 0;
  for (const LexiconEntry& e : entries) syn += e.source == IndicatorSource::Synonym ? 1 : 0;
  out << "wrote " << entries.size() << " entries (" << entries.size() - syn << " frame units, "
      << syn << " synonyms) to " << out_path << "\n";
  return kExitOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Knowledge-attention relation extraction toolkit"};
  app.set_version_flag("--version", std::string(version()));
  app.require_subcommand(1);

  TrainArgs train;
  auto* t = app.add_subcommand("train", "Train one model per seed and keep the median run");
  t->add_option("--config", train.config, "JSON config with flat dotted keys");
  t->add_option("--data", train.data, "Directory with train/dev/test.jsonl")->required();
  t->add_option("--out", train.out, "Output directory")->required();
  t->add_option("--lexicon", train.lexicon, "Lexicon JSONL (default: <data>/lexicon.jsonl)");
  t->add_option("--embeddings", train.embeddings,
                "Word vectors (default: <data>/embeddings.txt when present)");
  t->add_flag("--no-embeddings", train.no_embeddings, "Skip pretrained word vectors");
  t->add_option("--ablate", train.ablate, "Ablation name, repeatable or comma-separated");
  t->add_option("--set", train.sets, "Override a config key: key=value (repeatable)");
  t->add_option("--seeds", train.seeds, "Number of seeds (overrides train.seeds)");
  t->add_flag("--quiet", train.quiet, "No per-epoch log");

  std::string checkpoint, data, out_path, json_path;
  auto* e = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset file");
  e->add_option("--checkpoint", checkpoint)->required();
  e->add_option("--data", data, "Dataset JSONL")->required();
  e->add_option("--out", out_path, "Metrics JSON path (default: stdout)");

  std::vector<double> grid;
  std::size_t steps = 11;
  auto* s = app.add_subcommand("sweep-beta", "Precision/recall trade-off of an SI checkpoint");
  s->add_option("--checkpoint", checkpoint)->required();
  s->add_option("--data", data, "Dataset JSONL")->required();
  s->add_option("--grid", grid, "Beta values")->delimiter(',');
  s->add_option("--steps", steps, "Evenly spaced grid size when --grid is absent");
  s->add_option("--out", out_path, "CSV path (default: stdout)");

  std::vector<std::string> ids;
  auto* v = app.add_subcommand("visualize", "Export pooling attention weights as HTML and JSON");
  v->add_option("--checkpoint", checkpoint)->required();
  v->add_option("--data", data, "Dataset JSONL")->required();
  v->add_option("--ids", ids, "Example ids, repeatable or comma-separated")->required();
  v->add_option("--out", out_path, "HTML path")->required();
  v->add_option("--json", json_path, "Weights JSON path (default: <out>.json)");

  SyntheticOptions syn;
  std::string syn_dir;
  auto* g = app.add_subcommand("gen-synthetic", "Generate a synthetic dataset, lexicon and vectors");
  g->add_option("--out", syn_dir, "Output directory")->required();
  auto* seed_opt = g->add_option("--seed", syn.seed, "Generator seed (default: KATTN_SEED or 1)");
  g->add_option("--relations", syn.n_relations);
  g->add_option("--train", syn.n_train);
  g->add_option("--dev", syn.n_dev);
  g->add_option("--test", syn.n_test);
  g->add_option("--negative-fraction", syn.negative_fraction);
  g->add_option("--embedding-dim", syn.embedding_dim);

  std::string frames, units, synonyms;
  auto* b = app.add_subcommand("build-lexicon", "Assemble a lexicon from frames, units and synonyms");
  b->add_option("--frames", frames, "Relation -> frames JSON")->required();
  b->add_option("--units", units, "Frame<TAB>word/TAG ... lines")->required();
  b->add_option("--synonyms", synonyms, "relation<TAB>word/TAG ... lines");
  b->add_option("--out", out_path, "Lexicon JSONL")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& ex) {
    return app.exit(ex, out, err);
  }

  try {
    if (*t) return cmd_train(train, out, err);
    if (*e) return cmd_eval(checkpoint, data, out_path, out);
    if (*s) return cmd_sweep(checkpoint, data, grid, steps, out_path, out);
    if (*v) return cmd_visualize(checkpoint, data, ids, out_path, json_path, out);
    if (*g) return cmd_gen(syn, seed_opt->count() > 0, syn_dir, out);
    if (*b) return cmd_build_lexicon(frames, units, synonyms, out_path, out);
  } catch (const ExitError& ex) {
    err << "error: " << ex.what() << "\n";
    return ex.code;
  } catch (const ConfigError& ex) {
    err << "config error: " << ex.what() << "\n";
    return kExitConfig;
  } catch (const ParseError& ex) {
    err << "parse error: " << ex.what() << "\n";
    return kExitData;
  } catch (const DataError& ex) {
    err << "data error: " << ex.what() << "\n";
    return kExitData;
  } catch (const LabelError& ex) {
    err << "data error: " << ex.what() << "\n";
    return kExitData;
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << "\n";
    return kExitFailure;
  }
  return kExitFailure;
}

}  // namespace kattn::cli
