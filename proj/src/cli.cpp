#include "adsorbtext/cli.hpp"

#include <chrono>
#include <cstdlib>
#include <iostream>
#include <regex>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "adsorbtext/analysis.hpp"
#include "adsorbtext/encoder.hpp"
#include "adsorbtext/eval_pairs.hpp"
#include "adsorbtext/featurizer.hpp"
#include "adsorbtext/synthetic.hpp"
#include "adsorbtext/tokenizer.hpp"
#include "adsorbtext/trainer.hpp"

#ifndef ADSORBTEXT_DATA_DIR
#define ADSORBTEXT_DATA_DIR "data"
#endif

namespace adsorbtext::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kSeedEnv = "ADSORBTEXT_SEED";
constexpr const char* kRunManifest = "run_manifest.json";

struct ModelFlags {
  std::size_t layers = 4, heads = 4, hidden = 64, ffn = 256, max_positions = kDefaultMaxPositions;
  double dropout = 0.1;
  std::string head_activation = "tanh";
  std::string norm = "post";

  EncoderConfig config(std::size_t vocab_size) const {
    EncoderConfig c;
    c.n_layers = layers;
    c.n_heads = heads;
    c.hidden_size = hidden;
    c.ffn_size = ffn;
    c.max_positions = max_positions;
    c.vocab_size = vocab_size;
    c.dropout_rate = dropout;
    c.head_activation = head_activation == "gelu" ? HeadActivation::gelu : HeadActivation::tanh;
    c.norm_style = norm == "pre" ? NormStyle::pre : NormStyle::post;
    c.validate();
    return c;
  }
};

struct TrainFlags {
  std::size_t epochs = 50, batch_size = 12, patience = 5, warmup = 0;
  double lr = 1e-6, weight_decay = 0.01, max_grad_norm = 0.0, mask_rate = kDefaultMaskRate;
  std::uint64_t seed = 0;

  TrainRunConfig config() const {
    TrainRunConfig c;
    c.max_epochs = epochs;
    c.batch_size = batch_size;
    c.early_stopping_patience = patience;
    c.warmup_steps = warmup;
    c.lr_plan.base_lr = lr;
    c.adamw.weight_decay = weight_decay;
    c.max_grad_norm = max_grad_norm;
    c.mask_rate = mask_rate;
    c.seed = seed;
    c.validate();
    return c;
  }
};

struct Flags {
  unsigned threads = std::max(1u, std::thread::hardware_concurrency());
  // shared paths
  std::string in, out, corpus, vocab, val_corpus, init, checkpoint, pred, report, systems, descriptions, text, id;
  std::string fixture;
  std::string format = "s4";
  std::string layers_spec = "first,last";
  std::string merge = "sum";
  double tolerance = kDefaultCutoffTolerance;
  int min_freq = 1;
  bool untied = false;
  bool global_pairs = false;
  bool ood = false;
  std::size_t n_systems = 2000;
  double noise = 0.1;
  double val_fraction = 0.2;
  ModelFlags model;
  TrainFlags train;
};

// Value of every option of the selected subcommand, for manifests.
json effective_options(const CLI::App* sub) {
  json j = json::object();
  for (const CLI::Option* opt : sub->get_options()) {
    auto names = opt->get_lnames();
    if (names.empty() || names.front() == "help") continue;
    const auto& name = names.front();
    if (opt->count() > 0) {
      auto res = opt->results();
      j[name] = res.size() == 1 ? json(res.front()) : json(res);
    } else {
      j[name] = opt->get_default_str();
    }
  }
  return j;
}

fs::path manifest_path_for(const fs::path& out, bool is_dir) {
  if (is_dir) return out / kRunManifest;
  fs::path p = out;
  p += ".manifest.json";
  return p;
}

void write_manifest(const fs::path& path, const std::string& command, const json& options, std::uint64_t seed,
                    const std::vector<std::string>& outputs, const json& extra = json::object()) {
  json m = {{"tool", "adsorbtext"},
            {"version", ADSORBTEXT_VERSION},
            {"command", command},
            {"config", options},
            {"config_hash", hex64(fnv1a64(options.dump()))},
            {"seed", seed},
            {"outputs", outputs}};
  for (auto& [k, v] : extra.items()) m[k] = v;
  write_file_atomic(path, m.dump(2) + "\n");
}

fs::path resolve_checkpoint(const fs::path& p) {
  if (fs::exists(p / "checkpoint" / "manifest.json")) return p / "checkpoint";
  return p;
}

// A hash mismatch only warns, but a different vocabulary size cannot work.
LoadedCheckpoint load_for_vocab(const fs::path& p, const Vocabulary& vocab) {
  auto loaded = load_checkpoint(resolve_checkpoint(p), hex64(vocab.hash()));
  if (loaded.model.config().vocab_size != vocab.size())
    throw ValidationError("checkpoint vocabulary has " + std::to_string(loaded.model.config().vocab_size) +
                          " tokens but the vocabulary file has " + std::to_string(vocab.size()));
  return loaded;
}

std::vector<std::string> texts_of(const std::vector<SerializedSample>& samples) {
  std::vector<std::string> t;
  t.reserve(samples.size());
  for (const auto& s : samples) t.push_back(s.text);
  return t;
}

struct Identity {
  std::string smiles, bulk;
};

// Adsorbate and bulk as written at the head of every serialized string.
std::optional<Identity> identity_from_text(const std::string& text) {
  static const std::regex structured(R"(^<s>(\S+?)</s>(\S+) \()");
  static const std::regex prose(R"(^Adsorbate (\S+) is adsorbed on the catalytic surface (\S+) with)");
  std::smatch m;
  if (std::regex_search(text, m, structured) || std::regex_search(text, m, prose)) return Identity{m[1], m[2]};
  return std::nullopt;
}

std::map<std::string, Identity> identities(const std::vector<SerializedSample>& samples, const std::string& systems) {
  std::map<std::string, Identity> out;
  if (!systems.empty()) {
    for (const auto& s : load_dataset(systems)) out[s.id] = {s.adsorbate_smiles, s.bulk_formula};
    return out;
  }
  for (const auto& s : samples) {
    auto id = identity_from_text(s.text);
    if (!id)
      throw ValidationError("cannot read adsorbate/bulk from sample '" + s.system_id + "'; pass --systems");
    out[s.system_id] = *id;
  }
  return out;
}

std::uint64_t apply_seed_env(std::uint64_t seed, std::ostream& err) {
  if (const char* env = std::getenv(kSeedEnv); env && *env) {
    try {
      std::size_t used = 0;
      auto v = std::stoull(env, &used);
      if (used != std::string(env).size()) throw std::invalid_argument("trailing characters");
      return v;
    } catch (const std::exception&) {
      throw ValidationError(std::string(kSeedEnv) + " is not an unsigned integer: '" + env + "'");
    }
  }
  (void)err;
  return seed;
}

// Expands `--config file.json` into trailing `--key value` arguments so they
// take precedence over earlier flags.
std::vector<std::string> expand_config(const std::vector<std::string>& args) {
  std::vector<std::string> out;
  std::string config_path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config") {
      if (i + 1 >= args.size()) throw ValidationError("--config requires a file argument");
      config_path = args[++i];
    } else if (args[i].rfind("--config=", 0) == 0) {
      config_path = args[i].substr(9);
    } else {
      out.push_back(args[i]);
    }
  }
  if (config_path.empty()) return out;
  json j;
  try {
    j = json::parse(read_file(config_path));
  } catch (const json::exception& e) {
    throw ParseError(config_path, 1, e.what());
  }
  if (!j.is_object()) throw ParseError(config_path, 1, "config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    std::string flag = "--" + key;
    if (value.is_boolean()) {
      if (value.get<bool>()) out.push_back(flag);
    } else if (value.is_string()) {
      out.push_back(flag);
      out.push_back(value.get<std::string>());
    } else if (value.is_number() || value.is_array()) {
      auto items = value.is_array() ? value : json::array({value});
      for (const auto& item : items) {
        out.push_back(flag);
        out.push_back(item.is_string() ? item.get<std::string>() : item.dump());
      }
    } else {
      throw ParseError(config_path, 1, "unsupported value for '" + key + "'");
    }
  }
  return out;
}

void add_model_flags(CLI::App* sub, ModelFlags& m) {
  sub->add_option("--layers", m.layers, "encoder blocks")->capture_default_str();
  sub->add_option("--heads", m.heads, "attention heads")->capture_default_str();
  sub->add_option("--hidden", m.hidden, "hidden size")->capture_default_str();
  sub->add_option("--ffn", m.ffn, "feed-forward size")->capture_default_str();
  sub->add_option("--max-positions", m.max_positions, "maximum sequence length")->capture_default_str();
  sub->add_option("--dropout", m.dropout, "dropout rate")->capture_default_str();
  sub->add_option("--head-activation", m.head_activation, "regression head activation")
      ->check(CLI::IsMember({"tanh", "gelu"}))
      ->capture_default_str();
  sub->add_option("--norm", m.norm, "layer-norm placement")->check(CLI::IsMember({"post", "pre"}))->capture_default_str();
}

void add_train_flags(CLI::App* sub, TrainFlags& t) {
  sub->add_option("--epochs", t.epochs, "maximum epochs")->capture_default_str();
  sub->add_option("--batch-size", t.batch_size, "samples per optimizer step")->capture_default_str();
  sub->add_option("--lr", t.lr, "base learning rate of the lowest group")->capture_default_str();
  sub->add_option("--patience", t.patience, "early-stopping patience in epochs")->capture_default_str();
  sub->add_option("--warmup", t.warmup, "linear warmup steps")->capture_default_str();
  sub->add_option("--weight-decay", t.weight_decay, "decoupled weight decay")->capture_default_str();
  sub->add_option("--max-grad-norm", t.max_grad_norm, "global gradient clipping (0 = off)")->capture_default_str();
  sub->add_option("--seed", t.seed, "random seed")->capture_default_str();
}

struct Context {
  std::ostream& out;
  std::ostream& err;
  Flags& f;
  json options;
  std::string command;
};

void cmd_featurize(Context& c) {
  auto& f = c.f;
  auto format = parse_format(f.format);
  auto systems = load_dataset(f.in);
  auto results = featurize_all(systems, format, f.tolerance, f.threads);
  std::vector<SerializedSample> samples;
  std::size_t fallbacks = 0;
  for (auto& r : results) {
    if (r.fell_back) {
      ++fallbacks;
      c.err << "warning: " << r.sample.system_id << ": no binding detected; emitted S1 content\n";
    }
    samples.push_back(std::move(r.sample));
  }
  json extra = {{"systems", systems.size()}, {"fallbacks", fallbacks}};
  if (!f.descriptions.empty()) {
    if (format != StringFormat::DESC) throw ValidationError("--descriptions only applies to --format desc");
    auto report = merge_description_cache(samples, systems, load_description_cache(f.descriptions));
    extra["missing_adsorbate_descriptions"] = report.missing_adsorbate;
    extra["missing_bulk_descriptions"] = report.missing_bulk;
  }
  save_corpus(f.out, samples);
  write_manifest(manifest_path_for(f.out, false), c.command, c.options, 0, {f.out}, extra);
  c.out << "featurized " << samples.size() << " systems as " << to_string(format) << " (" << fallbacks
        << " fell back to S1)\n";
}

void cmd_build_vocab(Context& c) {
  auto samples = load_corpus(c.f.corpus);
  auto vocab = Vocabulary::build(texts_of(samples), c.f.min_freq);
  vocab.save(c.f.out);
  write_manifest(manifest_path_for(c.f.out, false), c.command, c.options, 0, {c.f.out},
                 {{"vocab_size", vocab.size()}, {"vocab_hash", hex64(vocab.hash())}});
  c.out << "vocabulary: " << vocab.size() << " tokens\n";
}

void cmd_pretrain(Context& c) {
  auto& f = c.f;
  auto vocab = Vocabulary::load(f.vocab);
  auto samples = load_corpus(f.corpus);
  auto run = f.train.config();
  run.objective = Objective::mlm;
  run.mlm_tied = !f.untied;
  auto model = EncoderModel::initialized(f.model.config(vocab.size()), run.seed);
  auto result = pretrain_mlm(model, vocab, texts_of(samples), run);
  for (const auto& w : result.history.warnings) c.err << "warning: " << w << "\n";
  StagedDirectory staged(f.out);
  save_checkpoint(model, staged.path() / "checkpoint", hex64(vocab.hash()), result.history.step_lrs.size(), run.seed);
  write_file_atomic(staged.path() / "history.jsonl", result.history.to_jsonl());
  write_manifest(staged.path() / kRunManifest, c.command, c.options, run.seed, {"checkpoint", "history.jsonl"});
  staged.commit();
  const auto& last = result.history.epochs.back();
  c.out << "pretrained " << last.epoch << " epochs, final masked-token loss " << format_real(last.train_metric) << "\n";
}

void cmd_train(Context& c) {
  auto& f = c.f;
  auto vocab = Vocabulary::load(f.vocab);
  auto samples = load_corpus(f.corpus);
  std::vector<SerializedSample> train, val;
  if (!f.val_corpus.empty()) {
    train = samples;
    val = load_corpus(f.val_corpus);
  } else {
    for (auto& s : samples) (s.split == Split::train ? train : val).push_back(s);
  }
  if (train.empty()) throw ValidationError("no training samples (split 'train')");
  if (val.empty()) throw ValidationError("no validation samples; pass --val-corpus or include ID/OOD splits");
  auto run = f.train.config();

  EncoderModel model;
  if (!f.init.empty()) {
    auto loaded = load_for_vocab(f.init, vocab);
    for (const auto& w : loaded.warnings) c.err << "warning: " << w << "\n";
    model = std::move(loaded.model);
    model.detach_mlm_head();
    model.reinitialize_regression_head(run.seed);
  } else {
    model = EncoderModel::initialized(f.model.config(vocab.size()), run.seed);
  }
  auto result = train_regression(model, vocab, train, val, run);
  StagedDirectory staged(f.out);
  save_checkpoint(result.best_model, staged.path() / "checkpoint", hex64(vocab.hash()),
                  result.history.step_lrs.size(), run.seed);
  write_file_atomic(staged.path() / "history.jsonl", result.history.to_jsonl());
  write_manifest(staged.path() / kRunManifest, c.command, c.options, run.seed, {"checkpoint", "history.jsonl"},
                 {{"best_epoch", result.best_epoch}, {"best_val_mae", result.best_val_mae}});
  staged.commit();
  c.out << "trained " << result.history.epochs.size() << " epochs; best validation MAE "
        << format_real(result.best_val_mae) << " eV at epoch " << result.best_epoch << "\n";
}

void cmd_predict(Context& c) {
  auto& f = c.f;
  auto vocab = Vocabulary::load(f.vocab);
  auto loaded = load_for_vocab(f.checkpoint, vocab);
  for (const auto& w : loaded.warnings) c.err << "warning: " << w << "\n";
  auto samples = load_corpus(f.corpus);
  auto ids = identities(samples, f.systems);
  std::vector<PredictionRecord> records;
  std::size_t unlabeled = 0;
  for (const auto& s : samples) {
    if (!s.energy_ev) {
      ++unlabeled;
      continue;
    }
    auto it = ids.find(s.system_id);
    if (it == ids.end()) throw ValidationError("system '" + s.system_id + "' missing from --systems");
    double pred = predict_energy(loaded.model, encode(s.text, vocab, loaded.model.config().max_positions));
    records.push_back({s.system_id, s.split, it->second.smiles, it->second.bulk, *s.energy_ev, pred});
  }
  if (unlabeled) c.err << "warning: skipped " << unlabeled << " unlabeled samples\n";
  save_predictions(f.out, records);
  write_manifest(manifest_path_for(f.out, false), c.command, c.options, loaded.manifest.seed, {f.out},
                 {{"records", records.size()}});
  c.out << "predicted " << records.size() << " systems\n";
}

void cmd_eval(Context& c) {
  auto records = load_predictions(c.f.pred);
  auto report = evaluation_report(records, !c.f.global_pairs);
  StagedDirectory staged(c.f.out);
  write_file_atomic(staged.path() / "report.json", report.dump(2) + "\n");
  write_file_atomic(staged.path() / "report.txt", report_to_text(report));
  std::vector<std::string> outputs = {"report.json", "report.txt"};
  for (const auto& p : export_parity(staged.path(), records)) outputs.push_back(p.filename().string());
  write_manifest(staged.path() / kRunManifest, c.command, c.options, 0, outputs);
  staged.commit();
  c.out << report_to_text(report);
}

void cmd_pairs(Context& c) {
  auto records = load_predictions(c.f.pred);
  auto report = evaluation_report(records, !c.f.global_pairs);
  StagedDirectory staged(c.f.report);
  write_file_atomic(staged.path() / "pairs_report.json", report.dump(2) + "\n");
  write_file_atomic(staged.path() / "pairs_report.txt", report_to_text(report));
  write_manifest(staged.path() / kRunManifest, c.command, c.options, 0, {"pairs_report.json", "pairs_report.txt"});
  staged.commit();
  for (const auto& s : report.at("pair_scopes"))
    c.out << s.at("scope").get<std::string>() << ": " << s.at("systems").get<std::size_t>() << " systems, "
          << s.at("pairs").get<std::uint64_t>() << " pairs\n";
}

std::vector<std::size_t> parse_layers(const std::string& spec, std::size_t n_layers) {
  std::vector<std::size_t> out;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item == "first") {
      out.push_back(0);
    } else if (item == "last") {
      out.push_back(n_layers - 1);
    } else {
      try {
        std::size_t used = 0;
        auto v = std::stoul(item, &used);
        if (used != item.size() || v >= n_layers) throw std::out_of_range(item);
        out.push_back(v);
      } catch (const std::exception&) {
        throw ValidationError("--layers: '" + item + "' is not first, last or a layer index below " +
                              std::to_string(n_layers));
      }
    }
  }
  if (out.empty()) throw ValidationError("--layers is empty");
  return out;
}

void cmd_attention(Context& c) {
  auto& f = c.f;
  auto vocab = Vocabulary::load(f.vocab);
  auto loaded = load_for_vocab(f.checkpoint, vocab);
  for (const auto& w : loaded.warnings) c.err << "warning: " << w << "\n";
  std::string text = f.text;
  if (text.empty()) {
    if (f.corpus.empty()) throw ValidationError("attention needs --text or --corpus");
    auto samples = load_corpus(f.corpus);
    if (samples.empty()) throw ValidationError("corpus is empty");
    auto it = f.id.empty() ? samples.begin()
                           : std::find_if(samples.begin(), samples.end(),
                                          [&](const auto& s) { return s.system_id == f.id; });
    if (it == samples.end()) throw ValidationError("system '" + f.id + "' not in corpus");
    text = it->text;
  }
  auto layers = parse_layers(f.layers_spec, loaded.model.config().n_layers);
  auto profiles = attention_profiles(loaded.model, vocab, text, layers,
                                     f.merge == "mean" ? WordMerge::mean : WordMerge::sum);
  export_heatmap(f.out, profiles);
  write_manifest(manifest_path_for(f.out, false), c.command, c.options, loaded.manifest.seed, {f.out});
  c.out << "attention heatmap: " << profiles.size() << " layers, " << profiles.front().words.size() << " words\n";
}

void cmd_embeddings(Context& c) {
  auto& f = c.f;
  auto vocab = Vocabulary::load(f.vocab);
  auto loaded = load_for_vocab(f.checkpoint, vocab);
  for (const auto& w : loaded.warnings) c.err << "warning: " << w << "\n";
  auto samples = load_corpus(f.corpus);
  auto ids = identities(samples, f.systems);
  std::vector<EmbeddingSource> sources;
  for (const auto& s : samples) {
    auto it = ids.find(s.system_id);
    if (it == ids.end()) throw ValidationError("system '" + s.system_id + "' missing from --systems");
    sources.push_back({s.system_id, s.split, it->second.smiles, it->second.bulk, s.text});
  }
  auto rows = compute_embeddings(loaded.model, vocab, sources, f.threads);
  export_embeddings(f.out, rows);
  write_manifest(manifest_path_for(f.out, false), c.command, c.options, loaded.manifest.seed, {f.out});
  c.out << "embeddings: " << rows.size() << " rows x " << loaded.model.config().hidden_size << "\n";
}

void cmd_synth(Context& c) {
  SyntheticOptions o;
  o.n_systems = c.f.n_systems;
  o.seed = c.f.train.seed;
  o.noise_sd = c.f.noise;
  o.validation_fraction = c.f.val_fraction;
  o.ood_splits = c.f.ood;
  auto systems = generate_synthetic(o);
  save_dataset(c.f.out, systems);
  write_manifest(manifest_path_for(c.f.out, false), c.command, c.options, o.seed, {c.f.out});
  c.out << "generated " << systems.size() << " systems\n";
}

void cmd_smoke(Context& c) {
  SmokeOptions o;
  o.fixture = c.f.fixture.empty() ? bundled_fixture() : fs::path(c.f.fixture);
  o.out_dir = c.f.out;
  o.seed = c.f.train.seed;
  auto report = end_to_end_smoke(o);
  for (const auto& a : report.artifacts) c.out << "  " << a.string() << "\n";
  c.out << "smoke run finished " << report.stages.size() << " stages in " << format_one_decimal(report.seconds)
        << " s\n";
}

void print_diagnostic(std::ostream& err, const std::string& command, const std::string& kind,
                      const std::string& message) {
  json d = {{"status", "error"}, {"command", command}, {"kind", kind}, {"message", message}};
  err << d.dump() << "\n";
}

}  // namespace

int run(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
  Flags f;
  CLI::App app{"adsorbtext: text-based adsorption energy regression toolkit", "adsorbtext"};
  app.set_version_flag("--version", ADSORBTEXT_VERSION);
  app.require_subcommand(1);

  auto existing = CLI::ExistingFile;
  auto existing_path = CLI::ExistingPath;

  auto* featurize = app.add_subcommand("featurize", "serialize systems into a text corpus");
  featurize->add_option("--in", f.in, "systems JSONL")->required()->check(existing);
  featurize->add_option("--out", f.out, "corpus JSONL")->required();
  featurize->add_option("--format", f.format, "s1..s5 or desc")->capture_default_str();
  featurize->add_option("--descriptions", f.descriptions, "description cache JSON (desc only)")->check(existing);
  featurize->add_option("--tolerance", f.tolerance, "contact cutoff tolerance in angstrom")->capture_default_str();
  featurize->add_option("--threads", f.threads, "worker cap");

  auto* build_vocab = app.add_subcommand("build-vocab", "build a vocabulary from a corpus");
  build_vocab->add_option("--corpus", f.corpus, "corpus JSONL")->required()->check(existing);
  build_vocab->add_option("--out", f.out, "vocabulary file")->required();
  build_vocab->add_option("--min-freq", f.min_freq, "minimum token frequency")->capture_default_str();

  auto* pretrain = app.add_subcommand("pretrain", "masked-language-model pretraining");
  pretrain->add_option("--corpus", f.corpus, "corpus JSONL")->required()->check(existing);
  pretrain->add_option("--vocab", f.vocab, "vocabulary file")->required()->check(existing);
  pretrain->add_option("--out", f.out, "output directory")->required();
  pretrain->add_option("--mask-rate", f.train.mask_rate, "masking probability")->capture_default_str();
  pretrain->add_flag("--untied", f.untied, "separate vocabulary projection");
  add_model_flags(pretrain, f.model);
  add_train_flags(pretrain, f.train);

  auto* train = app.add_subcommand("train", "energy regression finetuning");
  train->add_option("--corpus", f.corpus, "labeled corpus JSONL")->required()->check(existing);
  train->add_option("--val-corpus", f.val_corpus, "validation corpus (default: non-train splits)")->check(existing);
  train->add_option("--vocab", f.vocab, "vocabulary file")->required()->check(existing);
  train->add_option("--init", f.init, "pretrained checkpoint or run directory")->check(existing_path);
  train->add_option("--out", f.out, "output directory")->required();
  add_model_flags(train, f.model);
  add_train_flags(train, f.train);

  auto* predict = app.add_subcommand("predict", "predict energies for a corpus");
  predict->add_option("--checkpoint", f.checkpoint, "checkpoint or run directory")->required()->check(existing_path);
  predict->add_option("--vocab", f.vocab, "vocabulary file")->required()->check(existing);
  predict->add_option("--corpus", f.corpus, "corpus JSONL")->required()->check(existing);
  predict->add_option("--systems", f.systems, "systems JSONL for adsorbate/bulk metadata")->check(existing);
  predict->add_option("--out", f.out, "predictions table")->required();

  auto* eval = app.add_subcommand("eval", "split MAE, parity data and pair statistics");
  eval->add_option("--pred", f.pred, "predictions table")->required()->check(existing);
  eval->add_option("--out", f.out, "report directory")->required();
  eval->add_flag("--global-pairs", f.global_pairs, "pair across splits instead of within");

  auto* pairs = app.add_subcommand("pairs", "energy-difference pair statistics and SECR");
  pairs->add_option("--pred", f.pred, "predictions table")->required()->check(existing);
  pairs->add_option("--report", f.report, "report directory")->required();
  pairs->add_flag("--global", f.global_pairs, "pair across splits instead of within");

  auto* attention = app.add_subcommand("attention", "per-word attention heatmap data");
  attention->add_option("--checkpoint", f.checkpoint, "checkpoint or run directory")->required()->check(existing_path);
  attention->add_option("--vocab", f.vocab, "vocabulary file")->required()->check(existing);
  attention->add_option("--text", f.text, "text to analyse");
  attention->add_option("--corpus", f.corpus, "corpus JSONL")->check(existing);
  attention->add_option("--id", f.id, "system id within --corpus (default: first)");
  attention->add_option("--layers", f.layers_spec, "comma list of first, last or indices")->capture_default_str();
  attention->add_option("--merge", f.merge, "per-word merge")->check(CLI::IsMember({"sum", "mean"}))->capture_default_str();
  attention->add_option("--out", f.out, "heatmap JSONL")->required();

  auto* embeddings = app.add_subcommand("embeddings", "first-token embedding table");
  embeddings->add_option("--checkpoint", f.checkpoint, "checkpoint or run directory")->required()->check(existing_path);
  embeddings->add_option("--vocab", f.vocab, "vocabulary file")->required()->check(existing);
  embeddings->add_option("--corpus", f.corpus, "corpus JSONL")->required()->check(existing);
  embeddings->add_option("--systems", f.systems, "systems JSONL for metadata")->check(existing);
  embeddings->add_option("--out", f.out, "embedding table")->required();
  embeddings->add_option("--threads", f.threads, "worker cap");

  auto* synth = app.add_subcommand("synth", "generate a synthetic labeled dataset");
  synth->add_option("--n", f.n_systems, "number of systems")->capture_default_str();
  synth->add_option("--seed", f.train.seed, "random seed")->capture_default_str();
  synth->add_option("--noise", f.noise, "label noise sd in eV")->capture_default_str();
  synth->add_option("--val-fraction", f.val_fraction, "in-domain validation fraction")->capture_default_str();
  synth->add_flag("--ood", f.ood, "populate the out-of-domain splits");
  synth->add_option("--out", f.out, "systems JSONL")->required();

  auto* smoke = app.add_subcommand("smoke", "run the whole pipeline on the bundled fixture");
  smoke->add_option("--fixture", f.fixture, "systems JSONL")->check(existing);
  smoke->add_option("--out", f.out, "output directory")->required();
  smoke->add_option("--seed", f.train.seed, "random seed")->capture_default_str();

  for (auto* sub : app.get_subcommands([](const CLI::App*) { return true; }))
    for (auto* opt : sub->get_options([](const CLI::Option* o) { return o->get_expected_max() == 1; }))
      opt->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

  std::string command = "adsorbtext";
  try {
    if (raw_args.empty()) {
      out << app.help();
      return kExitUserError;
    }
    auto args = expand_config(raw_args);
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
      app.parse(reversed);
    } catch (const CLI::ParseError& e) {
      int code = app.exit(e, out, err);
      return code == 0 ? kExitOk : kExitUserError;
    }
    CLI::App* selected = app.get_subcommands().front();
    command = selected->get_name();
    f.train.seed = apply_seed_env(f.train.seed, err);
    if (f.threads == 0) throw ValidationError("--threads must be positive");
    Context ctx{out, err, f, effective_options(selected), command};
    ctx.options["seed"] = std::to_string(f.train.seed);
    if (command == "featurize") cmd_featurize(ctx);
    else if (command == "build-vocab") cmd_build_vocab(ctx);
    else if (command == "pretrain") cmd_pretrain(ctx);
    else if (command == "train") cmd_train(ctx);
    else if (command == "predict") cmd_predict(ctx);
    else if (command == "eval") cmd_eval(ctx);
    else if (command == "pairs") cmd_pairs(ctx);
    else if (command == "attention") cmd_attention(ctx);
    else if (command == "embeddings") cmd_embeddings(ctx);
    else if (command == "synth") cmd_synth(ctx);
    else if (command == "smoke") cmd_smoke(ctx);
    return kExitOk;
  } catch (const StageError& e) {
    print_diagnostic(err, command, "stage:" + e.stage(), e.what());
    return kExitUserError;
  } catch (const ParseError& e) {
    print_diagnostic(err, command, "parse", e.what());
    return kExitUserError;
  } catch (const CheckpointError& e) {
    print_diagnostic(err, command, "checkpoint", e.what());
    return kExitUserError;
  } catch (const ValidationError& e) {
    print_diagnostic(err, command, "validation", e.what());
    return kExitUserError;
  } catch (const IoError& e) {
    print_diagnostic(err, command, "io", e.what());
    return kExitUserError;
  } catch (const Error& e) {
    print_diagnostic(err, command, "input", e.what());
    return kExitUserError;
  } catch (const std::exception& e) {
    print_diagnostic(err, command, "internal", e.what());
    return kExitInternalError;
  }
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

fs::path bundled_fixture() { return fs::path(ADSORBTEXT_DATA_DIR) / "fixtures" / "synthetic_small.jsonl"; }

const std::vector<std::string>& smoke_artifacts() {
  static const std::vector<std::string> names = {
      "corpus.jsonl",         "vocab.txt",       "pretrain/checkpoint/params.bin",
      "train/checkpoint/params.bin", "train/history.jsonl", "predictions.tsv",
      "eval/report.json",     "eval/parity_summary.tsv", "heatmap.jsonl"};
  return names;
}

SmokeReport end_to_end_smoke(const SmokeOptions& o) {
  const auto start = std::chrono::steady_clock::now();
  if (o.out_dir.empty()) throw ValidationError("smoke: output directory required");
  if (!fs::exists(o.fixture)) throw IoError("smoke: fixture not found: " + o.fixture.string());
  fs::create_directories(o.out_dir);
  auto p = [&](const std::string& rel) { return (o.out_dir / rel).string(); };
  const std::string seed = std::to_string(o.seed);
  std::vector<std::string> model = {"--layers", std::to_string(o.layers), "--heads", std::to_string(o.heads),
                                    "--hidden", std::to_string(o.hidden), "--ffn",   std::to_string(o.ffn),
                                    "--batch-size", std::to_string(o.batch_size), "--lr", format_real(o.lr),
                                    "--seed", seed};
  auto with = [](std::vector<std::string> a, const std::vector<std::string>& b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
  };
  std::vector<std::pair<std::string, std::vector<std::string>>> stages = {
      {"featurize", {"featurize", "--in", o.fixture.string(), "--out", p("corpus.jsonl"), "--format", "s4",
                     "--threads", "1"}},
      {"build-vocab", {"build-vocab", "--corpus", p("corpus.jsonl"), "--out", p("vocab.txt")}},
      {"pretrain", with({"pretrain", "--corpus", p("corpus.jsonl"), "--vocab", p("vocab.txt"), "--out", p("pretrain"),
                         "--epochs", std::to_string(o.pretrain_epochs)},
                        model)},
      {"train", with({"train", "--corpus", p("corpus.jsonl"), "--vocab", p("vocab.txt"), "--init", p("pretrain"),
                      "--out", p("train"), "--epochs", std::to_string(o.train_epochs)},
                     model)},
      {"predict", {"predict", "--checkpoint", p("train"), "--vocab", p("vocab.txt"), "--corpus", p("corpus.jsonl"),
                   "--out", p("predictions.tsv")}},
      {"eval", {"eval", "--pred", p("predictions.tsv"), "--out", p("eval")}},
      {"attention", {"attention", "--checkpoint", p("train"), "--vocab", p("vocab.txt"), "--corpus",
                     p("corpus.jsonl"), "--layers", "first,last", "--out", p("heatmap.jsonl")}},
  };
  SmokeReport report;
  for (const auto& [stage, args] : stages) {
    std::ostringstream out, err;
    int code = run(args, out, err);
    if (code != kExitOk) throw StageError(stage, "exit code " + std::to_string(code) + ": " + err.str());
    report.stages.push_back(stage);
    if (o.after_stage) o.after_stage(stage, o.out_dir);
  }
  for (const auto& rel : smoke_artifacts()) {
    auto path = o.out_dir / rel;
    if (!fs::exists(path)) throw StageError("inventory", "missing artifact " + path.string());
    report.artifacts.push_back(path);
  }
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

}  // namespace adsorbtext::cli
