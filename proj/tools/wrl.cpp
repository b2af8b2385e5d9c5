// Command-line front end: corpus generation, training, evaluation, spotting,
// densification, cross-dictionary retrieval, and bag debugging.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "wrl/bags.hpp"
#include "wrl/bags_oracle.hpp"
#include "wrl/corpus.hpp"
#include "wrl/error.hpp"
#include "wrl/metrics.hpp"
#include "wrl/model.hpp"
#include "wrl/sampler.hpp"
#include "wrl/spotting.hpp"
#include "wrl/synth.hpp"
#include "wrl/training.hpp"

namespace fs = std::filesystem;
using Real = float;  // training/eval compute precision

namespace {

struct CommonData {
  std::string data_dir;
  std::string manifest = "test_manifest.json";
  std::string split_file;       // default <data>/split.json when present
  int train_count = -1;         // alternative: derive the split
  std::uint64_t split_seed = 0;
};

wrl::Corpus load_data(const CommonData& opt) {
  wrl::Corpus corpus = wrl::load_manifest(fs::path(opt.data_dir) / opt.manifest);
  if (opt.train_count >= 0) {
    corpus = wrl::split_vocabulary(std::move(corpus), opt.train_count, opt.split_seed);
  } else {
    const fs::path split = opt.split_file.empty() ? fs::path(opt.data_dir) / "split.json"
                                                  : fs::path(opt.split_file);
    if (fs::exists(split)) corpus = wrl::load_split(std::move(corpus), split);
  }
  return corpus;
}

void add_common(CLI::App* cmd, CommonData& opt, const std::string& default_manifest) {
  opt.manifest = default_manifest;
  cmd->add_option("--data", opt.data_dir, "Corpus directory")->required();
  cmd->add_option("--manifest", opt.manifest, "Manifest file name inside --data");
  cmd->add_option("--split-file", opt.split_file, "Seen/unseen split sidecar (JSON)");
  cmd->add_option("--train-count", opt.train_count,
                  "Derive the split: number of seen-train words (with --split-seed)");
  cmd->add_option("--split-seed", opt.split_seed, "Seed for --train-count splitting");
}

wrl::SynonymTable load_synonyms(const std::string& path, const wrl::Vocabulary& vocab) {
  wrl::SynonymTable table(vocab.size());
  if (path.empty()) return table;
  std::ifstream is(path);
  if (!is) throw wrl::DataError("synonyms: cannot open: " + path);
  nlohmann::json doc;
  is >> doc;
  for (const auto& group : doc.at("groups")) {
    std::vector<wrl::WordId> ids;
    for (const auto& w : group) {
      const auto id = vocab.lookup(w.get<std::string>());
      if (!id) throw wrl::DataError("synonyms: word '" + w.get<std::string>() + "' not in vocabulary");
      ids.push_back(*id);
    }
    table.add_group(ids);
  }
  return table;
}

void echo_config(const nlohmann::json& cfg) { std::cerr << "config " << cfg.dump() << "\n"; }

const std::map<std::string, wrl::TrainMode> kModeNames{
    {"watch-lookup", wrl::TrainMode::kWatchLookup},
    {"watch-read-lookup", wrl::TrainMode::kWatchReadLookup},
    {"infonce", wrl::TrainMode::kInfoNce},
    {"classification", wrl::TrainMode::kClassification}};
const std::map<std::string, wrl::DictVocab> kDictVocabNames{
    {"training-vocab", wrl::DictVocab::kTrainingVocab}, {"full-vocab", wrl::DictVocab::kFullVocab}};
const std::map<std::string, wrl::SynonymPolicy> kSynonymNames{
    {"keep-all", wrl::SynonymPolicy::kKeepAll}, {"discard", wrl::SynonymPolicy::kDiscard}};

int run_app(int argc, char** argv) {
  CLI::App app{"wrl: sign spotting embeddings from sparse labels, subtitles and dictionaries"};
  app.require_subcommand(1);
  app.set_config("--config", "", "Flat key = value config file; flags override it");
  int threads = 1;
  app.add_option("--threads", threads, "Worker thread cap (processing is currently sequential)");

  // ---- gen ----
  auto* gen = app.add_subcommand("gen", "Generate a synthetic corpus with planted ground truth");
  wrl::SynthConfig synth;
  std::string gen_out;
  gen->add_option("--out", gen_out, "Output directory")->required();
  gen->add_option("--seed", synth.seed, "Root seed");
  gen->add_option("--vocab", synth.vocab_size, "Vocabulary size");
  gen->add_option("--sequences", synth.num_sequences, "Total continuous sequences");
  gen->add_option("--windows-min", synth.seq_windows_min, "Min windows per sequence");
  gen->add_option("--windows-max", synth.seq_windows_max, "Max windows per sequence");
  gen->add_option("--variants-min", synth.variants_min, "Min dictionary variants per word");
  gen->add_option("--variants-max", synth.variants_max, "Max dictionary variants per word");
  gen->add_option("--subtitle-words", synth.subtitle_words_per_seq, "Planted words per sequence");
  gen->add_option("--smear-min", synth.smear_min, "Min planted sign duration (windows)");
  gen->add_option("--smear-max", synth.smear_max, "Max planted sign duration (windows)");
  gen->add_option("--unseen-fraction", synth.unseen_fraction, "Fraction of words tagged unseen-test");
  gen->add_option("--test-fraction", synth.test_fraction, "Fraction of sequences in the test split");
  gen->add_option("--map-rank", synth.map_rank, "Rank of the domain-gap maps");
  gen->add_option("--map-scale", synth.map_scale, "Scale of the domain-gap maps (0 = identity)");
  gen->add_option("--noise-sigma", synth.noise_sigma, "Additive noise level");
  gen->add_option("--variant-spread", synth.variant_spread, "Distance between variant prototypes");

  // ---- train ----
  auto* train_cmd = app.add_subcommand("train", "Train the embedding MLP");
  CommonData train_data;
  add_common(train_cmd, train_data, "train_manifest.json");
  wrl::TrainConfig tc;
  std::string train_out, train_log, train_mode = "watch-read-lookup";
  std::string dict_vocab = "training-vocab", synonym_policy = "keep-all", synonyms_path;
  double confidence_threshold = 0.5;
  bool no_class_balanced = false, no_fg_negative = false;
  train_cmd->add_option("--out", train_out, "Model output path (WRLM)")->required();
  train_cmd->add_option("--log", train_log, "Per-epoch CSV log path (default <out>.log.csv)");
  train_cmd->add_option("--mode", train_mode, "Loss mode")
      ->check(CLI::IsMember({"watch-lookup", "watch-read-lookup", "infonce", "classification"}));
  train_cmd->add_option("--tau", tc.tau, "Temperature");
  train_cmd->add_option("--batch-size", tc.batch_size, "Sequences per minibatch");
  train_cmd->add_option("--epochs", tc.epochs, "Training epochs");
  train_cmd->add_option("--lr", tc.lr, "Initial learning rate");
  train_cmd->add_option("--lr-decay-epochs", tc.lr_decay_epochs, "Epochs after which lr decays");
  train_cmd->add_option("--lr-decay-factor", tc.lr_decay_factor, "Decay divisor");
  train_cmd->add_option("--momentum", tc.momentum, "SGD momentum");
  train_cmd->add_flag("--no-class-balanced", no_class_balanced, "Allow repeated words per batch");
  train_cmd->add_option("--dict-vocab", dict_vocab, "Background dictionary vocabulary")
      ->check(CLI::IsMember({"training-vocab", "full-vocab"}));
  train_cmd->add_option("--synonym-policy", synonym_policy, "Negative handling for synonyms")
      ->check(CLI::IsMember({"keep-all", "discard"}));
  train_cmd->add_option("--synonyms", synonyms_path, "Synonym groups JSON");
  train_cmd->add_flag("--no-fg-negative", no_fg_negative,
                      "Discard (rather than negate) the labelled word for background anchors");
  train_cmd->add_flag("--lumped", tc.lumped_bags, "Literal-formula bag shapes");
  train_cmd->add_option("--seed", tc.seed, "Root seed");
  train_cmd->add_option("--confidence-threshold", confidence_threshold,
                        "Drop annotations below this mouthing confidence");

  // ---- eval ----
  auto* eval_cmd = app.add_subcommand("eval", "Rank-based retrieval evaluation");
  CommonData eval_data;
  add_common(eval_cmd, eval_data, "test_manifest.json");
  std::string eval_model, eval_split = "unseen", eval_csv, eval_out;
  int eval_k = 5, eval_stride = 1;
  eval_cmd->add_option("--model", eval_model, "Model path")->required();
  eval_cmd->add_option("--split", eval_split, "Class filter")
      ->check(CLI::IsMember({"seen", "unseen", "all"}));
  eval_cmd->add_option("--k", eval_k, "Recall cutoff");
  eval_cmd->add_option("--stride", eval_stride, "Sliding-window stride");
  eval_cmd->add_option("--csv", eval_csv, "Append a percentage summary row to this CSV");
  eval_cmd->add_option("--out", eval_out, "Write the JSON report here instead of stdout");

  // ---- spot ----
  auto* spot_cmd = app.add_subcommand("spot", "Locate one word in one sequence");
  CommonData spot_data;
  add_common(spot_cmd, spot_data, "test_manifest.json");
  std::string spot_model, spot_seq, spot_word, spot_trace;
  int spot_stride = 1;
  spot_cmd->add_option("--model", spot_model, "Model path")->required();
  spot_cmd->add_option("--seq", spot_seq, "Sequence id")->required();
  spot_cmd->add_option("--word", spot_word, "Query word")->required();
  spot_cmd->add_option("--stride", spot_stride, "Sliding-window stride");
  spot_cmd->add_option("--trace", spot_trace, "Write the per-window similarity trace CSV here");

  // ---- densify ----
  auto* dens_cmd = app.add_subcommand("densify", "Spot every subtitle word of a sequence");
  CommonData dens_data;
  add_common(dens_cmd, dens_data, "test_manifest.json");
  std::string dens_model, dens_seq;
  int dens_stride = 1;
  dens_cmd->add_option("--model", dens_model, "Model path")->required();
  dens_cmd->add_option("--seq", dens_seq, "Sequence id")->required();
  dens_cmd->add_option("--stride", dens_stride, "Sliding-window stride");

  // ---- fauxamis ----
  auto* faux_cmd = app.add_subcommand("fauxamis", "Cross-dictionary nearest neighbors");
  CommonData faux_data;
  add_common(faux_cmd, faux_data, "test_manifest.json");
  std::string faux_model, faux_dict_b, faux_out;
  int faux_k = 5;
  faux_cmd->add_option("--model", faux_model, "Model path")->required();
  faux_cmd->add_option("--dict-b", faux_dict_b, "Manifest of the second dictionary")->required();
  faux_cmd->add_option("--k", faux_k, "Neighbors per entry");
  faux_cmd->add_option("--out", faux_out, "Write the CSV here instead of stdout");

  // ---- bags-dump ----
  auto* bags_cmd = app.add_subcommand("bags-dump", "Dump the anchored bags of one minibatch");
  CommonData bags_data;
  add_common(bags_cmd, bags_data, "train_manifest.json");
  std::string bags_mode = "watch-read-lookup", bags_dict_vocab = "training-vocab";
  std::string bags_synonym_policy = "keep-all", bags_synonyms_path;
  int bags_batch = 2;
  std::uint64_t bags_seed = 0;
  bool bags_no_balanced = false, bags_no_fg_negative = false, bags_lumped = false, bags_oracle = false;
  bags_cmd->add_option("--mode", bags_mode, "Bag mode")
      ->check(CLI::IsMember({"watch-lookup", "watch-read-lookup", "infonce"}));
  bags_cmd->add_option("--batch-size", bags_batch, "Items in the dumped batch");
  bags_cmd->add_option("--seed", bags_seed, "Sampling seed");
  bags_cmd->add_option("--dict-vocab", bags_dict_vocab, "Background dictionary vocabulary")
      ->check(CLI::IsMember({"training-vocab", "full-vocab"}));
  bags_cmd->add_option("--synonym-policy", bags_synonym_policy, "Negative handling for synonyms")
      ->check(CLI::IsMember({"keep-all", "discard"}));
  bags_cmd->add_option("--synonyms", bags_synonyms_path, "Synonym groups JSON");
  bags_cmd->add_flag("--no-class-balanced", bags_no_balanced, "Allow repeated words per batch");
  bags_cmd->add_flag("--no-fg-negative", bags_no_fg_negative, "Formula behavior for background anchors");
  bags_cmd->add_flag("--lumped", bags_lumped, "Literal-formula bag shapes");
  bags_cmd->add_flag("--oracle", bags_oracle, "Use the brute-force oracle (batch <= 6)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  if (gen->parsed()) {
    echo_config({{"command", "gen"}, {"out", gen_out}, {"seed", synth.seed},
                 {"vocab", synth.vocab_size}, {"sequences", synth.num_sequences},
                 {"unseen_fraction", synth.unseen_fraction}, {"test_fraction", synth.test_fraction},
                 {"map_rank", synth.map_rank}, {"map_scale", synth.map_scale},
                 {"noise_sigma", synth.noise_sigma}, {"variant_spread", synth.variant_spread}});
    const auto out = wrl::generate(synth, gen_out);
    std::cout << nlohmann::json{{"train_manifest", out.train_manifest.string()},
                                {"test_manifest", out.test_manifest.string()},
                                {"ground_truth", out.ground_truth.string()},
                                {"split_file", out.split_file.string()},
                                {"train_sequences", out.train_sequences},
                                {"test_sequences", out.test_sequences}}
                     .dump(2)
              << "\n";
    return 0;
  }

  if (train_cmd->parsed()) {
    tc.mode = kModeNames.at(train_mode);
    tc.dict_vocab = kDictVocabNames.at(dict_vocab);
    tc.synonym_policy = kSynonymNames.at(synonym_policy);
    tc.class_balanced = !no_class_balanced;
    tc.fg_negative_for_background = !no_fg_negative;
    tc.validate();
    if (confidence_threshold < 0.5 || confidence_threshold > 1.0)
      throw wrl::ConfigError("config: confidence threshold outside [0.5, 1.0]");
    echo_config({{"command", "train"}, {"data", train_data.data_dir}, {"manifest", train_data.manifest},
                 {"out", train_out}, {"mode", train_mode}, {"tau", tc.tau},
                 {"batch_size", tc.batch_size}, {"epochs", tc.epochs}, {"lr", tc.lr},
                 {"lr_decay_epochs", tc.lr_decay_epochs}, {"lr_decay_factor", tc.lr_decay_factor},
                 {"momentum", tc.momentum}, {"class_balanced", tc.class_balanced},
                 {"dict_vocab", dict_vocab}, {"synonym_policy", synonym_policy},
                 {"fg_negative_for_background", tc.fg_negative_for_background},
                 {"lumped", tc.lumped_bags}, {"seed", tc.seed},
                 {"confidence_threshold", confidence_threshold}});

    wrl::Corpus corpus = load_data(train_data);
    corpus = wrl::filter_by_confidence(std::move(corpus), confidence_threshold);
    corpus = wrl::demote_unseen_annotations(std::move(corpus));
    wrl::SynonymTable synonyms = load_synonyms(synonyms_path, corpus.vocabulary);
    tc.synonyms = &synonyms;

    const fs::path out_path(train_out);
    auto checkpoint = [&](int epoch, const wrl::MlpParams<Real>& params) {
      if (epoch == tc.epochs) {
        wrl::save_model(params, out_path);
      } else {
        fs::path p = out_path;
        p += ".ep" + std::to_string(epoch);
        wrl::save_model(params, p);
      }
    };
    const auto result = wrl::train<Real>(corpus, tc, checkpoint);

    const fs::path log_path = train_log.empty() ? fs::path(train_out + ".log.csv") : fs::path(train_log);
    std::ofstream log(log_path);
    if (!log) throw wrl::DataError("train: cannot write log: " + log_path.string());
    log << "epoch,mean_loss,lr\n";
    for (const auto& e : result.log) log << e.epoch << "," << e.mean_loss << "," << e.lr << "\n";

    std::cout << nlohmann::json{{"model", train_out},
                                {"log", log_path.string()},
                                {"epochs", tc.epochs},
                                {"first_epoch_loss", result.log.front().mean_loss},
                                {"final_epoch_loss", result.log.back().mean_loss},
                                {"steps", result.stats.steps},
                                {"anchors", result.stats.bags.anchors_emitted}}
                     .dump(2)
              << "\n";
    return 0;
  }

  if (eval_cmd->parsed()) {
    echo_config({{"command", "eval"}, {"data", eval_data.data_dir}, {"manifest", eval_data.manifest},
                 {"model", eval_model}, {"split", eval_split}, {"k", eval_k}, {"stride", eval_stride}});
    const wrl::Corpus corpus = load_data(eval_data);
    const auto params = wrl::load_model<Real>(eval_model);
    const wrl::Evaluator<Real> evaluator(corpus, params, eval_stride);
    std::optional<wrl::SplitTag> filter;
    if (eval_split == "seen") filter = wrl::SplitTag::kSeenTrain;
    if (eval_split == "unseen") filter = wrl::SplitTag::kUnseenTest;
    const wrl::EvalReport report = evaluator.evaluate(filter, eval_k, eval_split);
    const std::string json = report.to_json().dump(2);
    if (eval_out.empty()) {
      std::cout << json << "\n";
    } else {
      std::ofstream os(eval_out);
      if (!os) throw wrl::DataError("eval: cannot write: " + eval_out);
      os << json << "\n";
    }
    if (!eval_csv.empty()) {
      const bool fresh = !fs::exists(eval_csv);
      std::ofstream csv(eval_csv, std::ios::app);
      if (!csv) throw wrl::DataError("eval: cannot write: " + eval_csv);
      if (fresh) wrl::EvalReport::write_csv_header(csv);
      report.write_csv_row(csv);
    }
    return 0;
  }

  if (spot_cmd->parsed()) {
    echo_config({{"command", "spot"}, {"data", spot_data.data_dir}, {"seq", spot_seq},
                 {"word", spot_word}, {"stride", spot_stride}});
    const wrl::Corpus corpus = load_data(spot_data);
    const auto params = wrl::load_model<Real>(spot_model);
    const auto word = corpus.vocabulary.lookup(spot_word);
    if (!word) throw wrl::DataError("spot: word '" + spot_word + "' not in vocabulary");
    const auto* entry = corpus.dict_entry(*word);
    if (!entry) throw wrl::DataError("spot: word '" + spot_word + "' has no dictionary entry");
    const wrl::ContinuousSequence* seq = nullptr;
    for (const auto& s : corpus.continuous)
      if (s.id == spot_seq) seq = &s;
    if (!seq) throw wrl::DataError("spot: sequence '" + spot_seq + "' not found");
    const auto seq_emb = wrl::embed_sequence(params, *seq, spot_stride);
    const auto result = wrl::spot(seq_emb, wrl::embed_dictionary_entry(params, *entry), *word);
    if (!spot_trace.empty()) {
      std::ofstream os(spot_trace);
      if (!os) throw wrl::DataError("spot: cannot write trace: " + spot_trace);
      wrl::write_trace_csv(os, result);
    }
    std::cout << nlohmann::json{{"seq", spot_seq},
                                {"word", spot_word},
                                {"best_frame", result.best_frame},
                                {"best_variant", result.best_variant},
                                {"score", result.score}}
                     .dump(2)
              << "\n";
    return 0;
  }

  if (dens_cmd->parsed()) {
    echo_config({{"command", "densify"}, {"data", dens_data.data_dir}, {"seq", dens_seq},
                 {"stride", dens_stride}});
    const wrl::Corpus corpus = load_data(dens_data);
    const auto params = wrl::load_model<Real>(dens_model);
    const wrl::ContinuousSequence* seq = nullptr;
    for (const auto& s : corpus.continuous)
      if (s.id == dens_seq) seq = &s;
    if (!seq) throw wrl::DataError("densify: sequence '" + dens_seq + "' not found");
    int skipped = 0;
    const auto results = wrl::densify(params, corpus, *seq, dens_stride, &skipped);
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& r : results)
      arr.push_back({{"word", corpus.vocabulary.word(r.word)},
                     {"best_frame", r.best_frame},
                     {"best_variant", r.best_variant},
                     {"score", r.score}});
    std::cout << nlohmann::json{{"seq", dens_seq}, {"results", arr}, {"skipped_words", skipped}}.dump(2)
              << "\n";
    return 0;
  }

  if (faux_cmd->parsed()) {
    echo_config({{"command", "fauxamis"}, {"data", faux_data.data_dir}, {"dict_b", faux_dict_b},
                 {"k", faux_k}});
    const wrl::Corpus dict_a = load_data(faux_data);
    const wrl::Corpus dict_b = wrl::load_manifest(faux_dict_b);
    const auto params = wrl::load_model<Real>(faux_model);
    const auto hits = wrl::cross_dictionary_neighbors(dict_a, dict_b, params, faux_k);
    std::ostream* os = &std::cout;
    std::ofstream file;
    if (!faux_out.empty()) {
      file.open(faux_out);
      if (!file) throw wrl::DataError("fauxamis: cannot write: " + faux_out);
      os = &file;
    }
    *os << "word_a,word_b,score\n";
    for (const auto& h : hits)
      *os << dict_a.vocabulary.word(h.word_a) << "," << dict_b.vocabulary.word(h.word_b) << ","
          << h.score << "\n";
    return 0;
  }

  if (bags_cmd->parsed()) {
    echo_config({{"command", "bags-dump"}, {"data", bags_data.data_dir}, {"mode", bags_mode},
                 {"batch_size", bags_batch}, {"seed", bags_seed}, {"oracle", bags_oracle}});
    wrl::Corpus corpus = load_data(bags_data);
    corpus = wrl::demote_unseen_annotations(std::move(corpus));
    wrl::SynonymTable synonyms = load_synonyms(bags_synonyms_path, corpus.vocabulary);
    wrl::BagConfig bag_config;
    bag_config.fg_negative_for_background = !bags_no_fg_negative;
    bag_config.lumped = bags_lumped;
    bag_config.synonym_policy = kSynonymNames.at(bags_synonym_policy);
    bag_config.synonyms = &synonyms;
    const wrl::TrainMode mode = kModeNames.at(bags_mode);
    wrl::Rng rng = wrl::Rng(bags_seed).derive("bags-dump");
    const auto batch = wrl::build_minibatch(corpus, bags_batch, mode, !bags_no_balanced,
                                            kDictVocabNames.at(bags_dict_vocab), rng);
    const auto bags = bags_oracle ? wrl::oracle::oracle_bags(batch, mode, bag_config)
                                  : wrl::build_bags(batch, bag_config, nullptr, &rng);
    wrl::dump_bags(std::cout, bags, corpus.vocabulary);
    return 0;
  }

  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run_app(argc, argv);
  } catch (const wrl::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const wrl::DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
