#include <catch2/catch_amalgamated.hpp>

#include <fstream>
#include <set>

#include "support/tmpdir.hpp"
#include "wrl/sampler.hpp"
#include "wrl/spotting.hpp"
#include "wrl/synth.hpp"

using namespace wrl;

namespace {

SynthConfig small_config() {
  SynthConfig cfg;
  cfg.vocab_size = 12;
  cfg.num_sequences = 50;
  cfg.seq_windows_min = 120;
  cfg.seq_windows_max = 150;
  cfg.subtitle_words_per_seq = 3;
  cfg.unseen_fraction = 0.25;
  cfg.test_fraction = 0.3;
  cfg.seed = 17;
  return cfg;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("generated corpus loads and satisfies the invariants") {
  test_support::TmpDir tmp;
  const auto out = generate(small_config(), tmp.path());
  REQUIRE(out.train_sequences + out.test_sequences == 50);

  Corpus train = load_manifest(out.train_manifest);
  train = load_split(std::move(train), out.split_file);
  Corpus test = load_manifest(out.test_manifest);
  test = load_split(std::move(test), out.split_file);

  REQUIRE(train.vocabulary.size() == 12);
  REQUIRE(train.continuous.size() == static_cast<std::size_t>(out.train_sequences));
  REQUIRE(test.continuous.size() == static_cast<std::size_t>(out.test_sequences));
  REQUIRE(train.dictionary.size() == 12);  // full-vocabulary dictionary

  int unseen_words = 0;
  for (WordId w = 0; w < train.vocabulary.size(); ++w)
    unseen_words += train.is_seen(w) ? 0 : 1;
  REQUIRE(unseen_words == 3);  // round(12 * 0.25)

  // training annotations only use seen words; test annotations reach unseen ones
  std::set<WordId> train_ann, test_ann;
  for (const auto& seq : train.continuous) {
    REQUIRE(seq.annotation.has_value());
    REQUIRE(train.is_seen(seq.annotation->word));
    train_ann.insert(seq.annotation->word);
    REQUIRE(seq.annotation->confidence >= 0.5);
  }
  bool unseen_annotated = false;
  for (const auto& seq : test.continuous) {
    REQUIRE(seq.annotation.has_value());
    REQUIRE(seq.annotation->confidence >= 0.9);  // high-confidence test protocol
    unseen_annotated = unseen_annotated || !test.is_seen(seq.annotation->word);
    test_ann.insert(seq.annotation->word);
  }
  REQUIRE(unseen_annotated);

  // unseen words appear in training subtitles (background supervision)
  bool unseen_in_train_subtitles = false;
  for (const auto& seq : train.continuous)
    for (const WordId w : tokenize(seq.subtitle, train.vocabulary))
      unseen_in_train_subtitles = unseen_in_train_subtitles || !train.is_seen(w);
  REQUIRE(unseen_in_train_subtitles);
}

TEST_CASE("ground-truth sidecar covers every planted sign") {
  test_support::TmpDir tmp;
  const auto cfg = small_config();
  const auto out = generate(cfg, tmp.path());
  const auto gt = load_ground_truth(out.ground_truth);
  // every sequence plants subtitle_words_per_seq words
  REQUIRE(gt.size() == static_cast<std::size_t>(50 * cfg.subtitle_words_per_seq));
  const Corpus train = load_manifest(out.train_manifest);
  const Corpus test = load_manifest(out.test_manifest);
  std::set<std::string> ids;
  for (const auto& s : train.continuous) ids.insert(s.id);
  for (const auto& s : test.continuous) ids.insert(s.id);
  for (const auto& rec : gt) {
    REQUIRE(ids.count(rec.seq_id) == 1);
    REQUIRE(train.vocabulary.lookup(rec.word).has_value());
  }
}

TEST_CASE("same seed produces byte-identical outputs") {
  test_support::TmpDir a, b;
  const auto out_a = generate(small_config(), a.path());
  const auto out_b = generate(small_config(), b.path());
  REQUIRE(slurp(out_a.train_manifest) == slurp(out_b.train_manifest));
  REQUIRE(slurp(out_a.test_manifest) == slurp(out_b.test_manifest));
  REQUIRE(slurp(out_a.ground_truth) == slurp(out_b.ground_truth));
  REQUIRE(slurp(out_a.split_file) == slurp(out_b.split_file));
  const Corpus ca = load_manifest(out_a.train_manifest);
  const Corpus cb = load_manifest(out_b.train_manifest);
  for (std::size_t i = 0; i < ca.continuous.size(); ++i)
    REQUIRE(ca.continuous[i].features.data == cb.continuous[i].features.data);

  auto other = small_config();
  other.seed = 18;
  test_support::TmpDir c;
  const auto out_c = generate(other, c.path());
  REQUIRE(slurp(out_a.train_manifest) != slurp(out_c.train_manifest));
}

TEST_CASE("zero-noise identity rendering localizes exactly on raw features") {
  test_support::TmpDir tmp;
  auto cfg = small_config();
  cfg.noise_sigma = 0.0;
  cfg.map_scale = 0.0;
  const auto out = generate(cfg, tmp.path());
  const Corpus test = load_manifest(out.test_manifest);
  const auto gt = load_ground_truth(out.ground_truth);

  for (const auto& seq : test.continuous) {
    // raw features as "embeddings": cosine spotting with no model
    SequenceEmbedding<double> emb;
    for (int w = 0; w < seq.num_windows(); ++w) emb.windows.push_back(w);
    emb.embeddings = seq.features.data.transpose().cast<double>();

    for (const auto& rec : gt) {
      if (rec.seq_id != seq.id) continue;
      const WordId word = *test.vocabulary.lookup(rec.word);
      const auto* entry = test.dict_entry(word);
      REQUIRE(entry != nullptr);
      Mat<double> variants(kTrunkDim, entry->variants.size());
      for (std::size_t v = 0; v < entry->variants.size(); ++v)
        variants.col(static_cast<Eigen::Index>(v)) = pool_dictionary<double>(entry->variants[v]);
      const SpotResult res = spot(emb, variants, word);
      REQUIRE(res.best_frame >= rec.frame - 20);
      REQUIRE(res.best_frame <= rec.frame + 5);
      REQUIRE(res.best_variant == rec.variant);
      REQUIRE(res.score == Catch::Approx(1.0).margin(1e-6));
    }
  }
}

TEST_CASE("annotation frames admit in-range foreground sampling") {
  test_support::TmpDir tmp;
  const auto out = generate(small_config(), tmp.path());
  const Corpus train = load_manifest(out.train_manifest);
  Rng rng(3);
  for (const auto& seq : train.continuous) {
    const int t = seq.annotation->frame;
    REQUIRE(t - 20 >= 0);
    REQUIRE(t + 5 < seq.num_windows());
    const int s = sample_foreground_start(t, seq.num_windows(), rng);
    REQUIRE(s >= t - 20);
    REQUIRE(s <= t - 10);
  }
}

TEST_CASE("config validation rejects impossible settings") {
  SynthConfig cfg = small_config();
  cfg.subtitle_words_per_seq = 20;
  REQUIRE_THROWS_AS(cfg.validate(), ConfigError);
  cfg = small_config();
  cfg.unseen_fraction = 1.0;
  REQUIRE_THROWS_AS(cfg.validate(), ConfigError);
  cfg = small_config();
  cfg.seq_windows_min = 50;
  REQUIRE_THROWS_AS(cfg.validate(), ConfigError);
}
