#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "support/tmpdir.hpp"
#include "wrl/corpus.hpp"
#include "wrl/rng.hpp"

namespace fs = std::filesystem;
using namespace wrl;

namespace {

FeatureSeries random_series(int rows, int dim, Rng& rng) {
  FeatureSeries s;
  s.data.resize(rows, dim);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < dim; ++c) s.data(r, c) = static_cast<float>(rng.normal());
  return s;
}

Corpus tiny_corpus(Rng& rng, int n_cont = 2, int n_dict = 3) {
  Corpus corpus;
  for (const char* w : {"apple", "speak", "name", "what", "friend"}) corpus.vocabulary.add(w);
  for (int i = 0; i < n_cont; ++i) {
    ContinuousSequence seq;
    seq.id = "seq" + std::to_string(i);
    seq.features = random_series(60, kTrunkDim, rng);
    seq.subtitle = {"what", "a", "fine", "apple"};
    Annotation ann;
    ann.word = 0;
    ann.frame = 30;
    ann.confidence = 0.8;
    seq.annotation = ann;
    corpus.continuous.push_back(std::move(seq));
  }
  for (int d = 0; d < n_dict; ++d) {
    DictionaryEntry e;
    e.word = static_cast<WordId>(d);
    e.variants.push_back(random_series(2 + d, kTrunkDim, rng));
    corpus.dictionary.push_back(std::move(e));
  }
  corpus.rebuild_indexes();
  return corpus;
}

}  // namespace

TEST_CASE("feature file round-trips bit-exactly") {
  test_support::TmpDir tmp;
  Rng rng(7);
  const FeatureSeries series = random_series(5, 16, rng);
  const auto path = tmp.path() / "x.wrlf";
  write_feature_file(path, series);
  const FeatureSeries back = read_feature_file(path);
  REQUIRE(back.rows() == 5);
  REQUIRE(back.dim() == 16);
  for (int r = 0; r < 5; ++r)
    for (int c = 0; c < 16; ++c)
      REQUIRE(detail::f32_bits(back.data(r, c)) == detail::f32_bits(series.data(r, c)));
}

TEST_CASE("feature file errors") {
  test_support::TmpDir tmp;
  Rng rng(7);

  SECTION("bad magic") {
    const auto path = tmp.path() / "bad.wrlf";
    std::ofstream os(path, std::ios::binary);
    os << "NOPE1234567890";
    os.close();
    REQUIRE_THROWS_WITH(read_feature_file(path), Catch::Matchers::ContainsSubstring("bad magic"));
  }

  SECTION("truncated payload") {
    const auto path = tmp.path() / "trunc.wrlf";
    write_feature_file(path, random_series(3, 8, rng));
    // chop off the last row
    const auto size = fs::file_size(path);
    fs::resize_file(path, size - 8 * 4);
    REQUIRE_THROWS_WITH(read_feature_file(path), Catch::Matchers::ContainsSubstring("truncated"));
  }

  SECTION("non-finite value reported with row and column") {
    const auto path = tmp.path() / "nan.wrlf";
    FeatureSeries s = random_series(3, 8, rng);
    s.data(1, 2) = std::numeric_limits<float>::quiet_NaN();
    // write via raw bytes since write path doesn't forbid it
    write_feature_file(path, s);
    REQUIRE_THROWS_WITH(read_feature_file(path),
                        Catch::Matchers::ContainsSubstring("row 1") &&
                            Catch::Matchers::ContainsSubstring("col 2"));
  }

  SECTION("trailing bytes") {
    const auto path = tmp.path() / "trail.wrlf";
    write_feature_file(path, random_series(2, 4, rng));
    std::ofstream os(path, std::ios::binary | std::ios::app);
    os << "xx";
    os.close();
    REQUIRE_THROWS_WITH(read_feature_file(path), Catch::Matchers::ContainsSubstring("trailing"));
  }
}

TEST_CASE("manifest round-trip preserves everything") {
  test_support::TmpDir tmp;
  Rng rng(11);
  const Corpus corpus = tiny_corpus(rng);
  const auto manifest = save_corpus(corpus, tmp.path());
  const Corpus back = load_manifest(manifest);

  REQUIRE(back.continuous.size() == 2);
  REQUIRE(back.dictionary.size() == 3);
  REQUIRE(back.vocabulary.words() == corpus.vocabulary.words());
  for (std::size_t i = 0; i < corpus.continuous.size(); ++i) {
    REQUIRE(back.continuous[i].id == corpus.continuous[i].id);
    REQUIRE(back.continuous[i].subtitle == corpus.continuous[i].subtitle);
    REQUIRE(back.continuous[i].annotation->word == corpus.continuous[i].annotation->word);
    REQUIRE(back.continuous[i].annotation->frame == corpus.continuous[i].annotation->frame);
    REQUIRE(back.continuous[i].annotation->confidence == corpus.continuous[i].annotation->confidence);
    REQUIRE(back.continuous[i].features.data == corpus.continuous[i].features.data);
  }
  for (std::size_t d = 0; d < corpus.dictionary.size(); ++d) {
    REQUIRE(back.dictionary[d].word == corpus.dictionary[d].word);
    REQUIRE(back.dictionary[d].variants.size() == corpus.dictionary[d].variants.size());
    REQUIRE(back.dictionary[d].variants[0].data == corpus.dictionary[d].variants[0].data);
  }
}

TEST_CASE("manifest errors carry the offending record") {
  test_support::TmpDir tmp;
  Rng rng(13);

  SECTION("wrong feature dimension names the file") {
    Corpus corpus = tiny_corpus(rng, 1, 1);
    corpus.continuous[0].features = random_series(40, 512, rng);
    const auto manifest = save_corpus(corpus, tmp.path());
    REQUIRE_THROWS_WITH(load_manifest(manifest),
                        Catch::Matchers::ContainsSubstring("dim 512") &&
                            Catch::Matchers::ContainsSubstring("seq0"));
  }

  SECTION("unknown annotation word") {
    Corpus corpus = tiny_corpus(rng, 1, 1);
    const auto manifest = save_corpus(corpus, tmp.path());
    // patch the manifest json by hand
    std::ifstream is(manifest);
    std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    is.close();
    const auto pos = text.find("\"word\": \"apple\"");
    REQUIRE(pos != std::string::npos);
    text.replace(pos, 15, "\"word\": \"zebra\"");
    std::ofstream os(manifest);
    os << text;
    os.close();
    REQUIRE_THROWS_WITH(load_manifest(manifest), Catch::Matchers::ContainsSubstring("zebra"));
  }

  SECTION("missing file") {
    REQUIRE_THROWS_AS(load_manifest(tmp.path() / "nope.json"), DataError);
  }
}

TEST_CASE("filter_by_confidence demotes, keeps sequences, and is monotone") {
  Rng rng(17);
  Corpus corpus = tiny_corpus(rng, 3, 1);
  corpus.continuous[0].annotation->confidence = 0.55;
  corpus.continuous[1].annotation->confidence = 0.85;
  corpus.continuous[2].annotation->confidence = 0.95;

  auto count = [](const Corpus& c) {
    int n = 0;
    for (const auto& s : c.continuous) n += s.annotation ? 1 : 0;
    return n;
  };

  const Corpus at08 = filter_by_confidence(corpus, 0.8);
  REQUIRE(count(at08) == 2);
  REQUIRE(at08.continuous.size() == 3);  // demoted, not deleted

  REQUIRE(count(filter_by_confidence(corpus, 0.5)) == 3);   // best training setting keeps all
  REQUIRE(count(filter_by_confidence(corpus, 0.9)) == 1);   // test-set setting

  // monotone in the threshold
  int prev = 3;
  for (const double thr : {0.5, 0.6, 0.7, 0.8, 0.9, 1.0}) {
    const int n = count(filter_by_confidence(corpus, thr));
    REQUIRE(n <= prev);
    prev = n;
  }

  REQUIRE_THROWS_AS(filter_by_confidence(corpus, 0.4), DataError);
}

TEST_CASE("split_vocabulary partitions deterministically") {
  Rng rng(19);
  Corpus corpus = tiny_corpus(rng, 1, 1);

  const Corpus split = split_vocabulary(corpus, 3, 42);
  int seen = 0, unseen = 0;
  for (const auto tag : split.split_tags) (tag == SplitTag::kSeenTrain ? seen : unseen)++;
  REQUIRE(seen == 3);
  REQUIRE(unseen == 2);

  const Corpus again = split_vocabulary(corpus, 3, 42);
  REQUIRE(split.split_tags == again.split_tags);

  const Corpus other_seed = split_vocabulary(corpus, 3, 43);
  // different seeds are allowed to coincide on tiny vocabularies, but the
  // partition sizes always hold
  int seen2 = 0;
  for (const auto tag : other_seed.split_tags) seen2 += tag == SplitTag::kSeenTrain ? 1 : 0;
  REQUIRE(seen2 == 3);

  // degenerate all-seen protocol
  const Corpus all_seen = split_vocabulary(corpus, 5, 1);
  for (const auto tag : all_seen.split_tags) REQUIRE(tag == SplitTag::kSeenTrain);

  REQUIRE_THROWS_AS(split_vocabulary(corpus, 6, 1), DataError);
}

TEST_CASE("split sidecar round-trips") {
  test_support::TmpDir tmp;
  Rng rng(23);
  Corpus corpus = split_vocabulary(tiny_corpus(rng, 1, 1), 3, 42);
  save_split(corpus, tmp.path() / "split.json");
  Corpus fresh = tiny_corpus(rng, 1, 1);
  fresh = load_split(std::move(fresh), tmp.path() / "split.json");
  REQUIRE(fresh.split_tags == corpus.split_tags);
}

TEST_CASE("vocabulary rejects duplicates and uppercase") {
  Vocabulary v;
  v.add("apple");
  REQUIRE_THROWS_AS(v.add("apple"), DataError);
  REQUIRE_THROWS_AS(v.add("Apple"), DataError);
  REQUIRE(v.lookup("apple").value() == 0);
  REQUIRE_FALSE(v.lookup("pear").has_value());
}
