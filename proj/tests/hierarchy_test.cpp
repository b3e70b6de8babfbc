#include <gtest/gtest.h>

#include <fstream>
#include <random>

#include "provenance/hierarchy.hpp"
#include "test_support.hpp"

using namespace provenance;
namespace ts = testing_support;

namespace {

// Synthetic binaries whose opcode mix and fp usage depend on the labels.
BinaryFeatures synth(std::mt19937_64& rng, const std::string& family, const std::string& version, const std::string& opt) {
  std::vector<std::string> lines;
  const auto add = [&](const std::string& l, int n) {
    for (int i = 0; i < n; ++i) lines.push_back(l);
  };
  const int jitter = static_cast<int>(rng() % 4);
  add("mov\tr0, r1", 10 + jitter);
  add("ldr\tr3, [sp, #4]", 5 + static_cast<int>(rng() % 3));
  if (family == "gcc") add("push\t{fp, lr}", 6);
  if (family == "clang") add("push\t{r4, r5, r11, lr}", 6);
  if (version == "gcc-6" || version == "clang-5") add("ubfx\tr0, r1, #0, #8", 4);
  if (version == "gcc-8" || version == "clang-7") add("uxtb\tr0, r1", 4);
  if (opt == "-O0") add("str\tr3, [fp, #-8]", 8);
  if (opt == "-O1") add("cmp\tr0, #0", 6);
  if (opt == "-O2") add("ldrd\tr2, r3, [r0]", 6);
  if (opt == "-O3") add("vld1.8\t{d16-d17}, [r0]", 6);
  if (opt == "-Os") add("bl\t1000", 6);
  std::string text;
  for (const auto& l : lines) text += "1000:\t00000001\t" + l + "\n";
  return extract_features(Listing{Isa::Arm32, text});
}

std::vector<LabeledSample> corpus(std::uint64_t seed, bool two_clang_versions = true) {
  std::mt19937_64 rng(seed);
  std::vector<LabeledSample> out;
  const std::vector<std::pair<std::string, std::string>> toolchains = {
      {"gcc", "gcc-6"}, {"gcc", "gcc-8"}, {"clang", "clang-5"}, {"clang", "clang-7"}};
  for (const auto& [fam, ver] : toolchains) {
    if (!two_clang_versions && ver == "clang-7") continue;
    for (const char* opt : {"-O0", "-O1", "-O2", "-O3", "-Os"})
      for (int i = 0; i < 6; ++i) out.push_back({synth(rng, fam, ver, opt), fam, ver, opt});
  }
  return out;
}

TrainConfig config() {
  TrainConfig c;
  c.C = 10;
  return c;
}

}  // namespace

TEST(MapOptimization, Schemes) {
  EXPECT_EQ(map_optimization("-O3", OptimizationScheme::Five), "-O3");
  EXPECT_EQ(map_optimization("-O3", OptimizationScheme::Four), "-O2/-O3");
  EXPECT_EQ(map_optimization("-O2", OptimizationScheme::Four), "-O2/-O3");
  EXPECT_EQ(map_optimization("-Os", OptimizationScheme::Four), "-Os");
  EXPECT_EQ(map_optimization("-O0", OptimizationScheme::Two), "-O0");
  EXPECT_EQ(map_optimization("-Os", OptimizationScheme::Two), "optimized");
  EXPECT_EQ(parse_scheme("4"), OptimizationScheme::Four);
  EXPECT_FALSE(parse_scheme("3"));
}

TEST(TrainHierarchy, FullLabelSpacePopulatesFourClassifiers) {
  const auto samples = corpus(1);
  const auto m = train_hierarchy(samples, OptimizationScheme::Five, config());
  ASSERT_TRUE(m.family && m.gcc_version && m.clang_version && m.optimization);
  EXPECT_EQ(m.family->labels, (std::vector<std::string>{"clang", "gcc"}));
  EXPECT_EQ(m.gcc_version->labels, (std::vector<std::string>{"gcc-6", "gcc-8"}));
  EXPECT_EQ(m.optimization->labels.size(), 5u);
  EXPECT_TRUE(std::holds_alternative<OneVsRestModel>(m.optimization->classifier));
  EXPECT_TRUE(std::holds_alternative<LinearModel>(m.family->classifier));
}

TEST(TrainHierarchy, SingleClangVersionIsUnavailable) {
  const auto m = train_hierarchy(corpus(2, false), OptimizationScheme::Five, config());
  EXPECT_TRUE(m.gcc_version);
  EXPECT_FALSE(m.clang_version);
}

TEST(TrainHierarchy, TwoSchemeGivesBinaryOptimization) {
  const auto m = train_hierarchy(corpus(3), OptimizationScheme::Two, config());
  ASSERT_TRUE(m.optimization);
  EXPECT_TRUE(std::holds_alternative<LinearModel>(m.optimization->classifier));
  EXPECT_EQ(m.optimization->labels, (std::vector<std::string>{"-O0", "optimized"}));
}

TEST(TrainHierarchy, EachTaskHasItsOwnVocabulary) {
  const auto m = train_hierarchy(corpus(4), OptimizationScheme::Five, config());
  EXPECT_EQ(m.family->tfidf.corpus_size, 120u);
  EXPECT_EQ(m.gcc_version->tfidf.corpus_size, 60u);
  EXPECT_EQ(m.clang_version->tfidf.corpus_size, 60u);
}

TEST(TrainHierarchy, Errors) {
  auto only_gcc = corpus(5);
  std::erase_if(only_gcc, [](const LabeledSample& s) { return s.family != "gcc"; });
  try {
    train_hierarchy(only_gcc, OptimizationScheme::Five, config());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InsufficientLabels);
  }
  auto mixed = corpus(5);
  mixed[3].features.isa = Isa::AArch64;
  EXPECT_THROW(train_hierarchy(mixed, OptimizationScheme::Five, config()), Error);
}

TEST(PredictProvenance, RoutesToFamilyVersionClassifier) {
  const auto train = corpus(6);
  const auto m = train_hierarchy(train, OptimizationScheme::Five, config());
  const auto test = corpus(7);
  std::size_t exact = 0;
  for (const auto& s : test) {
    const auto p = predict_provenance(m, s.features);
    EXPECT_EQ(p.version_task, p.family + "_version");
    ASSERT_TRUE(p.version);
    EXPECT_EQ(p.version->substr(0, p.family.size()), p.family);
    EXPECT_TRUE(p.margins.contains("family"));
    exact += p.family == s.family && *p.version == s.version && p.optimization == s.optimization;
  }
  EXPECT_GE(exact, test.size() * 9 / 10);
}

TEST(PredictProvenance, UnavailableVersion) {
  const auto m = train_hierarchy(corpus(8, false), OptimizationScheme::Five, config());
  std::mt19937_64 rng(1);
  const auto p = predict_provenance(m, synth(rng, "clang", "clang-5", "-O2"));
  EXPECT_EQ(p.family, "clang");
  EXPECT_FALSE(p.version);
  EXPECT_TRUE(p.version_task.empty());
}

TEST(PredictProvenance, IsaMismatch) {
  const auto m = train_hierarchy(corpus(9), OptimizationScheme::Five, config());
  BinaryFeatures b = corpus(10).front().features;
  b.isa = Isa::AArch64;
  try {
    predict_provenance(m, b);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::IsaMismatch);
  }
}

TEST(TrainBinaryTask, CompcertAgainstRest) {
  auto samples = corpus(11);
  for (std::size_t i = 0; i < samples.size(); i += 4) {
    samples[i].family = "compcert";
    samples[i].features.terms.tf["fmdrr"] = 0.1;
  }
  const auto t = train_binary_task(samples, {"compcert", "conventional"}, config());
  EXPECT_EQ(t.labels, (std::vector<std::string>{"compcert", "conventional"}));
  std::size_t correct = 0;
  for (const auto& s : samples) correct += (t.predict(s.features) == "compcert") == (s.family == "compcert");
  EXPECT_EQ(correct, samples.size());
  std::erase_if(samples, [](const LabeledSample& s) { return s.family == "compcert"; });
  try {
    train_binary_task(samples, {"compcert", "conventional"}, config());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InsufficientLabels);
  }
}

TEST(CrossValidate, IdenticalFeaturesNearChance) {
  const auto base = corpus(12).front().features;
  std::vector<BinaryFeatures> feats(200, base);
  std::vector<std::string> labels;
  for (int i = 0; i < 200; ++i) labels.push_back(i % 2 ? "a" : "b");
  std::mt19937_64 rng(3);
  std::shuffle(labels.begin(), labels.end(), rng);
  const auto r = cross_validate(feats, labels, TrainConfig{}, 10, 0);
  EXPECT_GE(r.mean_accuracy, 0.4);
  EXPECT_LE(r.mean_accuracy, 0.6);
}

TEST(CrossValidate, SeparableFamilies) {
  const auto samples = corpus(13);
  std::vector<BinaryFeatures> feats;
  std::vector<std::string> labels;
  for (const auto& s : samples) {
    feats.push_back(s.features);
    labels.push_back(s.family);
  }
  const auto r = cross_validate(feats, labels, config(), 10, 0);
  EXPECT_EQ(r.fold_accuracies.size(), 10u);
  EXPECT_DOUBLE_EQ(r.mean_accuracy, 1.0);
}

TEST(Persistence, RoundTripKeepsPredictions) {
  const auto dir = ts::temp_dir("model");
  const auto m = train_hierarchy(corpus(14), OptimizationScheme::Four, config());
  save_model(m, dir / "m.json");
  const auto back = load_model(dir / "m.json");
  EXPECT_EQ(serialize_model(back), serialize_model(m));
  std::mt19937_64 rng(15);
  std::uniform_real_distribution<double> u(-1, 1);
  const auto& tm = *m.optimization;
  for (int i = 0; i < 100; ++i) {
    std::vector<double> x(tm.layout.size());
    for (double& v : x) v = u(rng);
    EXPECT_EQ(predict(back.optimization->classifier, x), predict(tm.classifier, x));
    EXPECT_EQ(decision_values(back.optimization->classifier, x), decision_values(tm.classifier, x));
  }
  std::filesystem::remove_all(dir);
}

TEST(Persistence, SameSeedSameBytes) {
  ::setenv("SOURCE_DATE_EPOCH", "1700000000", 1);
  const auto a = serialize_model(train_hierarchy(corpus(16), OptimizationScheme::Five, config()));
  const auto b = serialize_model(train_hierarchy(corpus(16), OptimizationScheme::Five, config()));
  ::unsetenv("SOURCE_DATE_EPOCH");
  EXPECT_EQ(a, b);
  EXPECT_NE(a.find("\"created\": \"2023-11-14\""), std::string::npos);
}

TEST(Persistence, LoadErrors) {
  const auto dir = ts::temp_dir("model_err");
  const auto m = train_hierarchy(corpus(17), OptimizationScheme::Five, config());
  auto j = model_to_json(m);
  j["schema_version"] = 999;
  ts::write_file(dir / "v999.json", j.dump());
  const auto code_of = [](const std::filesystem::path& p) {
    try {
      load_model(p);
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::InvalidArgument;
  };
  EXPECT_EQ(code_of(dir / "v999.json"), ErrorCode::ModelSchemaMismatch);
  const auto text = serialize_model(m);
  ts::write_file(dir / "cut.json", text.substr(0, text.size() / 2));
  EXPECT_EQ(code_of(dir / "cut.json"), ErrorCode::IoFailure);
  auto bad = model_to_json(m);
  bad["tasks"]["family"]["weights"] = std::vector<double>{1.0};
  ts::write_file(dir / "bad.json", bad.dump());
  EXPECT_EQ(code_of(dir / "bad.json"), ErrorCode::ModelSchemaMismatch);
  EXPECT_EQ(code_of(dir / "absent.json"), ErrorCode::IoFailure);
  std::filesystem::remove_all(dir);
}
