#include <gtest/gtest.h>

#include <json.hpp>

#include "provenance/subprocess.hpp"
#include "test_support.hpp"

using namespace provenance;
namespace ts = testing_support;
using nlohmann::json;

namespace {

ProcessResult run(std::vector<std::string> args) {
  args.insert(args.begin(), ts::cli_path());
  ::setenv("PROVENANCE_OBJDUMP", ts::objdump_path().c_str(), 1);
  ProcessResult r;
  int spawn_error = 0;
  EXPECT_TRUE(run_process(args, r, spawn_error)) << "spawn errno " << spawn_error;
  return r;
}

std::filesystem::path desk() { return ts::data_dir() / "desk_corpus"; }

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = ts::temp_dir("cli");
    std::string csv = "path,isa,family,version,optimization\n";
    for (const char* comp : {"gcc-13", "clang-14", "clang-22"})
      for (const char* opt : {"O0", "O2"})
        for (int b = 0; b < 8; ++b) {
          char name[16];
          std::snprintf(name, sizeof name, "b%03d.elf", b);
          const std::string family = std::string(comp).substr(0, std::string(comp).find('-'));
          csv += (desk() / "bin" / comp / opt / name).string() + ",arm32," + family + "," + comp + ",-" + opt + "\n";
        }
    ts::write_file(dir_ / "manifest.csv", csv);
    model_ = dir_ / "model.json";
    const auto r = run({"train", "-m", (dir_ / "manifest.csv").string(), "--out", model_.string(), "-j", "4", "--json"});
    ASSERT_EQ(r.exit_status, 0) << r.err;
    train_report_ = r.out;
    train_err_ = r.err;
  }
  static void TearDownTestSuite() { std::filesystem::remove_all(dir_); }

  static std::string elf(const char* comp, const char* opt, int b) {
    char name[16];
    std::snprintf(name, sizeof name, "b%03d.elf", b);
    return (desk() / "bin" / comp / opt / name).string();
  }

  static inline std::filesystem::path dir_;
  static inline std::filesystem::path model_;
  static inline std::string train_report_;
  static inline std::string train_err_;
};

}  // namespace

TEST_F(Cli, ExtractThreeBinaries) {
  const auto r = run({"extract", "--json", elf("gcc-13", "O0", 0), elf("gcc-13", "O2", 1), elf("clang-14", "O0", 2)});
  ASSERT_EQ(r.exit_status, 0) << r.err;
  const auto j = json::parse(r.out);
  ASSERT_TRUE(j.is_array());
  EXPECT_EQ(j.size(), 3u);
  EXPECT_GT(j[0]["features"]["instruction_count"].get<int>(), 0);
  const auto csv = run({"extract", elf("gcc-13", "O0", 0)});
  EXPECT_EQ(csv.exit_status, 0);
  EXPECT_EQ(std::count(csv.out.begin(), csv.out.end(), '\n'), 2);
}

TEST_F(Cli, ExtractNonElf) {
  ts::write_file(dir_ / "notes.bin", "plain text");
  const auto r = run({"extract", (dir_ / "notes.bin").string()});
  EXPECT_EQ(r.exit_status, 1);
  EXPECT_NE(r.err.find("NotAnElf"), std::string::npos);
}

TEST_F(Cli, CrossValidateRejectsOneFold) {
  const auto r = run({"cross-validate", "-m", (dir_ / "manifest.csv").string(), "--k", "1"});
  EXPECT_EQ(r.exit_status, 1);
}

TEST_F(Cli, CrossValidateReport) {
  const auto r = run({"cross-validate", "-m", (dir_ / "manifest.csv").string(), "--k", "4", "--json", "-j", "4",
                      "--task", "optimization", "--scheme", "2"});
  ASSERT_EQ(r.exit_status, 0) << r.err;
  const auto j = json::parse(r.out);
  EXPECT_EQ(j["results"]["optimization"]["fold_accuracies"].size(), 4u);
  EXPECT_EQ(j["results"]["optimization"]["label_counts"]["-O0"], 24);
  EXPECT_TRUE(j.contains("timing"));
  const auto v = run({"cross-validate", "-m", (dir_ / "manifest.csv").string(), "--k", "4", "--json", "--task",
                      "version", "--no-timing"});
  ASSERT_EQ(v.exit_status, 0) << v.err;
  const auto vj = json::parse(v.out);
  EXPECT_TRUE(vj["results"].contains("clang_version"));
  EXPECT_FALSE(vj.contains("timing"));
  EXPECT_NE(v.err.find("gcc has fewer than two versions"), std::string::npos);
}

TEST_F(Cli, TrainWritesModelAndWarns) {
  const auto report = json::parse(train_report_);
  EXPECT_TRUE(report["tasks"]["gcc_version"].is_null());
  EXPECT_EQ(report["tasks"]["clang_version"]["labels"], (json{"clang-14", "clang-22"}));
  EXPECT_NE(train_err_.find("gcc version classifier unavailable"), std::string::npos);
  std::ifstream in(model_);
  const auto model = json::parse(in);
  EXPECT_EQ(model["schema_version"], 1);
  EXPECT_TRUE(model["tasks"]["gcc_version"].is_null());
}

TEST_F(Cli, TrainUnwritableOut) {
  const auto r = run({"train", "-m", (dir_ / "manifest.csv").string(), "--out", "/nonexistent/dir/model.json"});
  EXPECT_EQ(r.exit_status, 2);
  EXPECT_NE(r.err.find("IoFailure"), std::string::npos);
}

TEST_F(Cli, PredictEmptyPathList) {
  EXPECT_EQ(run({"predict", "--model", model_.string()}).exit_status, 1);
}

TEST_F(Cli, PredictPartialFailure) {
  const auto a64 = dir_ / "a64.elf";
  ts::write_bytes(a64, ts::make_elf(183, true, ts::words_le({0xd503201f, 0xaa0103e0, 0xd65f03c0})));
  const auto r = run({"predict", "--json", "--model", model_.string(), elf("gcc-13", "O0", 9), a64.string()});
  EXPECT_EQ(r.exit_status, 0) << r.err;
  const auto j = json::parse(r.out);
  ASSERT_EQ(j.size(), 2u);
  EXPECT_EQ(j[0]["family"], "gcc");
  EXPECT_TRUE(j[0]["version"].is_null());
  EXPECT_NE(j[1]["error"].get<std::string>().find("IsaMismatch"), std::string::npos);
}

TEST_F(Cli, PredictHoldoutMatchesManifest) {
  std::vector<std::string> args = {"predict", "--json", "--model", model_.string()};
  std::vector<std::pair<std::string, std::string>> truth;
  for (const char* comp : {"gcc-13", "clang-14", "clang-22"})
    for (const char* opt : {"O0", "O2"})
      for (int b = 20; b < 24; ++b) {
        args.push_back(elf(comp, opt, b));
        truth.emplace_back(std::string(comp).substr(0, std::string(comp).find('-')), std::string("-") + opt);
      }
  const auto r = run(args);
  ASSERT_EQ(r.exit_status, 0) << r.err;
  const auto j = json::parse(r.out);
  std::size_t family = 0;
  std::size_t opt = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    family += j[i]["family"] == truth[i].first;
    opt += j[i]["optimization"] == truth[i].second;
  }
  EXPECT_GE(family, truth.size() * 9 / 10);
  EXPECT_GE(opt, truth.size() * 8 / 10);
}

TEST_F(Cli, ExplainTables) {
  const auto r = run({"explain", "--json", "--model", model_.string()});
  ASSERT_EQ(r.exit_status, 0) << r.err;
  const auto j = json::parse(r.out);
  ASSERT_EQ(j["family"].size(), 1u);
  EXPECT_EQ(j["family"][0]["rows"].size(), 5u);
  EXPECT_FALSE(j.contains("gcc_version"));
  const auto zero = run({"explain", "--json", "--top", "0", "--task", "family", "--model", model_.string()});
  EXPECT_EQ(zero.exit_status, 0);
  EXPECT_TRUE(json::parse(zero.out)["family"][0]["rows"].empty());
  const auto text = run({"explain", "--task", "optimization", "--model", model_.string()});
  EXPECT_EQ(text.exit_status, 0);
  EXPECT_NE(text.out.find("optimization [-O0 vs -O2]"), std::string::npos);
  EXPECT_EQ(run({"explain", "--task", "gcc_version", "--model", model_.string()}).exit_status, 1);
}

TEST_F(Cli, ScanEmptyDirectory) {
  std::filesystem::create_directories(dir_ / "empty");
  EXPECT_EQ(run({"scan", "--model", model_.string(), (dir_ / "empty").string()}).exit_status, 1);
}

TEST_F(Cli, ScanOnlyNonElf) {
  std::filesystem::create_directories(dir_ / "text");
  ts::write_file(dir_ / "text" / "readme", "hello");
  const auto r = run({"scan", "--json", "--model", model_.string(), (dir_ / "text").string()});
  EXPECT_EQ(r.exit_status, 1);
  EXPECT_EQ(json::parse(r.out)["skipped_non_elf"], 1);
}

TEST_F(Cli, ScanGccDirectory) {
  const auto report = dir_ / "scan.csv";
  const auto r = run({"scan", "--json", "-j", "4", "--report", report.string(), "--model", model_.string(),
                      (desk() / "bin" / "gcc-13").string()});
  ASSERT_EQ(r.exit_status, 0) << r.err;
  const auto j = json::parse(r.out);
  const int gcc = j["family"].value("gcc", 0);
  const int clang = j["family"].value("clang", 0);
  EXPECT_GT(gcc, 4 * clang);
  std::ifstream in(report);
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "stage,label,count");
}

TEST_F(Cli, SummarizeManifest) {
  const auto r = run({"summarize", "-m", (dir_ / "manifest.csv").string()});
  ASSERT_EQ(r.exit_status, 0) << r.err;
  const auto j = json::parse(r.out);
  EXPECT_EQ(j["family"]["gcc"], 16);
  EXPECT_EQ(j["optimization"]["-O2"], 24);
  const auto csv = run({"summarize", "--csv", "-m", (dir_ / "manifest.csv").string()});
  EXPECT_EQ(csv.out.substr(0, 29), "lower_bytes,upper_bytes,count");
}

TEST_F(Cli, UsageErrors) {
  EXPECT_EQ(run({}).exit_status, 1);
  EXPECT_EQ(run({"train", "-m", (dir_ / "manifest.csv").string()}).exit_status, 1);
  EXPECT_EQ(run({"extract", "--bogus-flag"}).exit_status, 1);
  EXPECT_EQ(run({"predict", "--model", (dir_ / "missing.json").string(), elf("gcc-13", "O0", 0)}).exit_status, 1);
}
