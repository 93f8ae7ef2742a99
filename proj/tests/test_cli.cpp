#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "nsm/nsm.hpp"

namespace fs = std::filesystem;

namespace {

struct Run {
  int status;
  std::string out;
};

Run run(const std::string& args) {
  const std::string cmd = std::string(NSM_CLI_PATH) + " " + args + " 2>/dev/null";
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) throw std::runtime_error("popen failed");
  std::string out;
  char buf[4096];
  std::size_t n;
  while ((n = fread(buf, 1, sizeof buf, pipe)) > 0) out.append(buf, n);
  const int raw = pclose(pipe);
  return {WIFEXITED(raw) ? WEXITSTATUS(raw) : -1, out};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("nsm_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    std::ofstream(dir_ / "h.tsv") << "Hodgenville\tPlaceOfBirthOf\tAbeLincoln\tentity\n";
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string at(const std::string& name) const { return (dir_ / name).string(); }

  fs::path dir_;
};

}  // namespace

TEST_F(CliTest, ExecPrintsDenotation) {
  const auto r = run("exec --kb " + at("h.tsv") + " --program '( Hop R0 PlaceOfBirthOf ) RETURN' --entity R0=Hodgenville");
  EXPECT_EQ(r.status, 0);
  EXPECT_EQ(r.out, "AbeLincoln\n");
  EXPECT_EQ(run("exec --kb " + at("h.tsv") + " --program '( Hop R5 x ) RETURN' --entity R0=Hodgenville").status, 1);
}

TEST_F(CliTest, AssistListsValidTokens) {
  const auto r = run("assist --kb " + at("h.tsv") + " --prefix '( Hop R0' --entity R0=Hodgenville");
  EXPECT_EQ(r.status, 0);
  EXPECT_EQ(r.out, "PlaceOfBirthOf\n");
}

TEST_F(CliTest, UsageErrors) {
  EXPECT_EQ(run("").status, 2);
  EXPECT_EQ(run("exec --program RETURN").status, 2);
  EXPECT_EQ(run("frobnicate").status, 2);
  EXPECT_EQ(run("exec --kb " + at("missing.tsv") + " --program RETURN").status, 1);
}

TEST_F(CliTest, GradcheckPasses) {
  const auto r = run("gradcheck --seed 0");
  EXPECT_EQ(r.status, 0) << r.out;
  EXPECT_NE(r.out.find("max relative error"), std::string::npos);
}

TEST_F(CliTest, PipelineIsDeterministic) {
  ASSERT_EQ(run("gen-kb --seed 1 --entities 40 --properties 8 --out " + at("kb.tsv")).status, 0);
  ASSERT_EQ(run("gen-data --kb " + at("kb.tsv") + " --seed 1 --train 24 --dev 8 --test 8 --gold --out-dir " + at("")).status, 0);
  for (const auto* f : {"train.jsonl", "dev.jsonl", "test.jsonl", "train.gold.tsv"}) EXPECT_TRUE(fs::exists(dir_ / f)) << f;
  std::ofstream(dir_ / "cfg.txt") << "beam_size=8\nml_iterations=2\nml_epochs=3\nreinforce_epochs=2\n"
                                     "embed_dim=8\nhidden_dim=12\nsamples_per_question=3\n";
  const std::string common = "train --kb " + at("kb.tsv") + " --train " + at("train.jsonl") + " --dev " + at("dev.jsonl") +
                             " --config " + at("cfg.txt");
  const auto a = run(common + " --out-checkpoint " + at("a.ckpt"));
  const auto b = run(common + " --out-checkpoint " + at("b.ckpt"));
  ASSERT_EQ(a.status, 0);
  ASSERT_EQ(b.status, 0);
  EXPECT_EQ(a.out, b.out);
  EXPECT_EQ(slurp(dir_ / "a.ckpt"), slurp(dir_ / "b.ckpt"));

  std::istringstream lines(a.out);
  std::string line;
  std::size_t n = 0;
  while (std::getline(lines, line)) {
    const auto j = nlohmann::json::parse(line);
    if (n == 0) {
      EXPECT_TRUE(j.contains("config"));
    }
    ++n;
  }
  EXPECT_EQ(n, 1u + 2u + 2u);

  const auto ev = run("eval --kb " + at("kb.tsv") + " --test " + at("test.jsonl") + " --checkpoint " + at("a.ckpt"));
  ASSERT_EQ(ev.status, 0);
  const auto m = nlohmann::json::parse(ev.out);
  for (const auto* k : {"avg_precision", "avg_recall", "avg_f1", "accuracy"}) {
    ASSERT_TRUE(m.contains(k)) << k;
    EXPECT_GE(m[k].get<double>(), 0.0);
    EXPECT_LE(m[k].get<double>(), 1.0);
  }

  const auto first = nsm::load_dataset(at("test.jsonl")).front();
  std::string question;
  for (const auto& w : first.question) question += (question.empty() ? "" : " ") + w;
  const auto p = run("parse --kb " + at("kb.tsv") + " --checkpoint " + at("a.ckpt") + " --question '" + question + "'");
  EXPECT_EQ(p.status, 0);
  EXPECT_NE(p.out.find("RETURN"), std::string::npos);
}
