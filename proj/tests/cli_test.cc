#include "cli.h"

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include <gtest/gtest.h>

#include "ctc/eval.h"
#include "ctc/model_io.h"

namespace ctc {
namespace {

namespace fs = std::filesystem;

struct CliRun {
  int status = 0;
  std::string out;
  std::string err;

  // key=value pairs of the summary line.
  std::map<std::string, std::string> summary() const {
    std::map<std::string, std::string> kv;
    const auto pos = out.rfind("command=");
    std::istringstream line(out.substr(pos));
    std::string tok;
    while (line >> tok) {
      const auto eq = tok.find('=');
      kv[tok.substr(0, eq)] = tok.substr(eq + 1);
    }
    return kv;
  }
};

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("ctc_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  CliRun run(std::vector<std::string> args) {
    std::ostringstream out, err;
    CliRun r;
    r.status = run_cli(args, out, err);
    r.out = out.str();
    r.err = err.str();
    return r;
  }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  fs::path dir_;
};

TEST_F(CliTest, Selftest) {
  const CliRun r = run({"selftest"});
  EXPECT_EQ(r.status, kExitOk) << r.out;
  EXPECT_EQ(r.summary().at("failed"), "0");
}

TEST_F(CliTest, FullDecodeMatchesSweepEndpoint) {
  const CliRun enc = run({"encode", "--synthetic", "2x16x16", "--seed", "3", "-o", path("s.ctc")});
  ASSERT_EQ(enc.status, kExitOk) << enc.err;
  EXPECT_EQ(enc.summary().at("bytes"), std::to_string(fs::file_size(path("s.ctc"))));
  const CliRun dec = run({"decode", "-i", path("s.ctc"), "--synthetic", "2x16x16", "--seed", "3"});
  ASSERT_EQ(dec.status, kExitOk) << dec.err;
  const CliRun sw = run({"sweep", "--synthetic", "2x16x16", "--seed", "3", "--budget", "full"});
  ASSERT_EQ(sw.status, kExitOk) << sw.err;
  const std::string row = sw.out.substr(sw.out.find('\n') + 1);
  EXPECT_EQ(row.rfind("full,", 0), 0u);
  EXPECT_NE(row.find(',' + dec.summary().at("psnr") + ','), std::string::npos) << row;
}

TEST_F(CliTest, TruncateThenDecodeEqualsBudgetDecode) {
  ASSERT_EQ(run({"encode", "--synthetic-image", "1x32x32", "-o", path("i.ctc")}).status, kExitOk);
  const std::string budget = std::to_string(fs::file_size(path("i.ctc")) / 2);
  ASSERT_EQ(run({"truncate", "-i", path("i.ctc"), "-o", path("t.ctc"), "--budget", budget}).status,
            kExitOk);
  const CliRun a = run({"decode", "-i", path("t.ctc"), "-o", path("a.pgm")});
  const CliRun b = run({"decode", "-i", path("i.ctc"), "--budget", budget, "-o", path("b.pgm")});
  ASSERT_EQ(a.status, kExitOk) << a.err;
  ASSERT_EQ(b.status, kExitOk) << b.err;
  EXPECT_EQ(a.summary().at("bytes"), b.summary().at("bytes"));
  EXPECT_EQ(read_file(path("a.pgm")), read_file(path("b.pgm")));
  EXPECT_EQ(read_pnm(path("a.pgm")).shape(), (Shape{1, 32, 32}));
}

TEST_F(CliTest, RawLatentOutput) {
  ASSERT_EQ(run({"encode", "--synthetic", "1x4x8", "-o", path("l.ctc")}).status, kExitOk);
  ASSERT_EQ(run({"decode", "-i", path("l.ctc"), "-o", path("l.f64")}).status, kExitOk);
  EXPECT_EQ(fs::file_size(path("l.f64")), 8u * 32u);
}

TEST_F(CliTest, UsageErrors) {
  EXPECT_EQ(run({}).status, kExitUsage);
  EXPECT_EQ(run({"bogus"}).status, kExitUsage);
  EXPECT_EQ(run({"encode", "--synthetic", "2x16"}).status, kExitUsage);
  EXPECT_EQ(run({"encode", "-o", path("x")}).status, kExitUsage);
  EXPECT_EQ(run({"encode", "--synthetic", "1x8x8", "--synthetic-image", "1x8x8", "-o", path("x")}).status,
            kExitUsage);
  EXPECT_EQ(run({"decode", "-i", path("missing")}).status, kExitUsage);
  EXPECT_EQ(run({"sweep", "--synthetic", "1x8x8", "--budgets", "0"}).status, kExitUsage);
  EXPECT_EQ(run({"train-crr", "--synthetic", "1x8x8"}).status, kExitUsage);
  const CliRun r = run({"decode", "-i", path("missing"), "--budget", "L-2"});
  EXPECT_EQ(r.err.rfind("error: ", 0), 0u);
}

TEST_F(CliTest, DataErrors) {
  write_file(path("junk.ctc"), std::vector<std::uint8_t>{'n', 'o', 'p', 'e'});
  EXPECT_EQ(run({"decode", "-i", path("junk.ctc")}).status, kExitData);
  EXPECT_EQ(run({"encode", "--synthetic", "1x8x8", "--models", path("none"), "-o", path("x")}).status,
            kExitData);
}

TEST_F(CliTest, TrainedModelsBindStreams) {
  std::ofstream(path("quick.cfg")) << "crr_epochs=1\ncrr_hidden=4\ncdr_steps=4\ncdr_hidden=4\n";
  const std::vector<std::string> common = {"--config", path("quick.cfg"), "--synthetic", "2x16x16",
                                           "--assets", "3"};
  auto with = [&](std::vector<std::string> head, const std::string& models) {
    head.insert(head.end(), common.begin(), common.end());
    head.push_back("--models");
    head.push_back(models);
    return head;
  };
  ASSERT_EQ(run(with({"train-crr"}, path("m1"))).status, kExitOk);
  ASSERT_EQ(run(with({"train-cdr"}, path("m1"))).status, kExitOk);
  EXPECT_TRUE(fs::exists(path("m1/crr_0.ctcm")));
  EXPECT_TRUE(fs::exists(path("m1/cdr_2.ctcm")));
  const CliRun enc = run({"encode", "--synthetic", "2x16x16", "--seed", "9", "--models", path("m1"),
                       "-o", path("m.ctc")});
  ASSERT_EQ(enc.status, kExitOk) << enc.err;
  EXPECT_NE(enc.summary().at("checksum"), std::string(16, '0'));

  EXPECT_EQ(run({"decode", "-i", path("m.ctc"), "--models", path("m1")}).status, kExitOk);
  EXPECT_EQ(run({"decode", "-i", path("m.ctc"), "--models", path("m1"), "--no-cdr"}).status, kExitOk);
  EXPECT_EQ(run({"decode", "-i", path("m.ctc")}).status, kExitModelMismatch);

  ModelSet other = load_models(path("m1"));
  other.cdr.slots[0]->net().parameters()[0] += 0.5;
  save_models(other, path("m2"));
  EXPECT_EQ(run({"decode", "-i", path("m.ctc"), "--models", path("m2")}).status, kExitModelMismatch);
}

TEST_F(CliTest, SweepCsvIsDeterministic) {
  const std::vector<std::string> args = {"sweep", "--synthetic-image", "1x32x32", "--budgets", "6",
                                         "-o", path("a.csv")};
  ASSERT_EQ(run(args).status, kExitOk);
  auto again = args;
  again.back() = path("b.csv");
  ASSERT_EQ(run(again).status, kExitOk);
  EXPECT_EQ(read_file(path("a.csv")), read_file(path("b.csv")));
}

}  // namespace
}  // namespace ctc
