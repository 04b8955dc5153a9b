#include <gtest/gtest.h>

#include "cql/kv_config.hpp"
#include "test_support.hpp"

using namespace cql::testing;
namespace fs = std::filesystem;

namespace {

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

CommandResult cqlsepsis(const std::string& args) { return run_command(q(cli()) + " " + args); }

}  // namespace

TEST(Cli, NoSubcommandIsUsageError) {
    const auto r = cqlsepsis("");
    EXPECT_EQ(r.exit_code, 2) << r.output;
}

TEST(Cli, UnknownFlagIsUsageError) {
    const auto r = cqlsepsis("gen-data --out /tmp/x --bogus 1");
    EXPECT_EQ(r.exit_code, 2) << r.output;
    EXPECT_NE(r.output.find("error: usage:"), std::string::npos);
}

TEST(Cli, MissingRequiredOptionIsUsageError) {
    EXPECT_EQ(cqlsepsis("train --data x.csv").exit_code, 2);
    EXPECT_EQ(cqlsepsis("gen-data --patients 0 --out /tmp/x").exit_code, 2);
}

TEST(Cli, HelpExitsZero) {
    const auto r = cqlsepsis("--help");
    EXPECT_EQ(r.exit_code, 0);
    EXPECT_NE(r.output.find("gen-data"), std::string::npos);
}

TEST(Cli, MissingFileIsIoError) {
    TempDir dir("cli_io");
    const auto r = cqlsepsis("train --data " + q(dir / "nope.csv") + " --out " + q(dir / "run"));
    EXPECT_EQ(r.exit_code, 1) << r.output;
    EXPECT_NE(r.output.find("error: io:"), std::string::npos) << r.output;
}

TEST(Cli, BadConfigIsReportedWithKind) {
    TempDir dir("cli_cfg");
    cql::write_text_file(dir / "bad.cfg", "alpha = -1\n");
    cql::write_text_file(dir / "typo.cfg", "alpah = 0.1\n");
    cql::write_text_file(dir / "data.csv", "patient_id\n");
    auto r = cqlsepsis("train --config " + q(dir / "bad.cfg") + " --data " + q(dir / "data.csv") +
                       " --out " + q(dir / "run"));
    EXPECT_EQ(r.exit_code, 1) << r.output;
    EXPECT_NE(r.output.find("error: config:"), std::string::npos) << r.output;
    r = cqlsepsis("train --config " + q(dir / "typo.cfg") + " --data " + q(dir / "data.csv") +
                  " --out " + q(dir / "run"));
    EXPECT_EQ(r.exit_code, 1) << r.output;
    EXPECT_NE(r.output.find("alpah"), std::string::npos) << r.output;
}

TEST(Cli, GenDataIsDeterministic) {
    TempDir dir("cli_gen");
    for (const char* name : {"a", "b"}) {
        const auto r = cqlsepsis("gen-data --seed 3 --patients 60 --out " + q(dir / name));
        ASSERT_EQ(r.exit_code, 0) << r.output;
    }
    for (const char* f : {"train.csv", "val.csv", "test.csv", "binner.txt", "sim.cfg"}) {
        EXPECT_EQ(cql::read_text_file(dir / "a" / f), cql::read_text_file(dir / "b" / f)) << f;
    }
    ASSERT_EQ(cqlsepsis("gen-data --seed 4 --patients 60 --out " + q(dir / "c")).exit_code, 0);
    EXPECT_NE(cql::read_text_file(dir / "a" / "train.csv"),
              cql::read_text_file(dir / "c" / "train.csv"));
}

TEST(Cli, PipelineWritesEvaluationAndPlots) {
    TempDir dir("cli_pipeline");
    ASSERT_EQ(cqlsepsis("gen-data --seed 5 --patients 120 --out " + q(dir / "data")).exit_code, 0);
    cql::write_text_file(dir / "run.cfg", "total_steps = 60\nlog_every = 20\nbatch_size = 16\n");
    auto r = cqlsepsis("train --config " + q(dir / "run.cfg") + " --data " +
                       q(dir / "data" / "train.csv") + " --val " + q(dir / "data" / "val.csv") +
                       " --out " + q(dir / "run"));
    ASSERT_EQ(r.exit_code, 0) << r.output;
    EXPECT_TRUE(fs::exists(dir / "run" / "final.ckpt"));
    EXPECT_TRUE(fs::exists(dir / "run" / "metrics.csv"));

    r = cqlsepsis("eval --checkpoint " + q(dir / "run" / "final.ckpt") + " --data " +
                  q(dir / "data" / "test.csv") + " --out " + q(dir / "eval"));
    ASSERT_EQ(r.exit_code, 0) << r.output;
    std::size_t csvs = 0;
    for (const auto& e : fs::directory_iterator(dir / "eval")) csvs += e.path().extension() == ".csv";
    EXPECT_EQ(csvs, 10u);

    r = cqlsepsis("plot --out " + q(dir / "eval"));
    ASSERT_EQ(r.exit_code, 0) << r.output;
    std::size_t svgs = 0;
    for (const auto& e : fs::directory_iterator(dir / "eval")) svgs += e.path().extension() == ".svg";
    EXPECT_EQ(svgs, 10u);

    r = cqlsepsis("plot --in " + q(dir / "data") + " --out " + q(dir / "empty"));
    EXPECT_EQ(r.exit_code, 1) << r.output;
}

TEST(Cli, FitBinsWritesCutPoints) {
    TempDir dir("cli_bins");
    ASSERT_EQ(cqlsepsis("gen-data --seed 6 --patients 60 --out " + q(dir / "data")).exit_code, 0);
    const auto r = cqlsepsis("fit-bins --data " + q(dir / "data" / "train.csv") + " --out " + q(dir / "bins"));
    ASSERT_EQ(r.exit_code, 0) << r.output;
    EXPECT_EQ(cql::read_text_file(dir / "bins" / "binner.txt"),
              cql::read_text_file(dir / "data" / "binner.txt"));
}
