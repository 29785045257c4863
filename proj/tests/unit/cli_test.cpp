#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "builders.hpp"
#include "ocsq/model_io.hpp"

using namespace ocsq;
using namespace ocsq::testing;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("ocsq_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  Outcome run(const std::string& args) {
    const fs::path out = dir_ / "stdout", err = dir_ / "stderr";
    const std::string cmd = std::string("\"") + OCSQ_CLI_PATH + "\" " + args + " >\"" + out.string() + "\" 2>\"" + err.string() + "\"";
    const int status = std::system(cmd.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out), slurp(err)};
  }

  std::string model_args(const char* stem) {
    return "--model \"" + fixture((std::string(stem) + ".qnt").c_str()).string() + "\" --data \"" +
           fixture((std::string(stem) + "_data.qnt").c_str()).string() + "\"";
  }

  fs::path dir_;
};

const char* kHeader = "model,target,bits,clip_method,ocs_ratio,qa,accuracy_or_mse,rel_weight_size,rel_act_size\n";

}  // namespace

TEST_F(Cli, QuantizePrintsOneRow) {
  const Outcome o = run("quantize " + model_args("mlp") + " --wbits 6 --abits float --clip-w mse");
  ASSERT_EQ(o.code, 0) << o.err;
  EXPECT_EQ(o.out.rfind(kHeader, 0), 0u);
  EXPECT_NE(o.out.find("\nmlp,weights,6,mse,0,true,"), std::string::npos) << o.out;
}

TEST_F(Cli, QuantizeWritesRequestedFiles) {
  const fs::path csv = dir_ / "r.csv", model = dir_ / "m.qnt", plan = dir_ / "p.json";
  const Outcome o = run("quantize " + model_args("outlier") + " --wbits 6 --ocs-target weights --ocs-ratio 0.05 --out \"" +
                        csv.string() + "\" --save-model \"" + model.string() + "\" --save-plan \"" + plan.string() +
                        "\" --name fixture");
  ASSERT_EQ(o.code, 0) << o.err;
  EXPECT_TRUE(o.out.empty());
  const std::string report = slurp(csv);
  EXPECT_NE(report.find("\nfixture,weights,6,none,0.05,true,"), std::string::npos) << report;
  EXPECT_EQ(load_split_plan(plan).records.size(), 14u);
  EXPECT_EQ(load_model(model).layers().size(), load_model(fixture("outlier.qnt")).layers().size());
}

TEST_F(Cli, SweepEmitsEveryRow) {
  const Outcome o = run("sweep " + model_args("mlp") + " --bits 6,4 --clips none,mse --ratios 0,0.1 --threads 1");
  ASSERT_EQ(o.code, 0) << o.err;
  const auto lines = std::count(o.out.begin(), o.out.end(), '\n');
  EXPECT_EQ(lines, 1 + 8 + 2);
  EXPECT_NE(o.out.find(",best:"), std::string::npos);
}

TEST_F(Cli, ProfileAndInspect) {
  const Outcome p = run("profile " + model_args("cnn") + " --profile-samples 16");
  ASSERT_EQ(p.code, 0) << p.err;
  EXPECT_EQ(p.out.rfind("point,layer,count,", 0), 0u);
  const Outcome i = run("inspect --model \"" + fixture("cnn.qnt").string() + "\"");
  ASSERT_EQ(i.code, 0) << i.err;
  EXPECT_NE(i.out.find("conv2d"), std::string::npos);
  EXPECT_NE(i.out.find("batchnorm"), std::string::npos);
}

TEST_F(Cli, UsageErrorsExitWithTwo) {
  EXPECT_EQ(run("").code, 2);
  EXPECT_EQ(run("quantize --data x").code, 2);
  EXPECT_EQ(run("quantize " + model_args("mlp") + " --wbits 1").code, 2);
  EXPECT_EQ(run("quantize " + model_args("mlp") + " --wbits eight").code, 2);
  EXPECT_EQ(run("quantize " + model_args("mlp") + " --ocs-ratio 2").code, 2);
  EXPECT_EQ(run("quantize " + model_args("mlp") + " --clip-w best").code, 2);
  EXPECT_EQ(run("quantize " + model_args("mlp") + " --oracle").code, 2);
  const Outcome o = run("profile " + model_args("mlp") + " --abits 40");
  EXPECT_EQ(o.code, 2);
  EXPECT_FALSE(o.err.empty());
}

TEST_F(Cli, RuntimeErrorsExitWithOne) {
  const fs::path bogus = dir_ / "bogus.qnt";
  std::ofstream(bogus) << "not a container";
  const Outcome o = run("inspect --model \"" + bogus.string() + "\"");
  EXPECT_EQ(o.code, 1);
  EXPECT_NE(o.err.find("NUL"), std::string::npos) << o.err;
  const std::string mismatch = "quantize --model \"" + fixture("cnn.qnt").string() + "\" --data \"" +
                               fixture("oracle_data.qnt").string() + "\"";
  EXPECT_EQ(run(mismatch).code, 1);
  EXPECT_EQ(run("quantize " + model_args("mlp") + " --out /nonexistent-dir/r.csv").code, 1);
}
