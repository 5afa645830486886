#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <unistd.h>

#include "nntrace/cli/commands.hpp"
#include "test_util.hpp"

using namespace nntrace;
using nntrace::testing::read_file;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = cli::run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("nntrace_cli_" + std::to_string(::getpid()) + "_" +
            ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  std::string train_iris(const std::string& trace_name, int epochs = 3) {
    const auto r = run({"train", "--dataset", "iris", "--layers", "8", "--activation", "sigmoid", "--lr", "0.5",
                        "--epochs", std::to_string(epochs), "--seed", "7", "--out-trace", path(trace_name)});
    EXPECT_EQ(r.code, 0) << r.err;
    return path(trace_name);
  }

  fs::path dir_;
};

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) out.push_back(line);
  return out;
}

void write_lines(const std::string& path, const std::vector<std::string>& lines) {
  std::ofstream out(path, std::ios::binary);
  for (const auto& l : lines) out << l << '\n';
}

}  // namespace

TEST_F(CliTest, TrainWritesTraceAndMetrics) {
  const auto r = run({"train", "--dataset", "iris", "--layers", "8", "--activation", "sigmoid", "--lr", "0.5",
                      "--epochs", "300", "--seed", "7", "--out-trace", path("t.jsonl"), "--out-metrics",
                      path("m.csv")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("final: loss"), std::string::npos);
  const auto metrics = lines_of(read_file(path("m.csv")));
  ASSERT_EQ(metrics.size(), 301u);
  EXPECT_EQ(metrics[0], "epoch,loss,accuracy,val_loss,val_accuracy");
  EXPECT_EQ(metrics[1].rfind("0,", 0), 0u);
  EXPECT_EQ(metrics[300].rfind("299,", 0), 0u);
  EXPECT_EQ(lines_of(read_file(path("t.jsonl"))).size(), 300u * 12);
}

TEST_F(CliTest, TrainIsDeterministic) {
  const auto a = read_file(train_iris("a.jsonl", 5));
  const auto b = read_file(train_iris("b.jsonl", 5));
  EXPECT_FALSE(a.empty());
  EXPECT_EQ(a, b);
}

TEST_F(CliTest, TrainMatchesSessionTrace) {
  const auto file = read_file(train_iris("t.jsonl", 4));
  session::RunSpec spec;
  spec.hidden_layers = {8};
  spec.learning_rate = 0.5;
  spec.epochs = 4;
  spec.seed = 7;
  const auto ds = session::prepare_dataset(data::builtin_iris(), spec);
  session::Session s("x", ds, session::make_config(ds, spec));
  s.control(session::Command::Play);
  s.run();
  std::ostringstream expected;
  trace::write_trace(expected, s.events_from(0));
  EXPECT_EQ(file, expected.str());
}

TEST_F(CliTest, RegressionMetricsLeaveAccuracyEmpty) {
  const auto r = run({"train", "--dataset", "diabetes", "--layers", "4", "--lr", "0.1", "--epochs", "2",
                      "--out-metrics", path("m.csv")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto metrics = lines_of(read_file(path("m.csv")));
  ASSERT_EQ(metrics.size(), 3u);
  EXPECT_NE(metrics[1].find(",,"), std::string::npos);
}

TEST_F(CliTest, ConfigErrorsExitTwo) {
  EXPECT_EQ(run({"train", "--dataset", "iris", "--lr", "0"}).code, 2);
  EXPECT_EQ(run({"train", "--dataset", "iris", "--epochs", "0"}).code, 2);
  EXPECT_EQ(run({"train", "--dataset", "iris", "--layers", "8,x"}).code, 2);
  EXPECT_EQ(run({"train", "--dataset", "iris", "--layers", "1,1,1,1,1,1,1"}).code, 2);
  EXPECT_EQ(run({"train", "--dataset", "iris", "--activation", "tanh"}).code, 2);
  EXPECT_EQ(run({"train", "--dataset", "iris", "--val-fraction", "1.0"}).code, 2);
  EXPECT_EQ(run({"train", "--dataset", "iris", "--bogus"}).code, 2);
  EXPECT_EQ(run({}).code, 2);
  const auto lr = run({"train", "--dataset", "iris", "--lr", "0"});
  EXPECT_NE(lr.err.find("learning rate"), std::string::npos);
}

TEST_F(CliTest, DivergenceExitsTwo) {
  const auto r = run({"train", "--dataset", "diabetes", "--layers", "32", "--activation", "relu", "--lr", "10",
                      "--epochs", "200", "--out-trace", path("div.jsonl")});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("diverged"), std::string::npos);
  EXPECT_EQ(run({"validate", path("div.jsonl")}).code, 0);
}

TEST_F(CliTest, DataErrorsExitThree) {
  EXPECT_EQ(run({"train", "--dataset", path("missing.csv")}).code, 3);
  const auto r = run({"train", "--dataset", std::string(NNTRACE_TEST_DATA_DIR) + "/ragged.csv"});
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.err.find("row 6"), std::string::npos) << r.err;
}

TEST_F(CliTest, ValidateAcceptsTrainOutput) {
  const auto t = train_iris("t.jsonl", 3);
  const auto structural = run({"validate", t});
  EXPECT_EQ(structural.code, 0) << structural.out << structural.err;
  EXPECT_NE(structural.out.find("replay: skipped"), std::string::npos);
  const auto replayed = run({"validate", t, "--dataset", "iris", "--seed", "7"});
  EXPECT_EQ(replayed.code, 0) << replayed.out << replayed.err;
  EXPECT_NE(replayed.out.find("reproduced"), std::string::npos);
}

TEST_F(CliTest, ValidateReportsCorruptedUpdate) {
  auto lines = lines_of(read_file(train_iris("t.jsonl", 2)));
  for (auto& line : lines) {
    auto j = trace::Json::parse(line);
    if (j["type"] == "WEIGHTS_UPDATED") {
      j["w_post"][0][0] = j["w_post"][0][0].get<double>() + 1e-3;
      line = j.dump();
      break;
    }
  }
  write_lines(path("bad.jsonl"), lines);
  const auto r = run({"validate", path("bad.jsonl")});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.out.find("update-algebra"), std::string::npos) << r.out;
}

TEST_F(CliTest, ValidateReportsSwappedUpdate) {
  auto lines = lines_of(read_file(train_iris("t.jsonl", 1)));
  // BACKWARD_PULSE into 2 is line 7, its update line 8: put the update first
  std::swap(lines[7], lines[8]);
  for (std::size_t i = 7; i <= 8; ++i) {
    auto j = trace::Json::parse(lines[i]);
    j["seq"] = i;
    lines[i] = j.dump();
  }
  write_lines(path("swapped.jsonl"), lines);
  const auto r = run({"validate", path("swapped.jsonl")});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.out.find("update-timing"), std::string::npos) << r.out;
}

TEST_F(CliTest, ValidateReplayCatchesWrongDataset) {
  const auto t = train_iris("t.jsonl", 1);
  const auto r = run({"validate", t, "--dataset", "iris", "--seed", "8"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.out.find("replay"), std::string::npos) << r.out;
}

TEST_F(CliTest, ValidateTruncatedFileExitsThree) {
  auto text = read_file(train_iris("t.jsonl", 1));
  text.resize(text.size() - 40);
  std::ofstream(path("cut.jsonl"), std::ios::binary) << text;
  const auto r = run({"validate", path("cut.jsonl")});
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.err.find("line 12"), std::string::npos) << r.err;
  EXPECT_EQ(run({"validate", path("nope.jsonl")}).code, 3);
}

TEST_F(CliTest, Inspect) {
  const auto iris = run({"inspect", "iris"});
  EXPECT_EQ(iris.code, 0);
  EXPECT_NE(iris.out.find("samples: 150, task: classification, classes: 3"), std::string::npos) << iris.out;
  const auto diabetes = run({"inspect", "diabetes"});
  EXPECT_EQ(diabetes.code, 0);
  EXPECT_NE(diabetes.out.find("task: regression, features: 6"), std::string::npos) << diabetes.out;
  const auto bad = run({"inspect", std::string(NNTRACE_TEST_DATA_DIR) + "/nonnumeric_feature.csv"});
  EXPECT_EQ(bad.code, 3);
  EXPECT_NE(bad.err.find("color"), std::string::npos) << bad.err;
  EXPECT_NE(bad.err.find("row 5"), std::string::npos) << bad.err;
}

TEST_F(CliTest, PredictArityAndProbabilities) {
  EXPECT_EQ(run({"predict", "--dataset", "iris", "--epochs", "2", "--inputs", "5.1,3.5,1.4"}).code, 2);
  EXPECT_EQ(run({"predict", "--dataset", "iris", "--epochs", "2", "--inputs", "5.1,abc,1.4,0.2"}).code, 2);
  const auto r = run({"predict", "--dataset", "iris", "--epochs", "20", "--inputs", "5.1,3.5,1.4,0.2"});
  ASSERT_EQ(r.code, 0) << r.err;
  // "probabilities: setosa=..., versicolor=..., virginica=..."
  double sum = 0.0;
  for (std::size_t pos = r.out.find('='); pos != std::string::npos; pos = r.out.find('=', pos + 1))
    sum += std::stod(r.out.substr(pos + 1));
  EXPECT_NEAR(sum, 1.0, 1e-9);
  EXPECT_NE(r.out.find("label: "), std::string::npos);
}

TEST_F(CliTest, PredictRegressionPrintsValue) {
  const auto r = run({"predict", "--dataset", "diabetes", "--layers", "4", "--lr", "0.1", "--epochs", "5",
                      "--inputs", "50,25,90,180,4.5,90"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("value: "), std::string::npos);
}

TEST_F(CliTest, PredictFromTraceMatchesEpochZeroOutput) {
  const auto t = train_iris("t.jsonl", 2);
  const auto events = cli::cli_detail::load_trace(t);
  const auto& samples = events[5].as<trace::OutputProduced>().samples;
  const auto ds = data::split(data::builtin_iris(), 0.2, 7);
  for (std::size_t k : {std::size_t{0}, std::size_t{17}, std::size_t{119}}) {
    const auto raw = ds.raw.row(ds.split.train[k]);
    std::string inputs;
    for (double v : raw) inputs += (inputs.empty() ? "" : ",") + cli::cli_detail::fmt(v);
    const auto r = run({"predict", "--dataset", "iris", "--seed", "7", "--trace", t, "--at-epoch", "0", "--inputs", inputs});
    ASSERT_EQ(r.code, 0) << r.err;
    std::vector<double> printed;
    for (std::size_t pos = r.out.find('='); pos != std::string::npos; pos = r.out.find('=', pos + 1))
      printed.push_back(std::stod(r.out.substr(pos + 1)));
    ASSERT_EQ(printed.size(), 3u);
    for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(printed[c], samples[k][c], 1e-12);
  }
  EXPECT_EQ(run({"predict", "--dataset", "iris", "--at-epoch", "0", "--inputs", "1,2,3,4"}).code, 2);
}
