#include <gtest/gtest.h>

#include <sstream>

#include "nntrace/data/builtin.hpp"
#include "nntrace/trace/codec.hpp"
#include "nntrace/trace/edge_weights.hpp"
#include "nntrace/trace/epoch.hpp"
#include "nntrace/trace/replay.hpp"
#include "nntrace/trace/validate.hpp"
#include "test_util.hpp"

using namespace nntrace;
using namespace nntrace::trace;

namespace {

NetworkConfig iris_config(double lr = 0.5) {
  NetworkConfig c;
  c.layer_sizes = {4, 8, 3};
  c.activation = ActivationKind::Sigmoid;
  c.learning_rate = lr;
  c.epochs = 5;
  c.task = TaskKind::Classification;
  c.seed = 7;
  return c;
}

std::vector<TrainingEvent> run_epochs(const NetworkConfig& c, const data::Dataset& ds, int epochs) {
  const Batch train = train_batch(ds);
  const Batch val = val_batch(ds);
  auto params = init_params(c, c.seed);
  std::vector<TrainingEvent> all;
  for (int e = 0; e < epochs; ++e) {
    auto r = run_epoch(params, c, train, val.empty() ? nullptr : &val, e, all.size());
    all.insert(all.end(), r.events.begin(), r.events.end());
    params = r.params;
  }
  return all;
}

void resequence(std::vector<TrainingEvent>& events) {
  for (std::size_t i = 0; i < events.size(); ++i) events[i].seq = i;
}

}  // namespace

TEST(RunEpoch, GrammarForTwoWeightLayers) {
  const auto ds = data::builtin_iris();
  const auto c = iris_config();
  const auto r = run_epoch(init_params(c, 7), c, train_batch(ds));
  ASSERT_EQ(r.events.size(), 12u);
  const std::vector<std::string_view> expected{
      "EPOCH_START",    "FORWARD_PULSE",   "ACTIVATIONS_COMPUTED", "FORWARD_PULSE",
      "ACTIVATIONS_COMPUTED", "OUTPUT_PRODUCED", "LOSS_COMPUTED", "BACKWARD_PULSE",
      "WEIGHTS_UPDATED", "BACKWARD_PULSE",  "WEIGHTS_UPDATED",      "EPOCH_END"};
  for (std::size_t i = 0; i < 12; ++i) {
    EXPECT_EQ(type_name(r.events[i]), expected[i]) << i;
    EXPECT_EQ(r.events[i].seq, i);
  }
  EXPECT_EQ(r.events[7].as<BackwardPulse>().into_layer, 2u);
  EXPECT_EQ(r.events[8].as<WeightsUpdated>().layer, 2u);
  EXPECT_EQ(r.events[9].as<BackwardPulse>().into_layer, 1u);
  EXPECT_FALSE(validate_trace(r.events).has_value());
}

TEST(RunEpoch, ZeroLearningRateLeavesWeights) {
  const auto ds = data::builtin_iris();
  auto c = iris_config(0.0);
  const auto r = run_epoch(init_params(iris_config(), 7), c, train_batch(ds));
  for (const auto& e : r.events)
    if (e.is<WeightsUpdated>()) {
      EXPECT_EQ(e.as<WeightsUpdated>().w_post, e.as<WeightsUpdated>().w_pre);
      EXPECT_EQ(e.as<WeightsUpdated>().b_post, e.as<WeightsUpdated>().b_pre);
    }
}

TEST(RunEpoch, LossMatchesIndependentRecomputation) {
  const auto ds = data::split(data::builtin_iris(), 0.2, 7);
  const auto c = iris_config();
  const auto events = run_epochs(c, ds, 1);
  // Rebuild parameters from the snapshots and recompute the mean loss row by row.
  NetworkParams p;
  p.weights.resize(2);
  p.biases.resize(2);
  for (const auto& e : events)
    if (e.is<WeightsUpdated>()) {
      const auto& u = e.as<WeightsUpdated>();
      p.weights[u.layer - 1] = u.w_pre;
      p.biases[u.layer - 1] = u.b_pre;
    }
  double total = 0.0;
  for (auto r : ds.split.train) total += loss(c.task, forward(p, ds.x(r), c).output(), ds.y(r));
  const double expected = total / static_cast<double>(ds.split.train.size());
  EXPECT_NEAR(events[6].as<LossComputed>().loss, expected, 1e-12);
  EXPECT_EQ(events.back().as<EpochEnd>().metrics.loss, events[6].as<LossComputed>().loss);
  EXPECT_TRUE(events.back().as<EpochEnd>().metrics.val_loss.has_value());
}

TEST(RunEpoch, EmptyTrainingSplitThrows) {
  const auto c = iris_config();
  EXPECT_THROW(run_epoch(init_params(c, 1), c, Batch{}), DataError);
}

TEST(RunEpoch, RegressionHasNoAccuracy) {
  const auto ds = data::builtin_diabetes();
  NetworkConfig c;
  c.layer_sizes = {6, 4, 1};
  c.task = TaskKind::Regression;
  c.learning_rate = 0.1;
  const auto r = run_epoch(init_params(c, 3), c, train_batch(ds));
  EXPECT_FALSE(r.metrics.accuracy.has_value());
  EXPECT_FALSE(r.metrics.val_loss.has_value());
  EXPECT_FALSE(validate_trace(r.events).has_value());
}

TEST(ValidateTrace, AcceptsMultiEpochTrace) {
  const auto events = run_epochs(iris_config(), data::builtin_iris(), 4);
  EXPECT_EQ(events.size(), 48u);
  EXPECT_FALSE(validate_trace(events).has_value());
}

TEST(ValidateTrace, UpdateBeforeBackwardPulseIsTimingViolation) {
  auto events = run_epochs(iris_config(), data::builtin_iris(), 2);
  std::swap(events[12 + 7], events[12 + 8]);  // second epoch, layer 2
  resequence(events);
  const auto v = validate_trace(events);
  ASSERT_TRUE(v.has_value());
  EXPECT_EQ(v->rule, Rule::UpdateTiming);
  EXPECT_EQ(v->seq, 19u);

  auto first_layer = run_epochs(iris_config(), data::builtin_iris(), 1);
  std::swap(first_layer[9], first_layer[10]);
  resequence(first_layer);
  ASSERT_TRUE(validate_trace(first_layer).has_value());
  EXPECT_EQ(validate_trace(first_layer)->rule, Rule::UpdateTiming);
}

TEST(ValidateTrace, TamperedPostStateIsAlgebraViolation) {
  auto events = run_epochs(iris_config(), data::builtin_iris(), 1);
  events[10].as<WeightsUpdated>().w_post(0, 0) += 1e-3;
  const auto v = validate_trace(events);
  ASSERT_TRUE(v.has_value());
  EXPECT_EQ(v->rule, Rule::UpdateAlgebra);
  EXPECT_EQ(v->seq, 10u);
  EXPECT_NE(v->describe().find("update-algebra"), std::string::npos);
}

TEST(ValidateTrace, OtherViolations) {
  const auto base = run_epochs(iris_config(), data::builtin_iris(), 2);

  auto gap = base;
  gap[5].seq = 50;
  EXPECT_EQ(validate_trace(gap)->rule, Rule::SeqOrder);

  auto truncated = base;
  truncated.pop_back();
  EXPECT_EQ(validate_trace(truncated)->rule, Rule::Grammar);

  auto missing_loss = base;
  missing_loss.erase(missing_loss.begin() + 6);
  resequence(missing_loss);
  EXPECT_EQ(validate_trace(missing_loss)->rule, Rule::Grammar);

  auto wrong_epoch = base;
  for (std::size_t i = 12; i < 24; ++i) wrong_epoch[i].epoch = 5;
  EXPECT_EQ(validate_trace(wrong_epoch)->rule, Rule::EpochOrder);

  auto discontinuous = base;
  auto& u = discontinuous[12 + 8].as<WeightsUpdated>();
  u.w_pre(0, 0) += 0.5;
  u.w_post = u.w_pre;
  for (std::size_t i = 0; i < u.w_post.size(); ++i)
    u.w_post.flat()[i] = u.w_pre.flat()[i] - u.learning_rate * u.grad_w.flat()[i];
  EXPECT_EQ(validate_trace(discontinuous)->rule, Rule::SnapshotContinuity);

  EXPECT_FALSE(validate_trace({}).has_value());
}

TEST(Codec, RoundTripPreservesEveryEvent) {
  auto ds = data::split(data::builtin_iris(), 0.2, 1);
  for (const auto& e : run_epochs(iris_config(), ds, 2)) {
    const auto line = serialize_event(e);
    EXPECT_EQ(line.find('\n'), std::string::npos);
    EXPECT_EQ(deserialize_event(line), e) << line.substr(0, 80);
  }
}

TEST(Codec, ExplicitZeroLossAndFieldOrder) {
  const TrainingEvent e{3, 1, LossComputed{0.0}};
  const auto line = serialize_event(e);
  EXPECT_EQ(line, R"({"type":"LOSS_COMPUTED","seq":3,"epoch":1,"loss":0.0})");
}

TEST(Codec, ParseErrors) {
  EXPECT_THROW(deserialize_event(R"({"type":"NOT_A_THING","seq":0,"epoch":0})"), ParseError);
  EXPECT_THROW(deserialize_event(R"({"type":"LOSS_COMPUTED","seq":0,"epoch":0})"), ParseError);
  EXPECT_THROW(deserialize_event(R"({"type":"LOSS_COMPUTED","seq":-1,"epoch":0,"loss":1})"), ParseError);
  EXPECT_THROW(deserialize_event("{not json"), ParseError);
  try {
    std::istringstream in("{\"type\":\"EPOCH_START\",\"seq\":0,\"epoch\":0}\n{\"type\":\"BOGUS\"}\n");
    read_trace(in);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
}

TEST(Codec, TruncatedFileIsParseError) {
  std::ostringstream out;
  write_trace(out, run_epochs(iris_config(), data::builtin_iris(), 1));
  std::string text = out.str();
  std::istringstream whole(text);
  EXPECT_EQ(read_trace(whole).size(), 12u);
  std::istringstream cut(text.substr(0, text.size() - 20));
  EXPECT_THROW(read_trace(cut), ParseError);
}

TEST(Codec, SerializationIsDeterministic) {
  const auto a = run_epochs(iris_config(), data::builtin_iris(), 3);
  const auto b = run_epochs(iris_config(), data::builtin_iris(), 3);
  std::ostringstream sa, sb;
  write_trace(sa, a);
  write_trace(sb, b);
  EXPECT_EQ(sa.str(), sb.str());
}

TEST(Replay, ReproducesEveryPayload) {
  const auto ds = data::split(data::builtin_iris(), 0.2, 7);
  const auto c = iris_config();
  const auto events = run_epochs(c, ds, 5);
  const Batch train = train_batch(ds), val = val_batch(ds);
  EXPECT_FALSE(replay_trace(events, c, train, &val).has_value());

  auto tampered = events;
  tampered[12 + 6].as<LossComputed>().loss += 1e-9;
  const auto m = replay_trace(tampered, c, train, &val);
  ASSERT_TRUE(m.has_value());
  EXPECT_EQ(m->seq, 18u);
}

TEST(EdgeRenderWeights, Cases) {
  NetworkParams p;
  p.weights = {Matrix{{1.0, -2.0, 4.0}}};
  p.biases = {{0.0}};
  const auto r = edge_render_weights(p);
  EXPECT_EQ(r[0].magnitude, (Matrix{{0.25, 0.5, 1.0}}));
  EXPECT_EQ(r[0].sign, (Matrix{{1.0, -1.0, 1.0}}));

  p.weights = {Matrix{{-3.0, 3.0}}, Matrix{{3.0}, {-3.0}}};
  p.biases = {{0.0}, {0.0, 0.0}};
  for (const auto& layer : edge_render_weights(p))
    for (double v : layer.magnitude.flat()) EXPECT_EQ(v, 1.0);

  p.weights = {Matrix{{0.0, 0.0}}};
  p.biases = {{0.0}};
  const auto zero = edge_render_weights(p);
  for (double v : zero[0].magnitude.flat()) EXPECT_EQ(v, 0.0);
  for (double v : zero[0].sign.flat()) EXPECT_EQ(v, 0.0);
}

// tests/data/iris_reference.csv comes from tools/oracle/reference_runs.py,
// an independent numpy implementation (hidden [8], sigmoid, lr 0.5, seed 7).
TEST(ReferenceRun, IrisMatchesIndependentOracle) {
  NetworkConfig c = iris_config();
  c.epochs = 300;
  const auto ds = data::split(data::builtin_iris(), 0.2, 7);
  const Batch train = train_batch(ds);
  const Batch val = val_batch(ds);
  std::istringstream ref(nntrace::testing::fixture("iris_reference.csv"));
  std::string line;
  std::getline(ref, line);
  auto params = init_params(c, c.seed);
  for (std::uint32_t e = 0; e < c.epochs; ++e) {
    ASSERT_TRUE(std::getline(ref, line));
    std::vector<double> row;
    std::stringstream cells(line);
    for (std::string cell; std::getline(cells, cell, ',');) row.push_back(std::stod(cell));
    auto r = run_epoch(params, c, train, &val, e, 0);
    ASSERT_NEAR(r.metrics.loss, row[1], 1e-9) << "epoch " << e;
    ASSERT_NEAR(*r.metrics.accuracy, row[2], 1e-12) << "epoch " << e;
    ASSERT_NEAR(*r.metrics.val_loss, row[3], 1e-9) << "epoch " << e;
    ASSERT_NEAR(*r.metrics.val_accuracy, row[4], 1e-12) << "epoch " << e;
    params = std::move(r.params);
  }
}
