#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <sstream>
#include <thread>

#include "nntrace/data/builtin.hpp"
#include "nntrace/session/session.hpp"
#include "nntrace/trace/codec.hpp"
#include "nntrace/trace/validate.hpp"

using namespace nntrace;
using namespace nntrace::session;

namespace {

NetworkConfig iris_config(std::uint32_t epochs = 3) {
  NetworkConfig c;
  c.layer_sizes = {4, 8, 3};
  c.activation = ActivationKind::Sigmoid;
  c.learning_rate = 0.5;
  c.epochs = epochs;
  c.task = TaskKind::Classification;
  c.seed = 7;
  return c;
}

std::string serialize(const std::vector<trace::TrainingEvent>& events) {
  std::ostringstream out;
  trace::write_trace(out, events);
  return out.str();
}

const data::Dataset& iris() {
  static const auto ds = data::split(data::builtin_iris(), 0.2, 7);
  return ds;
}

}  // namespace

TEST(CreateSession, ValidIrisSessionIsIdle) {
  const auto s = create_session(iris(), iris_config());
  EXPECT_EQ(s->status(), SessionStatus::Idle);
  EXPECT_EQ(s->current_epoch(), 0u);
  EXPECT_TRUE(s->metrics_history().empty());
  EXPECT_EQ(s->params(), init_params(iris_config(), 7));
}

TEST(CreateSession, RejectsMismatchedInput) {
  auto c = iris_config();
  c.layer_sizes = {3, 8, 3};
  try {
    create_session(iris(), c);
    FAIL();
  } catch (const ConfigInvalid& e) {
    EXPECT_EQ(e.field(), "layer_sizes");
    EXPECT_NE(std::string(e.what()).find("input size ≠ feature count"), std::string::npos);
  }
}

TEST(CreateSession, RejectsRegressionWithThreeOutputs) {
  NetworkConfig c;
  c.layer_sizes = {6, 4, 3};
  c.task = TaskKind::Regression;
  c.learning_rate = 0.1;
  try {
    create_session(data::builtin_diabetes(), c);
    FAIL();
  } catch (const ConfigInvalid& e) {
    EXPECT_NE(std::string(e.what()).find("regression requires output size 1"), std::string::npos);
  }
}

TEST(ValidateConfig, Bounds) {
  auto c = iris_config();
  EXPECT_TRUE(validate_config(iris(), c).empty());
  c.learning_rate = 0.0;
  EXPECT_EQ(validate_config(iris(), c).size(), 1u);
  c.learning_rate = 10.0;
  EXPECT_TRUE(validate_config(iris(), c).empty());
  c.learning_rate = 10.5;
  EXPECT_FALSE(validate_config(iris(), c).empty());

  c = iris_config();
  c.layer_sizes = {4, 2, 2, 2, 2, 2, 2, 2, 3};  // 7 hidden layers
  EXPECT_FALSE(validate_config(iris(), c).empty());
  c.layer_sizes = {4, 2, 2, 2, 2, 2, 2, 3};  // 6
  EXPECT_TRUE(validate_config(iris(), c).empty());
  c.layer_sizes = {4, 33, 3};
  EXPECT_FALSE(validate_config(iris(), c).empty());
  c.layer_sizes = {4, 3};
  EXPECT_TRUE(validate_config(iris(), c).empty());

  c = iris_config();
  c.epochs = 0;
  EXPECT_FALSE(validate_config(iris(), c).empty());
  c.epochs = 10001;
  EXPECT_FALSE(validate_config(iris(), c).empty());
  c = iris_config();
  c.task = TaskKind::Regression;
  EXPECT_FALSE(validate_config(iris(), c).empty());
}

TEST(Control, ExhaustiveTransitionTable) {
  using S = SessionStatus;
  using C = Command;
  const std::map<std::pair<S, C>, std::optional<S>> table{
      {{S::Idle, C::Play}, S::Running},       {{S::Idle, C::Pause}, std::nullopt},
      {{S::Idle, C::Stop}, std::nullopt},     {{S::Running, C::Play}, std::nullopt},
      {{S::Running, C::Pause}, S::Paused},    {{S::Running, C::Stop}, S::Stopped},
      {{S::Paused, C::Play}, S::Running},     {{S::Paused, C::Pause}, std::nullopt},
      {{S::Paused, C::Stop}, S::Stopped},     {{S::Completed, C::Play}, std::nullopt},
      {{S::Completed, C::Pause}, std::nullopt}, {{S::Completed, C::Stop}, std::nullopt},
      {{S::Stopped, C::Play}, std::nullopt},  {{S::Stopped, C::Pause}, std::nullopt},
      {{S::Stopped, C::Stop}, std::nullopt}};
  for (const auto& [key, want] : table) EXPECT_EQ(next_status(key.first, key.second), want);
}

TEST(Control, SessionTransitionsAndErrors) {
  auto s = create_session(iris(), iris_config());
  EXPECT_THROW(s->control(Command::Pause), StateError);
  EXPECT_EQ(s->control(Command::Play), SessionStatus::Running);
  try {
    s->control(Command::Play);
    FAIL();
  } catch (const StateError& e) {
    EXPECT_NE(std::string(e.what()).find("Running"), std::string::npos);
  }
  EXPECT_EQ(s->control(Command::Pause), SessionStatus::Paused);
  EXPECT_EQ(s->control(Command::Stop), SessionStatus::Stopped);
  const auto emitted = s->next_seq();
  EXPECT_THROW(s->advance(), StateError);
  EXPECT_THROW(s->control(Command::Play), StateError);
  EXPECT_EQ(s->next_seq(), emitted);
}

TEST(Control, RandomCommandStreamsNeverReachUndefinedState) {
  Rng rng(2024);
  for (int trial = 0; trial < 200; ++trial) {
    auto s = create_session(iris(), iris_config(2));
    for (int step = 0; step < 40; ++step) {
      const auto before = s->status();
      if (rng.below(3) == 0 && before == SessionStatus::Running) {
        s->advance();
        continue;
      }
      const auto cmd = static_cast<Command>(rng.below(3));
      const auto expected = next_status(before, cmd);
      if (expected) {
        EXPECT_EQ(s->control(cmd), *expected);
      } else {
        EXPECT_THROW(s->control(cmd), StateError);
        EXPECT_EQ(s->status(), before);
      }
    }
    EXPECT_FALSE(trace::validate_trace(s->events_from(0)).has_value() &&
                 trace::validate_trace(s->events_from(0))->rule != trace::Rule::Grammar);
  }
}

TEST(Advance, EmitsGrammarOneEventAtATime) {
  auto s = create_session(iris(), iris_config(1));
  s->control(Command::Play);
  std::vector<trace::TrainingEvent> seen;
  while (s->status() == SessionStatus::Running) {
    auto out = s->advance();
    ASSERT_EQ(out.size(), 1u);
    seen.push_back(out.front());
  }
  EXPECT_EQ(seen.size(), 12u);
  EXPECT_EQ(s->status(), SessionStatus::Completed);
  EXPECT_FALSE(trace::validate_trace(seen).has_value());
  EXPECT_THROW(s->advance(), StateError);
}

TEST(Advance, HistoryMatchesEpochEndEvents) {
  auto s = create_session(iris(), iris_config(5));
  EXPECT_TRUE(s->metrics_history().empty());
  s->control(Command::Play);
  s->run();
  const auto history = s->metrics_history();
  ASSERT_EQ(history.size(), 5u);
  std::vector<HistoryEntry> projected;
  for (const auto& e : s->events_from(0))
    if (e.is<trace::EpochEnd>()) projected.push_back({e.epoch, e.as<trace::EpochEnd>().metrics});
  EXPECT_EQ(history, projected);
  for (std::size_t i = 0; i < history.size(); ++i) EXPECT_EQ(history[i].epoch, i);
}

TEST(Advance, RetentionCapStopsSession) {
  SessionOptions opts;
  opts.max_events = 30;  // room for two 12-event epochs
  auto s = std::make_shared<Session>("cap", iris(), iris_config(10), opts);
  s->control(Command::Play);
  s->run();
  EXPECT_EQ(s->status(), SessionStatus::Stopped);
  EXPECT_EQ(s->next_seq(), 24u);
}

TEST(Advance, DivergenceStopsBeforeNonFiniteEpoch) {
  NetworkConfig c;
  c.layer_sizes = {6, 32, 1};
  c.activation = ActivationKind::ReLU;
  c.task = TaskKind::Regression;
  c.learning_rate = 10.0;
  c.epochs = 200;
  c.seed = 7;
  auto s = std::make_shared<Session>("div", data::split(data::builtin_diabetes(), 0.2, 7), c);
  s->control(Command::Play);
  s->run();
  EXPECT_EQ(s->status(), SessionStatus::Stopped);
  EXPECT_LT(s->current_epoch(), 200u);
  const auto info = s->network_info();
  EXPECT_NE(info.training.stop_reason.find("diverged"), std::string::npos);
  const auto events = s->events_from(0);
  EXPECT_EQ(events.size(), 12u * s->metrics_history().size());
  EXPECT_FALSE(trace::validate_trace(events));
  for (const auto& h : s->metrics_history()) EXPECT_TRUE(std::isfinite(h.metrics.loss));
}

TEST(Predict, PureAndNormalized) {
  auto s = create_session(iris(), iris_config(2));
  const Vector raw{5.1, 3.5, 1.4, 0.2};
  const auto a = s->predict(raw);
  const auto b = s->predict(raw);
  EXPECT_EQ(a.outputs, b.outputs);
  double sum = 0.0;
  for (double v : a.outputs) sum += v;
  EXPECT_NEAR(sum, 1.0, 1e-9);
  ASSERT_TRUE(a.label.has_value());
  EXPECT_EQ(s->next_seq(), 0u);
  EXPECT_THROW(s->predict(Vector{1, 2, 3}), ShapeError);
  EXPECT_THROW(s->predict(Vector{1, 2, 3, INFINITY}), InputError);
}

TEST(Predict, MatchesEpochZeroForwardOutput) {
  auto s = create_session(iris(), iris_config(1));
  const auto& ds = s->dataset();
  std::vector<Prediction> before;
  for (auto r : ds.split.train) {
    const auto raw = ds.raw.row(r);
    before.push_back(s->predict(Vector(raw.begin(), raw.end())));
  }
  s->control(Command::Play);
  s->run();
  for (const auto& e : s->events_from(0))
    if (e.is<trace::OutputProduced>()) {
      const auto& samples = e.as<trace::OutputProduced>().samples;
      ASSERT_EQ(samples.size(), before.size());
      for (std::size_t i = 0; i < samples.size(); ++i)
        for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(before[i].outputs[k], samples[i][k], 1e-12);
    }
}

TEST(Predict, DoesNotPerturbTrace) {
  auto plain = create_session(iris(), iris_config(2));
  plain->control(Command::Play);
  plain->run();

  auto probed = create_session(iris(), iris_config(2));
  probed->control(Command::Play);
  while (probed->status() == SessionStatus::Running) {
    probed->predict(Vector{6.0, 3.0, 4.0, 1.2});
    probed->advance();
  }
  EXPECT_EQ(serialize(plain->events_from(0)), serialize(probed->events_from(0)));
}

TEST(Predict, RegressionReportsTargetUnits) {
  NetworkConfig c;
  c.layer_sizes = {6, 4, 1};
  c.task = TaskKind::Regression;
  c.learning_rate = 0.1;
  c.epochs = 3;
  auto s = create_session(data::builtin_diabetes(), c);
  const auto p = s->predict(Vector{50, 25, 90, 180, 4.5, 90});
  ASSERT_TRUE(p.value.has_value());
  const auto& stats = *s->dataset().target_stats;
  EXPECT_NEAR(*p.value, stats.min + p.outputs[0] * (stats.max - stats.min), 1e-9);
  EXPECT_FALSE(p.label.has_value());
}

TEST(PauseFidelity, ResumeReproducesUninterruptedTrace) {
  auto reference = create_session(iris(), iris_config(3));
  reference->control(Command::Play);
  reference->run();
  const auto expected = serialize(reference->events_from(0));

  Rng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    const auto k = rng.below(36);
    auto s = create_session(iris(), iris_config(3));
    s->control(Command::Play);
    for (std::uint64_t i = 0; i < k; ++i) s->advance();
    s->control(Command::Pause);
    EXPECT_THROW(s->advance(), StateError);
    s->predict(Vector{5.0, 3.0, 1.5, 0.3});
    s->control(Command::Play);
    s->run();
    EXPECT_EQ(serialize(s->events_from(0)), expected) << "paused after " << k;
  }
}

TEST(PauseFidelity, ConcurrentPauseTakesEffectBetweenEvents) {
  auto s = create_session(iris(), iris_config(200));
  s->control(Command::Play);
  std::thread driver([&] { s->run(); });
  while (s->next_seq() < 50) std::this_thread::yield();
  s->control(Command::Pause);
  driver.join();
  EXPECT_EQ(s->status(), SessionStatus::Paused);
  const auto at_pause = s->next_seq();
  s->control(Command::Play);
  s->run();
  EXPECT_GT(s->next_seq(), at_pause);
  EXPECT_EQ(s->status(), SessionStatus::Completed);
  EXPECT_FALSE(trace::validate_trace(s->events_from(0)).has_value());
}

TEST(NeuronEquation, PrintedExample) {
  NetworkConfig c;
  c.layer_sizes = {2, 2, 2};
  c.task = TaskKind::Classification;
  NetworkParams p = init_params(c, 1);
  p.weights[1](0, 0) = 0.45;
  p.weights[1](0, 1) = 0.28;
  p.biases[1][0] = 0.16;
  const auto eq = make_equation(p, c, {"x1", "x2"}, 2, 0);
  EXPECT_EQ(eq.rendered, "o1 = softmax(0.45·h1 + 0.28·h2 + 0.16)");
  EXPECT_EQ(eq.wrapper, "softmax");
  EXPECT_EQ(eq.terms.size(), 2u);
}

TEST(NeuronEquation, ZeroWeightsAndNegatives) {
  NetworkConfig c;
  c.layer_sizes = {2, 3, 1};
  c.task = TaskKind::Regression;
  NetworkParams p = init_params(c, 1);
  for (auto& w : p.weights)
    for (double& v : w.flat()) v = 0.0;
  EXPECT_EQ(make_equation(p, c, {"x1", "x2"}, 1, 0).rendered, "h1 = sigmoid(0.00·x1 + 0.00·x2 + 0.00)");
  p.weights[1](0, 0) = -1.234;
  p.weights[1](0, 2) = -0.001;
  p.biases[1][0] = -0.5;
  EXPECT_EQ(make_equation(p, c, {"x1", "x2"}, 2, 0).rendered, "o1 = -1.23·h1 + 0.00·h2 + 0.00·h3 - 0.50");
  EXPECT_THROW(make_equation(p, c, {"x1", "x2"}, 0, 0), ShapeError);
  EXPECT_THROW(make_equation(p, c, {"x1", "x2"}, 1, 3), ShapeError);
  EXPECT_THROW(make_equation(p, c, {"x1", "x2"}, 3, 0), ShapeError);
}

TEST(NeuronEquation, LabelsForDeepNetworks) {
  NetworkConfig c;
  c.layer_sizes = {2, 3, 2, 2};
  c.activation = ActivationKind::ReLU;
  const auto p = init_params(c, 4);
  const auto eq = make_equation(p, c, {"a", "b"}, 2, 1);
  EXPECT_EQ(eq.neuron_label, "h2_2");
  EXPECT_EQ(eq.terms[0].input_label, "h1_1");
  EXPECT_EQ(eq.wrapper, "relu");
}

TEST(NeuronEquation, RenderedStringParsesBack) {
  auto s = create_session(iris(), iris_config(3));
  s->control(Command::Play);
  s->run();
  for (std::size_t layer = 1; layer <= 2; ++layer)
    for (std::size_t i = 0; i < s->config().layer_sizes[layer]; ++i) {
      const auto eq = s->neuron_equation(layer, i);
      const auto parsed = parse_equation(eq.rendered);
      EXPECT_EQ(parsed.neuron_label, eq.neuron_label);
      EXPECT_EQ(parsed.wrapper, eq.wrapper);
      ASSERT_EQ(parsed.terms.size(), eq.terms.size());
      for (std::size_t k = 0; k < eq.terms.size(); ++k) {
        EXPECT_NEAR(parsed.terms[k].coefficient, eq.terms[k].coefficient, 0.005 + 1e-12);
        EXPECT_EQ(parsed.terms[k].input_label, eq.terms[k].input_label);
      }
      EXPECT_NEAR(parsed.bias, eq.bias, 0.005 + 1e-12);
    }
  EXPECT_EQ(s->neuron_equation(1, 0).terms[0].input_label, "sepal_length");
}

TEST(NetworkInfo, Snapshot) {
  auto s = create_session(iris(), iris_config(4));
  auto info = s->network_info();
  EXPECT_EQ(info.training.status, SessionStatus::Idle);
  EXPECT_EQ(info.current_epoch, 0u);
  EXPECT_EQ(info.model.parameter_count, 67u);  // 4*8+8 + 8*3+3
  EXPECT_EQ(info.dataset.samples, 150u);
  EXPECT_EQ(info.dataset.train_samples, 120u);
  EXPECT_FALSE(info.model.latest_metrics.has_value());
  s->control(Command::Play);
  s->run();
  info = s->network_info();
  EXPECT_EQ(to_string(info.training.status), "Completed");
  EXPECT_EQ(info.current_epoch, 4u);
  EXPECT_EQ(info.training.events_emitted, 48u);
  ASSERT_TRUE(info.model.latest_metrics.has_value());
}

TEST(Session, ParamsTrackUpdatesWithinEpoch) {
  auto s = create_session(iris(), iris_config(1));
  const auto initial = s->params();
  s->control(Command::Play);
  for (int i = 0; i < 9; ++i) s->advance();  // through WEIGHTS_UPDATED for layer 2
  const auto mid = s->params();
  EXPECT_NE(mid.weights[1], initial.weights[1]);
  EXPECT_EQ(mid.weights[0], initial.weights[0]);
}
