#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "maskgil/errors.hpp"
#include "maskgil/numerics/grad_check.hpp"
#include "maskgil/training/checkpoint.hpp"
#include "maskgil/training/loss.hpp"
#include "maskgil/training/optim.hpp"
#include "maskgil/training/train.hpp"
#include "support.hpp"

using namespace maskgil;
using namespace maskgil::training;
using numerics::TensorD;
using numerics::TensorF;

TEST_CASE("synthetic task") {
  SyntheticTask t{10, 32, 4, 4, 0.0};
  CHECK(t.token(3, 1, 2) == (3 + 4 + 2) % 32);
  CHECK(t.token(31, 3, 3) == (31 + 15) % 32);
  Rng rng(1);
  CHECK(t.sample(2, rng) == t.clean(2));
  t.noise = 0.3;
  Rng a(5);
  std::size_t changed = 0, total = 0;
  for (int i = 0; i < 500; ++i) {
    const auto g = t.sample(4, a);
    const auto c = t.clean(4);
    for (std::size_t j = 0; j < 16; ++j) changed += g.indices[j] != c.indices[j];
    total += 16;
  }
  // Corruption always picks a different token, so the change rate is the noise rate.
  CHECK(static_cast<double>(changed) / total == doctest::Approx(0.3).epsilon(0.05));
  t.noise = 1.0;
  CHECK_THROWS_AS(t.validate(), ConfigError);
  CHECK(task_from_json(to_json(SyntheticTask{3, 8, 2, 5, 0.25})) == SyntheticTask{3, 8, 2, 5, 0.25});
  CHECK_THROWS_AS(task_from_json(nlohmann::ordered_json{{"nosie", 0.1}}), ConfigError);
}

TEST_CASE("training masks") {
  CHECK(mask_count(0.0, 16) == 16);
  CHECK(mask_count(1.0, 16) == 1);
  CHECK(mask_count(0.999999, 16) == 1);
  CHECK(mask_count(0.5, 256) == 182);
  Rng rng(3);
  double frac = 0.0;
  const int draws = 10000;
  for (int i = 0; i < draws; ++i) {
    const auto m = sample_training_mask(rng, 256);
    REQUIRE(std::is_sorted(m.begin(), m.end()));
    REQUIRE(std::adjacent_find(m.begin(), m.end()) == m.end());
    REQUIRE(!m.empty());
    frac += static_cast<double>(m.size()) / 256.0;
  }
  CHECK(std::abs(frac / draws - 2.0 / M_PI) < 0.02);
  CHECK_THROWS_AS(sample_training_mask(rng, 0), InputError);
}

TEST_CASE("masked cross entropy") {
  const TensorF uniform({3, 8}, 0.5f);
  const std::vector<TokenId> targets{1, 2, 3};
  const std::vector<std::size_t> mask{0, 2};
  CHECK(masked_ce_loss(uniform, targets, mask, 0.1) == doctest::Approx(std::log(8.0)));
  CHECK(masked_ce_loss(uniform, targets, mask, 0.0) == doctest::Approx(std::log(8.0)));

  const TensorD two = TensorD::matrix(1, 2, {std::log(3.0), 0.0});
  const std::vector<TokenId> t0{0};
  const std::vector<std::size_t> m0{0};
  CHECK(masked_ce_loss(two, t0, m0, 0.1) == doctest::Approx(0.34261268688518637).epsilon(1e-12));

  // Only masked rows are read.
  std::mt19937_64 g(1);
  auto logits = testing::random_tensor<double>({3, 8}, g);
  const double before = masked_ce_loss(logits, targets, mask, 0.1);
  for (std::size_t k = 0; k < 8; ++k) logits(1, k) = 100.0 * static_cast<double>(k);
  CHECK(masked_ce_loss(logits, targets, mask, 0.1) == before);
  CHECK_THROWS_AS(masked_ce_loss(logits, targets, std::vector<std::size_t>{}, 0.1), ContractError);
}

TEST_CASE("AdamW updates") {
  TrainConfig c;
  c.lr = 0.1;
  c.weight_decay = 0.0;
  std::vector<float> p{1.0f};
  std::vector<double> m{0.0}, v{0.0};
  adamw_update(p, std::vector<float>{1.0f}, m, v, 1, c);
  CHECK(p[0] == doctest::Approx(0.9).epsilon(1e-6));

  p = {1.0f};
  m = {0.0};
  v = {0.0};
  adamw_update(p, std::vector<float>{0.0f}, m, v, 1, c);
  CHECK(p[0] == 1.0f);

  c.weight_decay = 0.01;
  p = {2.0f};
  adamw_update(p, std::vector<float>{0.0f}, m, v, 1, c);
  CHECK(p[0] == doctest::Approx(2.0 * (1.0 - 0.001)));

  model::ParametersF params = model::build_model(model::preset_micro(), 1);
  AdamState state;
  std::vector<TensorF> grads;
  CHECK_THROWS_AS(adamw_step(params, grads, state, c), ContractError);
  for (const auto& e : params.entries()) grads.emplace_back(e.value.shape(), 0.0f);
  grads[0] = TensorF({1, 1}, 0.0f);
  CHECK_THROWS_AS(adamw_step(params, grads, state, c), ContractError);
}

TEST_CASE("analytic model gradients match central differences") {
  const model::ModelConfig base = testing::micro();
  for (int draw = 0; draw < 5; ++draw) {
    model::ModelConfig c = base;
    c.qk_norm = c.post_norm = draw % 2 == 1;
    c.init_std = 0.3;
    const auto pd = model::build_model(c, 100 + draw).cast<double>();
    std::vector<TensorD> flat;
    for (const auto& e : pd.entries()) flat.push_back(e.value);

    Rng rng(200 + draw);
    SyntheticTask task = SyntheticTask::for_model(c, 0.2);
    std::vector<model::SequenceInput> batch;
    std::vector<std::size_t> rows;
    std::vector<TokenId> targets;
    const auto coords = raster_coords(4, 4);
    for (std::size_t b = 0; b < 2; ++b) {
      const auto grid = task.sample(b + draw, rng);
      model::SequenceInput s{grid.indices, coords,
                             b == 0 ? Condition{ClassLabel{draw}} : Condition{}};
      for (std::size_t pos : sample_training_mask(rng, 16)) {
        s.tokens[pos] = c.mask_token_id();
        rows.push_back(b * 16 + pos);
        targets.push_back(grid.indices[pos]);
      }
      batch.push_back(std::move(s));
    }
    const auto report = numerics::grad_check(
        [&](numerics::Tape<double>& tape, std::span<const numerics::Var> vars) {
          model::BoundParameters<double> bound(pd, vars);
          const auto out = model::forward_graph(tape, bound, c,
                                                std::span<const model::SequenceInput>(batch),
                                                AttentionMode::bidirectional);
          return numerics::ops::smoothed_cross_entropy(tape, out.logits,
                                                       std::span<const std::size_t>(rows),
                                                       std::span<const TokenId>(targets), 0.1);
        },
        flat);
    CHECK(report.coordinates == model::param_count(c));
    CHECK(report.max_rel_error < 1e-4);
  }
}

namespace {

TrainConfig quick(std::size_t steps, double lr) {
  TrainConfig c;
  c.steps = steps;
  c.lr = lr;
  c.seed = 17;
  c.batch_size = 16;
  return c;
}

}  // namespace

TEST_CASE("zero learning rate leaves parameters untouched") {
  const auto c = testing::micro();
  const auto p0 = model::build_model(c, 7);
  const auto r = train_loop(p0, c, SyntheticTask::for_model(c, 0.0), quick(5, 0.0));
  CHECK(r.params == p0);
  CHECK(r.step == 5);
}

TEST_CASE("training is deterministic in the seed") {
  const auto c = testing::micro();
  const auto task = SyntheticTask::for_model(c, 0.05);
  const auto a = train_loop(model::build_model(c, 7), c, task, quick(20, 3e-3));
  const auto b = train_loop(model::build_model(c, 7), c, task, quick(20, 3e-3));
  CHECK(metrics_csv(a.metrics) == metrics_csv(b.metrics));
  CHECK(a.params == b.params);
  CHECK(metrics_csv(a.metrics).rfind("step,loss,output_rms,cond_drop_count\n", 0) == 0);
}

TEST_CASE("loss moving average decreases over the first 200 steps") {
  const auto c = testing::micro();
  // At 3e-3 the average reaches the mask-ratio noise floor before step 200;
  // 1e-3 kept a strict decrease for 8 of 8 seeds in a pilot.
  TrainConfig tc = quick(200, 1e-3);
  tc.batch_size = 32;
  const auto r = train_loop(model::build_model(c, 3), c, SyntheticTask::for_model(c, 0.0), tc);
  std::vector<double> avg;
  for (std::size_t i = 0; i + 50 <= r.metrics.size(); ++i) {
    double s = 0.0;
    for (std::size_t j = i; j < i + 50; ++j) s += r.metrics[j].loss;
    avg.push_back(s / 50.0);
  }
  std::size_t violations = 0;
  for (std::size_t i = 1; i < avg.size(); ++i) violations += avg[i] >= avg[i - 1];
  CHECK(violations == 0);
  CHECK(avg.back() < avg.front());
}

TEST_CASE("condition dropout rate") {
  const auto c = testing::micro();
  TrainConfig tc = quick(10000, 0.0);
  tc.batch_size = 1;
  const auto r = train_loop(model::build_model(c, 3), c, SyntheticTask::for_model(c, 0.0), tc);
  std::size_t drops = 0;
  for (const auto& m : r.metrics) drops += m.cond_drop_count;
  CHECK(std::abs(static_cast<double>(drops) / 10000.0 - 0.1) <= 0.01);
}

TEST_CASE("causal models train on next-token prediction") {
  const auto c = testing::micro(AttentionMode::causal);
  const auto r = train_loop(model::build_model(c, 3), c, SyntheticTask::for_model(c, 0.0),
                            quick(150, 3e-3));
  CHECK(r.metrics.back().loss < r.metrics.front().loss);
}

TEST_CASE("norm monitor contrast under inflated initialisation") {
  auto run = [](bool norms) {
    auto c = testing::micro();
    c.init_std = 1.0;
    c.qk_norm = c.post_norm = norms;
    return train_loop(model::build_model(c, 5), c, SyntheticTask::for_model(c, 0.0),
                      quick(200, 3e-3))
        .metrics;
  };
  const auto on = run(true);
  const auto off = run(false);
  auto mean = [](const std::vector<StepMetrics>& m, std::size_t from, std::size_t to) {
    double s = 0.0;
    for (std::size_t i = from; i < to; ++i) s += m[i].output_rms;
    return s / static_cast<double>(to - from);
  };
  double on_max = 0.0;
  for (const auto& m : on) on_max = std::max(on_max, m.output_rms);
  // Each layer adds two unit-RMS sublayer outputs onto a unit-RMS embedding.
  CHECK(on_max < 4.0);
  for (std::size_t i = 0; i < on.size(); ++i) CHECK(off[i].output_rms > on[i].output_rms);
  CHECK(mean(off, 180, 200) > mean(off, 0, 20));
}

TEST_CASE("NaN aborts with the norm series") {
  auto c = testing::micro();
  auto p = model::build_model(c, 1);
  p.at("layers.0.w1").data()[0] = std::numeric_limits<float>::quiet_NaN();
  try {
    train_loop(p, c, SyntheticTask::for_model(c, 0.0), quick(3, 1e-3));
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("output_rms series") != std::string::npos);
  }
}

TEST_CASE("accuracy helpers") {
  const auto c = testing::micro();
  const auto task = SyntheticTask::for_model(c, 0.0);
  CHECK(pattern_accuracy(task.clean(3), task, 3) == 1.0);
  auto g = task.clean(3);
  g.indices[0] = (g.indices[0] + 1) % 32;
  CHECK(pattern_accuracy(g, task, 3) == doctest::Approx(15.0 / 16.0));
  Rng rng(1);
  const double acc = masked_accuracy(model::build_model(c, 1), c, task, 20, rng);
  CHECK((acc >= 0.0 && acc <= 1.0));
}

TEST_CASE("checkpoint round trip and validation") {
  auto c = testing::micro();
  c.qk_norm = true;
  std::mt19937_64 g(4);
  model::ParametersF params = model::build_model(c, 9);
  for (auto& e : params.entries())
    for (float& x : e.value.data()) x = static_cast<float>(std::normal_distribution<double>()(g));
  Checkpoint ck{c, quick(12, 0.5), 12, params};
  const auto bytes = serialize_checkpoint(ck);
  const Checkpoint back = deserialize_checkpoint(bytes);
  CHECK(back.params == params);
  CHECK(back.model == c);
  CHECK(back.train == ck.train);
  CHECK(back.step == 12);
  CHECK(serialize_checkpoint(back) == bytes);

  testing::TempDir dir;
  const std::string path = dir.file("m.ckpt");
  save_checkpoint(ck, path);
  CHECK(read_file(path) == bytes);
  const auto h = read_header(path);
  CHECK(h.kind == "model");
  CHECK(header_model_config(h) == c);
  std::uint64_t expect = 0;
  for (const auto& t : h.tensors) {
    CHECK(t.offset == expect);
    expect += t.nbytes;
  }
  CHECK(h.payload_offset + expect == bytes.size());

  // Header-only reads never touch the payload: a truncated file still parses.
  auto head_only = std::vector<std::uint8_t>(bytes.begin(), bytes.begin() + static_cast<long>(h.payload_offset));
  write_file(dir.file("head.ckpt"), head_only);
  CHECK(header_model_config(read_header(dir.file("head.ckpt"))) == c);
  CHECK_THROWS_AS(load_checkpoint(dir.file("head.ckpt")), FormatError);

  auto bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_AS(deserialize_checkpoint(bad), FormatError);
  bad = bytes;
  bad[4] = 9;
  CHECK_THROWS_AS(deserialize_checkpoint(bad), FormatError);
  bad = bytes;
  bad.pop_back();
  CHECK_THROWS_AS(deserialize_checkpoint(bad), FormatError);

  // An offset that breaks contiguity is reported with its position.
  nlohmann::ordered_json j = h.json;
  j["tensors"][1]["offset"] = 4;
  const std::string text = j.dump();
  std::vector<std::uint8_t> forged(bytes.begin(), bytes.begin() + 8);
  for (int i = 0; i < 8; ++i) forged.push_back(static_cast<std::uint8_t>(text.size() >> (8 * i)));
  forged.insert(forged.end(), text.begin(), text.end());
  forged.insert(forged.end(), bytes.begin() + static_cast<long>(h.payload_offset), bytes.end());
  try {
    deserialize_checkpoint(forged);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("at offset") != std::string::npos);
  }
}

TEST_CASE("token grid container") {
  const TokenGrid g{2, 3, {0, 5, 9, 31, 2, 2}};
  const auto bytes = serialize_token_grid(g);
  CHECK(deserialize_token_grid(bytes) == g);
  CHECK_THROWS_AS(deserialize_checkpoint(bytes), FormatError);
  const auto ck = serialize_checkpoint(Checkpoint{testing::micro(), {}, 0,
                                                  model::build_model(testing::micro(), 1)});
  CHECK_THROWS_AS(deserialize_token_grid(ck), FormatError);
}

TEST_CASE("train config JSON") {
  TrainConfig c = quick(3, 2e-3);
  c.beta2 = 0.99;
  CHECK(train_config_from_json(to_json(c)) == c);
  CHECK_THROWS_AS(train_config_from_json(nlohmann::ordered_json{{"learning_rate", 1}}), ConfigError);
  TrainConfig bad;
  bad.beta1 = 1.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = TrainConfig{};
  bad.batch_size = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}
