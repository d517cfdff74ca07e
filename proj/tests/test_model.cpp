#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "maskgil/errors.hpp"
#include "maskgil/model/incremental.hpp"
#include "maskgil/model/model.hpp"
#include "maskgil/numerics/kernels.hpp"
#include "support.hpp"

using namespace maskgil;
using namespace maskgil::model;
using numerics::TensorF;

namespace {

std::vector<TokenId> random_tokens(std::mt19937_64& rng, const ModelConfig& c, bool allow_mask) {
  std::uniform_int_distribution<int> d(0, static_cast<int>(c.codebook_size) - (allow_mask ? 0 : 1));
  std::vector<TokenId> t(c.grid_tokens());
  for (auto& x : t) x = d(rng);
  return t;
}

float max_abs_diff(std::span<const float> a, std::span<const float> b) {
  float m = 0.0f;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST_CASE("preset parameter counts") {
  CHECK(param_count(preset_b()) == 110889216u);
  CHECK(param_count(preset_l()) == 342912000u);
  CHECK(param_count(preset_xl()) == 774700800u);
  CHECK(param_count(preset_xxl()) == 1411269120u);
  CHECK(param_count(preset_micro()) == 7952u);
  CHECK(preset_b().ffn_hidden() == 2048);
  CHECK(preset_l().ffn_hidden() == 2816);
  CHECK(preset_xxl().qk_norm);
  CHECK(preset_xxl().post_norm);
  CHECK(preset_by_name("XL")->layers == preset_xl().layers);
  CHECK_FALSE(preset_by_name("huge").has_value());
}

TEST_CASE("manifest layout") {
  auto c = preset_micro();
  const auto m = manifest(c);
  CHECK(m.front().name == "tok_embed");
  CHECK(m.front().shape == numerics::Shape{33, 16});
  CHECK(m[1].name == "cond_embed");
  CHECK(m[1].shape == numerics::Shape{11, 16});
  CHECK(m.back().name == "head");
  CHECK(m.back().shape == numerics::Shape{16, 32});

  c.qk_norm = c.post_norm = true;
  const auto m2 = manifest(c);
  auto has = [&](const std::string& n) {
    return std::any_of(m2.begin(), m2.end(), [&](const ParamSpec& p) { return p.name == n; });
  };
  CHECK(has("layers.0.q_norm"));
  CHECK(has("layers.1.mlp_post_norm"));
  CHECK(param_count(c) == 7952u + 2 * (16 + 16 + 16 + 16));

  c.condition = ConditionKind::text;
  c.condition_slots = 3;
  const auto m3 = manifest(c);
  CHECK(m3[1].name == "text_proj");
  CHECK(m3[2].name == "text_null");
  CHECK(m3[2].shape == numerics::Shape{3, 16});
}

TEST_CASE("config validation and JSON") {
  ModelConfig c = preset_micro();
  c.validate();
  ModelConfig bad = c;
  bad.heads = 3;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = c;
  bad.heads = 8;  // head_dim 2 cannot be split into two rotary halves
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = c;
  bad.condition_slots = 2;
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  c.qk_norm = true;
  c.attention = AttentionMode::causal;
  CHECK(model_config_from_json(to_json(c)) == c);
  nlohmann::ordered_json j = to_json(c);
  j["bogus"] = 1;
  CHECK_THROWS_AS(model_config_from_json(j), ConfigError);
  const auto b = model_config_from_json(nlohmann::ordered_json{{"preset", "B"}, {"layers", 3}});
  CHECK(b.hidden == preset_b().hidden);
  CHECK(b.layers == 3);
}

TEST_CASE("build_model is deterministic and respects init") {
  const auto c = preset_micro();
  const auto a = build_model(c, 1);
  CHECK(a == build_model(c, 1));
  CHECK_FALSE(a == build_model(c, 2));
  CHECK(a.scalar_count() == param_count(c));
  for (float g : a.at("final_norm").data()) CHECK(g == 1.0f);
  for (float w : a.at("layers.0.wq").data()) CHECK(std::abs(w) <= 2.0f * 0.02f + 1e-7f);
}

TEST_CASE("2D rotary embedding") {
  std::mt19937_64 rng(5);
  const auto q = testing::random_tensor<double>({8}, rng);
  const auto k = testing::random_tensor<double>({8}, rng);
  const std::vector<double> qv(q.data().begin(), q.data().end());
  const std::vector<double> kv(k.data().begin(), k.data().end());

  CHECK(rope_2d<double>(qv, Coord::sentinel(), 10000.0) == qv);
  CHECK(rope_2d<double>(qv, Coord{0, 0}, 10000.0) == qv);

  const auto r = rope_2d<double>(qv, Coord{3, 5}, 10000.0);
  CHECK(numerics::dot<double>(r, r) == doctest::Approx(numerics::dot<double>(qv, qv)));

  // Scores depend only on the coordinate offset.
  auto score = [&](Coord a, Coord b) {
    return numerics::dot<double>(rope_2d<double>(qv, a, 10000.0), rope_2d<double>(kv, b, 10000.0));
  };
  CHECK(score(Coord{1, 2}, Coord{4, 0}) == doctest::Approx(score(Coord{3, 5}, Coord{6, 3})));
  CHECK(score(Coord{1, 2}, Coord{4, 0}) != doctest::Approx(score(Coord{1, 2}, Coord{0, 4})));

  // Row rotates the first half only: a pure row shift leaves the second half alone.
  const auto row_only = rope_2d<double>(qv, Coord{2, 0}, 10000.0);
  for (std::size_t i = 4; i < 8; ++i) CHECK(row_only[i] == qv[i]);

  std::vector<double> cs(3), sn(3);
  CHECK_THROWS_AS(rope_row_tables<double>(Coord{0, 0}, 1, 6, 10000.0, cs, sn), ConfigError);
}

TEST_CASE("sequence validation") {
  const auto c = preset_micro();
  const auto coords = raster_coords(4, 4);
  std::vector<TokenId> tokens(16, 0);
  validate_sequence(c, SequenceInput{tokens, coords, ClassLabel{1}});
  tokens[3] = 33;
  CHECK_THROWS_AS(validate_sequence(c, SequenceInput{tokens, coords, ClassLabel{1}}), InputError);
  tokens[3] = 32;  // the mask id is a valid input
  validate_sequence(c, SequenceInput{tokens, coords, ClassLabel{1}});
  auto dup = coords;
  dup[1] = dup[0];
  CHECK_THROWS_AS(validate_sequence(c, SequenceInput{tokens, dup, ClassLabel{1}}), InputError);
  auto outside = coords;
  outside[0] = Coord{4, 0};
  CHECK_THROWS_AS(validate_sequence(c, SequenceInput{tokens, outside, ClassLabel{1}}), InputError);
  tokens.pop_back();
  CHECK_THROWS_AS(validate_sequence(c, SequenceInput{tokens, coords, ClassLabel{1}}), InputError);
}

TEST_CASE("conditions") {
  const auto c = preset_micro();
  const auto p = build_model(c, 3);
  CHECK_THROWS_AS(prefill_condition(p, c, ClassLabel{10}), InputError);
  CHECK_THROWS_AS(prefill_condition(p, c, TextPrompt{"cat"}), InputError);
  const auto null_rows = prefill_condition(p, c, Condition{});
  const auto emb = p.at("cond_embed").row(10);
  CHECK(std::equal(emb.begin(), emb.end(), null_rows.row(0).begin()));

  auto tc = c;
  tc.condition = ConditionKind::text;
  tc.condition_slots = 2;
  const auto tp = build_model(tc, 3);
  const auto f1 = text_stub_features("a red square", tc);
  CHECK(f1 == text_stub_features("a red square", tc));
  CHECK_FALSE(f1 == text_stub_features("a blue square", tc));
  for (float v : f1.data()) CHECK(std::abs(v) <= 1.0f);
  CHECK_THROWS_AS(prefill_condition(tp, tc, ClassLabel{1}), InputError);
  const auto coords = raster_coords(4, 4);
  std::vector<TokenId> tokens(16, 1);
  const auto l = forward<float>(tp, tc, tokens, coords, TextPrompt{"a"}, AttentionMode::bidirectional);
  CHECK(l.rows() == 16);
  CHECK(numerics::all_finite(l.data()));
}

TEST_CASE("causal mode ignores future tokens") {
  for (bool norms : {false, true}) {
    auto c = testing::micro(AttentionMode::causal);
    c.qk_norm = c.post_norm = norms;
    const auto p = testing::lively_model(c, 11);
    const auto coords = raster_coords(4, 4);
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 20; ++trial) {
      const auto base = random_tokens(rng, c, true);
      const auto ref = forward<float>(p, c, base, coords, ClassLabel{2}, AttentionMode::causal);
      const std::size_t cut = rng() % 16;
      auto other = base;
      for (std::size_t j = cut; j < 16; ++j) other[j] = static_cast<TokenId>(rng() % 33);
      const auto out = forward<float>(p, c, other, coords, ClassLabel{2}, AttentionMode::causal);
      for (std::size_t i = 0; i <= cut; ++i) CHECK(max_abs_diff(ref.row(i), out.row(i)) <= 1e-6f);
    }
  }
}

TEST_CASE("bidirectional mode is equivariant to storage order") {
  const auto c = testing::micro();
  const auto p = testing::lively_model(c, 12);
  const auto coords = raster_coords(4, 4);
  std::mt19937_64 rng(8);
  const auto tokens = random_tokens(rng, c, true);
  const auto ref = forward<float>(p, c, tokens, coords, ClassLabel{3}, AttentionMode::bidirectional);
  std::vector<std::size_t> perm(16);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<TokenId> pt(16);
  std::vector<Coord> pc(16);
  for (std::size_t i = 0; i < 16; ++i) {
    pt[i] = tokens[perm[i]];
    pc[i] = coords[perm[i]];
  }
  const auto out = forward<float>(p, c, pt, pc, ClassLabel{3}, AttentionMode::bidirectional);
  for (std::size_t i = 0; i < 16; ++i) CHECK(max_abs_diff(out.row(i), ref.row(perm[i])) <= 1e-6f);

  // Changing any one token moves every other position's logits.
  auto changed = tokens;
  changed[15] = (changed[15] + 1) % 32;
  const auto moved = forward<float>(p, c, changed, coords, ClassLabel{3}, AttentionMode::bidirectional);
  CHECK(max_abs_diff(moved.row(0), ref.row(0)) > 0.0f);
}

TEST_CASE("batched forward matches single sequences bit for bit") {
  const auto c = testing::micro();
  const auto p = testing::lively_model(c, 13);
  const auto coords = raster_coords(4, 4);
  std::mt19937_64 rng(9);
  std::vector<SequenceInput> batch{{random_tokens(rng, c, true), coords, ClassLabel{1}},
                                   {random_tokens(rng, c, true), coords, Condition{}}};
  numerics::Tape<float> tape(false);
  BoundParameters<float> bound(tape, p);
  const auto out = forward_graph(tape, bound, c, std::span<const SequenceInput>(batch),
                                 AttentionMode::bidirectional);
  const TensorF& all = tape.value(out.logits);
  for (std::size_t b = 0; b < 2; ++b) {
    const auto single = forward<float>(p, c, batch[b].tokens, coords, batch[b].condition,
                                       AttentionMode::bidirectional);
    for (std::size_t i = 0; i < 16; ++i) {
      auto a = all.row(b * 16 + i);
      auto s = single.row(i);
      CHECK(std::equal(a.begin(), a.end(), s.begin()));
    }
  }
}

TEST_CASE("incremental decoding matches the full causal forward exactly") {
  for (bool norms : {false, true}) {
    auto c = testing::micro(AttentionMode::causal);
    c.qk_norm = c.post_norm = norms;
    const auto p = testing::lively_model(c, 21);
    const auto coords = raster_coords(4, 4);
    std::mt19937_64 rng(10);
    const auto tokens = random_tokens(rng, c, false);
    const auto full = forward<float>(p, c, tokens, coords, ClassLabel{4}, AttentionMode::causal);
    IncrementalDecoder dec(p, c);
    auto logits = dec.begin(ClassLabel{4});
    for (std::size_t i = 0; i < 16; ++i) {
      auto ref = full.row(i);
      CHECK(std::equal(ref.begin(), ref.end(), logits.begin()));
      if (i + 1 < 16) logits = dec.push(tokens[i], coords[i]);
    }
    CHECK(dec.length() == 16);
  }
}

TEST_CASE("block_apply agrees with the graph path") {
  auto c = testing::micro();
  c.qk_norm = true;
  const auto p = testing::lively_model(c, 14);
  std::mt19937_64 rng(4);
  const auto x = testing::random_tensor<float>({5, 16}, rng);
  std::vector<Coord> coords{Coord::sentinel(), {0, 0}, {0, 1}, {1, 0}, {1, 1}};
  const auto y = block_apply(p, c, 0, x, coords, AttentionMode::bidirectional, false);
  CHECK(y.rows() == 5);
  CHECK(numerics::all_finite(y.data()));
  const auto qkv = qk_project(p, c, 0, x, true);
  // Per-head normalised queries have unit RMS per head (unit gains).
  for (std::size_t r = 0; r < 5; ++r) {
    auto row = qkv.q.row(r);
    CHECK(numerics::root_mean_square<float>(row.subspan(0, 8)) == doctest::Approx(1.0).epsilon(1e-3));
  }
}
