#include "maskgil/model/incremental.hpp"

#include <cmath>
#include <string>

#include "maskgil/numerics/kernels.hpp"

namespace maskgil::model {

namespace nk = numerics;

IncrementalDecoder::IncrementalDecoder(const ParametersF& params, const ModelConfig& config)
    : params_(&params), config_(config), keys_(config.layers), values_(config.layers) {
  config_.validate();
}

std::vector<float> IncrementalDecoder::begin(const Condition& condition) {
  if (length_ != 0) throw ContractError("IncrementalDecoder::begin called twice");
  const Tensor<float> rows = prefill_condition(*params_, config_, condition);
  std::vector<float> logits;
  for (std::size_t s = 0; s < rows.rows(); ++s) {
    auto r = rows.row(s);
    logits = step(std::vector<float>(r.begin(), r.end()), Coord::sentinel());
  }
  return logits;
}

std::vector<float> IncrementalDecoder::push(TokenId token, Coord coord) {
  if (length_ == 0) throw ContractError("IncrementalDecoder::push before begin");
  if (token < 0 || token > config_.mask_token_id()) {
    throw InputError("token " + std::to_string(token) + " out of range");
  }
  auto r = params_->at("tok_embed").row(static_cast<std::size_t>(token));
  return step(std::vector<float>(r.begin(), r.end()), coord);
}

std::vector<float> IncrementalDecoder::step(std::vector<float> x, Coord coord) {
  const ParametersF& p = *params_;
  const ModelConfig& c = config_;
  const std::size_t d = c.hidden;
  const std::size_t dh = c.head_dim();
  const std::size_t f = c.ffn_hidden();
  const float eps = static_cast<float>(c.norm_eps);
  const float scale = 1.0f / std::sqrt(static_cast<float>(dh));

  std::vector<float> cos_t(d / 2), sin_t(d / 2);
  rope_row_tables<float>(coord, c.heads, dh, c.rope_base, cos_t, sin_t);

  std::vector<float> n1(d), q(d), k(d), v(d), attn(d), a(d), y(d), n2(d);
  std::vector<float> h1(f), up(f), m(d), tmp(d);
  std::vector<float> probs(length_ + 1);
  for (std::size_t l = 0; l < c.layers; ++l) {
    nk::rms_norm_row<float>(x, p.at(layer_param(l, "attn_norm")).data(), 1, eps, n1);
    nk::matmul_row<float>(n1, p.at(layer_param(l, "wq")), q);
    nk::matmul_row<float>(n1, p.at(layer_param(l, "wk")), k);
    nk::matmul_row<float>(n1, p.at(layer_param(l, "wv")), v);
    if (c.qk_norm) {
      tmp = q;
      nk::rms_norm_row<float>(tmp, p.at(layer_param(l, "q_norm")).data(), c.heads, eps, q);
      tmp = k;
      nk::rms_norm_row<float>(tmp, p.at(layer_param(l, "k_norm")).data(), c.heads, eps, k);
    }
    nk::rotate_pairs_row<float>(q, cos_t, sin_t);
    nk::rotate_pairs_row<float>(k, cos_t, sin_t);
    keys_[l].insert(keys_[l].end(), k.begin(), k.end());
    values_[l].insert(values_[l].end(), v.begin(), v.end());
    const std::size_t count = length_ + 1;
    for (std::size_t h = 0; h < c.heads; ++h) {
      nk::attend_row<float>(std::span<const float>(q).subspan(h * dh, dh),
                            keys_[l].data() + h * dh, values_[l].data() + h * dh, count, d, scale,
                            probs, std::span<float>(attn).subspan(h * dh, dh));
    }
    nk::matmul_row<float>(attn, p.at(layer_param(l, "wo")), a);
    if (c.post_norm) {
      tmp = a;
      nk::rms_norm_row<float>(tmp, p.at(layer_param(l, "attn_post_norm")).data(), 1, eps, a);
    }
    for (std::size_t i = 0; i < d; ++i) y[i] = x[i] + a[i];
    nk::rms_norm_row<float>(y, p.at(layer_param(l, "mlp_norm")).data(), 1, eps, n2);
    nk::matmul_row<float>(n2, p.at(layer_param(l, "w1")), h1);
    nk::matmul_row<float>(n2, p.at(layer_param(l, "w3")), up);
    for (std::size_t i = 0; i < f; ++i) h1[i] = nk::silu(h1[i]) * up[i];
    nk::matmul_row<float>(h1, p.at(layer_param(l, "w2")), m);
    if (c.post_norm) {
      tmp = m;
      nk::rms_norm_row<float>(tmp, p.at(layer_param(l, "mlp_post_norm")).data(), 1, eps, m);
    }
    for (std::size_t i = 0; i < d; ++i) x[i] = y[i] + m[i];
  }
  ++length_;

  std::vector<float> normed(d);
  nk::rms_norm_row<float>(x, p.at("final_norm").data(), 1, eps, normed);
  std::vector<float> logits(c.codebook_size);
  nk::matmul_row<float>(normed, p.at("head"), logits);
  if (!nk::all_finite<float>(logits)) throw NumericError("incremental decoder: non-finite logits");
  return logits;
}

}  // namespace maskgil::model
