#include "gf/transformer.hpp"

#include <cmath>

namespace gf {

Tensor xavier(Shape shape, Rng& rng) {
  std::size_t fan_in = shape.size() >= 2 ? shape[shape.size() - 2] : shape.back();
  std::size_t fan_out = shape.back();
  const Real bound = std::sqrt(6.0 / static_cast<Real>(fan_in + fan_out));
  Tensor t = Tensor::zeros(std::move(shape), true);
  for (Real& v : t.values()) v = rng.uniform(-bound, bound);
  return t;
}

AttentionBlock AttentionBlock::init(std::size_t dim, Rng& rng) {
  AttentionBlock b;
  b.wq = xavier({dim, dim}, rng);
  b.bq = Tensor::zeros({dim}, true);
  b.wk = xavier({dim, dim}, rng);
  b.bk = Tensor::zeros({dim}, true);
  b.wv = xavier({dim, dim}, rng);
  b.bv = Tensor::zeros({dim}, true);
  b.wo = xavier({dim, dim}, rng);
  b.bo = Tensor::zeros({dim}, true);
  return b;
}

void AttentionBlock::collect(ParamMap& out, const std::string& prefix) const {
  out[prefix + ".wq"] = wq;
  out[prefix + ".bq"] = bq;
  out[prefix + ".wk"] = wk;
  out[prefix + ".bk"] = bk;
  out[prefix + ".wv"] = wv;
  out[prefix + ".bv"] = bv;
  out[prefix + ".wo"] = wo;
  out[prefix + ".bo"] = bo;
}

AttentionBlock AttentionBlock::clone() const {
  return {wq.clone(), bq.clone(), wk.clone(), bk.clone(),
          wv.clone(), bv.clone(), wo.clone(), bo.clone()};
}

Tensor AttentionResult::stacked_weights() const {
  if (head_weights.empty()) throw ContractError("no attention weights recorded");
  Tensor flat = concat_rows(head_weights);
  return reshape(flat, {head_weights.size(), head_weights.front().rows(),
                        head_weights.front().cols()});
}

AttentionResult multi_head_attention(const AttentionBlock& block, const Tensor& q,
                                     const Tensor& k, const Tensor& v,
                                     const AttentionMask* mask, std::size_t heads,
                                     Real dropout_rate, Rng* rng) {
  const std::size_t dim = block.wq.rows();
  if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2 || q.cols() != dim ||
      k.cols() != dim || v.cols() != dim || k.rows() != v.rows()) {
    throw ShapeError("multi_head_attention: q " + shape_str(q.shape()) + ", k " +
                     shape_str(k.shape()) + ", v " + shape_str(v.shape()) +
                     " incompatible with model dim " + std::to_string(dim));
  }
  if (dim % heads != 0) {
    throw ShapeError("multi_head_attention: dim " + std::to_string(dim) +
                     " not divisible by " + std::to_string(heads) + " heads");
  }
  const std::size_t lq = q.rows(), lk = k.rows(), hd = dim / heads;

  Tensor mask_bias;
  if (mask != nullptr) {
    if (mask->rows != lq || mask->cols != lk) {
      throw ShapeError("multi_head_attention: mask " +
                       shape_str({mask->rows, mask->cols}) + " does not cover " +
                       shape_str({lq, lk}));
    }
    std::vector<Real> bias(lq * lk, 0.0);
    for (std::size_t i = 0; i < lq; ++i) {
      bool any = false;
      for (std::size_t j = 0; j < lk; ++j) {
        if (mask->at(i, j)) {
          any = true;
        } else {
          bias[i * lk + j] = -1e30;
        }
      }
      if (!any) {
        throw ContractError("multi_head_attention: query row " + std::to_string(i) +
                            " has every key masked");
      }
    }
    mask_bias = Tensor::from({lq, lk}, std::move(bias));
  }

  Tensor qp = add_rowvec(matmul(q, block.wq), block.bq);
  Tensor kp = add_rowvec(matmul(k, block.wk), block.bk);
  Tensor vp = add_rowvec(matmul(v, block.wv), block.bv);

  const Real att_scale = 1.0 / std::sqrt(static_cast<Real>(hd));
  std::vector<Tensor> head_outs, head_ws;
  head_outs.reserve(heads);
  head_ws.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    Tensor qh = slice_cols(qp, h * hd, (h + 1) * hd);
    Tensor kh = slice_cols(kp, h * hd, (h + 1) * hd);
    Tensor vh = slice_cols(vp, h * hd, (h + 1) * hd);
    Tensor scores = scale(matmul(qh, transpose(kh)), att_scale);
    if (mask_bias.defined()) scores = add(scores, mask_bias);
    Tensor w = softmax_rows(scores);
    head_ws.push_back(w);
    Tensor wd = dropout(w, dropout_rate, rng);
    head_outs.push_back(matmul(wd, vh));
  }
  Tensor merged = concat_cols(head_outs);
  Tensor out = add_rowvec(matmul(merged, block.wo), block.bo);
  return {out, std::move(head_ws)};
}

FeedForward FeedForward::init(std::size_t dim, Rng& rng) {
  FeedForward f;
  f.w1 = xavier({dim, 4 * dim}, rng);
  f.b1 = Tensor::zeros({4 * dim}, true);
  f.w2 = xavier({4 * dim, dim}, rng);
  f.b2 = Tensor::zeros({dim}, true);
  return f;
}

void FeedForward::collect(ParamMap& out, const std::string& prefix) const {
  out[prefix + ".w1"] = w1;
  out[prefix + ".b1"] = b1;
  out[prefix + ".w2"] = w2;
  out[prefix + ".b2"] = b2;
}

FeedForward FeedForward::clone() const {
  return {w1.clone(), b1.clone(), w2.clone(), b2.clone()};
}

Tensor FeedForward::forward(const Tensor& x) const {
  return add_rowvec(matmul(relu(add_rowvec(matmul(x, w1), b1)), w2), b2);
}

LayerNormParams LayerNormParams::init(std::size_t dim) {
  return {Tensor::full({dim}, 1.0, true), Tensor::zeros({dim}, true)};
}

void LayerNormParams::collect(ParamMap& out, const std::string& prefix) const {
  out[prefix + ".gain"] = gain;
  out[prefix + ".bias"] = bias;
}

LayerNormParams LayerNormParams::clone() const {
  return {gain.clone(), bias.clone()};
}

EncoderLayerParams EncoderLayerParams::init(std::size_t dim, Rng& rng) {
  return {AttentionBlock::init(dim, rng), FeedForward::init(dim, rng),
          LayerNormParams::init(dim), LayerNormParams::init(dim)};
}

void EncoderLayerParams::collect(ParamMap& out, const std::string& prefix) const {
  attn.collect(out, prefix + ".attn");
  ff.collect(out, prefix + ".ff");
  ln1.collect(out, prefix + ".ln1");
  ln2.collect(out, prefix + ".ln2");
}

EncoderLayerParams EncoderLayerParams::clone() const {
  return {attn.clone(), ff.clone(), ln1.clone(), ln2.clone()};
}

EncoderParams EncoderParams::init(const AttentionConfig& cfg, Rng& rng) {
  cfg.validate();
  EncoderParams p;
  p.cfg = cfg;
  for (std::size_t i = 0; i < cfg.layers; ++i)
    p.layers.push_back(EncoderLayerParams::init(cfg.model_dim, rng));
  p.final_ln = LayerNormParams::init(cfg.model_dim);
  return p;
}

void EncoderParams::collect(ParamMap& out, const std::string& prefix) const {
  for (std::size_t i = 0; i < layers.size(); ++i)
    layers[i].collect(out, prefix + ".layer" + std::to_string(i));
  final_ln.collect(out, prefix + ".final_ln");
}

EncoderParams EncoderParams::clone() const {
  EncoderParams p;
  p.cfg = cfg;
  for (const auto& l : layers) p.layers.push_back(l.clone());
  p.final_ln = final_ln.clone();
  return p;
}

Tensor EncoderParams::forward(const Tensor& x, const AttentionMask* mask,
                              Rng* dropout_rng) const {
  Tensor h = x;
  for (const auto& layer : layers) {
    Tensor t = layer.ln1.forward(h);
    AttentionResult att =
        multi_head_attention(layer.attn, t, t, t, mask, cfg.heads, cfg.dropout, dropout_rng);
    h = add(h, att.output);
    Tensor t2 = layer.ln2.forward(h);
    h = add(h, dropout(layer.ff.forward(t2), cfg.dropout, dropout_rng));
  }
  return final_ln.forward(h);
}

DecoderLayerParams DecoderLayerParams::init(std::size_t dim, Rng& rng) {
  return {AttentionBlock::init(dim, rng), AttentionBlock::init(dim, rng),
          FeedForward::init(dim, rng),    LayerNormParams::init(dim),
          LayerNormParams::init(dim),     LayerNormParams::init(dim)};
}

void DecoderLayerParams::collect(ParamMap& out, const std::string& prefix) const {
  self_attn.collect(out, prefix + ".self_attn");
  cross_attn.collect(out, prefix + ".cross_attn");
  ff.collect(out, prefix + ".ff");
  ln1.collect(out, prefix + ".ln1");
  ln2.collect(out, prefix + ".ln2");
  ln3.collect(out, prefix + ".ln3");
}

DecoderLayerParams DecoderLayerParams::clone() const {
  return {self_attn.clone(), cross_attn.clone(), ff.clone(),
          ln1.clone(),       ln2.clone(),        ln3.clone()};
}

DecoderParams DecoderParams::init(const AttentionConfig& cfg, Rng& rng) {
  cfg.validate();
  DecoderParams p;
  p.cfg = cfg;
  for (std::size_t i = 0; i < cfg.layers; ++i)
    p.layers.push_back(DecoderLayerParams::init(cfg.model_dim, rng));
  p.final_ln = LayerNormParams::init(cfg.model_dim);
  return p;
}

void DecoderParams::collect(ParamMap& out, const std::string& prefix) const {
  for (std::size_t i = 0; i < layers.size(); ++i)
    layers[i].collect(out, prefix + ".layer" + std::to_string(i));
  final_ln.collect(out, prefix + ".final_ln");
}

DecoderParams DecoderParams::clone() const {
  DecoderParams p;
  p.cfg = cfg;
  for (const auto& l : layers) p.layers.push_back(l.clone());
  p.final_ln = final_ln.clone();
  return p;
}

Tensor DecoderParams::forward(const Tensor& queries, const Tensor& encoded,
                              const AttentionMask* cross_mask, Rng* dropout_rng) const {
  Tensor h = queries;
  for (const auto& layer : layers) {
    Tensor t = layer.ln1.forward(h);
    AttentionResult self_att = multi_head_attention(layer.self_attn, t, t, t, nullptr,
                                                    cfg.heads, cfg.dropout, dropout_rng);
    h = add(h, self_att.output);
    Tensor t2 = layer.ln2.forward(h);
    AttentionResult cross_att =
        multi_head_attention(layer.cross_attn, t2, encoded, encoded, cross_mask,
                             cfg.heads, cfg.dropout, dropout_rng);
    h = add(h, cross_att.output);
    Tensor t3 = layer.ln3.forward(h);
    h = add(h, dropout(layer.ff.forward(t3), cfg.dropout, dropout_rng));
  }
  return final_ln.forward(h);
}

Tensor sinusoidal_pe(std::size_t n, std::size_t dim) {
  if (dim % 2 != 0) {
    throw ContractError("sinusoidal_pe: dim must be even, got " + std::to_string(dim));
  }
  Tensor pe = Tensor::zeros({n, dim});
  auto& v = pe.values();
  for (std::size_t pos = 0; pos < n; ++pos) {
    for (std::size_t i = 0; i < dim / 2; ++i) {
      const Real freq =
          std::pow(10000.0, -2.0 * static_cast<Real>(i) / static_cast<Real>(dim));
      v[pos * dim + 2 * i] = std::sin(static_cast<Real>(pos) * freq);
      v[pos * dim + 2 * i + 1] = std::cos(static_cast<Real>(pos) * freq);
    }
  }
  return pe;
}

}  // namespace gf
