#include "gf/glance.hpp"

namespace gf {

std::size_t MemoryBank::predicted_class(std::size_t i) const {
  const std::size_t c = num_classes();
  std::size_t best = 0;
  for (std::size_t j = 1; j < c; ++j) {
    if (class_logits.at(i, j) > class_logits.at(i, best)) best = j;
  }
  return best;
}

TemporalHead TemporalHead::init(std::size_t dim, Rng& rng) {
  TemporalHead h;
  h.w1 = xavier({dim, dim}, rng);
  h.b1 = Tensor::zeros({dim}, true);
  h.w2 = xavier({dim, dim}, rng);
  h.b2 = Tensor::zeros({dim}, true);
  h.w3 = xavier({dim, 2}, rng);
  h.b3 = Tensor::zeros({2}, true);
  return h;
}

void TemporalHead::collect(ParamMap& out, const std::string& prefix) const {
  out[prefix + ".w1"] = w1;
  out[prefix + ".b1"] = b1;
  out[prefix + ".w2"] = w2;
  out[prefix + ".b2"] = b2;
  out[prefix + ".w3"] = w3;
  out[prefix + ".b3"] = b3;
}

TemporalHead TemporalHead::clone() const {
  return {w1.clone(), b1.clone(), w2.clone(), b2.clone(), w3.clone(), b3.clone()};
}

Tensor TemporalHead::forward(const Tensor& memories) const {
  Tensor h = relu(add_rowvec(matmul(memories, w1), b1));
  h = relu(add_rowvec(matmul(h, w2), b2));
  return sigmoid(add_rowvec(matmul(h, w3), b3));
}

GlanceParams GlanceParams::init(const AttentionConfig& cfg, std::size_t num_memories,
                                std::size_t classes, Rng& rng) {
  if (num_memories == 0 || classes == 0) {
    throw ContractError("glance: memory and class counts must be positive");
  }
  GlanceParams p;
  p.encoder = EncoderParams::init(cfg, rng);
  p.decoder = DecoderParams::init(cfg, rng);
  p.memory_queries = xavier({num_memories, cfg.model_dim}, rng);
  p.fc_w = xavier({cfg.model_dim, classes}, rng);
  p.fc_b = Tensor::zeros({classes}, true);
  p.ft = TemporalHead::init(cfg.model_dim, rng);
  return p;
}

void GlanceParams::collect(ParamMap& out, const std::string& prefix) const {
  encoder.collect(out, prefix + ".enc");
  decoder.collect(out, prefix + ".dec");
  out[prefix + ".memory_queries"] = memory_queries;
  out[prefix + ".fc_w"] = fc_w;
  out[prefix + ".fc_b"] = fc_b;
  ft.collect(out, prefix + ".ft");
}

GlanceParams GlanceParams::clone() const {
  GlanceParams p;
  p.encoder = encoder.clone();
  p.decoder = decoder.clone();
  p.memory_queries = memory_queries.clone();
  p.fc_w = fc_w.clone();
  p.fc_b = fc_b.clone();
  p.ft = ft.clone();
  return p;
}

MemoryBank glance_forward(const Tensor& video, const GlanceParams& params,
                          Rng* dropout_rng) {
  if (video.rank() != 2 || video.rows() == 0) {
    throw ContractError("glance_forward: video must be [T x D] with T >= 1");
  }
  Tensor with_pos = add(video, sinusoidal_pe(video.rows(), video.cols()));
  Tensor encoded = params.encoder.forward(with_pos, nullptr, dropout_rng);
  Tensor memories =
      params.decoder.forward(params.memory_queries, encoded, nullptr, dropout_rng);
  MemoryBank bank;
  bank.memories = memories;
  bank.class_logits = add_rowvec(matmul(memories, params.fc_w), params.fc_b);
  bank.class_probs = softmax_rows(bank.class_logits);
  bank.spans = params.ft.forward(memories);
  return bank;
}

Tensor loss_certainty(const Tensor& class_probs) {
  Tensor plogp = mul(class_probs, log_clamped(class_probs));
  return scale(sum(plogp), -1.0 / static_cast<Real>(class_probs.rows()));
}

Tensor loss_certainty(const MemoryBank& bank) {
  return loss_certainty(bank.class_probs);
}

Tensor loss_semantic_diversity(const Tensor& class_probs) {
  Tensor marginal = mean_rows(class_probs);
  return sum(mul(marginal, log_clamped(marginal)));
}

Tensor loss_semantic_diversity(const MemoryBank& bank) {
  return loss_semantic_diversity(bank.class_probs);
}

Tensor loss_temporal_overlap(const Tensor& spans) {
  if (spans.rank() != 2 || spans.cols() != 2) {
    throw ShapeError("loss_temporal_overlap: spans must be [N x 2], got " +
                     shape_str(spans.shape()));
  }
  const std::size_t n = spans.rows();
  if (n < 2) {
    throw ContractError("loss_temporal_overlap: needs at least 2 spans, got " +
                        std::to_string(n));
  }
  Tensor centers = slice_cols(spans, 0, 1);
  Tensor half_widths = scale(slice_cols(spans, 1, 2), 0.5);
  Tensor zeros = Tensor::zeros({n, 1});
  Tensor ones = Tensor::full({n, 1}, 1.0);
  Tensor starts = maximum(sub(centers, half_widths), zeros);
  Tensor ends = minimum(add(centers, half_widths), ones);

  std::vector<std::size_t> left, right;
  left.reserve(n * (n - 1));
  right.reserve(n * (n - 1));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      left.push_back(i);
      right.push_back(j);
    }
  }
  Tensor s_i = gather_rows(starts, left), s_j = gather_rows(starts, right);
  Tensor e_i = gather_rows(ends, left), e_j = gather_rows(ends, right);
  Tensor inter = relu(sub(minimum(e_i, e_j), maximum(s_i, s_j)));
  Tensor unions = sub(add(sub(e_i, s_i), sub(e_j, s_j)), inter);
  Tensor iou = div(inter, add_const(unions, kIouEps));
  return mean(iou);
}

Tensor loss_temporal_overlap(const MemoryBank& bank) {
  return loss_temporal_overlap(bank.spans);
}

Tensor loss_diversity(const MemoryBank& bank, Real l_cls, Real l_iou) {
  if (l_cls < 0 || l_iou < 0) {
    throw ContractError("loss_diversity: weights must be non-negative");
  }
  return add(scale(loss_semantic_diversity(bank), l_cls),
             scale(loss_temporal_overlap(bank), l_iou));
}

}  // namespace gf
