#ifndef GF_GLANCE_HPP
#define GF_GLANCE_HPP

#include "gf/matching.hpp"
#include "gf/transformer.hpp"

namespace gf {

// Output of the glancing stage: N event memories with per-memory class
// logits and temporal span predictions.
struct MemoryBank {
  Tensor memories;      // [N x D]
  Tensor class_logits;  // [N x C'], C' includes the no-event class if present
  Tensor class_probs;   // softmax of class_logits, same graph
  Tensor spans;         // [N x 2], sigmoid-bounded (center, width)

  std::size_t num_memories() const { return memories.rows(); }
  std::size_t num_classes() const { return class_logits.cols(); }
  Span span(std::size_t i) const {
    return {spans.at(i, 0), spans.at(i, 1)};
  }
  std::size_t predicted_class(std::size_t i) const;
};

// 3-layer FFN temporal head; final layer is followed by a sigmoid so the
// predicted (center, width) lands in [0, 1]^2.
struct TemporalHead {
  Tensor w1, b1, w2, b2, w3, b3;

  static TemporalHead init(std::size_t dim, Rng& rng);
  void collect(ParamMap& out, const std::string& prefix) const;
  TemporalHead clone() const;
  Tensor forward(const Tensor& memories) const;
};

struct GlanceParams {
  EncoderParams encoder;
  DecoderParams decoder;
  Tensor memory_queries;  // [N x D], learned
  Tensor fc_w, fc_b;      // classifier head
  TemporalHead ft;

  // classes = C' (already including the no-event slot when supervised).
  static GlanceParams init(const AttentionConfig& cfg, std::size_t num_memories,
                           std::size_t classes, Rng& rng);
  void collect(ParamMap& out, const std::string& prefix) const;
  GlanceParams clone() const;
};

// Encodes the video (sinusoidal frame positions added), cross-attends the N
// memory queries onto the encoded frames, applies both heads.
MemoryBank glance_forward(const Tensor& video, const GlanceParams& params,
                          Rng* dropout_rng = nullptr);

// Mean per-memory entropy of the class distributions; >= 0, zero iff one-hot.
Tensor loss_certainty(const Tensor& class_probs);
Tensor loss_certainty(const MemoryBank& bank);

// Negative entropy of the mean class distribution; in [-ln C, 0], minimized
// when the marginal over memories is uniform.
Tensor loss_semantic_diversity(const Tensor& class_probs);
Tensor loss_semantic_diversity(const MemoryBank& bank);

// Mean soft temporal IoU over ordered pairs i != j; in [0, 1]. Needs N >= 2.
Tensor loss_temporal_overlap(const Tensor& spans);
Tensor loss_temporal_overlap(const MemoryBank& bank);

// l_cls * semantic diversity + l_iou * temporal overlap.
Tensor loss_diversity(const MemoryBank& bank, Real l_cls, Real l_iou);

}  // namespace gf

#endif
