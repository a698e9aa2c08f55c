#ifndef GF_MODEL_HPP
#define GF_MODEL_HPP

#include "gf/episodes.hpp"
#include "gf/focus.hpp"

namespace gf {

struct ModelConfig {
  std::size_t data_dim = 32;    // feature dimension of the input sequences
  std::size_t model_dim = 64;
  std::size_t layers = 2;
  std::size_t heads = 4;
  std::size_t num_memories = 8;
  std::size_t classes = 5;      // classifier width C' (no-event slot included)
  std::size_t vocab_size = 1;
  std::size_t answer_count = 1;
  Real dropout = 0.1;
  CascadeMode cascade = CascadeMode::kMultiLevel;

  AttentionConfig attention() const { return {model_dim, heads, layers, dropout}; }
  void validate() const;
};

struct QAForward {
  MemoryBank bank;
  MemoryPrompt prompt;
  FocusEncoding enc;
  AttentionResult memory_attention;  // empty in single-level mode
  AttentionResult frame_attention;
  AnswerPrediction answer;
};

// The full two-stage model: input projections, glancing stage, focusing stage.
struct GlanceFocusModel {
  ModelConfig cfg;
  Tensor vproj_w, vproj_b;  // feature space -> model space
  Tensor qembed;            // question token embedding table
  Tensor qproj_w, qproj_b;  // projector G
  GlanceParams glance;
  FocusParams focus;

  static GlanceFocusModel init(const ModelConfig& cfg, Rng& rng);

  ParamMap params() const;
  GlanceFocusModel clone() const;
  // Copies parameter values from a structurally identical model.
  void copy_values_from(const GlanceFocusModel& other);

  Tensor project_video(const Tensor& features) const;
  Tensor embed_question(const std::vector<std::size_t>& tokens) const;

  // Glance -> prompt -> joint encode -> cascade -> answer logits.
  QAForward forward_qa(const Tensor& features, const std::vector<std::size_t>& question,
                       Rng* dropout_rng = nullptr) const;
};

}  // namespace gf

#endif
