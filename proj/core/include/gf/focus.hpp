#ifndef GF_FOCUS_HPP
#define GF_FOCUS_HPP

#include "gf/glance.hpp"

namespace gf {

// Event memories reordered by predicted temporal center, ready to serve as
// anchors for the focusing stage.
struct MemoryPrompt {
  Tensor memories;                     // [N x D], sorted by center
  Tensor positions;                    // [N x D], row i is the sinusoidal table row i
  std::vector<std::size_t> sort_order; // sort_order[k] = original index of rank k

  Tensor prompted() const { return add(memories, positions); }
};

// Stable sort by predicted center; the sort indices are constants, gradients
// flow through the gathered memory rows.
MemoryPrompt build_memory_prompt(const MemoryBank& bank);

enum class CascadeMode {
  kMultiLevel,   // question -> memories -> frames -> answer
  kSingleLevel,  // question -> frames -> answer (ablation)
};

struct FocusParams {
  EncoderParams encoder;
  Tensor seg_video, seg_memory, seg_question;  // segment-type embeddings, [D]
  AttentionBlock attn_memory;                  // focus-on-memory
  AttentionBlock attn_frame;                   // focus-on-frame
  AttentionBlock attn_answer;                  // answer queries over focused frames
  Tensor answer_queries;                       // [N x D]
  Tensor fa_w, fa_b;                           // answer head

  static FocusParams init(const AttentionConfig& cfg, std::size_t num_memories,
                          std::size_t answer_count, Rng& rng);
  void collect(ParamMap& out, const std::string& prefix) const;
  FocusParams clone() const;
};

struct FocusEncoding {
  Tensor video;     // [T x D]
  Tensor memory;    // [N x D]
  Tensor question;  // [L x D]
};

// Joint encoding of [video; memory prompts; question] with segment-type
// embeddings; sinusoidal positions are added to video frames and question
// tokens, the prompt already carries its own.
FocusEncoding focus_encode(const Tensor& video, const MemoryPrompt& prompt,
                           const Tensor& question, const FocusParams& params,
                           Rng* dropout_rng = nullptr);

AttentionResult focus_on_memory(const Tensor& question_enc, const Tensor& memory_enc,
                                const FocusParams& params, std::size_t heads,
                                Real dropout_rate = 0.0, Rng* rng = nullptr);

AttentionResult focus_on_frame(const Tensor& memory_focused, const Tensor& video_enc,
                               const FocusParams& params, std::size_t heads,
                               Real dropout_rate = 0.0, Rng* rng = nullptr);

struct AnswerPrediction {
  Tensor logits;       // [1 x A]
  Tensor answer_repr;  // [N x D]
  AttentionResult attention;
};

// Answer queries attend over the focused frames; the answer head reads the
// last query row. Ties in the argmax break toward the lowest index.
AnswerPrediction predict_answer(const Tensor& focused, const FocusParams& params,
                                std::size_t heads, Real dropout_rate = 0.0,
                                Rng* rng = nullptr);

std::size_t argmax_logits(const Tensor& logits);

// Attention maps of both focus levels plus the prompt bookkeeping, as written
// to / read from the line-oriented `GF-ATTN v1` text format.
struct AttentionExport {
  std::size_t heads = 0, question_len = 0, memories = 0, frames = 0;
  std::vector<std::size_t> sort_order;
  std::vector<Real> spans;          // 2 * memories values, (center, width) pairs
  std::vector<std::vector<Real>> memory_weights;  // h*L rows of N
  std::vector<std::vector<Real>> frame_weights;   // h*L rows of T

  bool operator==(const AttentionExport&) const = default;
};

AttentionExport make_attention_export(const AttentionResult& memory_level,
                                      const AttentionResult& frame_level,
                                      const MemoryPrompt& prompt,
                                      const MemoryBank& bank);

void write_attention(const std::string& path, const AttentionExport& e);
AttentionExport read_attention(const std::string& path);

}  // namespace gf

#endif
