#include "gf/model.hpp"

namespace gf {

void ModelConfig::validate() const {
  attention().validate();
  if (data_dim == 0) throw ContractError("model: data_dim must be positive");
  if (num_memories == 0) throw ContractError("model: need at least one memory");
  if (classes == 0) throw ContractError("model: need at least one class");
  if (vocab_size == 0) throw ContractError("model: empty token vocabulary");
  if (answer_count == 0) throw ContractError("model: empty answer vocabulary");
}

GlanceFocusModel GlanceFocusModel::init(const ModelConfig& cfg, Rng& rng) {
  cfg.validate();
  GlanceFocusModel m;
  m.cfg = cfg;
  m.vproj_w = xavier({cfg.data_dim, cfg.model_dim}, rng);
  m.vproj_b = Tensor::zeros({cfg.model_dim}, true);
  m.qembed = xavier({cfg.vocab_size, cfg.model_dim}, rng);
  m.qproj_w = xavier({cfg.model_dim, cfg.model_dim}, rng);
  m.qproj_b = Tensor::zeros({cfg.model_dim}, true);
  m.glance = GlanceParams::init(cfg.attention(), cfg.num_memories, cfg.classes, rng);
  m.focus = FocusParams::init(cfg.attention(), cfg.num_memories, cfg.answer_count, rng);
  return m;
}

ParamMap GlanceFocusModel::params() const {
  ParamMap out;
  out["vproj.w"] = vproj_w;
  out["vproj.b"] = vproj_b;
  out["question.embed"] = qembed;
  out["question.proj_w"] = qproj_w;
  out["question.proj_b"] = qproj_b;
  glance.collect(out, "glance");
  focus.collect(out, "focus");
  return out;
}

GlanceFocusModel GlanceFocusModel::clone() const {
  GlanceFocusModel m;
  m.cfg = cfg;
  m.vproj_w = vproj_w.clone();
  m.vproj_b = vproj_b.clone();
  m.qembed = qembed.clone();
  m.qproj_w = qproj_w.clone();
  m.qproj_b = qproj_b.clone();
  m.glance = glance.clone();
  m.focus = focus.clone();
  return m;
}

void GlanceFocusModel::copy_values_from(const GlanceFocusModel& other) {
  ParamMap dst = params();
  ParamMap src = other.params();
  if (dst.size() != src.size()) {
    throw ContractError("copy_values_from: parameter sets differ");
  }
  for (auto& [name, tensor] : dst) {
    auto it = src.find(name);
    if (it == src.end() || it->second.shape() != tensor.shape()) {
      throw ContractError("copy_values_from: parameter '" + name + "' mismatch");
    }
    tensor.values() = it->second.values();
  }
}

Tensor GlanceFocusModel::project_video(const Tensor& features) const {
  if (features.rank() != 2 || features.cols() != cfg.data_dim) {
    throw ShapeError("project_video: features " + shape_str(features.shape()) +
                     " do not match data_dim " + std::to_string(cfg.data_dim));
  }
  return add_rowvec(matmul(features, vproj_w), vproj_b);
}

Tensor GlanceFocusModel::embed_question(const std::vector<std::size_t>& tokens) const {
  if (tokens.empty()) throw ContractError("embed_question: empty question");
  for (std::size_t t : tokens) {
    if (t >= cfg.vocab_size) {
      throw ContractError("embed_question: token id " + std::to_string(t) +
                          " out of range");
    }
  }
  Tensor rows = gather_rows(qembed, tokens);
  return add_rowvec(matmul(rows, qproj_w), qproj_b);
}

QAForward GlanceFocusModel::forward_qa(const Tensor& features,
                                       const std::vector<std::size_t>& question,
                                       Rng* dropout_rng) const {
  QAForward f;
  Tensor video = project_video(features);
  f.bank = glance_forward(video, glance, dropout_rng);
  f.prompt = build_memory_prompt(f.bank);
  Tensor q = embed_question(question);
  f.enc = focus_encode(video, f.prompt, q, focus, dropout_rng);
  const Real drop = cfg.dropout;
  if (cfg.cascade == CascadeMode::kMultiLevel) {
    f.memory_attention =
        focus_on_memory(f.enc.question, f.enc.memory, focus, cfg.heads, drop, dropout_rng);
    f.frame_attention = focus_on_frame(f.memory_attention.output, f.enc.video, focus,
                                       cfg.heads, drop, dropout_rng);
  } else {
    // Ablation: one standard cross-attention, question onto frames directly.
    f.frame_attention = multi_head_attention(focus.attn_frame, f.enc.question,
                                             f.enc.video, f.enc.video, nullptr,
                                             cfg.heads, drop, dropout_rng);
  }
  f.answer = predict_answer(f.frame_attention.output, focus, cfg.heads, drop, dropout_rng);
  return f;
}

}  // namespace gf
