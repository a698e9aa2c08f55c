#ifndef GF_TRANSFORMER_HPP
#define GF_TRANSFORMER_HPP

#include <map>
#include <optional>
#include <string>

#include "gf/ops.hpp"

namespace gf {

// Named parameter registry. std::map keeps iteration order stable, which the
// optimizer and checkpoint writer rely on for determinism.
using ParamMap = std::map<std::string, Tensor>;

struct AttentionConfig {
  std::size_t model_dim = 64;
  std::size_t heads = 4;
  std::size_t layers = 2;
  Real dropout = 0.0;

  void validate() const {
    if (model_dim == 0 || heads == 0 || layers == 0) {
      throw ContractError("attention config: dims, heads and layers must be positive");
    }
    if (model_dim % heads != 0) {
      throw ContractError("attention config: model_dim " + std::to_string(model_dim) +
                          " not divisible by heads " + std::to_string(heads));
    }
    if (dropout < 0 || dropout >= 1) {
      throw ContractError("attention config: dropout must be in [0, 1)");
    }
  }
};

// Xavier-uniform initialized matrix, requires_grad = true.
Tensor xavier(Shape shape, Rng& rng);

// Boolean attendability mask; allowed[q * cols + k] != 0 means query row q may
// attend to key k. Every row must admit at least one allowed key.
struct AttentionMask {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint8_t> allowed;

  static AttentionMask all_allowed(std::size_t rows, std::size_t cols) {
    return {rows, cols, std::vector<std::uint8_t>(rows * cols, 1)};
  }
  bool at(std::size_t q, std::size_t k) const { return allowed[q * cols + k] != 0; }
};

struct AttentionBlock {
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;

  static AttentionBlock init(std::size_t dim, Rng& rng);
  void collect(ParamMap& out, const std::string& prefix) const;
  AttentionBlock clone() const;
};

struct AttentionResult {
  Tensor output;                     // [Lq x D]
  std::vector<Tensor> head_weights;  // heads entries of [Lq x Lk]

  // Stacks per-head weights into a [h x Lq x Lk] tensor.
  Tensor stacked_weights() const;
};

// Scaled dot-product attention over `heads` heads with scale 1/sqrt(D/h).
// Masked positions receive exactly zero weight; a fully masked query row is a
// contract error. Dropout applies to the attention weights when rng != null.
AttentionResult multi_head_attention(const AttentionBlock& block, const Tensor& q,
                                     const Tensor& k, const Tensor& v,
                                     const AttentionMask* mask, std::size_t heads,
                                     Real dropout_rate = 0.0, Rng* rng = nullptr);

struct FeedForward {
  Tensor w1, b1, w2, b2;

  static FeedForward init(std::size_t dim, Rng& rng);  // inner dim 4 * dim
  void collect(ParamMap& out, const std::string& prefix) const;
  FeedForward clone() const;
  Tensor forward(const Tensor& x) const;
};

struct LayerNormParams {
  Tensor gain, bias;

  static LayerNormParams init(std::size_t dim);
  void collect(ParamMap& out, const std::string& prefix) const;
  LayerNormParams clone() const;
  Tensor forward(const Tensor& x) const { return layernorm(x, gain, bias); }
};

struct EncoderLayerParams {
  AttentionBlock attn;
  FeedForward ff;
  LayerNormParams ln1, ln2;

  static EncoderLayerParams init(std::size_t dim, Rng& rng);
  void collect(ParamMap& out, const std::string& prefix) const;
  EncoderLayerParams clone() const;
};

// Pre-norm self-attention encoder stack with a final layernorm.
struct EncoderParams {
  AttentionConfig cfg;
  std::vector<EncoderLayerParams> layers;
  LayerNormParams final_ln;

  static EncoderParams init(const AttentionConfig& cfg, Rng& rng);
  void collect(ParamMap& out, const std::string& prefix) const;
  EncoderParams clone() const;
  Tensor forward(const Tensor& x, const AttentionMask* mask = nullptr,
                 Rng* dropout_rng = nullptr) const;
};

struct DecoderLayerParams {
  AttentionBlock self_attn, cross_attn;
  FeedForward ff;
  LayerNormParams ln1, ln2, ln3;

  static DecoderLayerParams init(std::size_t dim, Rng& rng);
  void collect(ParamMap& out, const std::string& prefix) const;
  DecoderLayerParams clone() const;
};

// Pre-norm decoder stack: self-attention over the queries, cross-attention
// onto the encoded sequence, feed-forward; final layernorm.
struct DecoderParams {
  AttentionConfig cfg;
  std::vector<DecoderLayerParams> layers;
  LayerNormParams final_ln;

  static DecoderParams init(const AttentionConfig& cfg, Rng& rng);
  void collect(ParamMap& out, const std::string& prefix) const;
  DecoderParams clone() const;
  Tensor forward(const Tensor& queries, const Tensor& encoded,
                 const AttentionMask* cross_mask = nullptr,
                 Rng* dropout_rng = nullptr) const;
};

// Standard sinusoidal positional table, [n x dim]; dim must be even.
Tensor sinusoidal_pe(std::size_t n, std::size_t dim);

}  // namespace gf

#endif
