#include "gf/focus.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <numeric>
#include <sstream>

namespace gf {

MemoryPrompt build_memory_prompt(const MemoryBank& bank) {
  const std::size_t n = bank.num_memories();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return bank.spans.at(a, 0) < bank.spans.at(b, 0);
  });
  MemoryPrompt prompt;
  prompt.memories = gather_rows(bank.memories, order);
  prompt.positions = sinusoidal_pe(n, bank.memories.cols());
  prompt.sort_order = std::move(order);
  return prompt;
}

FocusParams FocusParams::init(const AttentionConfig& cfg, std::size_t num_memories,
                              std::size_t answer_count, Rng& rng) {
  if (answer_count == 0) {
    throw ContractError("focus: answer vocabulary must be non-empty");
  }
  FocusParams p;
  p.encoder = EncoderParams::init(cfg, rng);
  p.seg_video = xavier({cfg.model_dim}, rng);
  p.seg_memory = xavier({cfg.model_dim}, rng);
  p.seg_question = xavier({cfg.model_dim}, rng);
  p.attn_memory = AttentionBlock::init(cfg.model_dim, rng);
  p.attn_frame = AttentionBlock::init(cfg.model_dim, rng);
  p.attn_answer = AttentionBlock::init(cfg.model_dim, rng);
  p.answer_queries = xavier({num_memories, cfg.model_dim}, rng);
  p.fa_w = xavier({cfg.model_dim, answer_count}, rng);
  p.fa_b = Tensor::zeros({answer_count}, true);
  return p;
}

void FocusParams::collect(ParamMap& out, const std::string& prefix) const {
  encoder.collect(out, prefix + ".enc");
  out[prefix + ".seg_video"] = seg_video;
  out[prefix + ".seg_memory"] = seg_memory;
  out[prefix + ".seg_question"] = seg_question;
  attn_memory.collect(out, prefix + ".attn_memory");
  attn_frame.collect(out, prefix + ".attn_frame");
  attn_answer.collect(out, prefix + ".attn_answer");
  out[prefix + ".answer_queries"] = answer_queries;
  out[prefix + ".fa_w"] = fa_w;
  out[prefix + ".fa_b"] = fa_b;
}

FocusParams FocusParams::clone() const {
  FocusParams p;
  p.encoder = encoder.clone();
  p.seg_video = seg_video.clone();
  p.seg_memory = seg_memory.clone();
  p.seg_question = seg_question.clone();
  p.attn_memory = attn_memory.clone();
  p.attn_frame = attn_frame.clone();
  p.attn_answer = attn_answer.clone();
  p.answer_queries = answer_queries.clone();
  p.fa_w = fa_w.clone();
  p.fa_b = fa_b.clone();
  return p;
}

FocusEncoding focus_encode(const Tensor& video, const MemoryPrompt& prompt,
                           const Tensor& question, const FocusParams& params,
                           Rng* dropout_rng) {
  const std::size_t d = params.encoder.cfg.model_dim;
  if (video.rank() != 2 || video.cols() != d || question.rank() != 2 ||
      question.cols() != d || prompt.memories.cols() != d) {
    throw ContractError("focus_encode: inputs must share model dim " +
                        std::to_string(d));
  }
  const std::size_t t = video.rows(), n = prompt.memories.rows(), l = question.rows();
  Tensor video_in =
      add_rowvec(add(video, sinusoidal_pe(t, d)), params.seg_video);
  Tensor memory_in = add_rowvec(prompt.prompted(), params.seg_memory);
  Tensor question_in =
      add_rowvec(add(question, sinusoidal_pe(l, d)), params.seg_question);
  Tensor joint = concat_rows({video_in, memory_in, question_in});
  Tensor encoded = params.encoder.forward(joint, nullptr, dropout_rng);
  return {slice_rows(encoded, 0, t), slice_rows(encoded, t, t + n),
          slice_rows(encoded, t + n, t + n + l)};
}

AttentionResult focus_on_memory(const Tensor& question_enc, const Tensor& memory_enc,
                                const FocusParams& params, std::size_t heads,
                                Real dropout_rate, Rng* rng) {
  return multi_head_attention(params.attn_memory, question_enc, memory_enc,
                              memory_enc, nullptr, heads, dropout_rate, rng);
}

AttentionResult focus_on_frame(const Tensor& memory_focused, const Tensor& video_enc,
                               const FocusParams& params, std::size_t heads,
                               Real dropout_rate, Rng* rng) {
  return multi_head_attention(params.attn_frame, memory_focused, video_enc,
                              video_enc, nullptr, heads, dropout_rate, rng);
}

AnswerPrediction predict_answer(const Tensor& focused, const FocusParams& params,
                                std::size_t heads, Real dropout_rate, Rng* rng) {
  AttentionResult att =
      multi_head_attention(params.attn_answer, params.answer_queries, focused,
                           focused, nullptr, heads, dropout_rate, rng);
  const std::size_t n = params.answer_queries.rows();
  Tensor last = slice_rows(att.output, n - 1, n);
  Tensor logits = add_rowvec(matmul(last, params.fa_w), params.fa_b);
  return {logits, att.output, std::move(att)};
}

std::size_t argmax_logits(const Tensor& logits) {
  const auto& v = logits.values();
  if (v.empty()) throw ContractError("argmax_logits: empty logits");
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

namespace {

// Values cross the text format at 9 significant digits; quantizing up front
// makes write -> read an identity on the struct.
Real quantize9(Real v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 9);
  Real out = 0;
  std::from_chars(buf, res.ptr, out);
  return out;
}

void format9(std::string& line, Real v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 9);
  line.append(buf, res.ptr);
}

std::vector<std::vector<Real>> flatten_heads(const AttentionResult& level) {
  std::vector<std::vector<Real>> rows;
  for (const Tensor& w : level.head_weights) {
    const std::size_t r = w.rows(), c = w.cols();
    for (std::size_t i = 0; i < r; ++i) {
      std::vector<Real> row(c);
      for (std::size_t j = 0; j < c; ++j) row[j] = quantize9(w.at(i, j));
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

[[noreturn]] void bad_line(const std::string& path, std::size_t line_no,
                           const std::string& why) {
  throw FormatError(path + ":" + std::to_string(line_no) + ": " + why);
}

}  // namespace

AttentionExport make_attention_export(const AttentionResult& memory_level,
                                      const AttentionResult& frame_level,
                                      const MemoryPrompt& prompt,
                                      const MemoryBank& bank) {
  if (memory_level.head_weights.empty() || frame_level.head_weights.empty()) {
    throw ContractError("make_attention_export: missing attention weights");
  }
  AttentionExport e;
  e.heads = memory_level.head_weights.size();
  e.question_len = memory_level.head_weights.front().rows();
  e.memories = memory_level.head_weights.front().cols();
  e.frames = frame_level.head_weights.front().cols();
  e.sort_order = prompt.sort_order;
  for (std::size_t i = 0; i < bank.num_memories(); ++i) {
    e.spans.push_back(quantize9(bank.spans.at(i, 0)));
    e.spans.push_back(quantize9(bank.spans.at(i, 1)));
  }
  e.memory_weights = flatten_heads(memory_level);
  e.frame_weights = flatten_heads(frame_level);
  return e;
}

void write_attention(const std::string& path, const AttentionExport& e) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path + ": cannot open for writing");
  std::string line = "GF-ATTN v1 " + std::to_string(e.heads) + " " +
                     std::to_string(e.question_len) + " " +
                     std::to_string(e.memories) + " " + std::to_string(e.frames);
  out << line << "\n";
  line = "order";
  for (std::size_t i : e.sort_order) line += " " + std::to_string(i);
  out << line << "\n";
  line = "spans";
  for (Real v : e.spans) {
    line += " ";
    format9(line, v);
  }
  out << line << "\n";
  auto dump_level = [&](const char* tag, const std::vector<std::vector<Real>>& rows) {
    for (std::size_t h = 0; h < e.heads; ++h) {
      for (std::size_t r = 0; r < e.question_len; ++r) {
        line = tag;
        line += " " + std::to_string(h) + " " + std::to_string(r);
        for (Real v : rows[h * e.question_len + r]) {
          line += " ";
          format9(line, v);
        }
        out << line << "\n";
      }
    }
  };
  dump_level("mem", e.memory_weights);
  dump_level("frame", e.frame_weights);
  if (!out) throw IoError(path + ": write failed");
}

AttentionExport read_attention(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path + ": cannot open for reading");
  std::string line;
  std::size_t line_no = 0;

  auto next_line = [&]() {
    if (!std::getline(in, line)) bad_line(path, line_no + 1, "unexpected end of file");
    ++line_no;
  };

  next_line();
  std::istringstream header(line);
  std::string magic, version;
  AttentionExport e;
  if (!(header >> magic >> version >> e.heads >> e.question_len >> e.memories >>
        e.frames) ||
      magic != "GF-ATTN" || version != "v1") {
    bad_line(path, line_no, "expected 'GF-ATTN v1 h L N T' header");
  }

  next_line();
  {
    std::istringstream is(line);
    std::string tag;
    is >> tag;
    if (tag != "order") bad_line(path, line_no, "expected order line");
    std::size_t v;
    while (is >> v) e.sort_order.push_back(v);
    if (e.sort_order.size() != e.memories) {
      bad_line(path, line_no, "order entry count mismatch");
    }
  }

  next_line();
  {
    std::istringstream is(line);
    std::string tag;
    is >> tag;
    if (tag != "spans") bad_line(path, line_no, "expected spans line");
    Real v;
    while (is >> v) e.spans.push_back(v);
    if (e.spans.size() != 2 * e.memories) {
      bad_line(path, line_no, "spans entry count mismatch");
    }
  }

  auto read_level = [&](const char* tag, std::size_t width,
                        std::vector<std::vector<Real>>& rows) {
    for (std::size_t h = 0; h < e.heads; ++h) {
      for (std::size_t r = 0; r < e.question_len; ++r) {
        next_line();
        std::istringstream is(line);
        std::string t;
        std::size_t fh, fr;
        if (!(is >> t >> fh >> fr) || t != tag || fh != h || fr != r) {
          bad_line(path, line_no, std::string("expected '") + tag + " " +
                                      std::to_string(h) + " " + std::to_string(r) +
                                      " ...'");
        }
        std::vector<Real> w;
        Real v;
        while (is >> v) w.push_back(v);
        if (w.size() != width) bad_line(path, line_no, "weight entry count mismatch");
        rows.push_back(std::move(w));
      }
    }
  };
  read_level("mem", e.memories, e.memory_weights);
  read_level("frame", e.frames, e.frame_weights);
  return e;
}

}  // namespace gf
