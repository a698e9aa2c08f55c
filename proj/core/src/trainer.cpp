#include "gf/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <thread>

#include <json.hpp>

namespace gf {

using nlohmann::json;

const char* train_mode_name(TrainMode m) {
  return m == TrainMode::kUnsupervised ? "unsupervised" : "supervised";
}

TrainMode train_mode_from_name(const std::string& name) {
  if (name == "unsupervised" || name == "uns") return TrainMode::kUnsupervised;
  if (name == "supervised" || name == "sup") return TrainMode::kSupervised;
  throw ContractError("unknown training mode '" + name + "'");
}

void TrainConfig::validate() const {
  if (lambda_cert < 0 || lambda_cls < 0 || lambda_iou < 0 || lambda_l1 < 0 ||
      no_event_weight < 0) {
    throw ContractError("train config: loss weights must be non-negative");
  }
  if (learning_rate <= 0) throw ContractError("train config: learning rate must be positive");
  if (batch_size == 0) throw ContractError("train config: batch size must be positive");
  if (num_memories < 2) {
    throw ContractError("train config: need at least 2 memories for the diversity losses");
  }
  if (threads == 0) throw ContractError("train config: threads must be >= 1");
  AttentionConfig a{model_dim, heads, layers, dropout};
  a.validate();
}

Real LossRecord::recombined(const TrainConfig& c) const {
  Real r = l_qa;
  if (c.mode == TrainMode::kUnsupervised) {
    r += c.lambda_cert * l_cert + c.lambda_cls * l_sem + c.lambda_iou * l_iou;
  } else {
    r += c.lambda_cls * l_cls + c.lambda_l1 * l_l1;
  }
  return r;
}

bool is_heldout_episode(std::uint64_t id) { return splitmix64(id) % 10 == 0; }

Metrics evaluate_predictions(
    const std::vector<const Episode*>& episodes,
    const std::function<std::size_t(const Episode&, const QASample&)>& predict) {
  if (episodes.empty()) throw ContractError("evaluate: empty dataset");
  Metrics m;
  for (const Episode* ep : episodes) {
    for (const QASample& qa : ep->qas) {
      ++m.samples;
      TypeStat& st = m.per_type[question_type_name(qa.type)];
      ++st.count;
      if (predict(*ep, qa) == qa.answer) {
        ++st.correct;
        ++m.correct;
      }
    }
  }
  if (m.samples == 0) throw ContractError("evaluate: dataset has no QA samples");
  m.accuracy = static_cast<Real>(m.correct) / static_cast<Real>(m.samples);
  return m;
}

namespace {

struct EpisodeEval {
  std::vector<std::size_t> predictions;
  Real l1_sum = 0;
  std::size_t l1_count = 0;
  std::size_t cls_correct = 0;
  std::size_t cls_total = 0;
};

EpisodeEval eval_episode(const GlanceFocusModel& model, const Episode& ep,
                         const EvalOptions& options) {
  EpisodeEval out;
  Tensor video = model.project_video(ep.features);
  MemoryBank bank = glance_forward(video, model.glance, nullptr);
  MemoryPrompt prompt = build_memory_prompt(bank);
  for (const QASample& qa : ep.qas) {
    Tensor q = model.embed_question(qa.question);
    FocusEncoding enc = focus_encode(video, prompt, q, model.focus, nullptr);
    AttentionResult frame_att;
    if (model.cfg.cascade == CascadeMode::kMultiLevel) {
      AttentionResult mem_att =
          focus_on_memory(enc.question, enc.memory, model.focus, model.cfg.heads);
      frame_att = focus_on_frame(mem_att.output, enc.video, model.focus, model.cfg.heads);
    } else {
      frame_att = multi_head_attention(model.focus.attn_frame, enc.question, enc.video,
                                       enc.video, nullptr, model.cfg.heads);
    }
    AnswerPrediction ans = predict_answer(frame_att.output, model.focus, model.cfg.heads);
    out.predictions.push_back(argmax_logits(ans.logits));
  }
  if (options.event_metrics) {
    auto gt = pad_events(ep.events, bank.num_memories());
    auto cost = matching_cost_matrix(gt, bank, options.lambda_cls, options.lambda_l1);
    Assignment asg = hungarian(cost);
    for (std::size_t i = 0; i < gt.size(); ++i) {
      if (!gt[i].is_event()) continue;
      const std::size_t j = asg.perm[i];
      ++out.cls_total;
      if (bank.predicted_class(j) == *gt[i].label) ++out.cls_correct;
      out.l1_sum += std::fabs(gt[i].span.center - bank.spans.at(j, 0)) +
                    std::fabs(gt[i].span.width - bank.spans.at(j, 1));
      ++out.l1_count;
    }
  }
  return out;
}

void run_sharded(std::size_t jobs, std::size_t threads,
                 const std::function<void(std::size_t)>& work) {
  threads = std::max<std::size_t>(1, std::min(threads, jobs));
  if (threads <= 1) {
    for (std::size_t i = 0; i < jobs; ++i) work(i);
    return;
  }
  std::vector<std::exception_ptr> errors(threads);
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < threads; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < jobs; i += threads) work(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace

Metrics evaluate_model(const GlanceFocusModel& model,
                       const std::vector<const Episode*>& episodes,
                       const EvalOptions& options) {
  if (episodes.empty()) throw ContractError("evaluate: empty dataset");
  std::vector<EpisodeEval> evals(episodes.size());
  run_sharded(episodes.size(), options.threads, [&](std::size_t i) {
    evals[i] = eval_episode(model, *episodes[i], options);
  });

  Metrics m;
  Real l1_sum = 0;
  std::size_t l1_count = 0, cls_correct = 0, cls_total = 0;
  for (std::size_t i = 0; i < episodes.size(); ++i) {
    const Episode& ep = *episodes[i];
    for (std::size_t q = 0; q < ep.qas.size(); ++q) {
      ++m.samples;
      TypeStat& st = m.per_type[question_type_name(ep.qas[q].type)];
      ++st.count;
      if (evals[i].predictions[q] == ep.qas[q].answer) {
        ++st.correct;
        ++m.correct;
      }
    }
    l1_sum += evals[i].l1_sum;
    l1_count += evals[i].l1_count;
    cls_correct += evals[i].cls_correct;
    cls_total += evals[i].cls_total;
  }
  if (m.samples == 0) throw ContractError("evaluate: dataset has no QA samples");
  m.accuracy = static_cast<Real>(m.correct) / static_cast<Real>(m.samples);
  if (options.event_metrics) {
    m.has_event_metrics = true;
    m.event_class_accuracy =
        cls_total ? static_cast<Real>(cls_correct) / static_cast<Real>(cls_total) : 0.0;
    m.mean_temporal_l1 = l1_count ? l1_sum / static_cast<Real>(l1_count) : 0.0;
  }
  return m;
}

void AdamState::apply(ParamMap& params, Real lr) {
  ++step;
  const Real bc1 = 1.0 - std::pow(beta1, static_cast<Real>(step));
  const Real bc2 = 1.0 - std::pow(beta2, static_cast<Real>(step));
  for (auto& [name, t] : params) {
    if (!t.requires_grad()) continue;
    t.node()->ensure_grad();
    const auto& g = t.node()->grad;
    auto& val = t.values();
    auto& mm = m[name];
    auto& vv = v[name];
    if (mm.size() != val.size()) mm.assign(val.size(), 0.0);
    if (vv.size() != val.size()) vv.assign(val.size(), 0.0);
    if (g.size() != val.size()) {
      throw ContractError("adam: gradient shape mismatch for '" + name + "'");
    }
    for (std::size_t i = 0; i < val.size(); ++i) {
      mm[i] = beta1 * mm[i] + (1.0 - beta1) * g[i];
      vv[i] = beta2 * vv[i] + (1.0 - beta2) * g[i] * g[i];
      const Real mhat = mm[i] / bc1;
      const Real vhat = vv[i] / bc2;
      val[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

Trainer::Trainer(TrainConfig config, Dataset data)
    : config_(std::move(config)), data_(std::move(data)) {
  config_.validate();
  if (data_.episodes.empty()) throw ContractError("trainer: empty dataset");

  const Episode& first = data_.episodes.front();
  if (!first.features.defined()) {
    throw ContractError("trainer: dataset was loaded without features");
  }
  const std::size_t data_dim = first.features.cols();
  const std::size_t classes =
      config_.classes ? config_.classes : data_.vocab.classes;

  for (std::size_t i = 0; i < data_.episodes.size(); ++i) {
    const Episode& ep = data_.episodes[i];
    if (!ep.features.defined() || ep.features.cols() != data_dim) {
      throw ShapeError("trainer: episode " + std::to_string(ep.id) +
                       " feature dim differs from " + std::to_string(data_dim));
    }
    for (const QASample& qa : ep.qas) {
      if (qa.answer >= data_.vocab.answers.size()) {
        throw ContractError("trainer: answer id out of vocabulary range");
      }
    }
    (is_heldout_episode(ep.id) ? heldout_indices_ : train_indices_).push_back(i);
  }
  if (train_indices_.empty()) throw ContractError("trainer: no training episodes");

  if (config_.mode == TrainMode::kSupervised) {
    if (classes != data_.vocab.classes) {
      throw ContractError("trainer: supervised mode needs classes = " +
                          std::to_string(data_.vocab.classes) + ", got " +
                          std::to_string(classes));
    }
    for (std::size_t i : train_indices_) {
      const Episode& ep = data_.episodes[i];
      if (ep.events.empty()) {
        throw ContractError("trainer: supervised mode but episode " +
                            std::to_string(ep.id) + " carries no event labels");
      }
      if (ep.events.size() > config_.num_memories) {
        throw ContractError("trainer: episode " + std::to_string(ep.id) + " has " +
                            std::to_string(ep.events.size()) + " events but only " +
                            std::to_string(config_.num_memories) + " memories");
      }
      for (const auto& e : ep.events) {
        if (*e.label >= classes) {
          throw ContractError("trainer: event label out of range in episode " +
                              std::to_string(ep.id));
        }
      }
    }
  }

  ModelConfig mc;
  mc.data_dim = data_dim;
  mc.model_dim = config_.model_dim;
  mc.layers = config_.layers;
  mc.heads = config_.heads;
  mc.num_memories = config_.num_memories;
  mc.classes = config_.mode == TrainMode::kSupervised ? classes + 1 : classes;
  mc.vocab_size = data_.vocab.tokens.size();
  mc.answer_count = data_.vocab.answers.size();
  mc.dropout = config_.dropout;
  mc.cascade = config_.cascade;

  Rng rng = Rng::stream(config_.seed, "init");
  model_ = GlanceFocusModel::init(mc, rng);
}

namespace {

struct SampleLossSums {
  Tensor total;  // sum of per-sample totals, on the active tape
  LossRecord sums;
};

SampleLossSums forward_samples(const GlanceFocusModel& model, const TrainConfig& cfg,
                               const Dataset& data, const std::vector<Sample>& batch,
                               std::size_t begin, std::size_t end, std::size_t epoch,
                               std::size_t step) {
  SampleLossSums out;
  for (std::size_t i = begin; i < end; ++i) {
    const Episode& ep = data.episodes[batch[i].episode];
    const QASample& qa = ep.qas[batch[i].qa];
    Rng drop_rng = Rng::stream(cfg.seed, "dropout", {epoch, step, i});
    Rng* rng = cfg.dropout > 0 ? &drop_rng : nullptr;

    QAForward f = model.forward_qa(ep.features, qa.question, rng);
    Tensor l_qa = cross_entropy_from_logits(f.answer.logits, {qa.answer});
    out.sums.l_qa += l_qa.item();
    Tensor total = l_qa;

    if (cfg.mode == TrainMode::kUnsupervised) {
      if (cfg.lambda_cert > 0) {
        Tensor l = loss_certainty(f.bank);
        out.sums.l_cert += l.item();
        total = add(total, scale(l, cfg.lambda_cert));
      }
      if (cfg.lambda_cls > 0) {
        Tensor l = loss_semantic_diversity(f.bank);
        out.sums.l_sem += l.item();
        total = add(total, scale(l, cfg.lambda_cls));
      }
      if (cfg.lambda_iou > 0) {
        Tensor l = loss_temporal_overlap(f.bank);
        out.sums.l_iou += l.item();
        total = add(total, scale(l, cfg.lambda_iou));
      }
    } else if (cfg.lambda_cls > 0 || cfg.lambda_l1 > 0) {
      auto gt = pad_events(ep.events, model.cfg.num_memories);
      auto cost = matching_cost_matrix(gt, f.bank, cfg.lambda_cls, cfg.lambda_l1);
      Assignment asg = hungarian(cost);
      SupervisedLosses sl = supervised_losses(gt, f.bank, asg, cfg.no_event_weight);
      if (cfg.lambda_cls > 0) {
        out.sums.l_cls += sl.l_cls.item();
        total = add(total, scale(sl.l_cls, cfg.lambda_cls));
      }
      if (cfg.lambda_l1 > 0) {
        out.sums.l_l1 += sl.l_l1.item();
        total = add(total, scale(sl.l_l1, cfg.lambda_l1));
      }
    }
    out.total = out.total.defined() ? add(out.total, total) : total;
  }
  return out;
}

}  // namespace

LossRecord Trainer::train_step(const std::vector<Sample>& batch) {
  if (batch.empty()) throw ContractError("train_step: empty batch");
  const std::size_t b = batch.size();
  const Real inv_b = 1.0 / static_cast<Real>(b);

  ParamMap params = model_.params();
  for (auto& [name, t] : params) t.zero_grad();

  LossRecord rec;
  const std::size_t workers = std::min(config_.threads, b);
  if (workers <= 1) {
    Tape tape;
    SampleLossSums s = forward_samples(model_, config_, data_, batch, 0, b,
                                       epoch_, step_in_epoch_);
    Tensor loss = scale(s.total, inv_b);
    rec = s.sums;
    rec.total = loss.item();
    tape.backward(loss);
  } else {
    while (worker_clones_.size() < workers) worker_clones_.push_back(model_.clone());
    std::vector<LossRecord> recs(workers);
    std::vector<Real> totals(workers, 0.0);
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      worker_clones_[w].copy_values_from(model_);
      ParamMap wp = worker_clones_[w].params();
      for (auto& [name, t] : wp) t.zero_grad();
    }
    for (std::size_t w = 0; w < workers; ++w) {
      const std::size_t lo = w * b / workers;
      const std::size_t hi = (w + 1) * b / workers;
      pool.emplace_back([&, w, lo, hi] {
        try {
          Tape tape;
          SampleLossSums s = forward_samples(worker_clones_[w], config_, data_, batch,
                                             lo, hi, epoch_, step_in_epoch_);
          if (s.total.defined()) {
            Tensor loss = scale(s.total, inv_b);
            recs[w] = s.sums;
            totals[w] = loss.item();
            tape.backward(loss);
          }
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
    for (std::size_t w = 0; w < workers; ++w) {
      rec.l_qa += recs[w].l_qa;
      rec.l_cert += recs[w].l_cert;
      rec.l_sem += recs[w].l_sem;
      rec.l_iou += recs[w].l_iou;
      rec.l_cls += recs[w].l_cls;
      rec.l_l1 += recs[w].l_l1;
      rec.total += totals[w];
      ParamMap wp = worker_clones_[w].params();
      for (auto& [name, t] : params) {
        const auto& wg = wp.at(name).node()->grad;
        if (wg.empty()) continue;
        t.node()->ensure_grad();
        auto& g = t.node()->grad;
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += wg[i];
      }
    }
  }

  rec.l_qa *= inv_b;
  rec.l_cert *= inv_b;
  rec.l_sem *= inv_b;
  rec.l_iou *= inv_b;
  rec.l_cls *= inv_b;
  rec.l_l1 *= inv_b;

  if (!std::isfinite(rec.total)) {
    std::ostringstream os;
    os << "train_step: non-finite loss; components: l_qa=" << rec.l_qa
       << " l_cert=" << rec.l_cert << " l_sem=" << rec.l_sem << " l_iou=" << rec.l_iou
       << " l_cls=" << rec.l_cls << " l_l1=" << rec.l_l1;
    throw Error(os.str());
  }

  if (config_.grad_clip > 0) {
    Real norm_sq = 0;
    for (auto& [name, t] : params) {
      if (!t.has_grad()) continue;
      for (Real g : t.node()->grad) norm_sq += g * g;
    }
    const Real norm = std::sqrt(norm_sq);
    if (norm > config_.grad_clip) {
      const Real k = config_.grad_clip / norm;
      for (auto& [name, t] : params) {
        if (!t.has_grad()) continue;
        for (Real& g : t.node()->grad) g *= k;
      }
    }
  }

  adam_.apply(params, config_.learning_rate);
  return rec;
}

std::vector<Sample> Trainer::epoch_plan(std::size_t epoch) const {
  std::vector<std::size_t> order = train_indices_;
  Rng shuffle_rng = Rng::stream(config_.seed, "shuffle", {epoch});
  shuffle_rng.shuffle(order);
  std::vector<Sample> plan;
  for (std::size_t idx : order) {
    const Episode& ep = data_.episodes[idx];
    const std::size_t n = ep.qas.size();
    if (n == 0) continue;
    if (config_.qa_per_epoch == 0 || config_.qa_per_epoch >= n) {
      for (std::size_t q = 0; q < n; ++q) plan.push_back({idx, q});
    } else {
      Rng qa_rng = Rng::stream(config_.seed, "qa", {epoch, ep.id});
      std::vector<std::size_t> sel(n);
      for (std::size_t q = 0; q < n; ++q) sel[q] = q;
      for (std::size_t q = 0; q < config_.qa_per_epoch; ++q) {
        std::swap(sel[q], sel[q + qa_rng.index(n - q)]);
        plan.push_back({idx, sel[q]});
      }
    }
  }
  return plan;
}

void Trainer::ensure_plan() {
  if (plan_epoch_ != epoch_) {
    plan_ = epoch_plan(epoch_);
    plan_epoch_ = epoch_;
  }
}

std::optional<LossRecord> Trainer::step_once() {
  while (epoch_ < config_.epochs) {
    ensure_plan();
    const std::size_t batches =
        (plan_.size() + config_.batch_size - 1) / config_.batch_size;
    if (step_in_epoch_ >= batches) {
      ++epoch_;
      step_in_epoch_ = 0;
      continue;
    }
    const std::size_t lo = step_in_epoch_ * config_.batch_size;
    const std::size_t hi = std::min(plan_.size(), lo + config_.batch_size);
    std::vector<Sample> batch(plan_.begin() + lo, plan_.begin() + hi);
    LossRecord rec = train_step(batch);
    ++step_in_epoch_;
    if (step_in_epoch_ >= batches) {
      ++epoch_;
      step_in_epoch_ = 0;
    }
    return rec;
  }
  return std::nullopt;
}

LossRecord Trainer::run_epoch() {
  const std::size_t start = epoch_;
  LossRecord sums;
  std::size_t n = 0;
  while (epoch_ == start) {
    auto rec = step_once();
    if (!rec) break;
    sums.total += rec->total;
    sums.l_qa += rec->l_qa;
    sums.l_cert += rec->l_cert;
    sums.l_sem += rec->l_sem;
    sums.l_iou += rec->l_iou;
    sums.l_cls += rec->l_cls;
    sums.l_l1 += rec->l_l1;
    ++n;
  }
  if (n > 0) {
    const Real inv = 1.0 / static_cast<Real>(n);
    sums.total *= inv;
    sums.l_qa *= inv;
    sums.l_cert *= inv;
    sums.l_sem *= inv;
    sums.l_iou *= inv;
    sums.l_cls *= inv;
    sums.l_l1 *= inv;
  }
  return sums;
}

void Trainer::train(const EpochCallback& per_epoch) {
  while (epoch_ < config_.epochs) {
    const std::size_t e = epoch_;
    LossRecord rec = run_epoch();
    if (per_epoch) per_epoch(e, rec);
  }
}

Metrics Trainer::evaluate(const std::vector<std::size_t>& episode_indices) const {
  std::vector<const Episode*> eps;
  eps.reserve(episode_indices.size());
  for (std::size_t i : episode_indices) eps.push_back(&data_.episodes[i]);
  EvalOptions opt;
  opt.event_metrics = config_.mode == TrainMode::kSupervised;
  opt.lambda_cls = config_.lambda_cls;
  opt.lambda_l1 = config_.lambda_l1;
  opt.threads = config_.threads;
  return evaluate_model(model_, eps, opt);
}

Metrics Trainer::evaluate_dataset(const Dataset& other) const {
  std::vector<const Episode*> eps;
  eps.reserve(other.episodes.size());
  for (const Episode& ep : other.episodes) eps.push_back(&ep);
  EvalOptions opt;
  opt.event_metrics = config_.mode == TrainMode::kSupervised;
  opt.lambda_cls = config_.lambda_cls;
  opt.lambda_l1 = config_.lambda_l1;
  opt.threads = config_.threads;
  return evaluate_model(model_, eps, opt);
}

// ---------------------------------------------------------------------------
// Checkpoint container: magic GFCK1, u32 JSON length + JSON header, then
// little-endian named f64 tensors (parameters and Adam moments).

namespace {

void put_u32(std::string& buf, std::uint32_t x) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((x >> (8 * i)) & 0xff));
}

void put_u64(std::string& buf, std::uint64_t x) {
  for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((x >> (8 * i)) & 0xff));
}

void put_f64(std::string& buf, Real v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  put_u64(buf, bits);
}

struct Reader {
  const unsigned char* p;
  std::size_t n;
  std::size_t pos = 0;
  std::string path;

  void need(std::size_t k, const char* what) {
    if (pos + k > n) {
      throw FormatError(path + ": truncated checkpoint while reading " +
                        std::string(what) + " at byte " + std::to_string(pos));
    }
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t x = 0;
    for (int i = 0; i < 4; ++i) x |= static_cast<std::uint32_t>(p[pos + i]) << (8 * i);
    pos += 4;
    return x;
  }
  std::uint64_t u64(const char* what) {
    need(8, what);
    std::uint64_t x = 0;
    for (int i = 0; i < 8; ++i) x |= static_cast<std::uint64_t>(p[pos + i]) << (8 * i);
    pos += 8;
    return x;
  }
  Real f64(const char* what) {
    std::uint64_t bits = u64(what);
    Real v;
    std::memcpy(&v, &bits, 8);
    return v;
  }
  std::string str(const char* what) {
    std::uint32_t len = u32(what);
    need(len, what);
    std::string s(reinterpret_cast<const char*>(p + pos), len);
    pos += len;
    return s;
  }
};

void put_tensor(std::string& buf, const std::string& name, const Shape& shape,
                const std::vector<Real>& values) {
  put_u32(buf, static_cast<std::uint32_t>(name.size()));
  buf += name;
  put_u32(buf, static_cast<std::uint32_t>(shape.size()));
  for (std::size_t e : shape) put_u32(buf, static_cast<std::uint32_t>(e));
  for (Real v : values) put_f64(buf, v);
}

json config_to_json(const TrainConfig& c) {
  return json{{"mode", train_mode_name(c.mode)},
              {"cascade", c.cascade == CascadeMode::kMultiLevel ? "multi" : "single"},
              {"num_memories", c.num_memories},
              {"classes", c.classes},
              {"model_dim", c.model_dim},
              {"layers", c.layers},
              {"heads", c.heads},
              {"dropout", c.dropout},
              {"lambda_cert", c.lambda_cert},
              {"lambda_cls", c.lambda_cls},
              {"lambda_iou", c.lambda_iou},
              {"lambda_l1", c.lambda_l1},
              {"no_event_weight", c.no_event_weight},
              {"learning_rate", c.learning_rate},
              {"grad_clip", c.grad_clip},
              {"epochs", c.epochs},
              {"batch_size", c.batch_size},
              {"seed", c.seed},
              {"qa_per_epoch", c.qa_per_epoch},
              {"threads", c.threads},
              {"data_dir", c.data_dir},
              {"checkpoint_path", c.checkpoint_path}};
}

TrainConfig config_from_json(const json& j) {
  TrainConfig c;
  c.mode = train_mode_from_name(j.at("mode").get<std::string>());
  c.cascade = j.at("cascade").get<std::string>() == "single"
                  ? CascadeMode::kSingleLevel
                  : CascadeMode::kMultiLevel;
  c.num_memories = j.at("num_memories").get<std::size_t>();
  c.classes = j.at("classes").get<std::size_t>();
  c.model_dim = j.at("model_dim").get<std::size_t>();
  c.layers = j.at("layers").get<std::size_t>();
  c.heads = j.at("heads").get<std::size_t>();
  c.dropout = j.at("dropout").get<Real>();
  c.lambda_cert = j.at("lambda_cert").get<Real>();
  c.lambda_cls = j.at("lambda_cls").get<Real>();
  c.lambda_iou = j.at("lambda_iou").get<Real>();
  c.lambda_l1 = j.at("lambda_l1").get<Real>();
  c.no_event_weight = j.at("no_event_weight").get<Real>();
  c.learning_rate = j.at("learning_rate").get<Real>();
  c.grad_clip = j.at("grad_clip").get<Real>();
  c.epochs = j.at("epochs").get<std::size_t>();
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.qa_per_epoch = j.at("qa_per_epoch").get<std::size_t>();
  c.threads = j.at("threads").get<std::size_t>();
  c.data_dir = j.at("data_dir").get<std::string>();
  c.checkpoint_path = j.at("checkpoint_path").get<std::string>();
  return c;
}

}  // namespace

void Trainer::save_checkpoint(const std::string& path) const {
  json header;
  header["train"] = config_to_json(config_);
  header["model"] = {{"data_dim", model_.cfg.data_dim},
                     {"classes", model_.cfg.classes},
                     {"vocab_size", model_.cfg.vocab_size},
                     {"answer_count", model_.cfg.answer_count}};
  header["epoch"] = epoch_;
  header["step_in_epoch"] = step_in_epoch_;
  header["adam_step"] = adam_.step;
  const std::string hj = header.dump();

  std::string buf;
  buf += "GFCK1";
  put_u32(buf, static_cast<std::uint32_t>(hj.size()));
  buf += hj;

  ParamMap params = model_.params();
  std::uint32_t count = static_cast<std::uint32_t>(params.size());
  for (const auto& [name, t] : params) {
    if (adam_.m.count(name)) ++count;
    if (adam_.v.count(name)) ++count;
  }
  put_u32(buf, count);
  for (const auto& [name, t] : params) {
    put_tensor(buf, name, t.shape(), t.values());
    auto mit = adam_.m.find(name);
    if (mit != adam_.m.end()) put_tensor(buf, "adam.m." + name, t.shape(), mit->second);
    auto vit = adam_.v.find(name);
    if (vit != adam_.v.end()) put_tensor(buf, "adam.v." + name, t.shape(), vit->second);
  }

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path + ": cannot open for writing");
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw IoError(path + ": write failed");
}

Trainer Trainer::load_checkpoint(const std::string& path, Dataset data) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path + ": cannot open for reading");
  std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (buf.size() < 5 || buf.compare(0, 5, "GFCK1") != 0) {
    throw FormatError(path + ": bad magic, expected GFCK1");
  }
  Reader r{reinterpret_cast<const unsigned char*>(buf.data()), buf.size(), 5, path};
  json header;
  try {
    header = json::parse(r.str("header"));
  } catch (const json::exception& e) {
    throw FormatError(path + ": bad header: " + e.what());
  }

  TrainConfig config;
  std::size_t epoch, step_in_epoch;
  std::uint64_t adam_step;
  std::size_t want_data_dim, want_classes, want_vocab, want_answers;
  try {
    config = config_from_json(header.at("train"));
    epoch = header.at("epoch").get<std::size_t>();
    step_in_epoch = header.at("step_in_epoch").get<std::size_t>();
    adam_step = header.at("adam_step").get<std::uint64_t>();
    const json& mj = header.at("model");
    want_data_dim = mj.at("data_dim").get<std::size_t>();
    want_classes = mj.at("classes").get<std::size_t>();
    want_vocab = mj.at("vocab_size").get<std::size_t>();
    want_answers = mj.at("answer_count").get<std::size_t>();
  } catch (const json::exception& e) {
    throw FormatError(path + ": bad header: " + e.what());
  }

  Trainer t(std::move(config), std::move(data));
  if (t.model_.cfg.data_dim != want_data_dim || t.model_.cfg.classes != want_classes ||
      t.model_.cfg.vocab_size != want_vocab ||
      t.model_.cfg.answer_count != want_answers) {
    throw ShapeError(path + ": checkpoint model (data_dim " +
                     std::to_string(want_data_dim) + ", classes " +
                     std::to_string(want_classes) + ", vocab " +
                     std::to_string(want_vocab) + ", answers " +
                     std::to_string(want_answers) + ") does not match the dataset");
  }
  t.epoch_ = epoch;
  t.step_in_epoch_ = step_in_epoch;
  t.adam_.step = adam_step;

  ParamMap params = t.model_.params();
  std::size_t loaded = 0;
  const std::uint32_t count = r.u32("tensor count");
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name = r.str("tensor name");
    const std::uint32_t rank = r.u32("tensor rank");
    Shape shape(rank);
    std::size_t total = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      shape[d] = r.u32("tensor extent");
      total *= shape[d];
    }
    std::vector<Real> values(total);
    for (std::size_t k = 0; k < total; ++k) values[k] = r.f64("tensor value");

    std::string base = name;
    std::vector<Real>* adam_slot = nullptr;
    if (name.rfind("adam.m.", 0) == 0) {
      base = name.substr(7);
      adam_slot = &t.adam_.m[base];
    } else if (name.rfind("adam.v.", 0) == 0) {
      base = name.substr(7);
      adam_slot = &t.adam_.v[base];
    }
    auto it = params.find(base);
    if (it == params.end()) {
      throw FormatError(path + ": unknown tensor '" + name + "'");
    }
    if (it->second.shape() != shape) {
      throw ShapeError(path + ": tensor '" + name + "' has shape " + shape_str(shape) +
                       ", model expects " + shape_str(it->second.shape()));
    }
    if (adam_slot) {
      *adam_slot = std::move(values);
    } else {
      it->second.values() = std::move(values);
      ++loaded;
    }
  }
  if (loaded != params.size()) {
    throw FormatError(path + ": checkpoint holds " + std::to_string(loaded) +
                      " parameter tensors, model needs " +
                      std::to_string(params.size()));
  }
  return t;
}

}  // namespace gf
