#include "gf/episodes.hpp"

#include <algorithm>
#include <charconv>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>

#include <json.hpp>

namespace gf {

using nlohmann::json;

const char* question_type_name(QuestionType t) {
  switch (t) {
    case QuestionType::kWhatAt: return "what-at";
    case QuestionType::kWhatAfter: return "what-after";
    case QuestionType::kWhatBefore: return "what-before";
    case QuestionType::kFirstEvent: return "first-event";
    case QuestionType::kLastEvent: return "last-event";
    case QuestionType::kCountEvents: return "count-events";
  }
  throw ContractError("unknown question type");
}

QuestionType question_type_from_name(const std::string& name) {
  for (QuestionType t : kAllQuestionTypes) {
    if (name == question_type_name(t)) return t;
  }
  throw FormatError("unknown question type '" + name + "'");
}

void GeneratorConfig::validate() const {
  if (frames == 0 || dim == 0 || classes == 0) {
    throw ContractError("generator: frames, dim and classes must be positive");
  }
  if (min_events == 0 || min_events > max_events) {
    throw ContractError("generator: need 1 <= min_events <= max_events");
  }
  if (noise < 0) throw ContractError("generator: noise must be >= 0");
  if (min_width <= 0 || min_width > max_width || max_width > 1) {
    throw ContractError("generator: need 0 < min_width <= max_width <= 1");
  }
  if (static_cast<Real>(max_events) * max_width > 1.0) {
    throw ContractError("generator: max_events spans of max_width cannot fit in [0,1]");
  }
}

Vocabulary Vocabulary::build(std::size_t classes, std::size_t max_count) {
  Vocabulary v;
  v.classes = classes;
  v.max_count = max_count;
  v.tokens = {"what", "at", "after", "before", "first", "last", "count", "event",
              "events"};
  for (std::size_t c = 0; c < classes; ++c) v.tokens.push_back("ev" + std::to_string(c));
  for (std::size_t b = 0; b < kTimeBuckets; ++b) v.tokens.push_back("t" + std::to_string(b));
  for (std::size_t c = 0; c < classes; ++c) v.answers.push_back("ev" + std::to_string(c));
  for (std::size_t k = 1; k <= max_count; ++k) v.answers.push_back(std::to_string(k));
  return v;
}

namespace {
std::size_t find_in(const std::vector<std::string>& xs, const std::string& s,
                    const char* what) {
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (xs[i] == s) return i;
  }
  throw ContractError(std::string(what) + " '" + s + "' not in vocabulary");
}
}  // namespace

std::size_t Vocabulary::token_id(const std::string& s) const {
  return find_in(tokens, s, "token");
}
std::size_t Vocabulary::answer_id(const std::string& s) const {
  return find_in(answers, s, "answer");
}
const std::string& Vocabulary::token(std::size_t id) const {
  if (id >= tokens.size()) throw ContractError("token id out of range");
  return tokens[id];
}
const std::string& Vocabulary::answer(std::size_t id) const {
  if (id >= answers.size()) throw ContractError("answer id out of range");
  return answers[id];
}

Tensor class_prototypes(const GeneratorConfig& config) {
  Rng rng = Rng::stream(config.seed, "prototypes");
  Tensor protos = Tensor::zeros({config.classes + 1, config.dim});
  for (Real& v : protos.values()) v = rng.normal();
  return protos;
}

namespace {

// Frame f covers the time point (f + 0.5) / T.
std::pair<std::size_t, std::size_t> covered_frames(const Span& s, std::size_t frames) {
  std::size_t lo = frames, hi = frames;  // empty
  for (std::size_t f = 0; f < frames; ++f) {
    const Real t = (static_cast<Real>(f) + 0.5) / static_cast<Real>(frames);
    if (t >= s.lo() && t < s.hi()) {
      if (lo == frames) lo = f;
      hi = f + 1;
    }
  }
  return {lo, hi};
}

float to_f32(Real v) { return static_cast<float>(v); }

}  // namespace

Episode generate_episode(const GeneratorConfig& config, std::uint64_t episode_seed) {
  config.validate();
  Rng rng = Rng::stream(config.seed, "episode", {episode_seed});

  const std::size_t k =
      config.min_events + rng.index(config.max_events - config.min_events + 1);

  std::vector<GroundTruthEvent> events;
  std::size_t attempts = 0;
  while (events.size() < k) {
    if (++attempts > config.max_attempts) {
      throw GenerationError("episode " + std::to_string(episode_seed) +
                            ": could not place " + std::to_string(k) +
                            " disjoint spans after " +
                            std::to_string(config.max_attempts) + " attempts");
    }
    const Real width = rng.uniform(config.min_width, config.max_width);
    const Real center = rng.uniform(width / 2, 1.0 - width / 2);
    const Span cand{center, width};
    auto [flo, fhi] = covered_frames(cand, config.frames);
    if (flo >= fhi) continue;  // too narrow to own a frame
    bool clash = false;
    for (const auto& e : events) {
      if (cand.lo() < e.span.hi() && e.span.lo() < cand.hi()) {
        clash = true;
        break;
      }
      auto [elo, ehi] = covered_frames(e.span, config.frames);
      if (flo < ehi && elo < fhi) {
        clash = true;
        break;
      }
    }
    if (clash) continue;
    events.push_back(GroundTruthEvent::of(rng.index(config.classes), center, width));
  }
  std::sort(events.begin(), events.end(),
            [](const GroundTruthEvent& a, const GroundTruthEvent& b) {
              return a.span.center < b.span.center;
            });

  const Tensor protos = class_prototypes(config);
  Tensor features = Tensor::zeros({config.frames, config.dim});
  auto& fv = features.values();
  const auto& pv = protos.values();
  for (std::size_t f = 0; f < config.frames; ++f) {
    const Real t = (static_cast<Real>(f) + 0.5) / static_cast<Real>(config.frames);
    std::size_t proto_row = config.classes;  // background
    for (const auto& e : events) {
      if (t >= e.span.lo() && t < e.span.hi()) {
        proto_row = *e.label;
        break;
      }
    }
    for (std::size_t d = 0; d < config.dim; ++d) {
      const Real raw = pv[proto_row * config.dim + d] + config.noise * rng.normal();
      fv[f * config.dim + d] = static_cast<Real>(to_f32(raw));
    }
  }

  Episode ep;
  ep.id = episode_seed;
  ep.features = features;
  ep.frames = config.frames;
  ep.events = std::move(events);
  return ep;
}

std::vector<QASample> generate_qa(const Episode& episode, const Vocabulary& vocab,
                                  const std::vector<QuestionType>& templates,
                                  std::uint64_t qa_seed) {
  if (episode.events.empty()) {
    throw ContractError("generate_qa: episode has no events");
  }
  const auto& events = episode.events;  // sorted by center
  const std::size_t k = events.size();

  std::map<std::size_t, std::size_t> class_count;
  for (const auto& e : events) ++class_count[*e.label];

  std::vector<QASample> qas;
  for (QuestionType t : templates) {
    switch (t) {
      case QuestionType::kFirstEvent:
        qas.push_back({{vocab.token_id("first"), vocab.token_id("event")},
                       vocab.class_answer(*events.front().label),
                       t});
        break;
      case QuestionType::kLastEvent:
        qas.push_back({{vocab.token_id("last"), vocab.token_id("event")},
                       vocab.class_answer(*events.back().label),
                       t});
        break;
      case QuestionType::kCountEvents:
        if (k <= vocab.max_count) {
          qas.push_back({{vocab.token_id("count"), vocab.token_id("events")},
                         vocab.count_answer(k),
                         t});
        }
        break;
      case QuestionType::kWhatAt:
        for (const auto& e : events) {
          std::size_t bucket = static_cast<std::size_t>(e.span.center *
                                                        static_cast<Real>(kTimeBuckets));
          bucket = std::min(bucket, kTimeBuckets - 1);
          const Real probe =
              (static_cast<Real>(bucket) + 0.5) / static_cast<Real>(kTimeBuckets);
          // Only ask when the bucket's probe point falls inside the event;
          // disjoint spans make the answer unique.
          if (probe >= e.span.lo() && probe < e.span.hi()) {
            qas.push_back({{vocab.token_id("what"), vocab.token_id("at"),
                            vocab.bucket_token(bucket)},
                           vocab.class_answer(*e.label),
                           t});
          }
        }
        break;
      case QuestionType::kWhatAfter:
        for (std::size_t i = 0; i + 1 < k; ++i) {
          if (class_count[*events[i].label] != 1) continue;  // ambiguous anchor
          qas.push_back({{vocab.token_id("what"), vocab.token_id("after"),
                          vocab.class_token(*events[i].label)},
                         vocab.class_answer(*events[i + 1].label),
                         t});
        }
        break;
      case QuestionType::kWhatBefore:
        for (std::size_t i = 1; i < k; ++i) {
          if (class_count[*events[i].label] != 1) continue;
          qas.push_back({{vocab.token_id("what"), vocab.token_id("before"),
                          vocab.class_token(*events[i].label)},
                         vocab.class_answer(*events[i - 1].label),
                         t});
        }
        break;
    }
  }
  Rng rng = Rng::stream(qa_seed, "qa-shuffle");
  rng.shuffle(qas);
  return qas;
}

std::vector<Episode> generate_dataset(const GeneratorConfig& config,
                                      const Vocabulary& vocab, std::size_t count) {
  std::vector<QuestionType> templates(std::begin(kAllQuestionTypes),
                                      std::end(kAllQuestionTypes));
  std::vector<Episode> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Episode ep = generate_episode(config, i);
    ep.qas = generate_qa(ep, vocab, templates, splitmix64(config.seed) ^ i);
    out.push_back(std::move(ep));
  }
  return out;
}

namespace {

void put_u32(std::string& buf, std::uint32_t v) {
  buf.push_back(static_cast<char>(v & 0xff));
  buf.push_back(static_cast<char>((v >> 8) & 0xff));
  buf.push_back(static_cast<char>((v >> 16) & 0xff));
  buf.push_back(static_cast<char>((v >> 24) & 0xff));
}

std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

// Round to 9 significant digits via the printed form, so text round trips
// parse back to the identical double.
Real quantize9(Real v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 9);
  Real out = 0;
  std::from_chars(buf, res.ptr, out);
  return out;
}

}  // namespace

void write_features(const std::string& path, const Tensor& features) {
  if (features.rank() != 2) {
    throw ContractError("write_features: features must be [T x D]");
  }
  const std::size_t t = features.rows(), d = features.cols();
  std::string buf;
  buf.reserve(12 + t * d * 4);
  buf += "GFV1";
  put_u32(buf, static_cast<std::uint32_t>(t));
  put_u32(buf, static_cast<std::uint32_t>(d));
  for (Real v : features.values()) {
    const float f = static_cast<float>(v);
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    put_u32(buf, bits);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path + ": cannot open for writing");
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw IoError(path + ": write failed");
}

Tensor read_features(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path + ": cannot open for reading");
  std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const auto* p = reinterpret_cast<const unsigned char*>(buf.data());
  if (buf.size() < 4 || std::memcmp(buf.data(), "GFV1", 4) != 0) {
    throw FormatError(path + ": bad magic at byte 0, expected GFV1");
  }
  if (buf.size() < 12) {
    throw FormatError(path + ": truncated header at byte " + std::to_string(buf.size()));
  }
  const std::uint64_t t = get_u32(p + 4);
  const std::uint64_t d = get_u32(p + 8);
  if (t == 0 || d == 0 || t * d > (1ULL << 31)) {
    throw FormatError(path + ": extents " + std::to_string(t) + "x" +
                      std::to_string(d) + " overflow at byte 4");
  }
  const std::uint64_t want = 12 + t * d * 4;
  if (buf.size() != want) {
    throw FormatError(path + ": payload ends at byte " + std::to_string(buf.size()) +
                      ", expected " + std::to_string(want));
  }
  Tensor out = Tensor::zeros({static_cast<std::size_t>(t), static_cast<std::size_t>(d)});
  auto& ov = out.values();
  for (std::uint64_t i = 0; i < t * d; ++i) {
    const std::uint32_t bits = get_u32(p + 12 + i * 4);
    float f;
    std::memcpy(&f, &bits, 4);
    ov[i] = static_cast<Real>(f);
  }
  return out;
}

void write_annotations(const std::string& path, const std::vector<Episode>& episodes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path + ": cannot open for writing");
  for (const Episode& ep : episodes) {
    json j;
    j["id"] = ep.id;
    j["T"] = ep.frames;
    json evs = json::array();
    for (const auto& e : ep.events) {
      if (!e.is_event()) {
        throw ContractError("write_annotations: episode event lists hold real events");
      }
      evs.push_back({{"c", *e.label},
                     {"center", quantize9(e.span.center)},
                     {"width", quantize9(e.span.width)}});
    }
    j["events"] = std::move(evs);
    json qas = json::array();
    for (const auto& qa : ep.qas) {
      qas.push_back({{"q", qa.question},
                     {"a", qa.answer},
                     {"type", question_type_name(qa.type)}});
    }
    j["qas"] = std::move(qas);
    out << j.dump() << "\n";
  }
  if (!out) throw IoError(path + ": write failed");
}

std::vector<Episode> read_annotations(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path + ": cannot open for reading");
  std::vector<Episode> episodes;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
      Episode ep;
      ep.id = j.at("id").get<std::uint64_t>();
      ep.frames = j.at("T").get<std::size_t>();
      for (const auto& e : j.at("events")) {
        ep.events.push_back(GroundTruthEvent::of(e.at("c").get<std::size_t>(),
                                                 e.at("center").get<Real>(),
                                                 e.at("width").get<Real>()));
      }
      for (const auto& q : j.at("qas")) {
        QASample qa;
        qa.question = q.at("q").get<std::vector<std::size_t>>();
        qa.answer = q.at("a").get<std::size_t>();
        qa.type = question_type_from_name(q.at("type").get<std::string>());
        ep.qas.push_back(std::move(qa));
      }
      episodes.push_back(std::move(ep));
    } catch (const json::exception& e) {
      throw FormatError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return episodes;
}

void write_vocabulary(const std::string& path, const Vocabulary& vocab) {
  json j;
  j["classes"] = vocab.classes;
  j["max_count"] = vocab.max_count;
  j["tokens"] = vocab.tokens;
  j["answers"] = vocab.answers;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path + ": cannot open for writing");
  out << j.dump(2) << "\n";
  if (!out) throw IoError(path + ": write failed");
}

Vocabulary read_vocabulary(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path + ": cannot open for reading");
  try {
    json j = json::parse(in);
    Vocabulary v;
    v.classes = j.at("classes").get<std::size_t>();
    v.max_count = j.at("max_count").get<std::size_t>();
    v.tokens = j.at("tokens").get<std::vector<std::string>>();
    v.answers = j.at("answers").get<std::vector<std::string>>();
    return v;
  } catch (const json::exception& e) {
    throw FormatError(path + ": " + e.what());
  }
}

void write_dataset(const std::string& dir, const std::vector<Episode>& episodes,
                   const Vocabulary& vocab) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(fs::path(dir) / "features", ec);
  if (ec) throw IoError(dir + ": cannot create directory tree: " + ec.message());
  write_vocabulary((fs::path(dir) / "vocab.json").string(), vocab);
  write_annotations((fs::path(dir) / "annotations.jsonl").string(), episodes);
  for (const Episode& ep : episodes) {
    if (!ep.features.defined()) {
      throw ContractError("write_dataset: episode " + std::to_string(ep.id) +
                          " has no features");
    }
    write_features(
        (fs::path(dir) / "features" / ("ep" + std::to_string(ep.id) + ".gfv")).string(),
        ep.features);
  }
}

Dataset load_dataset(const std::string& dir, bool with_features) {
  namespace fs = std::filesystem;
  Dataset ds;
  ds.vocab = read_vocabulary((fs::path(dir) / "vocab.json").string());
  ds.episodes = read_annotations((fs::path(dir) / "annotations.jsonl").string());
  if (with_features) {
    for (Episode& ep : ds.episodes) {
      ep.features = read_features(
          (fs::path(dir) / "features" / ("ep" + std::to_string(ep.id) + ".gfv")).string());
      if (ep.features.rows() != ep.frames) {
        throw FormatError("episode " + std::to_string(ep.id) + ": feature file has " +
                          std::to_string(ep.features.rows()) +
                          " frames, annotations say " + std::to_string(ep.frames));
      }
    }
  }
  return ds;
}

}  // namespace gf
