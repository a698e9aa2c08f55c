#ifndef GF_EPISODES_HPP
#define GF_EPISODES_HPP

#include <string>

#include "gf/matching.hpp"

namespace gf {

enum class QuestionType {
  kWhatAt,
  kWhatAfter,
  kWhatBefore,
  kFirstEvent,
  kLastEvent,
  kCountEvents,
};

inline constexpr QuestionType kAllQuestionTypes[] = {
    QuestionType::kWhatAt,     QuestionType::kWhatAfter,
    QuestionType::kWhatBefore, QuestionType::kFirstEvent,
    QuestionType::kLastEvent,  QuestionType::kCountEvents,
};

const char* question_type_name(QuestionType t);
QuestionType question_type_from_name(const std::string& name);

struct QASample {
  std::vector<std::size_t> question;  // token ids
  std::size_t answer = 0;             // answer vocabulary id
  QuestionType type = QuestionType::kWhatAt;
};

// A synthetic "video": planted events with known classes and spans, frame
// features rendered from class prototypes, and attached QA samples.
struct Episode {
  std::uint64_t id = 0;
  Tensor features;  // [T x D]; undefined when loaded from annotations alone
  std::size_t frames = 0;
  std::vector<GroundTruthEvent> events;  // all real events, sorted by center
  std::vector<QASample> qas;
};

struct GeneratorConfig {
  std::size_t frames = 40;
  std::size_t dim = 32;
  std::size_t classes = 5;
  std::size_t min_events = 2;
  std::size_t max_events = 4;
  Real noise = 0.05;
  std::uint64_t seed = 0;
  Real min_width = 0.06;
  Real max_width = 0.18;
  std::size_t max_attempts = 1000;

  void validate() const;
};

// Time buckets used by the what-at question template.
inline constexpr std::size_t kTimeBuckets = 8;

// Token and answer string <-> id bijections shared by a dataset.
struct Vocabulary {
  std::size_t classes = 0;
  std::size_t max_count = 0;
  std::vector<std::string> tokens;
  std::vector<std::string> answers;

  static Vocabulary build(std::size_t classes, std::size_t max_count);

  std::size_t token_id(const std::string& s) const;
  std::size_t answer_id(const std::string& s) const;
  const std::string& token(std::size_t id) const;
  const std::string& answer(std::size_t id) const;

  std::size_t class_token(std::size_t c) const { return token_id("ev" + std::to_string(c)); }
  std::size_t bucket_token(std::size_t b) const { return token_id("t" + std::to_string(b)); }
  std::size_t class_answer(std::size_t c) const { return answer_id("ev" + std::to_string(c)); }
  std::size_t count_answer(std::size_t k) const { return answer_id(std::to_string(k)); }

  bool operator==(const Vocabulary&) const = default;
};

// Class prototype features: rows 0..C-1 are event classes, row C is the
// background prototype. Fixed by the master seed.
Tensor class_prototypes(const GeneratorConfig& config);

// Deterministic episode: K events with disjoint spans, in-span frames drawn
// from the event's class prototype plus noise, the rest from background.
// Features are quantized to float32 so the binary format round-trips exactly.
Episode generate_episode(const GeneratorConfig& config, std::uint64_t episode_seed);

// Instantiates each applicable template; skips questions whose oracle answer
// is undefined or ambiguous. The result order is shuffled by qa_seed.
std::vector<QASample> generate_qa(const Episode& episode, const Vocabulary& vocab,
                                  const std::vector<QuestionType>& templates,
                                  std::uint64_t qa_seed);

// Episodes with QA samples attached, ids 0..count-1.
std::vector<Episode> generate_dataset(const GeneratorConfig& config,
                                      const Vocabulary& vocab, std::size_t count);

// Binary feature file: magic GFV1, two u32 little-endian extents T and D,
// then T*D float32 little-endian values, row-major.
void write_features(const std::string& path, const Tensor& features);
Tensor read_features(const std::string& path);

// Line-delimited JSON annotations; floats carry 9 significant digits.
void write_annotations(const std::string& path, const std::vector<Episode>& episodes);
std::vector<Episode> read_annotations(const std::string& path);

void write_vocabulary(const std::string& path, const Vocabulary& vocab);
Vocabulary read_vocabulary(const std::string& path);

struct Dataset {
  Vocabulary vocab;
  std::vector<Episode> episodes;
};

// Directory layout: <dir>/annotations.jsonl, <dir>/vocab.json,
// <dir>/features/ep<id>.gfv.
void write_dataset(const std::string& dir, const std::vector<Episode>& episodes,
                   const Vocabulary& vocab);
Dataset load_dataset(const std::string& dir, bool with_features = true);

}  // namespace gf

#endif
