#ifndef GF_TRAINER_HPP
#define GF_TRAINER_HPP

#include <functional>
#include <optional>

#include "gf/model.hpp"

namespace gf {

enum class TrainMode { kUnsupervised, kSupervised };

const char* train_mode_name(TrainMode m);
TrainMode train_mode_from_name(const std::string& name);

struct TrainConfig {
  TrainMode mode = TrainMode::kUnsupervised;
  CascadeMode cascade = CascadeMode::kMultiLevel;
  std::size_t num_memories = 8;
  std::size_t classes = 0;  // 0 = take the dataset's class count
  std::size_t model_dim = 64;
  std::size_t layers = 2;
  std::size_t heads = 4;
  Real dropout = 0.1;
  Real lambda_cert = 1.0;
  Real lambda_cls = 1.0;   // Eq. 5 semantic weight / supervised class weight
  Real lambda_iou = 1.0;
  Real lambda_l1 = 5.0;
  Real no_event_weight = 1.0;
  Real learning_rate = 1e-3;
  Real grad_clip = 1.0;
  std::size_t epochs = 30;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  // QA samples drawn per episode per epoch; 0 means every attached QA.
  std::size_t qa_per_epoch = 1;
  // Worker threads for batch gradients and evaluation. Results are
  // deterministic per thread count; 1 reproduces the plain sequential loop.
  std::size_t threads = 1;
  std::string data_dir;
  std::string checkpoint_path;

  void validate() const;
};

struct LossRecord {
  Real total = 0;
  Real l_qa = 0;
  Real l_cert = 0;
  Real l_sem = 0;   // Eq. 3 semantic diversity
  Real l_iou = 0;
  Real l_cls = 0;   // supervised event classification
  Real l_l1 = 0;

  // The weighted recombination of the components; equals `total` up to
  // floating-point bookkeeping.
  Real recombined(const TrainConfig& c) const;
};

struct TypeStat {
  std::size_t count = 0;
  std::size_t correct = 0;
  Real accuracy() const {
    return count ? static_cast<Real>(correct) / static_cast<Real>(count) : 0.0;
  }
};

struct Metrics {
  std::size_t samples = 0;
  std::size_t correct = 0;
  Real accuracy = 0;
  std::map<std::string, TypeStat> per_type;
  bool has_event_metrics = false;
  Real event_class_accuracy = 0;
  Real mean_temporal_l1 = 0;
};

// Deterministic 90/10 split on the episode id hash; true = held out.
bool is_heldout_episode(std::uint64_t id);

// Accuracy bookkeeping against an arbitrary predictor, e.g. a stub.
Metrics evaluate_predictions(
    const std::vector<const Episode*>& episodes,
    const std::function<std::size_t(const Episode&, const QASample&)>& predict);

struct EvalOptions {
  bool event_metrics = false;  // Hungarian-matched class accuracy and span L1
  Real lambda_cls = 1.0;
  Real lambda_l1 = 5.0;
  std::size_t threads = 1;
};

Metrics evaluate_model(const GlanceFocusModel& model,
                       const std::vector<const Episode*>& episodes,
                       const EvalOptions& options);

// Adam with bias correction; state keyed by parameter name.
struct AdamState {
  std::map<std::string, std::vector<Real>> m, v;
  std::uint64_t step = 0;
  Real beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

  void apply(ParamMap& params, Real lr);
};

struct Sample {
  std::size_t episode = 0;  // index into the dataset's episode vector
  std::size_t qa = 0;
};

class Trainer {
 public:
  Trainer(TrainConfig config, Dataset data);

  const TrainConfig& config() const { return config_; }
  GlanceFocusModel& model() { return model_; }
  const GlanceFocusModel& model() const { return model_; }
  const Dataset& data() const { return data_; }
  std::size_t epoch() const { return epoch_; }
  std::size_t step_in_epoch() const { return step_in_epoch_; }

  const std::vector<std::size_t>& train_indices() const { return train_indices_; }
  const std::vector<std::size_t>& heldout_indices() const { return heldout_indices_; }

  // One optimizer step over an explicit batch.
  LossRecord train_step(const std::vector<Sample>& batch);

  // Advances one batch of the deterministic schedule; nullopt when the
  // configured epochs are exhausted.
  std::optional<LossRecord> step_once();

  // Mean loss record over one full epoch.
  LossRecord run_epoch();

  using EpochCallback = std::function<void(std::size_t epoch, const LossRecord&)>;
  void train(const EpochCallback& per_epoch = {});

  Metrics evaluate(const std::vector<std::size_t>& episode_indices) const;
  Metrics evaluate_heldout() const { return evaluate(heldout_indices_); }
  Metrics evaluate_dataset(const Dataset& other) const;

  void save_checkpoint(const std::string& path) const;
  static Trainer load_checkpoint(const std::string& path, Dataset data);

 private:
  std::vector<Sample> epoch_plan(std::size_t epoch) const;
  void ensure_plan();

  TrainConfig config_;
  Dataset data_;
  GlanceFocusModel model_;
  AdamState adam_;
  std::vector<std::size_t> train_indices_, heldout_indices_;
  std::size_t epoch_ = 0;
  std::size_t step_in_epoch_ = 0;
  std::vector<Sample> plan_;
  std::size_t plan_epoch_ = static_cast<std::size_t>(-1);
  std::vector<GlanceFocusModel> worker_clones_;
};

}  // namespace gf

#endif
