// Command-line surface: synthetic data generation, training, evaluation and
// attention inspection. Exit codes: 0 success, 2 usage or contract error,
// 1 internal failure.

#include <CLI11.hpp>
#include <filesystem>
#include <iostream>
#include <map>

#include "gf/focus.hpp"
#include "gf/trainer.hpp"

namespace fs = std::filesystem;
using namespace gf;

namespace {

int run_gen(const std::string& out_dir, std::size_t episodes, GeneratorConfig gen) {
  gen.validate();
  std::cout << "config: gen out=" << out_dir << " episodes=" << episodes
            << " frames=" << gen.frames << " dim=" << gen.dim
            << " classes=" << gen.classes << " events=[" << gen.min_events << ","
            << gen.max_events << "] noise=" << gen.noise << " seed=" << gen.seed
            << "\n";
  Vocabulary vocab = Vocabulary::build(gen.classes, gen.max_events);
  std::vector<Episode> eps = generate_dataset(gen, vocab, episodes);
  write_dataset(out_dir, eps, vocab);

  std::map<std::string, std::size_t> per_type;
  std::size_t qa_total = 0;
  for (const Episode& ep : eps) {
    for (const QASample& qa : ep.qas) {
      ++per_type[question_type_name(qa.type)];
      ++qa_total;
    }
  }
  std::cout << "episodes\t" << eps.size() << "\n";
  std::cout << "qa_total\t" << qa_total << "\n";
  for (const auto& [type, count] : per_type) {
    std::cout << "qa." << type << "\t" << count << "\n";
  }
  return 0;
}

void print_config(const TrainConfig& c) {
  std::cout << "config: train mode=" << train_mode_name(c.mode) << " cascade="
            << (c.cascade == CascadeMode::kMultiLevel ? "multi" : "single")
            << " n=" << c.num_memories << " classes=" << c.classes
            << " dim=" << c.model_dim << " layers=" << c.layers
            << " heads=" << c.heads << " dropout=" << c.dropout
            << " lambda_cert=" << c.lambda_cert << " lambda_cls=" << c.lambda_cls
            << " lambda_iou=" << c.lambda_iou << " lambda_l1=" << c.lambda_l1
            << " lr=" << c.learning_rate << " epochs=" << c.epochs
            << " batch=" << c.batch_size << " seed=" << c.seed
            << " qa_per_epoch=" << c.qa_per_epoch << " threads=" << c.threads
            << " data=" << c.data_dir << " out=" << c.checkpoint_path << "\n";
}

int run_train(TrainConfig config, std::size_t eval_every) {
  print_config(config);
  Dataset data = load_dataset(config.data_dir);
  Trainer trainer(std::move(config), std::move(data));
  const TrainConfig& c = trainer.config();

  trainer.train([&](std::size_t epoch, const LossRecord& rec) {
    std::cout << "epoch " << epoch << "\ttotal " << rec.total << "\tl_qa " << rec.l_qa;
    if (c.mode == TrainMode::kUnsupervised) {
      std::cout << "\tl_cert " << rec.l_cert << "\tl_sem " << rec.l_sem << "\tl_iou "
                << rec.l_iou;
    } else {
      std::cout << "\tl_cls " << rec.l_cls << "\tl_l1 " << rec.l_l1;
    }
    if (eval_every > 0 && (epoch % eval_every == 0 || epoch + 1 == c.epochs) &&
        !trainer.heldout_indices().empty()) {
      Metrics m = trainer.evaluate_heldout();
      std::cout << "\theldout_acc " << m.accuracy;
    }
    std::cout << "\n";
  });

  trainer.save_checkpoint(c.checkpoint_path);
  std::cout << "checkpoint\t" << c.checkpoint_path << "\n";
  return 0;
}

int run_eval(const std::string& data_dir, const std::string& ckpt, bool per_type) {
  std::cout << "config: eval data=" << data_dir << " ckpt=" << ckpt
            << " per_type=" << (per_type ? "yes" : "no") << "\n";
  Dataset data = load_dataset(data_dir);
  Trainer trainer = Trainer::load_checkpoint(ckpt, std::move(data));
  Metrics m = trainer.evaluate_dataset(trainer.data());
  std::cout << "overall_accuracy\t" << m.accuracy << "\n";
  std::cout << "samples\t" << m.samples << "\n";
  if (per_type) {
    for (const auto& [type, st] : m.per_type) {
      std::cout << "accuracy." << type << "\t" << st.accuracy() << "\n";
      std::cout << "count." << type << "\t" << st.count << "\n";
    }
  }
  if (m.has_event_metrics) {
    std::cout << "event_class_accuracy\t" << m.event_class_accuracy << "\n";
    std::cout << "mean_temporal_l1\t" << m.mean_temporal_l1 << "\n";
  }
  return 0;
}

int run_attn(const std::string& data_dir, const std::string& ckpt, std::uint64_t episode_id,
             std::size_t question_idx, const std::string& out_path) {
  std::cout << "config: attn data=" << data_dir << " ckpt=" << ckpt << " episode="
            << episode_id << " question=" << question_idx << " out=" << out_path
            << "\n";
  Dataset data = load_dataset(data_dir);
  Trainer trainer = Trainer::load_checkpoint(ckpt, std::move(data));
  const GlanceFocusModel& model = trainer.model();
  if (model.cfg.cascade != CascadeMode::kMultiLevel) {
    throw ContractError("attn: checkpoint was trained without the multi-level cascade");
  }

  const Episode* ep = nullptr;
  for (const Episode& e : trainer.data().episodes) {
    if (e.id == episode_id) {
      ep = &e;
      break;
    }
  }
  if (!ep) throw ContractError("attn: unknown episode id " + std::to_string(episode_id));
  if (question_idx >= ep->qas.size()) {
    throw ContractError("attn: episode " + std::to_string(episode_id) + " has " +
                        std::to_string(ep->qas.size()) + " questions");
  }
  const QASample& qa = ep->qas[question_idx];

  QAForward f = model.forward_qa(ep->features, qa.question, nullptr);
  AttentionExport e = make_attention_export(f.memory_attention, f.frame_attention,
                                            f.prompt, f.bank);
  write_attention(out_path, e);

  const Vocabulary& vocab = trainer.data().vocab;
  std::cout << "question";
  for (std::size_t tok : qa.question) std::cout << " " << vocab.token(tok);
  std::cout << "\n";
  std::cout << "predicted_answer\t" << vocab.answer(argmax_logits(f.answer.logits))
            << "\n";
  std::cout << "oracle_answer\t" << vocab.answer(qa.answer) << "\n";
  std::cout << "memory_order";
  for (std::size_t i : f.prompt.sort_order) std::cout << " " << i;
  std::cout << "\n";
  for (std::size_t i = 0; i < f.bank.num_memories(); ++i) {
    std::cout << "span " << i << "\t" << f.bank.spans.at(i, 0) << "\t"
              << f.bank.spans.at(i, 1) << "\n";
  }
  std::cout << "attention_file\t" << out_path << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Glance-Focus event-memory video question answering (synthetic scale)"};
  app.require_subcommand(1);

  // gen
  auto* gen = app.add_subcommand("gen", "Generate a synthetic episode dataset");
  std::string gen_out;
  std::size_t gen_episodes = 100;
  GeneratorConfig gcfg;
  gen->add_option("--out", gen_out, "Output directory")->required();
  gen->add_option("--episodes", gen_episodes, "Episode count");
  gen->add_option("--frames", gcfg.frames, "Frames per episode");
  gen->add_option("--dim", gcfg.dim, "Feature dimension");
  gen->add_option("--classes", gcfg.classes, "Event class count");
  gen->add_option("--events-min", gcfg.min_events, "Minimum events per episode");
  gen->add_option("--events-max", gcfg.max_events, "Maximum events per episode");
  gen->add_option("--noise", gcfg.noise, "Feature noise scale");
  gen->add_option("--seed", gcfg.seed, "Master seed");

  // train
  auto* train = app.add_subcommand("train", "Train a model on a generated dataset");
  TrainConfig tcfg;
  std::string mode_name = "uns", cascade_name = "multi";
  std::size_t eval_every = 1;
  train->add_option("--data", tcfg.data_dir, "Dataset directory")->required();
  train->add_option("--mode", mode_name, "uns | sup")->required();
  train->add_option("--out", tcfg.checkpoint_path, "Checkpoint path")->required();
  train->add_option("--cascade", cascade_name, "multi | single");
  train->add_option("--n", tcfg.num_memories, "Memory slot count N");
  train->add_option("--classes", tcfg.classes, "Class count C (0 = from vocabulary)");
  train->add_option("--dim", tcfg.model_dim, "Model dimension");
  train->add_option("--layers", tcfg.layers, "Encoder/decoder layers");
  train->add_option("--heads", tcfg.heads, "Attention heads");
  train->add_option("--dropout", tcfg.dropout, "Dropout rate");
  train->add_option("--lambda-cert", tcfg.lambda_cert, "Certainty loss weight");
  train->add_option("--lambda-cls", tcfg.lambda_cls, "Class loss weight");
  train->add_option("--lambda-iou", tcfg.lambda_iou, "Temporal overlap weight");
  train->add_option("--lambda-l1", tcfg.lambda_l1, "Span L1 weight");
  train->add_option("--lr", tcfg.learning_rate, "Learning rate");
  train->add_option("--epochs", tcfg.epochs, "Training epochs");
  train->add_option("--batch", tcfg.batch_size, "Batch size");
  train->add_option("--seed", tcfg.seed, "Master seed");
  train->add_option("--qa-per-epoch", tcfg.qa_per_epoch,
                    "QA samples per episode per epoch (0 = all)");
  train->add_option("--threads", tcfg.threads, "Worker threads");
  train->add_option("--eval-every", eval_every,
                    "Held-out evaluation period in epochs (0 = never)");

  // eval
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
  std::string eval_data, eval_ckpt;
  bool per_type = false;
  eval->add_option("--data", eval_data, "Dataset directory")->required();
  eval->add_option("--ckpt", eval_ckpt, "Checkpoint path")->required();
  eval->add_flag("--per-type", per_type, "Per question-type breakdown");

  // attn
  auto* attn = app.add_subcommand("attn", "Export attention maps for one question");
  std::string attn_data, attn_ckpt, attn_out;
  std::uint64_t attn_episode = 0;
  std::size_t attn_question = 0;
  attn->add_option("--data", attn_data, "Dataset directory")->required();
  attn->add_option("--ckpt", attn_ckpt, "Checkpoint path")->required();
  attn->add_option("--episode", attn_episode, "Episode id")->required();
  attn->add_option("--question", attn_question, "Question index within the episode");
  attn->add_option("--out", attn_out, "Attention export path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n";
    return 2;
  }

  try {
    if (gen->parsed()) return run_gen(gen_out, gen_episodes, gcfg);
    if (train->parsed()) {
      tcfg.mode = train_mode_from_name(mode_name);
      if (cascade_name == "single") {
        tcfg.cascade = CascadeMode::kSingleLevel;
      } else if (cascade_name == "multi") {
        tcfg.cascade = CascadeMode::kMultiLevel;
      } else {
        throw ContractError("train: cascade must be multi or single");
      }
      return run_train(std::move(tcfg), eval_every);
    }
    if (eval->parsed()) return run_eval(eval_data, eval_ckpt, per_type);
    if (attn->parsed()) return run_attn(attn_data, attn_ckpt, attn_episode,
                                        attn_question, attn_out);
  } catch (const ShapeError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ContractError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
