// Command-line entry point: vocabulary building, multitask pre-training,
// fine-tuning, label cleaning, prediction, ranking, evaluation, and the
// accumulated-toggle ablation harness. Every run writes its outputs and
// resolved config under <out.dir>/<verb>-<confighash>-s<seed>.
#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "relkit/checkpoint.hpp"
#include "relkit/confident.hpp"
#include "relkit/data.hpp"
#include "relkit/errors.hpp"
#include "relkit/evalkit.hpp"
#include "relkit/features.hpp"
#include "relkit/instances.hpp"
#include "relkit/model.hpp"
#include "relkit/runconfig.hpp"
#include "relkit/trainer.hpp"
#include "relkit/vocab.hpp"

namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace relkit;

constexpr const char* kBinaryLabels[2] = {"non_substitute", "substitute"};

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  out.flush();
  if (!out) throw RuntimeFailure("cannot write " + path);
}

void write_json_file(const std::string& path, const json& doc) {
  write_text(path, doc.dump(2) + "\n");
}

// Creates the run directory and freezes the resolved config inside it.
std::string open_run_dir(const cli::RunConfig& rc) {
  fs::path dir = fs::path(rc.get_string("out.dir")) / rc.run_dir_name();
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec)
    throw ConfigError("config: cannot create run directory " + dir.string());
  write_text((dir / "config.json").string(), rc.canonical_text());
  return dir.string();
}

std::vector<std::string> split_list(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : s) {
    if (ch == sep) {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

std::string require_path(const cli::RunConfig& rc, const std::string& key) {
  const std::string& p = rc.get_string(key);
  if (p.empty())
    throw ConfigError("config: " + rc.verb + " needs key \"" + key + "\"");
  return p;
}

std::vector<corpus::Example> load_labeled_checked(const std::string& path,
                                                  bool need_labels) {
  auto xs = corpus::load_labeled(path);
  if (xs.empty()) throw DataError(path + ": no examples");
  if (need_labels)
    for (size_t i = 0; i < xs.size(); ++i)
      if (!xs[i].esci_label)
        throw DataError(path + ": example " + std::to_string(i + 1) +
                        " has no esci_label");
  return xs;
}

corpus::Vocabulary vocab_for(const cli::RunConfig& rc,
                             const std::vector<std::string>& texts) {
  const std::string& path = rc.get_string("data.vocab");
  if (!path.empty()) return corpus::load_vocab(path);
  return corpus::build_vocab(texts, rc.get_int("vocab.min_count"),
                             rc.get_int("vocab.max_size"));
}

// Fresh model from the config plus whatever text supplies the
// vocabularies (catalogue products or labeled examples).
Model fresh_model(const cli::RunConfig& rc,
                  const std::vector<std::string>& texts,
                  const std::vector<std::string>& brand_values,
                  const std::vector<std::string>& color_values) {
  Model m;
  m.enc = rc.encoder_config();
  m.feat = rc.feature_config();
  m.vocab = vocab_for(rc, texts);
  m.countries = locale_value_vocab();
  m.brands =
      corpus::build_value_vocab(brand_values, rc.get_int("feat.max_brands"));
  m.colors =
      corpus::build_value_vocab(color_values, rc.get_int("feat.max_colors"));
  init_model(m, static_cast<uint64_t>(rc.get_int("seed")));
  return m;
}

json step_log_line(const trainer::StepLog& s) {
  json parts = json::object();
  for (const auto& [name, value] : s.parts) parts[name] = value;
  return json{{"step", s.step},       {"epoch", s.epoch},
              {"task", s.task},       {"loss", parts},
              {"lr", s.lr},           {"grad_norm", s.grad_norm}};
}

void write_step_logs(const std::string& path,
                     const std::vector<trainer::StepLog>& steps) {
  std::string text;
  for (const auto& s : steps) text += step_log_line(s).dump() + "\n";
  write_text(path, text);
}

// Swaps in the EMA weights when the run that produced the checkpoint
// evaluated with them, so predictions match that run's own metrics.
void apply_eval_weights(trainer::Checkpoint& ck) {
  if (ck.train.toggles.ema && ck.state.ema.initialized)
    trainer::ema_swap(ck.model.params, ck.state.ema);
}

std::function<bool(int64_t)> stop_after(const cli::RunConfig& rc) {
  int64_t stop = rc.get_int("train.stop_after_epoch");
  return [stop](int64_t epoch) { return stop <= 0 || epoch < stop; };
}

int run_build_vocab(const cli::RunConfig& rc) {
  std::vector<std::string> texts;
  const std::string& cat_path = rc.get_string("data.catalogue");
  const std::string& lab_path = rc.get_string("data.labeled");
  if (cat_path.empty() && lab_path.empty())
    throw ConfigError(
        "config: build-vocab needs data.catalogue or data.labeled");
  if (!cat_path.empty())
    for (const auto& p : corpus::load_catalogue(cat_path))
      texts.push_back(corpus::product_text(p));
  if (!lab_path.empty())
    for (const auto& e : corpus::load_labeled(lab_path)) {
      texts.push_back(e.query);
      texts.push_back(corpus::product_text(e));
    }
  auto v = corpus::build_vocab(texts, rc.get_int("vocab.min_count"),
                               rc.get_int("vocab.max_size"));
  std::string dir = open_run_dir(rc);
  corpus::save_vocab(dir + "/vocab.txt", v);
  write_json_file(dir + "/metrics.json", json{{"vocab_size", v.size()}});
  std::cout << dir << "\n";
  return 0;
}

int run_pretrain(const cli::RunConfig& rc) {
  auto products = corpus::load_catalogue(require_path(rc, "data.catalogue"));
  if (products.empty()) throw DataError("pretrain: empty catalogue");

  Model m;
  trainer::TrainConfig tcfg;
  objectives::ContrastiveConfig ccfg;
  trainer::TrainerState state;
  const std::string& resume = rc.get_string("train.resume");
  if (!resume.empty()) {
    auto ck = trainer::checkpoint_load(resume);
    if (ck.phase != "pretrain")
      throw ConfigError("config: train.resume expects a pretrain checkpoint, "
                        "got phase \"" + ck.phase + "\"");
    m = std::move(ck.model);
    state = std::move(ck.state);
    tcfg = ck.train;
    ccfg = ck.contrast;
  } else {
    std::vector<std::string> texts, brand_values, color_values;
    for (const auto& p : products) {
      texts.push_back(corpus::product_text(p));
      brand_values.push_back(p.brand);
      color_values.push_back(p.color);
    }
    m = fresh_model(rc, texts, brand_values, color_values);
    tcfg = rc.train_config();
    ccfg = rc.contrastive_config();
    tcfg.validate();
    ccfg.validate();
    state = trainer_state_init(m, tcfg, ccfg);
  }

  auto instances = corpus::build_pretrain_instances(
      products, m.vocab, m.brands, m.colors, rc.instance_config());
  auto run = trainer::train_pretrain(m, instances, tcfg, ccfg, state,
                                     stop_after(rc));

  std::string dir = open_run_dir(rc);
  trainer::checkpoint_save(dir + "/checkpoint.bin",
                           {"pretrain", std::move(m), state, tcfg, ccfg});
  write_step_logs(dir + "/train_log.jsonl", run.steps);
  json metrics{{"epochs_done", state.epochs_done},
               {"steps", state.global_step},
               {"instances", instances.size()}};
  for (const auto& e : run.epochs) {
    metrics["loss_epoch_" + std::to_string(e.epoch)] = e.mean_loss;
    for (const auto& [task, mean] : e.task_mean)
      metrics["loss_" + task + "_epoch_" + std::to_string(e.epoch)] = mean;
  }
  if (!run.epochs.empty())
    metrics["loss_final"] = run.epochs.back().mean_loss;
  write_json_file(dir + "/metrics.json", metrics);
  std::cout << dir << "\n";
  return 0;
}

int run_finetune(const cli::RunConfig& rc) {
  auto train_set = load_labeled_checked(require_path(rc, "data.labeled"), true);
  std::vector<corpus::Example> eval_set;
  if (!rc.get_string("data.eval").empty())
    eval_set = load_labeled_checked(rc.get_string("data.eval"), true);
  auto task = trainer::parse_finetune_task(rc.get_string("task"));

  Model m;
  trainer::TrainConfig tcfg;
  objectives::ContrastiveConfig ccfg;
  trainer::TrainerState state;
  const std::string& resume = rc.get_string("train.resume");
  const std::string& init_path = rc.get_string("data.checkpoint");
  if (!resume.empty()) {
    auto ck = trainer::checkpoint_load(resume);
    if (ck.phase != "finetune")
      throw ConfigError("config: train.resume expects a finetune checkpoint, "
                        "got phase \"" + ck.phase + "\"");
    m = std::move(ck.model);
    state = std::move(ck.state);
    tcfg = ck.train;
    ccfg = ck.contrast;
  } else {
    tcfg = rc.train_config();
    ccfg = rc.contrastive_config();
    tcfg.validate_finetune();
    ccfg.validate();
    if (!init_path.empty()) {
      // Pre-trained weights, fresh optimizer state.
      auto ck = trainer::checkpoint_load(init_path);
      m = std::move(ck.model);
    } else {
      std::vector<std::string> texts, brand_values, color_values;
      for (const auto& e : train_set) {
        texts.push_back(e.query);
        texts.push_back(corpus::product_text(e));
        brand_values.push_back(e.brand);
        color_values.push_back(e.color);
      }
      m = fresh_model(rc, texts, brand_values, color_values);
    }
    state = trainer_state_init(m, tcfg, ccfg);
  }

  auto run = trainer::train_finetune(m, train_set, eval_set, task, tcfg,
                                     state, stop_after(rc));

  std::string dir = open_run_dir(rc);
  trainer::checkpoint_save(dir + "/checkpoint.bin",
                           {"finetune", std::move(m), state, tcfg, ccfg});
  write_step_logs(dir + "/train_log.jsonl", run.steps);
  json metrics{{"task", trainer::to_string(task)},
               {"epochs_done", state.epochs_done},
               {"steps", state.global_step},
               {"metric_name",
                task == trainer::FinetuneTask::RANK4 ? "ndcg" : "micro_f1"}};
  for (const auto& e : run.epochs) {
    metrics["loss_epoch_" + std::to_string(e.epoch)] = e.mean_loss;
    metrics["metric_epoch_" + std::to_string(e.epoch)] = e.metric;
  }
  if (!run.epochs.empty()) {
    metrics["loss_final"] = run.epochs.back().mean_loss;
    metrics["metric_final"] = run.epochs.back().metric;
  }
  write_json_file(dir + "/metrics.json", metrics);
  std::cout << dir << "\n";
  return 0;
}

int run_clean(const cli::RunConfig& rc) {
  auto xs = load_labeled_checked(require_path(rc, "data.labeled"), true);
  auto n = static_cast<int64_t>(xs.size());
  std::vector<int32_t> labels(xs.size());
  for (size_t i = 0; i < xs.size(); ++i)
    labels[i] = corpus::esci_index(*xs[i].esci_label);

  confident::LinearProbeConfig probe;
  probe.buckets = rc.get_int("clean.buckets");
  probe.epochs = rc.get_int("clean.epochs");
  probe.lr = rc.get_double("clean.lr");
  probe.seed = static_cast<uint64_t>(rc.get_int("seed"));
  auto report = confident::run_confident_pipeline(
      n, labels, 4, rc.get_int("clean.folds"), probe.seed,
      confident::linear_probe_trainer(xs, labels, 4, probe),
      rc.get_double("clean.fraction"));

  std::string dir = open_run_dir(rc);
  std::vector<corpus::Example> kept;
  kept.reserve(report.pruned.kept.size());
  for (int64_t i : report.pruned.kept)
    kept.push_back(xs[static_cast<size_t>(i)]);
  corpus::write_labeled(dir + "/cleaned.jsonl", kept);

  std::string removed_text;
  for (int64_t i : report.pruned.removed) {
    auto idx = static_cast<size_t>(i);
    removed_text += json{{"index", i},
                         {"example_id", xs[idx].example_id},
                         {"given", corpus::to_string(*xs[idx].esci_label)},
                         {"assigned", report.estimate.assigned[idx]},
                         {"margin", report.estimate.margin[idx]}}
                        .dump() +
                    "\n";
  }
  write_text(dir + "/removed.jsonl", removed_text);

  json metrics{{"n", n},
               {"n_kept", report.pruned.kept.size()},
               {"n_removed", report.pruned.removed.size()}};
  for (size_t j = 0; j < report.estimate.thresholds.size(); ++j)
    metrics["threshold_" + std::to_string(j)] = report.estimate.thresholds[j];
  for (size_t i = 0; i < report.estimate.joint.size(); ++i)
    for (size_t j = 0; j < report.estimate.joint[i].size(); ++j)
      metrics["joint_" + std::to_string(i) + "_" + std::to_string(j)] =
          report.estimate.joint[i][j];
  write_json_file(dir + "/metrics.json", metrics);
  std::cout << dir << "\n";
  return 0;
}

int run_predict(const cli::RunConfig& rc) {
  auto task = trainer::parse_finetune_task(rc.get_string("task"));
  if (task == trainer::FinetuneTask::RANK4)
    throw ConfigError(
        "config: task1 produces ranked lists; use the rank command");
  auto ck = trainer::checkpoint_load(require_path(rc, "data.checkpoint"));
  apply_eval_weights(ck);
  auto xs = load_labeled_checked(require_path(rc, "data.labeled"), false);
  auto probs = trainer::predict_probs(ck.model, xs, task);

  std::string text;
  for (size_t i = 0; i < xs.size(); ++i) {
    size_t best = 0;
    for (size_t j = 1; j < probs[i].size(); ++j)
      if (probs[i][j] > probs[i][best]) best = j;
    std::string label =
        task == trainer::FinetuneTask::BINARY2
            ? kBinaryLabels[best]
            : corpus::to_string(corpus::esci_from_index(
                  static_cast<int32_t>(best)));
    text += json{{"example_id", xs[i].example_id},
                 {"label", label},
                 {"probs", probs[i]}}
                .dump() +
            "\n";
  }
  std::string dir = open_run_dir(rc);
  write_text(dir + "/predictions.jsonl", text);
  write_json_file(dir + "/metrics.json",
                  json{{"n", xs.size()}, {"task", trainer::to_string(task)}});
  std::cout << dir << "\n";
  return 0;
}

int run_rank(const cli::RunConfig& rc) {
  auto task = trainer::parse_finetune_task(rc.get_string("task"));
  if (task != trainer::FinetuneTask::RANK4)
    throw ConfigError("config: rank serves task1; set task=task1");
  std::vector<std::string> paths =
      split_list(rc.get_string("data.checkpoints"), ',');
  if (paths.empty() && !rc.get_string("data.checkpoint").empty())
    paths.push_back(rc.get_string("data.checkpoint"));
  if (paths.empty())
    throw ConfigError("config: rank needs data.checkpoints");
  auto xs = load_labeled_checked(require_path(rc, "data.labeled"), false);

  std::vector<std::vector<double>> score_lists;
  for (const auto& p : paths) {
    auto ck = trainer::checkpoint_load(p);
    apply_eval_weights(ck);
    auto probs =
        trainer::predict_probs(ck.model, xs, trainer::FinetuneTask::RANK4);
    std::vector<double> scores(xs.size());
    for (size_t i = 0; i < xs.size(); ++i)
      scores[i] = encoder::rank_score(probs[i]);
    score_lists.push_back(std::move(scores));
  }
  auto final_scores = evalkit::ensemble_mean(score_lists);

  std::map<std::string, evalkit::RankedList> by_query;
  for (size_t i = 0; i < xs.size(); ++i) {
    auto& list = by_query[xs[i].query];
    list.query_id = xs[i].query;
    list.items.push_back({xs[i].product_id, final_scores[i], std::nullopt});
  }
  std::string text;
  for (auto& [query, list] : by_query) {
    evalkit::sort_ranked(list);
    json items = json::array();
    for (const auto& item : list.items)
      items.push_back(json{{"product_id", item.product_id},
                           {"score", item.score}});
    text += json{{"query", query}, {"ranking", items}}.dump() + "\n";
  }
  std::string dir = open_run_dir(rc);
  write_text(dir + "/rankings.jsonl", text);
  write_json_file(dir + "/metrics.json",
                  json{{"n", xs.size()},
                       {"n_queries", by_query.size()},
                       {"n_checkpoints", paths.size()}});
  std::cout << dir << "\n";
  return 0;
}

json parse_jsonl_line(const std::string& path, const std::string& line,
                      int64_t lineno) {
  try {
    return json::parse(line);
  } catch (const json::exception& e) {
    throw DataError(path + " line " + std::to_string(lineno) + ": " +
                    e.what());
  }
}

int run_evaluate(const cli::RunConfig& rc) {
  auto task = trainer::parse_finetune_task(rc.get_string("task"));
  auto gold = load_labeled_checked(require_path(rc, "data.labeled"), true);
  std::string pred_path = require_path(rc, "data.predictions");
  std::ifstream in(pred_path);
  if (!in) throw DataError(pred_path + ": cannot open");

  json metrics;
  if (task == trainer::FinetuneTask::RANK4) {
    // Gold gains keyed by (query, product id); predictions are ranked
    // per-query lists as written by the rank command.
    std::map<std::pair<std::string, std::string>, double> gain_of;
    for (const auto& e : gold)
      gain_of[{e.query, e.product_id}] =
          encoder::esci_gain(corpus::esci_index(*e.esci_label));
    std::vector<double> per_query;
    std::string line;
    int64_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      json row = parse_jsonl_line(pred_path, line, lineno);
      std::string query = row.at("query").get<std::string>();
      std::vector<double> gains;
      for (const auto& item : row.at("ranking")) {
        std::string pid = item.at("product_id").get<std::string>();
        auto it = gain_of.find({query, pid});
        if (it == gain_of.end())
          throw DataError(pred_path + " line " + std::to_string(lineno) +
                          ": no gold label for query \"" + query +
                          "\" product \"" + pid + "\"");
        gains.push_back(it->second);
      }
      per_query.push_back(evalkit::ndcg(gains));
    }
    if (per_query.empty()) throw DataError(pred_path + ": no ranked lists");
    double sum = 0.0;
    for (double v : per_query) sum += v;
    metrics = json{{"ndcg", sum / static_cast<double>(per_query.size())},
                   {"n_queries", per_query.size()}};
  } else {
    std::map<std::string, int32_t> gold_of;
    for (const auto& e : gold)
      gold_of[e.example_id] = trainer::finetune_target(task, *e.esci_label);
    std::set<std::string> valid;
    if (task == trainer::FinetuneTask::BINARY2) {
      valid = {kBinaryLabels[0], kBinaryLabels[1]};
    } else {
      for (int32_t i = 0; i < 4; ++i)
        valid.insert(corpus::to_string(corpus::esci_from_index(i)));
    }
    std::vector<int32_t> pred_vec, gold_vec;
    std::string line;
    int64_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      json row = parse_jsonl_line(pred_path, line, lineno);
      std::string id = row.at("example_id").get<std::string>();
      std::string label = row.at("label").get<std::string>();
      if (!valid.count(label))
        throw DataError(pred_path + " line " + std::to_string(lineno) +
                        ": label \"" + label + "\" is not in the " +
                        trainer::to_string(task) + " label set");
      auto it = gold_of.find(id);
      if (it == gold_of.end())
        throw DataError(pred_path + " line " + std::to_string(lineno) +
                        ": unknown example_id \"" + id + "\"");
      int32_t p;
      if (task == trainer::FinetuneTask::BINARY2) {
        p = label == kBinaryLabels[1] ? 1 : 0;
      } else {
        p = corpus::esci_index(corpus::parse_esci(label));
      }
      pred_vec.push_back(p);
      gold_vec.push_back(it->second);
    }
    metrics = json{{"micro_f1", evalkit::micro_f1(pred_vec, gold_vec)},
                   {"n", pred_vec.size()}};
  }
  std::string dir = open_run_dir(rc);
  metrics["task"] = trainer::to_string(task);
  write_json_file(dir + "/metrics.json", metrics);
  std::cout << dir << "\n";
  return 0;
}

int run_ablate(const cli::RunConfig& rc) {
  auto stages = split_list(rc.get_string("ablate.stages"), ',');
  for (const auto& s : stages)
    if (s != "ema" && s != "fgm" && s != "rdrop" && s != "mixup")
      throw ConfigError("config: ablate.stages has unknown stage \"" + s +
                        "\"");
  auto train_set = load_labeled_checked(require_path(rc, "data.labeled"), true);
  std::vector<corpus::Example> eval_set;
  if (!rc.get_string("data.eval").empty())
    eval_set = load_labeled_checked(rc.get_string("data.eval"), true);
  auto task = trainer::parse_finetune_task(rc.get_string("task"));
  auto ccfg = rc.contrastive_config();
  ccfg.validate();

  // Every row trains from the same initial weights.
  Model init;
  const std::string& init_path = rc.get_string("data.checkpoint");
  if (!init_path.empty()) {
    init = std::move(trainer::checkpoint_load(init_path).model);
  } else {
    std::vector<std::string> texts, brand_values, color_values;
    for (const auto& e : train_set) {
      texts.push_back(e.query);
      texts.push_back(corpus::product_text(e));
      brand_values.push_back(e.brand);
      color_values.push_back(e.color);
    }
    init = fresh_model(rc, texts, brand_values, color_values);
  }

  std::vector<evalkit::AblationRow> rows;
  trainer::TrainToggles toggles{false, false, false, false};
  std::string label = "base";
  for (size_t stage = 0; stage <= stages.size(); ++stage) {
    if (stage > 0) {
      const std::string& s = stages[stage - 1];
      if (s == "ema") toggles.ema = true;
      if (s == "fgm") toggles.fgm = true;
      if (s == "rdrop") toggles.rdrop = true;
      if (s == "mixup") toggles.mixup = true;
      label += "+" + s;
    }
    auto tcfg = rc.train_config();
    tcfg.toggles = toggles;
    tcfg.validate_finetune();
    Model m = init;
    auto state = trainer_state_init(m, tcfg, ccfg);
    auto run =
        trainer::train_finetune(m, train_set, eval_set, task, tcfg, state);
    rows.push_back({label, run.epochs.back().metric});
  }

  std::string dir = open_run_dir(rc);
  write_text(dir + "/ablation.csv", evalkit::ablation_csv(rows));
  write_text(dir + "/ablation.json", evalkit::ablation_json(rows));
  json metrics;
  for (const auto& row : rows) metrics["metric_" + row.config] = row.metric;
  metrics["task"] = trainer::to_string(task);
  write_json_file(dir + "/metrics.json", metrics);
  std::cout << dir << "\n";
  return 0;
}

int dispatch(const std::string& verb, const std::string& config_path,
             const std::vector<std::string>& overrides) {
  auto rc = cli::resolve_config(verb, config_path, overrides);
  if (verb == "build-vocab") return run_build_vocab(rc);
  if (verb == "pretrain") return run_pretrain(rc);
  if (verb == "finetune") return run_finetune(rc);
  if (verb == "clean") return run_clean(rc);
  if (verb == "predict") return run_predict(rc);
  if (verb == "rank") return run_rank(rc);
  if (verb == "evaluate") return run_evaluate(rc);
  if (verb == "ablate") return run_ablate(rc);
  throw UsageError("unknown command " + verb);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"query/product relevance training toolkit"};
  app.require_subcommand(1);

  struct VerbArgs {
    std::string config;
    std::vector<std::string> overrides;
  };
  std::map<std::string, VerbArgs> args;
  for (const char* verb : {"build-vocab", "pretrain", "finetune", "clean",
                           "predict", "rank", "evaluate", "ablate"}) {
    auto* sub = app.add_subcommand(verb);
    auto& a = args[verb];
    sub->add_option("-c,--config", a.config, "flat JSON config file");
    sub->add_option("-S,--set", a.overrides,
                    "dotted-key override, e.g. -S train.lr=1e-3");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  const std::string verb = app.get_subcommands().front()->get_name();
  try {
    return dispatch(verb, args[verb].config, args[verb].overrides);
  } catch (const RuntimeFailure& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const ShapeError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const IndexError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::logic_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
