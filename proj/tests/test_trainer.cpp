#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "relkit/errors.hpp"
#include "relkit/synthetic.hpp"
#include "relkit/trainer.hpp"

#include "helpers.hpp"

using namespace relkit;
using namespace relkit::numerics;
using namespace relkit::trainer;

namespace {

// Small but real model over the rule-based corpus.
Model tiny_model(uint64_t seed) {
  corpus::SynthConfig scfg;
  scfg.n_products = 18;
  scfg.n_categories = 3;
  scfg.n_queries = 18;
  scfg.seed = seed;
  auto products = corpus::make_catalogue(scfg);
  std::vector<std::string> texts, brands, colors;
  for (const auto& p : products) {
    texts.push_back(corpus::product_text(p));
    brands.push_back(p.brand);
    colors.push_back(p.color);
  }
  Model m;
  m.enc.layers = 1;
  m.enc.d_model = 16;
  m.enc.heads = 2;
  m.enc.d_ff = 32;
  m.enc.max_len = 32;
  m.enc.dropout = 0.1;
  m.feat.ngram_buckets = 128;
  m.feat.ngram_dim = 8;
  m.feat.id_dim = 4;
  m.vocab = corpus::build_vocab(texts, 1, 4000);
  m.brands = corpus::build_value_vocab(brands, 64);
  m.colors = corpus::build_value_vocab(colors, 32);
  init_model(m, seed);
  return m;
}

std::vector<corpus::Example> tiny_labeled(uint64_t seed, int64_t queries) {
  corpus::SynthConfig scfg;
  scfg.n_products = 18;
  scfg.n_categories = 3;
  scfg.n_queries = queries;
  scfg.seed = seed;
  return corpus::make_labeled(scfg).examples;
}

bool stores_equal(const ParamStore& a, const ParamStore& b) {
  if (a.entries.size() != b.entries.size()) return false;
  for (size_t i = 0; i < a.entries.size(); ++i) {
    if (a.entries[i].name != b.entries[i].name) return false;
    if (a.entries[i].value.v != b.entries[i].value.v) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("train config validation") {
  TrainConfig cfg;
  cfg.lr = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = TrainConfig{};
  cfg.warmup_ratio = 1.5;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = TrainConfig{};
  cfg.batch_size = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = TrainConfig{};
  cfg.ema_decay = 1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = TrainConfig{};
  cfg.mixup_alpha = -0.1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);

  // R-Drop compares clean logits against adversarial ones.
  cfg = TrainConfig{};
  cfg.toggles.rdrop = true;
  cfg.toggles.fgm = false;
  CHECK_NOTHROW(cfg.validate());
  CHECK_THROWS_AS(cfg.validate_finetune(), ConfigError);
  cfg.toggles.fgm = true;
  CHECK_NOTHROW(cfg.validate_finetune());
}

TEST_CASE("ema shadow follows the closed form") {
  // Constant parameter c from step 1 on: after k updates the shadow is
  // c * (1 - decay^k) + theta0 * decay^k.
  ParamStore params;
  params.add("w", Tensor::full({2, 2}, 0.25));
  EmaState s = ema_init(params, 0.999);
  CHECK(s.initialized);
  double theta0 = 0.25;
  double c = 1.75;
  params.get("w") = Tensor::full({2, 2}, c);
  int64_t k = 10000;
  for (int64_t i = 0; i < k; ++i) ema_update(s, params);
  double want = c * (1.0 - std::pow(0.999, k)) + theta0 * std::pow(0.999, k);
  for (double got : s.shadow.at("w").v)
    CHECK(std::abs(got - want) < 1e-12);
}

TEST_CASE("ema swap is a bit-exact involution and skips frozen tensors") {
  ParamStore params;
  params.add("a", Tensor::full({1, 3}, 1.0));
  params.add("frozen", Tensor::full({1, 2}, 5.0), false);
  EmaState s = ema_init(params, 0.5);
  CHECK(s.shadow.count("a") == 1);
  CHECK(s.shadow.count("frozen") == 0);

  params.get("a") = Tensor::full({1, 3}, 9.0);
  ema_update(s, params);  // shadow = 0.5*1 + 0.5*9 = 5
  Tensor before_param = params.get("a");
  Tensor before_shadow = s.shadow.at("a");
  ema_swap(params, s);
  CHECK(params.get("a").v == before_shadow.v);
  CHECK(s.shadow.at("a").v == before_param.v);
  ema_swap(params, s);
  CHECK(params.get("a").v == before_param.v);
  CHECK(s.shadow.at("a").v == before_shadow.v);
}

TEST_CASE("adam matches a hand-rolled reference") {
  ParamStore params;
  params.add("w", Tensor::full({1, 2}, 1.0));
  OptState opt = opt_init(params);

  double m0 = 0.0, v0 = 0.0, m1 = 0.0, v1 = 0.0;
  double w0 = 1.0, w1 = 1.0;
  double b1 = 0.9, b2 = 0.999, eps = 1e-8, lr = 0.01;
  std::vector<std::pair<double, double>> gs = {
      {0.3, -0.7}, {-0.2, 0.5}, {1.1, 0.9}};
  for (size_t t = 1; t <= gs.size(); ++t) {
    GradMap grads;
    Tensor g = Tensor::zeros({1, 2});
    g.at(0, 0) = gs[t - 1].first;
    g.at(0, 1) = gs[t - 1].second;
    grads["w"] = g;
    optimizer_step(params, grads, opt, lr);

    auto upd = [&](double& m, double& v, double& w, double grad) {
      m = b1 * m + (1 - b1) * grad;
      v = b2 * v + (1 - b2) * grad * grad;
      double mh = m / (1 - std::pow(b1, static_cast<double>(t)));
      double vh = v / (1 - std::pow(b2, static_cast<double>(t)));
      w -= lr * mh / (std::sqrt(vh) + eps);
    };
    upd(m0, v0, w0, gs[t - 1].first);
    upd(m1, v1, w1, gs[t - 1].second);
    CHECK(params.get("w").at(0, 0) == doctest::Approx(w0).epsilon(1e-12));
    CHECK(params.get("w").at(0, 1) == doctest::Approx(w1).epsilon(1e-12));
  }
  CHECK(opt.step == 3);
}

TEST_CASE("optimizer leaves parameters without gradients untouched") {
  ParamStore params;
  params.add("a", Tensor::full({1, 2}, 1.0));
  params.add("b", Tensor::full({1, 2}, 2.0));
  OptState opt = opt_init(params);
  GradMap grads;
  grads["a"] = Tensor::full({1, 2}, 0.5);
  optimizer_step(params, grads, opt, 0.1);
  CHECK(params.get("a").at(0, 0) != 1.0);
  CHECK(params.get("b").at(0, 0) == 2.0);
  for (double x : opt.m.at("b").v) CHECK(x == 0.0);
}

TEST_CASE("fgm perturbation has norm epsilon and zero maps to zero") {
  Rng rng(3);
  Tensor g = testutil::random_tensor(rng, {4, 5});
  Tensor d = fgm_perturb(g, 1.0);
  double norm = 0.0;
  for (double x : d.v) norm += x * x;
  CHECK(std::sqrt(norm) == doctest::Approx(1.0).epsilon(1e-12));
  // Direction is g / ||g||.
  double gn = 0.0;
  for (double x : g.v) gn += x * x;
  gn = std::sqrt(gn);
  for (size_t i = 0; i < g.v.size(); ++i)
    CHECK(d.v[i] == doctest::Approx(g.v[i] / gn).epsilon(1e-12));

  Tensor d2 = fgm_perturb(g, 0.25);
  double n2 = 0.0;
  for (double x : d2.v) n2 += x * x;
  CHECK(std::sqrt(n2) == doctest::Approx(0.25).epsilon(1e-12));

  Tensor z = Tensor::zeros({4, 5});
  Tensor dz = fgm_perturb(z, 1.0);
  for (double x : dz.v) CHECK(x == 0.0);
}

TEST_CASE("embedding mixup blends rows and targets convexly") {
  Tensor xi = Tensor::full({1, 3}, 1.0);
  Tensor xj = Tensor::full({1, 3}, -1.0);
  Tensor yi = Tensor::zeros({1, 2});
  yi.at(0, 0) = 1.0;
  Tensor yj = Tensor::zeros({1, 2});
  yj.at(0, 1) = 1.0;
  auto [x, y] = embedding_mixup(xi, yi, xj, yj, 0.3);
  for (double v : x.v) CHECK(v == doctest::Approx(0.3 * 1.0 + 0.7 * -1.0));
  CHECK(y.at(0, 0) == doctest::Approx(0.3));
  CHECK(y.at(0, 1) == doctest::Approx(0.7));
  CHECK_THROWS_AS(embedding_mixup(xi, yi, xj, yj, 1.5), UsageError);
}

TEST_CASE("learning rate schedule warms up then decays to zero") {
  TrainConfig cfg;
  cfg.lr = 1.0;
  cfg.warmup_ratio = 0.1;
  int64_t total = 100;
  // Peak at the end of warmup.
  CHECK(lr_at(10, total, cfg) == doctest::Approx(1.0));
  // Monotone rise before, monotone fall after.
  for (int64_t s = 2; s <= 10; ++s)
    CHECK(lr_at(s, total, cfg) > lr_at(s - 1, total, cfg));
  for (int64_t s = 11; s <= 100; ++s)
    CHECK(lr_at(s, total, cfg) < lr_at(s - 1, total, cfg));
  CHECK(lr_at(100, total, cfg) == doctest::Approx(0.0));
  // Linear in both phases.
  CHECK(lr_at(5, total, cfg) == doctest::Approx(0.5));
  CHECK(lr_at(55, total, cfg) == doctest::Approx(0.5));
  // A one-step run peaks at its only step.
  CHECK(lr_at(1, 1, cfg) == doctest::Approx(1.0));
}

TEST_CASE("gradient clipping rescales to the max norm") {
  GradMap grads;
  grads["a"] = Tensor::full({1, 2}, 3.0);
  grads["b"] = Tensor::full({1, 2}, 4.0);
  // Global norm = sqrt(2*9 + 2*16) = sqrt(50).
  double pre = clip_gradients(grads, 1.0);
  CHECK(pre == doctest::Approx(std::sqrt(50.0)).epsilon(1e-12));
  double post = 0.0;
  for (const auto& [k, g] : grads)
    for (double x : g.v) post += x * x;
  CHECK(std::sqrt(post) == doctest::Approx(1.0).epsilon(1e-12));
  // Ratios preserved.
  CHECK(grads["b"].at(0, 0) / grads["a"].at(0, 0) ==
        doctest::Approx(4.0 / 3.0).epsilon(1e-12));

  GradMap small;
  small["a"] = Tensor::full({1, 1}, 0.1);
  double pre2 = clip_gradients(small, 1.0);
  CHECK(pre2 == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(small["a"].at(0, 0) == 0.1);  // under the cap: untouched
}

TEST_CASE("collect_grads only reports leaves backward reached") {
  ParamStore params;
  params.add("used", Tensor::full({1, 2}, 1.0));
  params.add("unused", Tensor::full({1, 2}, 1.0));
  params.add("frozen", Tensor::full({1, 2}, 1.0), false);
  Tape tape;
  LeafMap leaves = leaf_all(tape, params);
  Var loss = tape.sum(leaves.at("used"));
  tape.backward(loss);
  GradMap grads = collect_grads(tape, leaves, params);
  CHECK(grads.count("used") == 1);
  CHECK(grads.count("unused") == 0);
  CHECK(grads.count("frozen") == 0);
  CHECK(grads["used"].at(0, 0) == 1.0);
}

TEST_CASE("finetune task plumbing") {
  CHECK(parse_finetune_task("task1") == FinetuneTask::RANK4);
  CHECK(parse_finetune_task("task2") == FinetuneTask::CLASS4);
  CHECK(parse_finetune_task("task3") == FinetuneTask::BINARY2);
  CHECK_THROWS_AS(parse_finetune_task("task9"), ConfigError);
  for (auto t : {FinetuneTask::RANK4, FinetuneTask::CLASS4,
                 FinetuneTask::BINARY2})
    CHECK(parse_finetune_task(to_string(t)) == t);

  CHECK(finetune_classes(FinetuneTask::RANK4) == 4);
  CHECK(finetune_classes(FinetuneTask::BINARY2) == 2);
  CHECK(finetune_head(FinetuneTask::CLASS4) == encoder::HeadKind::ESCI4);
  CHECK(finetune_head(FinetuneTask::BINARY2) ==
        encoder::HeadKind::SUBSTITUTE2);

  using corpus::EsciLabel;
  CHECK(finetune_target(FinetuneTask::CLASS4, EsciLabel::Complement) == 2);
  CHECK(finetune_target(FinetuneTask::BINARY2, EsciLabel::Substitute) == 1);
  CHECK(finetune_target(FinetuneTask::BINARY2, EsciLabel::Exact) == 0);
  CHECK(finetune_target(FinetuneTask::BINARY2, EsciLabel::Irrelevant) == 0);
}

TEST_CASE("finetune input wraps query and title") {
  Model m = tiny_model(1);
  corpus::Example ex = tiny_labeled(1, 6).front();
  auto ids = finetune_input_ids(m, ex);
  auto want = corpus::tokenize_pair(ex.query, ex.title, m.vocab,
                                    m.enc.max_len);
  CHECK(ids == want);
}

TEST_CASE("pretraining is deterministic and the loss is finite") {
  Model m1 = tiny_model(2);
  Model m2 = tiny_model(2);
  corpus::SynthConfig scfg;
  scfg.n_products = 18;
  scfg.n_categories = 3;
  scfg.n_queries = 18;
  scfg.seed = 2;
  auto products = corpus::make_catalogue(scfg);

  corpus::InstanceConfig icfg;
  icfg.max_len = 32;
  icfg.seed = 2;
  auto instances = corpus::build_pretrain_instances(
      products, m1.vocab, m1.brands, m1.colors, icfg);

  TrainConfig cfg;
  cfg.lr = 1e-3;
  cfg.batch_size = 8;
  cfg.pretrain_epochs = 2;
  cfg.seed = 2;
  cfg.toggles.ema = false;
  objectives::ContrastiveConfig ccfg;
  ccfg.queue_capacity = 8;

  TrainerState s1 = trainer_state_init(m1, cfg, ccfg);
  TrainerState s2 = trainer_state_init(m2, cfg, ccfg);
  PretrainRun r1 = train_pretrain(m1, instances, cfg, ccfg, s1);
  PretrainRun r2 = train_pretrain(m2, instances, cfg, ccfg, s2);

  REQUIRE(r1.epochs.size() == 2);
  REQUIRE(r2.epochs.size() == 2);
  for (size_t e = 0; e < r1.epochs.size(); ++e) {
    CHECK(r1.epochs[e].mean_loss == r2.epochs[e].mean_loss);
    CHECK(std::isfinite(r1.epochs[e].mean_loss));
    for (const auto& [task, mean] : r1.epochs[e].task_mean)
      CHECK(r2.epochs[e].task_mean.at(task) == mean);
  }
  CHECK(stores_equal(m1.params, m2.params));
  CHECK(s1.global_step == s2.global_step);
  CHECK(s1.epochs_done == 2);
  // Every pretraining task contributed steps.
  CHECK(r1.epochs[0].task_mean.size() == 5);
  CHECK(!r1.steps.empty());
  CHECK(r1.steps.front().lr > 0.0);
}

TEST_CASE("finetuning is deterministic and improves on its train set") {
  Model m1 = tiny_model(3);
  Model m2 = tiny_model(3);
  auto examples = tiny_labeled(3, 18);
  std::vector<corpus::Example> train(examples.begin(), examples.end() - 10);
  std::vector<corpus::Example> eval(examples.end() - 10, examples.end());

  TrainConfig cfg;
  cfg.lr = 5e-4;
  cfg.batch_size = 8;
  cfg.finetune_epochs = 2;
  cfg.seed = 3;
  TrainerState s1 = trainer_state_init(m1, cfg, {});
  TrainerState s2 = trainer_state_init(m2, cfg, {});

  FinetuneRun r1 = train_finetune(m1, train, eval, FinetuneTask::CLASS4,
                                  cfg, s1);
  FinetuneRun r2 = train_finetune(m2, train, eval, FinetuneTask::CLASS4,
                                  cfg, s2);
  REQUIRE(r1.epochs.size() == 2);
  for (size_t e = 0; e < r1.epochs.size(); ++e) {
    CHECK(r1.epochs[e].mean_loss == r2.epochs[e].mean_loss);
    CHECK(r1.epochs[e].metric == r2.epochs[e].metric);
    CHECK(r1.epochs[e].metric >= 0.0);
    CHECK(r1.epochs[e].metric <= 1.0);
  }
  CHECK(stores_equal(m1.params, m2.params));
}

TEST_CASE("every toggle changes the trajectory") {
  auto run_with = [&](TrainToggles toggles) {
    Model m = tiny_model(4);
    auto examples = tiny_labeled(4, 12);
    TrainConfig cfg;
    cfg.lr = 5e-4;
    cfg.batch_size = 8;
    cfg.finetune_epochs = 1;
    cfg.seed = 4;
    cfg.toggles = toggles;
    TrainerState s = trainer_state_init(m, cfg, {});
    train_finetune(m, examples, {}, FinetuneTask::CLASS4, cfg, s);
    return m;
  };

  TrainToggles off;
  off.ema = false;
  Model base = run_with(off);

  TrainToggles fgm = off;
  fgm.fgm = true;
  CHECK(!stores_equal(base.params, run_with(fgm).params));

  TrainToggles rdrop = fgm;
  rdrop.rdrop = true;
  CHECK(!stores_equal(run_with(fgm).params, run_with(rdrop).params));

  TrainToggles mixup = off;
  mixup.mixup = true;
  CHECK(!stores_equal(base.params, run_with(mixup).params));

  // EMA only changes evaluation weights, not the raw trajectory, so the
  // online parameters match the no-EMA run after the swap-back.
  TrainToggles ema = off;
  ema.ema = true;
  CHECK(stores_equal(base.params, run_with(ema).params));
}

TEST_CASE("evaluate_metric uses EMA weights and restores the originals") {
  Model m = tiny_model(5);
  auto examples = tiny_labeled(5, 12);
  TrainConfig cfg;
  cfg.lr = 1e-3;
  cfg.batch_size = 8;
  cfg.finetune_epochs = 1;
  cfg.seed = 5;
  cfg.toggles.ema = true;
  TrainerState s = trainer_state_init(m, cfg, {});
  train_finetune(m, examples, {}, FinetuneTask::CLASS4, cfg, s);

  ParamStore before = m.params;
  double with_ema = evaluate_metric(m, s, cfg, examples,
                                    FinetuneTask::CLASS4);
  CHECK(stores_equal(before, m.params));

  TrainConfig no_ema = cfg;
  no_ema.toggles.ema = false;
  double raw = evaluate_metric(m, s, no_ema, examples, FinetuneTask::CLASS4);
  CHECK(stores_equal(before, m.params));
  CHECK(with_ema >= 0.0);
  CHECK(raw >= 0.0);
}

TEST_CASE("predict_probs rows are simplex points and deterministic") {
  Model m = tiny_model(6);
  auto examples = tiny_labeled(6, 8);
  auto p1 = predict_probs(m, examples, FinetuneTask::CLASS4);
  auto p2 = predict_probs(m, examples, FinetuneTask::CLASS4);
  REQUIRE(p1.size() == examples.size());
  CHECK(p1 == p2);
  for (const auto& row : p1) {
    REQUIRE(row.size() == 4);
    double sum = 0.0;
    for (double p : row) {
      CHECK(p >= 0.0);
      sum += p;
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
  }
  auto p3 = predict_probs(m, examples, FinetuneTask::BINARY2);
  for (const auto& row : p3) REQUIRE(row.size() == 2);
}

TEST_CASE("after_epoch can stop a run early") {
  Model m = tiny_model(7);
  auto examples = tiny_labeled(7, 12);
  TrainConfig cfg;
  cfg.lr = 5e-4;
  cfg.batch_size = 8;
  cfg.finetune_epochs = 4;
  cfg.seed = 7;
  TrainerState s = trainer_state_init(m, cfg, {});
  FinetuneRun r = train_finetune(m, examples, {}, FinetuneTask::CLASS4, cfg,
                                 s, [](int64_t epoch) { return epoch < 2; });
  CHECK(r.epochs.size() == 2);
  CHECK(s.epochs_done == 2);
}
