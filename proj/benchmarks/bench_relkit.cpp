// Microbenchmarks for the hot paths: dense kernels, the encoder
// forward/backward, feature hashing, and one optimizer step.

#include <benchmark/benchmark.h>

#include <deque>
#include <vector>

#include "relkit/autodiff.hpp"
#include "relkit/encoder.hpp"
#include "relkit/features.hpp"
#include "relkit/model.hpp"
#include "relkit/objectives.hpp"
#include "relkit/rng.hpp"
#include "relkit/synthetic.hpp"
#include "relkit/trainer.hpp"
#include "relkit/vocab.hpp"

namespace {

using namespace relkit;
using namespace relkit::numerics;

Tensor random_tensor(Rng& rng, std::vector<int64_t> shape) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (double& x : t.v) x = rng.normal();
  return t;
}

encoder::EncoderConfig bench_encoder_config() {
  encoder::EncoderConfig cfg;
  cfg.layers = 2;
  cfg.d_model = 64;
  cfg.heads = 4;
  cfg.d_ff = 128;
  cfg.vocab_size = 1000;
  cfg.max_len = 128;
  cfg.dropout = 0.1;
  return cfg;
}

std::vector<int32_t> bench_ids(int64_t n_tokens) {
  std::vector<int32_t> ids = {corpus::Vocabulary::kCls};
  Rng rng(7);
  for (int64_t i = 0; i < n_tokens; ++i)
    ids.push_back(static_cast<int32_t>(
        corpus::Vocabulary::kNumSpecials + rng.uniform_int(900)));
  ids.push_back(corpus::Vocabulary::kSep);
  return ids;
}

void BM_matmul(benchmark::State& state) {
  int64_t n = state.range(0);
  Rng rng(1);
  Tensor a = random_tensor(rng, {n, n});
  Tensor b = random_tensor(rng, {n, n});
  for (auto _ : state) {
    Tape tape;
    Var out = tape.matmul(tape.constant(a), tape.constant(b));
    benchmark::DoNotOptimize(tape.val(out).v.data());
  }
}
BENCHMARK(BM_matmul)->Arg(64)->Arg(128)->Arg(256);

void BM_encode_forward(benchmark::State& state) {
  auto cfg = bench_encoder_config();
  ParamStore store;
  encoder::init_encoder_params(store, cfg, 1);
  auto ids = bench_ids(state.range(0));
  for (auto _ : state) {
    Tape tape;
    LeafMap leaves = leaf_all(tape, store);
    auto er = encoder::encode(tape, leaves, cfg, ids, false, 0);
    benchmark::DoNotOptimize(tape.val(er.cls).v.data());
  }
}
BENCHMARK(BM_encode_forward)->Arg(16)->Arg(64)->Arg(126);

void BM_encode_backward(benchmark::State& state) {
  auto cfg = bench_encoder_config();
  ParamStore store;
  encoder::init_encoder_params(store, cfg, 1);
  auto ids = bench_ids(state.range(0));
  for (auto _ : state) {
    Tape tape;
    LeafMap leaves = leaf_all(tape, store);
    auto er = encoder::encode(tape, leaves, cfg, ids, true, 3);
    Var loss = tape.sum(tape.mul(er.hidden, er.hidden));
    tape.backward(loss);
    benchmark::DoNotOptimize(tape.grad(leaves.at("enc.tok_emb")).v.data());
  }
}
BENCHMARK(BM_encode_backward)->Arg(16)->Arg(64);

void BM_ngram_pool(benchmark::State& state) {
  encoder::FeatureConfig cfg;
  cfg.ngram_buckets = 4096;
  cfg.ngram_dim = 32;
  Rng rng(2);
  Tensor table = random_tensor(rng, {cfg.ngram_buckets, cfg.ngram_dim});
  std::string text =
      "wireless noise cancelling over ear headphones with microphone";
  for (auto _ : state) {
    Tape tape;
    Var pooled = encoder::ngram_pool(tape, tape.constant(table), text,
                                     cfg.ngram_buckets);
    benchmark::DoNotOptimize(tape.val(pooled).v.data());
  }
}
BENCHMARK(BM_ngram_pool);

void BM_contrastive(benchmark::State& state) {
  int64_t n = state.range(0);
  Rng rng(3);
  Tensor h = random_tensor(rng, {n, 64});
  Tensor hp = random_tensor(rng, {n, 64});
  std::deque<Tensor> queue;
  for (int i = 0; i < 64; ++i) queue.push_back(random_tensor(rng, {1, 64}));
  objectives::ContrastiveConfig cfg;
  for (auto _ : state) {
    Tape tape;
    Var loss = objectives::contrastive_loss(
        tape, tape.leaf(h, true), tape.leaf(hp, true), queue, cfg);
    tape.backward(loss);
    benchmark::DoNotOptimize(tape.val(loss).v.data());
  }
}
BENCHMARK(BM_contrastive)->Arg(8)->Arg(32);

void BM_optimizer_step(benchmark::State& state) {
  auto cfg = bench_encoder_config();
  ParamStore store;
  encoder::init_encoder_params(store, cfg, 1);
  trainer::GradMap grads;
  Rng rng(4);
  for (const auto& name : encoder::encoder_param_names(cfg))
    grads[name] = random_tensor(rng, store.get(name).shape);
  trainer::OptState opt = trainer::opt_init(store);
  for (auto _ : state) {
    trainer::optimizer_step(store, grads, opt, 1e-3);
    benchmark::DoNotOptimize(opt.step);
  }
}
BENCHMARK(BM_optimizer_step);

}  // namespace

BENCHMARK_MAIN();
