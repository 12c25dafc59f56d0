#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "relkit/checkpoint.hpp"
#include "relkit/errors.hpp"
#include "relkit/synthetic.hpp"

using namespace relkit;
using namespace relkit::trainer;

namespace {

std::string temp_path(const char* name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return std::string(std::istreambuf_iterator<char>(in),
                     std::istreambuf_iterator<char>());
}

void spit(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

Checkpoint make_checkpoint(uint64_t seed) {
  corpus::SynthConfig scfg;
  scfg.n_products = 12;
  scfg.n_categories = 3;
  scfg.n_queries = 12;
  scfg.seed = seed;
  auto products = corpus::make_catalogue(scfg);
  std::vector<std::string> texts, brands, colors;
  for (const auto& p : products) {
    texts.push_back(corpus::product_text(p));
    brands.push_back(p.brand);
    colors.push_back(p.color);
  }
  Checkpoint c;
  c.phase = "pretrain";
  c.model.enc.layers = 1;
  c.model.enc.d_model = 8;
  c.model.enc.heads = 2;
  c.model.enc.d_ff = 16;
  c.model.enc.max_len = 24;
  c.model.feat.ngram_buckets = 64;
  c.model.feat.ngram_dim = 4;
  c.model.feat.id_dim = 4;
  c.model.vocab = corpus::build_vocab(texts, 1, 2000);
  c.model.brands = corpus::build_value_vocab(brands, 32);
  c.model.colors = corpus::build_value_vocab(colors, 16);
  init_model(c.model, seed);
  c.train.seed = seed;
  c.contrast.queue_capacity = 4;
  c.state = trainer_state_init(c.model, c.train, c.contrast);
  c.state.global_step = 17;
  c.state.epochs_done = 2;
  // Give the queue some entries so the payload section is exercised.
  objectives::queue_update(c.state.queue, c.model.params, {{2, 5, 3}},
                           c.model.enc, c.contrast);
  return c;
}

bool models_equal(const Model& a, const Model& b) {
  if (a.vocab.tokens != b.vocab.tokens) return false;
  if (a.brands.values != b.brands.values) return false;
  if (a.colors.values != b.colors.values) return false;
  if (a.countries.values != b.countries.values) return false;
  if (a.params.entries.size() != b.params.entries.size()) return false;
  for (size_t i = 0; i < a.params.entries.size(); ++i) {
    const auto& ea = a.params.entries[i];
    const auto& eb = b.params.entries[i];
    if (ea.name != eb.name || ea.trainable != eb.trainable) return false;
    if (ea.value.shape != eb.value.shape || ea.value.v != eb.value.v)
      return false;
  }
  return true;
}

}  // namespace

TEST_CASE("save, load, save round trip is byte-identical") {
  Checkpoint c = make_checkpoint(3);
  std::string p1 = temp_path("relkit_ck1.bin");
  std::string p2 = temp_path("relkit_ck2.bin");
  checkpoint_save(p1, c);
  Checkpoint back = checkpoint_load(p1);
  checkpoint_save(p2, back);
  CHECK(slurp(p1) == slurp(p2));

  CHECK(back.phase == c.phase);
  CHECK(models_equal(back.model, c.model));
  CHECK(back.state.global_step == 17);
  CHECK(back.state.epochs_done == 2);
  CHECK(back.state.opt.step == c.state.opt.step);
  CHECK(back.state.queue.entries.size() == c.state.queue.entries.size());
  for (size_t i = 0; i < c.state.queue.entries.size(); ++i)
    CHECK(back.state.queue.entries[i].v == c.state.queue.entries[i].v);
  CHECK(back.state.queue.initialized == c.state.queue.initialized);
  CHECK(back.train.seed == c.train.seed);
  CHECK(back.contrast.queue_capacity == c.contrast.queue_capacity);
  std::remove(p1.c_str());
  std::remove(p2.c_str());
}

TEST_CASE("loading a missing checkpoint names the path as a data error") {
  try {
    checkpoint_load("/nonexistent/model.bin");
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("/nonexistent/model.bin") !=
          std::string::npos);
  }
}

TEST_CASE("corrupt checkpoints are runtime failures") {
  Checkpoint c = make_checkpoint(4);
  std::string path = temp_path("relkit_ck_corrupt.bin");
  checkpoint_save(path, c);
  std::string good = slurp(path);

  SUBCASE("bad magic") {
    std::string bad = good;
    bad[0] = 'X';
    spit(path, bad);
    CHECK_THROWS_AS(checkpoint_load(path), RuntimeFailure);
  }
  SUBCASE("truncated payload") {
    spit(path, good.substr(0, good.size() - 16));
    CHECK_THROWS_AS(checkpoint_load(path), RuntimeFailure);
  }
  SUBCASE("truncated header") {
    spit(path, good.substr(0, 10));
    CHECK_THROWS_AS(checkpoint_load(path), RuntimeFailure);
  }
  SUBCASE("trailing bytes") {
    spit(path, good + "extra");
    CHECK_THROWS_AS(checkpoint_load(path), RuntimeFailure);
  }
  SUBCASE("garbled header json") {
    // Flip a byte inside the JSON header region (after magic + u32).
    std::string bad = good;
    bad[14] = '\x01';
    CHECK(bad != good);
    spit(path, bad);
    CHECK_THROWS_AS(checkpoint_load(path), RuntimeFailure);
  }
  std::remove(path.c_str());
}

TEST_CASE("checkpoint restores a finetune phase with EMA shadows") {
  Checkpoint c = make_checkpoint(5);
  c.phase = "finetune";
  c.train.toggles.ema = true;
  c.state.ema = ema_init(c.model.params, 0.999);
  // Let the shadow drift from the parameters.
  c.model.params.get("enc.tok_emb").at(0, 0) += 0.5;
  ema_update(c.state.ema, c.model.params);

  std::string path = temp_path("relkit_ck_ema.bin");
  checkpoint_save(path, c);
  Checkpoint back = checkpoint_load(path);
  CHECK(back.phase == "finetune");
  CHECK(back.state.ema.initialized);
  REQUIRE(back.state.ema.shadow.count("enc.tok_emb") == 1);
  CHECK(back.state.ema.shadow.at("enc.tok_emb").v ==
        c.state.ema.shadow.at("enc.tok_emb").v);
  CHECK(back.train.toggles.ema);
  std::remove(path.c_str());
}

TEST_CASE("optimizer moments survive the round trip") {
  Checkpoint c = make_checkpoint(6);
  GradMap grads;
  grads["enc.tok_emb"] =
      numerics::Tensor::full(c.model.params.get("enc.tok_emb").shape, 0.01);
  optimizer_step(c.model.params, grads, c.state.opt, 1e-3);
  REQUIRE(c.state.opt.step == 1);

  std::string path = temp_path("relkit_ck_opt.bin");
  checkpoint_save(path, c);
  Checkpoint back = checkpoint_load(path);
  CHECK(back.state.opt.step == 1);
  CHECK(back.state.opt.m.at("enc.tok_emb").v ==
        c.state.opt.m.at("enc.tok_emb").v);
  CHECK(back.state.opt.v.at("enc.tok_emb").v ==
        c.state.opt.v.at("enc.tok_emb").v);
  std::remove(path.c_str());
}
