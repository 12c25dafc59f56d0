#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <deque>
#include <vector>

#include "relkit/encoder.hpp"
#include "relkit/errors.hpp"
#include "relkit/objectives.hpp"
#include "relkit/rng.hpp"

#include "helpers.hpp"

using namespace relkit;
using namespace relkit::numerics;
using namespace relkit::objectives;

namespace {

// Straight-line InfoNCE: cosine similarities over positives, in-batch
// negatives and queue entries, all in plain double arithmetic.
double infonce_reference(const Tensor& h, const Tensor& hp,
                         const std::deque<Tensor>& queue, double tau) {
  auto unit = [](std::vector<double> row) {
    double n = 0.0;
    for (double x : row) n += x * x;
    n = std::sqrt(n);
    for (double& x : row) x /= n;
    return row;
  };
  auto row_of = [](const Tensor& t, int64_t r) {
    std::vector<double> out(static_cast<size_t>(t.cols()));
    for (int64_t c = 0; c < t.cols(); ++c)
      out[static_cast<size_t>(c)] = t.at(r, c);
    return out;
  };
  auto dot = [](const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
  };

  int64_t n = h.rows();
  std::vector<std::vector<double>> zs, ps, qs;
  for (int64_t i = 0; i < n; ++i) zs.push_back(unit(row_of(h, i)));
  for (int64_t i = 0; i < n; ++i) ps.push_back(unit(row_of(hp, i)));
  for (const auto& q : queue) qs.push_back(unit(row_of(q, 0)));

  double total = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    std::vector<double> logits;
    logits.push_back(dot(zs[i], ps[i]) / tau);  // positive first
    for (int64_t j = 0; j < n; ++j)
      if (j != i) logits.push_back(dot(zs[i], ps[j]) / tau);
    for (const auto& q : qs) logits.push_back(dot(zs[i], q) / tau);
    double mx = logits[0];
    for (double l : logits) mx = std::max(mx, l);
    double z = 0.0;
    for (double l : logits) z += std::exp(l - mx);
    total += -(logits[0] - mx - std::log(z));
  }
  return total / static_cast<double>(n);
}

double scalar_loss(Tape& tape, Var v) { return tape.val(v).at(0, 0); }

Var logits_leaf(Tape& tape, const std::vector<std::vector<double>>& rows) {
  Tensor t = Tensor::zeros({static_cast<int64_t>(rows.size()),
                            static_cast<int64_t>(rows[0].size())});
  for (size_t r = 0; r < rows.size(); ++r)
    for (size_t c = 0; c < rows[r].size(); ++c)
      t.at(static_cast<int64_t>(r), static_cast<int64_t>(c)) = rows[r][c];
  return tape.leaf(t, true);
}

}  // namespace

TEST_CASE("contrastive loss matches a straight-line reference") {
  ContrastiveConfig cfg;
  cfg.temperature = 0.07;
  Rng rng(11);
  for (int trial = 0; trial < 30; ++trial) {
    int64_t n = 1 + static_cast<int64_t>(rng.uniform_int(8));
    int64_t d = 2 + static_cast<int64_t>(rng.uniform_int(6));
    int64_t qn = static_cast<int64_t>(rng.uniform_int(17));
    Tensor h = testutil::random_tensor(rng, {n, d});
    Tensor hp = testutil::random_tensor(rng, {n, d});
    std::deque<Tensor> queue;
    for (int64_t k = 0; k < qn; ++k)
      queue.push_back(testutil::random_tensor(rng, {1, d}));

    Tape tape;
    Var loss = contrastive_loss(tape, tape.leaf(h, true),
                                tape.leaf(hp, true), queue, cfg);
    double want = infonce_reference(h, hp, queue, cfg.temperature);
    CHECK(scalar_loss(tape, loss) == doctest::Approx(want).epsilon(1e-10));
  }
}

TEST_CASE("contrastive loss edge cases") {
  ContrastiveConfig cfg;
  cfg.temperature = 0.05;
  Rng rng(4);

  // Single row, empty queue: only the positive logit exists, so the
  // softmax is exactly 1 and the loss exactly 0.
  Tensor h = testutil::random_tensor(rng, {1, 5});
  Tensor hp = testutil::random_tensor(rng, {1, 5});
  Tape tape;
  Var loss = contrastive_loss(tape, tape.leaf(h, true), tape.leaf(hp, true),
                              {}, cfg);
  CHECK(scalar_loss(tape, loss) == 0.0);

  // Identical rows everywhere: every candidate has the same similarity,
  // so each row's loss is ln(N + Q).
  for (auto [n, q] : {std::pair<int64_t, int64_t>{3, 0}, {2, 5}, {4, 2}}) {
    Tensor same = Tensor::zeros({n, 4});
    for (int64_t r = 0; r < n; ++r)
      for (int64_t c = 0; c < 4; ++c) same.at(r, c) = 0.3 * (c + 1);
    std::deque<Tensor> queue;
    for (int64_t k = 0; k < q; ++k) {
      Tensor e = Tensor::zeros({1, 4});
      for (int64_t c = 0; c < 4; ++c) e.at(0, c) = 0.3 * (c + 1);
      queue.push_back(e);
    }
    Tape t2;
    Var l2 = contrastive_loss(t2, t2.leaf(same, true), t2.leaf(same, true),
                              queue, cfg);
    CHECK(scalar_loss(t2, l2) ==
          doctest::Approx(std::log(static_cast<double>(n + q)))
              .epsilon(1e-12));
  }
}

TEST_CASE("contrastive loss validates shapes and config") {
  ContrastiveConfig cfg;
  Tape tape;
  Var a = tape.leaf(Tensor::zeros({2, 4}), true);
  Var b = tape.leaf(Tensor::zeros({3, 4}), true);
  CHECK_THROWS_AS(contrastive_loss(tape, a, b, {}, cfg), ShapeError);
  ContrastiveConfig bad;
  bad.temperature = 0.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = ContrastiveConfig{};
  bad.momentum = 1.5;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = ContrastiveConfig{};
  bad.queue_capacity = -1;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("momentum queue tracks the online encoder and evicts FIFO") {
  encoder::EncoderConfig enc;
  enc.layers = 1;
  enc.d_model = 8;
  enc.heads = 2;
  enc.d_ff = 16;
  enc.vocab_size = 12;
  enc.max_len = 16;
  enc.dropout = 0.0;
  ParamStore online;
  encoder::init_encoder_params(online, enc, 21);

  ContrastiveConfig cfg;
  cfg.queue_capacity = 3;
  cfg.momentum = 0.5;

  MomentumQueue q;
  momentum_init(q, online, enc, cfg);
  CHECK(q.initialized);
  CHECK(q.capacity == 3);
  // Shadow starts as an exact copy.
  for (const auto& e : online.entries) {
    const Tensor& s = q.shadow.get(e.name);
    for (size_t i = 0; i < e.value.v.size(); ++i)
      CHECK(s.v[i] == e.value.v[i]);
  }

  // Perturb the online encoder, then update: shadow moves halfway.
  Tensor before = q.shadow.get("enc.tok_emb");
  online.get("enc.tok_emb").at(5, 0) += 1.0;
  queue_update(q, online, {{2, 5, 3}}, enc, cfg);
  const Tensor& after = q.shadow.get("enc.tok_emb");
  CHECK(after.at(5, 0) ==
        doctest::Approx(0.5 * before.at(5, 0) +
                        0.5 * online.get("enc.tok_emb").at(5, 0))
            .epsilon(1e-12));
  CHECK(q.entries.size() == 1);
  CHECK(q.entries[0].rows() == 1);
  CHECK(q.entries[0].cols() == enc.d_model);

  // FIFO eviction at capacity.
  queue_update(q, online, {{2, 6, 3}, {2, 7, 3}, {2, 8, 3}}, enc, cfg);
  CHECK(q.entries.size() == 3);
  Tensor head = q.entries.front();
  queue_update(q, online, {{2, 9, 3}}, enc, cfg);
  CHECK(q.entries.size() == 3);
  bool head_evicted = false;
  for (size_t i = 0; i < head.v.size(); ++i)
    if (q.entries.front().v[i] != head.v[i]) head_evicted = true;
  CHECK(head_evicted);
}

TEST_CASE("cross entropy matches a hand softmax computation") {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    int64_t n = 1 + static_cast<int64_t>(rng.uniform_int(6));
    int64_t k = 2 + static_cast<int64_t>(rng.uniform_int(5));
    Tensor logits = testutil::random_tensor(rng, {n, k}, 2.0);
    std::vector<int32_t> targets;
    for (int64_t i = 0; i < n; ++i)
      targets.push_back(static_cast<int32_t>(rng.uniform_int(
          static_cast<uint64_t>(k))));

    double want = 0.0;
    for (int64_t i = 0; i < n; ++i) {
      double mx = logits.at(i, 0);
      for (int64_t c = 0; c < k; ++c) mx = std::max(mx, logits.at(i, c));
      double z = 0.0;
      for (int64_t c = 0; c < k; ++c) z += std::exp(logits.at(i, c) - mx);
      want += -(logits.at(i, targets[static_cast<size_t>(i)]) - mx -
                std::log(z));
    }
    want /= static_cast<double>(n);

    Tape tape;
    Var loss = classification_loss(tape, tape.leaf(logits, true), targets,
                                   LossKind::CE, LossParams{});
    CHECK(scalar_loss(tape, loss) == doctest::Approx(want).epsilon(1e-12));
  }
}

TEST_CASE("focal loss with gamma 0 reduces to cross entropy") {
  Rng rng(9);
  Tensor logits = testutil::random_tensor(rng, {5, 4}, 1.5);
  std::vector<int32_t> targets = {0, 3, 1, 2, 2};
  LossParams p;
  p.focal_gamma = 0.0;
  Tape t1, t2;
  double focal = scalar_loss(
      t1, classification_loss(t1, t1.leaf(logits, true), targets,
                              LossKind::FOCAL, p));
  double ce = scalar_loss(
      t2, classification_loss(t2, t2.leaf(logits, true), targets,
                              LossKind::CE, LossParams{}));
  CHECK(focal == doctest::Approx(ce).epsilon(1e-12));

  // Positive gamma down-weights easy examples, shrinking the loss.
  p.focal_gamma = 2.0;
  Tape t3;
  double focal2 = scalar_loss(
      t3, classification_loss(t3, t3.leaf(logits, true), targets,
                              LossKind::FOCAL, p));
  CHECK(focal2 < ce);
}

TEST_CASE("poly1 with epsilon 0 reduces to cross entropy") {
  Rng rng(10);
  Tensor logits = testutil::random_tensor(rng, {4, 3}, 1.5);
  std::vector<int32_t> targets = {2, 0, 1, 1};
  LossParams p;
  p.poly1_eps = 0.0;
  Tape t1, t2, t3;
  double poly = scalar_loss(
      t1, classification_loss(t1, t1.leaf(logits, true), targets,
                              LossKind::POLY1, p));
  double ce = scalar_loss(
      t2, classification_loss(t2, t2.leaf(logits, true), targets,
                              LossKind::CE, LossParams{}));
  CHECK(poly == doctest::Approx(ce).epsilon(1e-12));

  // poly1 = CE + eps * mean(1 - p_t).
  p.poly1_eps = 0.7;
  double poly2 = scalar_loss(
      t3, classification_loss(t3, t3.leaf(logits, true), targets,
                              LossKind::POLY1, p));
  double mean_pt = 0.0;
  for (size_t i = 0; i < targets.size(); ++i) {
    double mx = logits.at(static_cast<int64_t>(i), 0);
    for (int64_t c = 0; c < 3; ++c)
      mx = std::max(mx, logits.at(static_cast<int64_t>(i), c));
    double z = 0.0;
    for (int64_t c = 0; c < 3; ++c)
      z += std::exp(logits.at(static_cast<int64_t>(i), c) - mx);
    mean_pt +=
        std::exp(logits.at(static_cast<int64_t>(i), targets[i]) - mx) / z;
  }
  mean_pt /= static_cast<double>(targets.size());
  CHECK(poly2 == doctest::Approx(ce + 0.7 * (1.0 - mean_pt)).epsilon(1e-12));
}

TEST_CASE("ghm with a single bin is cross entropy bit-for-bit") {
  Rng rng(12);
  Tensor logits = testutil::random_tensor(rng, {6, 4}, 1.5);
  std::vector<int32_t> targets = {0, 1, 2, 3, 1, 0};
  LossParams p;
  p.ghm_bins = 1;
  Tape t1, t2;
  double ghm = scalar_loss(
      t1, classification_loss(t1, t1.leaf(logits, true), targets,
                              LossKind::GHM, p));
  double ce = scalar_loss(
      t2, classification_loss(t2, t2.leaf(logits, true), targets,
                              LossKind::CE, LossParams{}));
  CHECK(ghm == ce);  // exact: all weights collapse to 1

  // More bins reweight rows but keep the loss finite and positive.
  p.ghm_bins = 5;
  Tape t3;
  double ghm5 = scalar_loss(
      t3, classification_loss(t3, t3.leaf(logits, true), targets,
                              LossKind::GHM, p));
  CHECK(std::isfinite(ghm5));
  CHECK(ghm5 > 0.0);
}

TEST_CASE("loss kind parsing round trips") {
  for (auto k : {LossKind::CE, LossKind::FOCAL, LossKind::GHM,
                 LossKind::POLY1})
    CHECK(parse_loss_kind(to_string(k)) == k);
  CHECK_THROWS_AS(parse_loss_kind("l2"), ConfigError);
}

TEST_CASE("classification loss validates targets") {
  Tape tape;
  Var logits = logits_leaf(tape, {{0.1, 0.2}, {0.3, 0.4}});
  CHECK_THROWS_AS(classification_loss(tape, logits, {0}, LossKind::CE,
                                      LossParams{}),
                  ShapeError);
  CHECK_THROWS_AS(classification_loss(tape, logits, {0, 2}, LossKind::CE,
                                      LossParams{}),
                  IndexError);
}

TEST_CASE("mlm loss on an empty target list is zero") {
  Tape tape;
  Var logits = logits_leaf(tape, {{0.5, -0.5, 0.1}});
  Var loss = mlm_loss(tape, logits, {});
  CHECK(scalar_loss(tape, loss) == 0.0);

  // Non-empty targets: mean CE over positions, same as the classifier.
  Tape t2;
  Var l2 = logits_leaf(t2, {{0.5, -0.5, 0.1}, {0.2, 0.9, -1.0}});
  std::vector<int32_t> targets = {2, 1};
  double got = scalar_loss(t2, mlm_loss(t2, l2, targets));
  Tape t3;
  Var l3 = logits_leaf(t3, {{0.5, -0.5, 0.1}, {0.2, 0.9, -1.0}});
  double want = scalar_loss(
      t3, classification_loss(t3, l3, targets, LossKind::CE, LossParams{}));
  CHECK(got == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("rdrop loss is symmetric, nonnegative and zero iff equal") {
  Rng rng(14);
  Tensor a = testutil::random_tensor(rng, {3, 4});
  Tensor b = testutil::random_tensor(rng, {3, 4});

  Tape t1;
  double ab = scalar_loss(
      t1, rdrop_loss(t1, t1.leaf(a, true), t1.leaf(b, true), 1.0));
  Tape t2;
  double ba = scalar_loss(
      t2, rdrop_loss(t2, t2.leaf(b, true), t2.leaf(a, true), 1.0));
  CHECK(ab == doctest::Approx(ba).epsilon(1e-12));
  CHECK(ab > 0.0);

  Tape t3;
  double aa = scalar_loss(
      t3, rdrop_loss(t3, t3.leaf(a, true), t3.leaf(a, true), 1.0));
  CHECK(aa == doctest::Approx(0.0).epsilon(1e-15));

  // Scaling alpha scales the loss.
  Tape t4;
  double ab2 = scalar_loss(
      t4, rdrop_loss(t4, t4.leaf(a, true), t4.leaf(b, true), 2.0));
  CHECK(ab2 == doctest::Approx(2.0 * ab).epsilon(1e-12));
}

TEST_CASE("rdrop two-way binary case has a closed form") {
  // P1 = softmax(0,0) = (1/2,1/2); P2 = softmax(0,ln 3) = (1/4,3/4).
  // KL(P1||P2)+KL(P2||P1) = 0.5 ln 2 + 0.25 ln 3 ... computed below.
  double l3 = std::log(3.0);
  Tape tape;
  Var l1 = logits_leaf(tape, {{0.0, 0.0}});
  Var l2 = logits_leaf(tape, {{0.0, l3}});
  double got = scalar_loss(tape, rdrop_loss(tape, l1, l2, 1.0));

  auto kl = [](std::vector<double> p, std::vector<double> q) {
    double s = 0.0;
    for (size_t i = 0; i < p.size(); ++i) s += p[i] * std::log(p[i] / q[i]);
    return s;
  };
  std::vector<double> p1 = {0.5, 0.5}, p2 = {0.25, 0.75};
  double want = kl(p1, p2) + kl(p2, p1);
  CHECK(got == doctest::Approx(want).epsilon(1e-12));
  CHECK(got == doctest::Approx(0.27465307216702745).epsilon(1e-9));
}

TEST_CASE("soft target loss matches the dot-product definition") {
  Tape tape;
  Var logits = logits_leaf(tape, {{1.0, -1.0, 0.5}, {0.0, 0.0, 0.0}});
  Tensor targets = Tensor::zeros({2, 3});
  targets.at(0, 0) = 0.7;
  targets.at(0, 1) = 0.2;
  targets.at(0, 2) = 0.1;
  targets.at(1, 1) = 1.0;
  double got = scalar_loss(tape, soft_target_loss(tape, logits, targets));

  Tensor lt = tape.val(logits);
  double want = 0.0;
  for (int64_t r = 0; r < 2; ++r) {
    double mx = lt.at(r, 0);
    for (int64_t c = 0; c < 3; ++c) mx = std::max(mx, lt.at(r, c));
    double z = 0.0;
    for (int64_t c = 0; c < 3; ++c) z += std::exp(lt.at(r, c) - mx);
    for (int64_t c = 0; c < 3; ++c)
      want -= targets.at(r, c) * (lt.at(r, c) - mx - std::log(z));
  }
  want /= 2.0;
  CHECK(got == doctest::Approx(want).epsilon(1e-12));

  // One-hot soft targets agree with the hard-target CE.
  Tensor onehot = Tensor::zeros({2, 3});
  onehot.at(0, 2) = 1.0;
  onehot.at(1, 0) = 1.0;
  Tape t2;
  Var lg = logits_leaf(t2, {{1.0, -1.0, 0.5}, {0.2, -0.3, 0.9}});
  double soft = scalar_loss(t2, soft_target_loss(t2, lg, onehot));
  Tape t3;
  Var lg3 = logits_leaf(t3, {{1.0, -1.0, 0.5}, {0.2, -0.3, 0.9}});
  double hard = scalar_loss(
      t3, classification_loss(t3, lg3, {2, 0}, LossKind::CE, LossParams{}));
  CHECK(soft == doctest::Approx(hard).epsilon(1e-12));

  // Shape mismatch is rejected.
  Tensor bad = Tensor::zeros({1, 3});
  bad.at(0, 0) = 1.0;
  Tape t4;
  Var lg4 = logits_leaf(t4, {{1.0, -1.0, 0.5}, {0.2, -0.3, 0.9}});
  CHECK_THROWS_AS(soft_target_loss(t4, lg4, bad), ShapeError);
}

TEST_CASE("pretrain total loss sums its parts") {
  Tape tape;
  Var a = tape.leaf(Tensor::scalar(1.25), true);
  Var b = tape.leaf(Tensor::scalar(0.5), true);
  Var c = tape.leaf(Tensor::scalar(2.0), true);
  CHECK(scalar_loss(tape, pretrain_total_loss(tape, {a, b, c})) ==
        doctest::Approx(3.75).epsilon(1e-15));
  CHECK(scalar_loss(tape, pretrain_total_loss(tape, {})) == 0.0);
}
