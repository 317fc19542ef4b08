// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>

#include "gradient_harness.hpp"
#include "ping/errors.hpp"
#include "ping/objectives.hpp"
#include "ping/support_set.hpp"

using namespace ping;
using namespace ping::testing;

namespace {

double row_ce(std::span<const double> logits, std::size_t target) {
  double m = logits[0];
  for (double v : logits) m = std::max(m, v);
  double s = 0.0;
  for (double v : logits) s += std::exp(v - m);
  return -(logits[target] - m - std::log(s));
}

std::vector<double> softmax(std::span<const double> logits) {
  double m = logits[0];
  for (double v : logits) m = std::max(m, v);
  std::vector<double> p(logits.size());
  double s = 0.0;
  for (std::size_t j = 0; j < p.size(); ++j) s += p[j] = std::exp(logits[j] - m);
  for (double& v : p) v /= s;
  return p;
}

double kl_rows(const Matrix& teacher, const Matrix& student) {
  double total = 0.0;
  for (std::size_t i = 0; i < teacher.rows(); ++i) {
    const auto p = softmax(teacher.row(i)), q = softmax(student.row(i));
    for (std::size_t j = 0; j < p.size(); ++j) total += p[j] * std::log(p[j] / q[j]);
  }
  return total / static_cast<double>(teacher.rows());
}

PairedSupportSet set_of(const FrozenPairs& pairs) {
  PairedSupportSet set(pairs.image.rows(), pairs.image.cols(), pairs.text.cols());
  std::vector<std::uint64_t> ids(pairs.image.rows());
  for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = i;
  set.update(ids, pairs.image, pairs.text);
  return set;
}

AdapterPair identity_adapters(std::size_t d) {
  return {Adapter(Modality::kImage, d, d, 1), Adapter(Modality::kText, d, d, 2)};
}

}  // namespace

TEST_CASE("symmetric infonce closed forms") {
  const auto unit = TemperatureParam::from_tau(1.0);
  const Matrix one(1, 3, {0.0, 1.0, 0.0});
  const auto single = symmetric_infonce(one, one, TemperatureParam{});
  CHECK(single.value == 0.0);
  for (double v : single.grad_a.values()) CHECK(v == 0.0);
  for (double v : single.grad_b.values()) CHECK(v == 0.0);

  for (std::size_t n : {2u, 5u, 9u}) {
    Matrix same(n, 3);
    for (std::size_t i = 0; i < n; ++i) same(i, 1) = 1.0;
    CHECK(std::abs(symmetric_infonce(same, same, TemperatureParam{}).value - std::log(double(n))) < 1e-12);
  }

  const Matrix e(2, 2, {1, 0, 0, 1});
  CHECK(std::abs(symmetric_infonce(e, e, unit).value - std::log(1.0 + std::exp(-1.0))) < 1e-12);
  CHECK(std::abs(symmetric_infonce(e, e, unit).value - 0.313262) < 1e-6);
  CHECK_THROWS_AS(symmetric_infonce(e, Matrix(3, 2), unit), ShapeError);
}

TEST_CASE("clip loss is the symmetric infonce and is swap invariant") {
  Rng rng(3);
  for (int t = 0; t < 10; ++t) {
    const Matrix a = random_unit_rows(4, 8, rng), b = random_unit_rows(4, 8, rng);
    const auto clip = clip_loss(a, b, TemperatureParam{});
    const auto raw = symmetric_infonce(a, b, TemperatureParam{});
    CHECK(clip.value == raw.value);
    CHECK(clip.grad_image == raw.grad_a);
    CHECK(clip.grad_text == raw.grad_b);
    CHECK(std::abs(clip_loss(b, a, TemperatureParam{}).value - clip.value) < 1e-12);
  }
}

TEST_CASE("text-to-image direction equals the column cross entropy") {
  Rng rng(4);
  const TemperatureParam temp;
  for (int t = 0; t < 10; ++t) {
    const Matrix a = random_unit_rows(5, 6, rng), b = random_unit_rows(5, 6, rng);
    const Matrix s = similarity_matrix(a, b, temp.inv_tau()).logits;
    const Matrix st = similarity_matrix(b, a, temp.inv_tau()).logits;
    double rows = 0.0, direct = 0.0, columns = 0.0;
    for (std::size_t i = 0; i < 5; ++i) {
      rows += row_ce(s.row(i), i) / 5;
      direct += row_ce(st.row(i), i) / 5;
      std::vector<double> col(5);
      for (std::size_t j = 0; j < 5; ++j) col[j] = s(j, i);
      columns += row_ce(col, i) / 5;
    }
    CHECK(std::abs(direct - columns) < 1e-12);
    CHECK(std::abs(symmetric_infonce(a, b, temp).value - 0.5 * (rows + columns)) < 1e-12);
  }
}

TEST_CASE("loss values stay inside the envelope") {
  Rng rng(5);
  for (int t = 0; t < 50; ++t) {
    const std::size_t n = 1 + uniform_index(rng, 8);
    const Matrix a = random_unit_rows(n, 4, rng), b = random_unit_rows(n, 4, rng);
    TemperatureParam temp;
    temp.log_inv_tau = std::log(1.0 + 99.0 * uniform_unit(rng));
    const double v = symmetric_infonce(a, b, temp).value;
    CHECK(v >= 0.0);
    CHECK(v <= std::log(double(n)) + 2.0 * temp.inv_tau());
  }
}

TEST_CASE("stop-grad zeroes the frozen side") {
  Rng rng(6);
  const Matrix a = random_unit_rows(4, 3, rng), b = random_unit_rows(4, 3, rng);
  const auto r = symmetric_infonce(a, b, TemperatureParam{}, true);
  for (double v : r.grad_a.values()) CHECK(v == 0.0);
  CHECK(r.grad_b == symmetric_infonce(a, b, TemperatureParam{}).grad_b);
}

TEST_CASE("temperature parametrization and clamp") {
  CHECK(std::abs(TemperatureParam{}.log_inv_tau - 2.6592600369327779) < 1e-12);
  CHECK(std::abs(TemperatureParam{}.inv_tau() - 1.0 / 0.07) < 1e-12);
  auto t = TemperatureParam::from_tau(0.001);
  t.clamp();
  CHECK(t.inv_tau() <= 100.0);
  CHECK(std::abs(t.inv_tau() - 100.0) < 1e-12);
  auto ok = TemperatureParam::from_tau(0.5);
  ok.clamp();
  CHECK(ok.inv_tau() == doctest::Approx(2.0));
}

TEST_CASE("loss weights validation") {
  LossWeights w;
  w.validate();
  w.alpha = 1.5;
  CHECK_THROWS_AS(w.validate(), ConfigError);
  w.alpha = 0.5;
  w.lambda = -0.1;
  CHECK_THROWS_AS(w.validate(), ConfigError);
}

TEST_CASE("nn and xnn self-match reductions") {
  Rng rng(7);
  const std::size_t n = 4, d = 3;
  const FrozenPairs batch{random_matrix(n, d, rng), random_matrix(n, d, rng)};
  const auto set = set_of(batch);
  const auto adapters = identity_adapters(d);
  const Matrix zi = random_unit_rows(n, d, rng), zt = random_unit_rows(n, d, rng);
  const TemperatureParam temp;
  const double li = symmetric_infonce(l2_normalize(batch.image), zi, temp).value;
  const double lt = symmetric_infonce(l2_normalize(batch.text), zt, temp).value;

  const auto nn = nn_supervision_loss(batch, zi, zt, set, adapters, temp, ModalityMask::kBoth);
  CHECK(std::abs(nn.value - (li + lt)) < 1e-12);
  const auto xnn = xnn_supervision_loss(batch, zi, zt, set, adapters, temp, ModalityMask::kBoth);
  CHECK(std::abs(xnn.value - nn.value) < 1e-12);

  const auto img_only = nn_supervision_loss(batch, zi, zt, set, adapters, temp, ModalityMask::kImageOnly);
  CHECK(std::abs(img_only.value - li) < 1e-12);
  for (double v : img_only.grad_text.values()) CHECK(v == 0.0);
  const auto txt_only = xnn_supervision_loss(batch, zi, zt, set, adapters, temp, ModalityMask::kTextOnly);
  CHECK(std::abs(txt_only.value - lt) < 1e-12);
  for (double v : txt_only.grad_image.values()) CHECK(v == 0.0);

  PairedSupportSet empty(4, d, d);
  CHECK_THROWS_AS(nn_supervision_loss(batch, zi, zt, empty, adapters, temp, ModalityMask::kBoth), EmptyInputError);
}

TEST_CASE("xnn guidance on a constructed set") {
  // Text halves 0, 1, 2 on a line; image halves distinct.
  PairedSupportSet set(3, 2, 1);
  const std::vector<std::uint64_t> ids = {10, 11, 12};
  const Matrix images(3, 2, {1, 0, 0, 1, -1, -1});
  set.update(ids, images, Matrix(3, 1, {0.0, 1.0, 2.0}));
  // Row 0: text 1.9 -> entry 2; image (1.1, 0) -> entry 0.
  // Row 1: text 0.2 -> entry 0; image (0, 0.8) -> entry 1.
  const FrozenPairs batch{Matrix(2, 2, {1.1, 0.0, 0.0, 0.8}), Matrix(2, 1, {1.9, 0.2})};
  const auto pos = retrieve_neighbors(batch, set, 1, nullptr);
  CHECK(pos.image == std::vector<std::size_t>{0, 1});
  CHECK(pos.text == std::vector<std::size_t>{2, 0});
  const auto g = xnn_guidance(pos, set);
  CHECK(g.image == Matrix(2, 2, {-1, -1, 1, 0}));
  CHECK(g.text == Matrix(2, 1, {0.0, 1.0}));
  const auto nn = nn_guidance(pos, set);
  CHECK(nn.image == Matrix(2, 2, {1, 0, 0, 1}));
  CHECK(nn.text == Matrix(2, 1, {2.0, 0.0}));

  // Through an enabled adapter the guidance row is the adapted entry vector.
  AdapterPair adapters{Adapter(Modality::kImage, 2, 3, 5), Adapter(Modality::kText, 1, 3, 6)};
  Rng rng(1);
  const Matrix zi = random_unit_rows(2, 3, rng), zt = random_unit_rows(2, 3, rng);
  const TemperatureParam temp;
  const auto loss = xnn_supervision_loss(batch, zi, zt, set, adapters, temp, ModalityMask::kImageOnly);
  const double expected = symmetric_infonce(l2_normalize(adapters.image.forward(g.image)), zi, temp).value;
  CHECK(std::abs(loss.value - expected) < 1e-12);
}

TEST_CASE("ping and clip-ping combinations") {
  LossResult a, b;
  a.value = 2.0;
  b.value = 4.0;
  a.grad_image = Matrix(1, 2, {1.0, -2.0});
  b.grad_image = Matrix(1, 2, {3.0, 5.0});
  a.grad_text = b.grad_text = Matrix(1, 2);
  a.grad_log_inv_tau = 0.5;
  b.grad_log_inv_tau = -1.5;
  CHECK(ping_loss(a, b, 0.25).value == 2.5);
  CHECK(ping_loss(a, b, 0.0).value == a.value);
  CHECK(ping_loss(a, b, 0.0).grad_image == a.grad_image);
  CHECK(ping_loss(a, b, 1.0).value == b.value);
  CHECK(ping_loss(a, b, 1.0).grad_image == b.grad_image);
  CHECK(ping_loss(a, b, 1.0).grad_log_inv_tau == b.grad_log_inv_tau);
  a.value = 1.0;
  b.value = 2.0;
  CHECK(std::abs(clip_ping_loss(a, b, 0.6).value - 1.6) < 1e-15);
  CHECK(clip_ping_loss(a, b, 0.0).value == a.value);
  CHECK(clip_ping_loss(a, b, 1.0).value == b.value);
}

TEST_CASE("clip-ping with lambda zero is exactly clip") {
  Rng rng(8);
  for (int t = 0; t < 5; ++t) {
    const auto g = random_grad_instance(rng);
    const Matrix zi = g.image.forward(g.raw_image).embeddings, zt = g.text.forward(g.raw_text).embeddings;
    const auto clip = clip_loss(zi, zt, g.temp);
    const auto nn = nn_supervision_loss(g.frozen, zi, zt, g.set, g.adapters, g.temp, ModalityMask::kBoth);
    const auto xnn = xnn_supervision_loss(g.frozen, zi, zt, g.set, g.adapters, g.temp, ModalityMask::kBoth);
    const auto full = clip_ping_loss(clip, ping_loss(nn, xnn, 0.25), 0.0);
    CHECK(full.value == clip.value);
    CHECK(full.grad_image == clip.grad_image);
    CHECK(full.grad_text == clip.grad_text);
    CHECK(full.grad_log_inv_tau == clip.grad_log_inv_tau);
    for (double v : full.grad_adapter_image.weight.values()) CHECK(v == 0.0);
  }
}

TEST_CASE("distill closed forms and KL oracle") {
  Rng rng(9);
  const TemperatureParam temp = TemperatureParam::from_tau(0.5);
  const auto adapters = identity_adapters(2);
  const Matrix zi = random_unit_rows(2, 2, rng), zt = random_unit_rows(2, 2, rng);
  const double clip = clip_loss(zi, zt, temp).value;

  const auto same = distill_loss(FrozenPairs{zi, zt}, zi, zt, adapters, temp, 0.75);
  CHECK(std::abs(same.components.distill) < 1e-15);
  CHECK(std::abs(same.value - 0.25 * clip) < 1e-15);
  CHECK(std::abs(distill_loss(FrozenPairs{zi, zt}, zi, zt, adapters, temp, 0.0).value - clip) < 1e-15);

  const FrozenPairs teacher{Matrix(2, 2, {3.0, 1.0, -0.5, 2.0}), Matrix(2, 2, {1.0, 1.0, 0.2, -1.0})};
  const Matrix ti = l2_normalize(teacher.image), tt = l2_normalize(teacher.text);
  Matrix st(2, 2), ss(2, 2);
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 2; ++j) {
      st(i, j) = temp.inv_tau() * (ti(i, 0) * tt(j, 0) + ti(i, 1) * tt(j, 1));
      ss(i, j) = temp.inv_tau() * (zi(i, 0) * zt(j, 0) + zi(i, 1) * zt(j, 1));
    }
  const double kl = 0.5 * (kl_rows(st, ss) + kl_rows(st.transposed(), ss.transposed()));
  const auto r = distill_loss(teacher, zi, zt, adapters, temp, 0.75);
  CHECK(std::abs(r.components.distill - kl) < 1e-10);
  CHECK(std::abs(r.value - (0.25 * clip + 0.75 * kl)) < 1e-10);
  CHECK(std::abs(mean_row_kl(st, ss) - kl_rows(st, ss)) < 1e-12);
  CHECK_THROWS_AS(distill_loss(teacher, zi, Matrix(3, 2), adapters, temp, 0.75), ShapeError);
}

TEST_CASE("adapter gradients are present whenever the loss depends on them") {
  Rng rng(10);
  const auto g = random_grad_instance(rng);
  const Matrix zi = g.image.forward(g.raw_image).embeddings, zt = g.text.forward(g.raw_text).embeddings;
  for (auto kind : {LossKind::kNn, LossKind::kXnn, LossKind::kDistill}) {
    const auto r = evaluate_loss(g, kind, zi, zt);
    for (const Dense* d : {&r.grad_adapter_image, &r.grad_adapter_text}) {
      double norm = 0.0;
      for (double v : d->weight.values()) norm += v * v;
      CHECK(norm > 0.0);
    }
  }
}

TEST_CASE("every loss matches finite differences on random instances") {
  Rng rng(2024);
  for (int t = 0; t < 20; ++t) {
    auto g = random_grad_instance(rng);
    if (t % 4 == 1) g.weights.mask = ModalityMask::kImageOnly;
    if (t % 4 == 2) g.weights.mask = ModalityMask::kTextOnly;
    if (t % 5 == 3) g.top_k = 3;
    for (auto kind : kAllLosses) {
      for (const auto& rep : check_gradients(g, kind, 1e-5)) {
        INFO("instance " << t << " loss " << to_string(kind) << " group " << rep.name);
        if (rep.zero_group) {
          CHECK(rep.error < 1e-8);
        } else {
          CHECK(rep.error <= 1e-6);
        }
      }
    }
  }
}

TEST_CASE("disabled adapters pass guidance through without gradient") {
  Rng rng(11);
  const std::size_t n = 3, d = 4;
  const FrozenPairs batch{random_matrix(n, d, rng), random_matrix(n, d, rng)};
  const auto set = set_of(FrozenPairs{random_matrix(5, d, rng), random_matrix(5, d, rng)});
  const Matrix zi = random_unit_rows(n, d, rng), zt = random_unit_rows(n, d, rng);
  const auto r = nn_supervision_loss(batch, zi, zt, set, identity_adapters(d), TemperatureParam{}, ModalityMask::kBoth);
  CHECK(r.grad_adapter_image.weight.size() == 0);
  CHECK(std::isfinite(r.value));
}
