// SPDX-License-Identifier: Apache-2.0
#include "ping/evaluation.hpp"

#include <algorithm>
#include <numeric>

#include "ping/errors.hpp"
#include "ping/kernels.hpp"
#include "ping/optimizer.hpp"

namespace ping {
namespace {

// Position of `target` when `scores` is ranked descending with ties to the
// lower index.
std::size_t rank_of(std::span<const double> scores, std::size_t target) {
  const double t = scores[target];
  std::size_t rank = 0;
  for (std::size_t j = 0; j < scores.size(); ++j) {
    if (scores[j] > t || (scores[j] == t && j < target)) ++rank;
  }
  return rank;
}

std::size_t argmax_lowest(std::span<const double> v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

}  // namespace

RetrievalResult recall_at_k(const SimilarityMatrix& sim, std::span<const std::size_t> pairing,
                            std::span<const std::size_t> ks) {
  const std::size_t n = sim.rows();
  if (pairing.size() != n || sim.cols() != n) throw ShapeError("recall_at_k: pairing must match a square matrix");
  std::vector<std::size_t> inverse(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    if (pairing[i] >= n || inverse[pairing[i]] != n) throw ParameterError("recall_at_k: pairing is not a permutation");
    inverse[pairing[i]] = i;
  }
  for (std::size_t k : ks) {
    if (k == 0 || k > n) throw ParameterError("recall_at_k: K=" + std::to_string(k) + " outside [1, " + std::to_string(n) + "]");
  }
  std::vector<std::size_t> i2t_rank(n), t2i_rank(n);
  const Matrix cols = sim.logits.transposed();
  for (std::size_t i = 0; i < n; ++i) {
    i2t_rank[i] = rank_of(sim.logits.row(i), pairing[i]);
    t2i_rank[i] = rank_of(cols.row(i), inverse[i]);
  }
  RetrievalResult out;
  for (std::size_t k : ks) {
    const auto hits = [&](const std::vector<std::size_t>& ranks) {
      return static_cast<double>(std::count_if(ranks.begin(), ranks.end(), [k](std::size_t r) { return r < k; })) /
             static_cast<double>(n);
    };
    out.ks.push_back(k);
    out.i2t_at_k.push_back(hits(i2t_rank));
    out.t2i_at_k.push_back(hits(t2i_rank));
  }
  return out;
}

double zero_shot_top1(const FeatureBatch& image_embeds, const FeatureBatch& class_prototypes,
                      std::span<const std::uint32_t> labels) {
  if (labels.size() != image_embeds.rows()) throw ShapeError("zero_shot_top1: one label per image required");
  if (image_embeds.rows() == 0) throw EmptyInputError("zero_shot_top1: no images");
  for (auto y : labels) {
    if (y >= class_prototypes.rows()) throw IndexError("zero_shot_top1: label " + std::to_string(y) + " has no prototype");
  }
  const Matrix scores = kernels::gemm_abt(image_embeds, class_prototypes);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) correct += argmax_lowest(scores.row(i)) == labels[i];
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

double linear_probe(const FeatureBatch& train_x, std::span<const std::uint32_t> train_y, const FeatureBatch& test_x,
                    std::span<const std::uint32_t> test_y, const ProbeConfig& cfg) {
  if (train_x.rows() != train_y.size() || test_x.rows() != test_y.size()) throw ShapeError("linear_probe: label count mismatch");
  if (train_x.cols() != test_x.cols()) throw ShapeError("linear_probe: train and test dims differ");
  if (train_x.rows() == 0 || test_x.rows() == 0) throw EmptyInputError("linear_probe: empty split");
  if (cfg.epochs == 0 || cfg.batch_size == 0 || !(cfg.lr > 0.0)) throw ConfigError("linear_probe: invalid config");
  const std::size_t classes =
      1 + std::max(*std::max_element(train_y.begin(), train_y.end()), *std::max_element(test_y.begin(), test_y.end()));

  Dense head = Dense::zeros(train_x.cols(), classes);
  OptimizerState opt;
  Rng rng = make_rng(cfg.seed, Stream::kProbe);
  std::vector<std::size_t> rows(train_x.rows());
  std::iota(rows.begin(), rows.end(), 0);
  const std::size_t steps_per_epoch = (rows.size() + cfg.batch_size - 1) / cfg.batch_size;
  const std::size_t total = steps_per_epoch * cfg.epochs;
  std::size_t step = 0;
  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    const auto order = shuffled(rows, rng);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size, ++step) {
      const std::span<const std::size_t> batch(order.data() + start, std::min(cfg.batch_size, order.size() - start));
      const Matrix x = gather_rows(train_x, batch);
      std::vector<std::size_t> y;
      for (std::size_t r : batch) y.push_back(train_y[r]);
      const auto ce = softmax_cross_entropy_rows(head.forward(x), y);
      Dense grads = Dense::zeros(head.in_dim(), head.out_dim());
      head.backward(x, ce.grad, grads, false);
      const double lr = lr_at(step, total, 0, cfg.lr);
      const ParamSlot slots[] = {{head.weight.values(), grads.weight.values(), lr, 0.0},
                                 {head.bias, grads.bias, lr, 0.0}};
      adamw_step(opt, slots);
    }
  }
  const Matrix logits = head.forward(test_x);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < test_y.size(); ++i) correct += argmax_lowest(logits.row(i)) == test_y[i];
  return static_cast<double>(correct) / static_cast<double>(test_y.size());
}

SplitEmbeddings embed_split(const TrainedModel& model, const PairedDataset& data, Split split) {
  const auto rows = data.indices(split);
  return {model.image.forward(gather_rows(data.image_raw, rows)).embeddings,
          model.text.forward(gather_rows(data.text_raw, rows)).embeddings, data.labels(rows)};
}

FeatureBatch class_prototypes(const TrainedModel& model, const PairedDataset& data) {
  return model.text.forward(data.class_text_views).embeddings;
}

std::vector<MetricRow> evaluate(const TrainedModel& model, const PairedDataset& data, Split split,
                                std::span<const std::size_t> ks, const ProbeConfig& probe, bool run_probe) {
  const SplitEmbeddings e = embed_split(model, data, split);
  const std::string name = to_string(split);
  std::vector<std::size_t> pairing(e.image.rows());
  std::iota(pairing.begin(), pairing.end(), 0);
  const auto rec = recall_at_k(similarity_matrix(e.image, e.text, 1.0), pairing, ks);
  std::vector<MetricRow> out;
  for (std::size_t i = 0; i < rec.ks.size(); ++i) out.push_back({name, "i2t_recall", rec.ks[i], rec.i2t_at_k[i]});
  for (std::size_t i = 0; i < rec.ks.size(); ++i) out.push_back({name, "t2i_recall", rec.ks[i], rec.t2i_at_k[i]});
  out.push_back({name, "zero_shot_top1", 1, zero_shot_top1(e.image, class_prototypes(model, data), e.labels)});
  if (run_probe) {
    const SplitEmbeddings tr = embed_split(model, data, Split::kTrain);
    out.push_back({name, "linear_probe_top1", 1, linear_probe(tr.image, tr.labels, e.image, e.labels, probe)});
  }
  return out;
}

}  // namespace ping
