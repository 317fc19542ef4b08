// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "ping/embedding_core.hpp"
#include "ping/models.hpp"
#include "ping/objectives.hpp"
#include "ping/support_set.hpp"
#include "test_support.hpp"

namespace ping::testing {

enum class LossKind { kClip, kNn, kXnn, kPing, kClipPing, kDistill };

inline const char* to_string(LossKind k) {
  switch (k) {
    case LossKind::kClip: return "clip";
    case LossKind::kNn: return "nn";
    case LossKind::kXnn: return "xnn";
    case LossKind::kPing: return "ping";
    case LossKind::kClipPing: return "clip-ping";
    case LossKind::kDistill: return "distill";
  }
  return "?";
}

inline constexpr LossKind kAllLosses[] = {LossKind::kClip, LossKind::kNn,       LossKind::kXnn,
                                          LossKind::kPing, LossKind::kClipPing, LossKind::kDistill};

/// Full model plus one batch: everything a loss needs end to end.
struct GradInstance {
  StudentEncoder image;
  StudentEncoder text;
  AdapterPair adapters;
  TemperatureParam temp;
  Matrix raw_image;
  Matrix raw_text;
  FrozenPairs frozen;
  PairedSupportSet set{1, 1, 1};
  LossWeights weights;
  double lambda_distill = 0.75;
  std::size_t top_k = 1;
  std::uint64_t topk_seed = 0;
};

/// N in {2,3,4}, raw dims <= 8, teacher dims <= 6, d <= 4.
inline GradInstance random_grad_instance(Rng& rng) {
  GradInstance g;
  const std::size_t n = 2 + uniform_index(rng, 3);
  const std::size_t raw_i = 3 + uniform_index(rng, 6), raw_t = 3 + uniform_index(rng, 6);
  const std::size_t d = 2 + uniform_index(rng, 3);
  const std::size_t teach_i = 5 + uniform_index(rng, 2), teach_t = 5 + uniform_index(rng, 2);
  const std::size_t hidden = 3 + uniform_index(rng, 4), proj_hidden = 3 + uniform_index(rng, 4);
  g.image = StudentEncoder(Modality::kImage, {raw_i, hidden, proj_hidden, d}, rng());
  g.text = StudentEncoder(Modality::kText, {raw_t, hidden, proj_hidden, d}, rng());
  g.adapters.image = Adapter(Modality::kImage, teach_i, d, rng());
  g.adapters.text = Adapter(Modality::kText, teach_t, d, rng());
  // Nonzero biases so their gradients are exercised from a generic point.
  for (Adapter* a : {&g.adapters.image, &g.adapters.text})
    for (double& b : a->mutable_dense().bias) b = 0.3 * standard_normal(rng);
  g.temp.log_inv_tau = std::log(1.0 / (0.2 + 0.8 * uniform_unit(rng)));
  g.raw_image = random_matrix(n, raw_i, rng);
  g.raw_text = random_matrix(n, raw_t, rng);
  g.frozen.image = random_matrix(n, teach_i, rng);
  g.frozen.text = random_matrix(n, teach_t, rng);
  const std::size_t m = 6;
  g.set = PairedSupportSet(m, teach_i, teach_t);
  std::vector<std::uint64_t> ids(m);
  for (std::size_t i = 0; i < m; ++i) ids[i] = 1000 + i;
  g.set.update(ids, random_matrix(m, teach_i, rng), random_matrix(m, teach_t, rng));
  g.weights.alpha = uniform_unit(rng);
  g.weights.lambda = uniform_unit(rng);
  g.lambda_distill = 0.75;
  g.topk_seed = rng();
  return g;
}

inline LossResult evaluate_loss(const GradInstance& g, LossKind kind, const FeatureBatch& zi, const FeatureBatch& zt) {
  Rng topk(g.topk_seed);
  Rng* r = g.top_k > 1 ? &topk : nullptr;
  auto nn = [&] {
    return nn_supervision_loss(g.frozen, zi, zt, g.set, g.adapters, g.temp, g.weights.mask, g.top_k, r);
  };
  auto xnn = [&] {
    return xnn_supervision_loss(g.frozen, zi, zt, g.set, g.adapters, g.temp, g.weights.mask, g.top_k, r);
  };
  switch (kind) {
    case LossKind::kClip: return clip_loss(zi, zt, g.temp);
    case LossKind::kNn: return nn();
    case LossKind::kXnn: return xnn();
    case LossKind::kPing: {
      // nn and xnn draw from separate copies so each sees the same sequence it
      // would see on its own.
      const auto a = nn();
      topk = Rng(g.topk_seed);
      return ping_loss(a, xnn(), g.weights.alpha);
    }
    case LossKind::kClipPing: {
      const auto a = nn();
      topk = Rng(g.topk_seed);
      const auto p = ping_loss(a, xnn(), g.weights.alpha);
      return clip_ping_loss(clip_loss(zi, zt, g.temp), p, g.weights.lambda);
    }
    case LossKind::kDistill: return distill_loss(g.frozen, zi, zt, g.adapters, g.temp, g.lambda_distill);
  }
  return {};
}

inline double loss_value(const GradInstance& g, LossKind kind) {
  return evaluate_loss(g, kind, g.image.forward(g.raw_image).embeddings, g.text.forward(g.raw_text).embeddings).value;
}

struct ParamGroup {
  std::string name;
  std::size_t offset = 0;
  std::size_t size = 0;
};

inline std::vector<ParamGroup> param_groups(const GradInstance& g) {
  std::vector<ParamGroup> out;
  std::size_t off = 0;
  auto add = [&](const std::string& name, std::size_t size) {
    out.push_back({name, off, size});
    off += size;
  };
  const char* layers[] = {"backbone.weight", "backbone.bias",  "head_hidden.weight",
                          "head_hidden.bias", "head_out.weight", "head_out.bias"};
  const auto pi = g.image.parameters();
  for (std::size_t i = 0; i < pi.size(); ++i) add(std::string("image.") + layers[i], pi[i].size());
  const auto pt = g.text.parameters();
  for (std::size_t i = 0; i < pt.size(); ++i) add(std::string("text.") + layers[i], pt[i].size());
  add("adapter.image.weight", g.adapters.image.dense().weight.size());
  add("adapter.image.bias", g.adapters.image.dense().bias.size());
  add("adapter.text.weight", g.adapters.text.dense().weight.size());
  add("adapter.text.bias", g.adapters.text.dense().bias.size());
  add("log_inv_tau", 1);
  return out;
}

inline std::vector<double> pack(const GradInstance& g) {
  std::vector<double> out = flatten(g.image.parameters());
  for (auto v : {flatten(g.text.parameters()), flatten(g.adapters.image.parameters()),
                 flatten(g.adapters.text.parameters())})
    out.insert(out.end(), v.begin(), v.end());
  out.push_back(g.temp.log_inv_tau);
  return out;
}

inline void unpack(GradInstance& g, std::span<const double> flat) {
  std::size_t off = 0;
  auto fill = [&](std::vector<std::span<double>> views) {
    for (auto v : views) {
      std::copy(flat.begin() + off, flat.begin() + off + v.size(), v.begin());
      off += v.size();
    }
  };
  fill(g.image.parameters());
  fill(g.text.parameters());
  fill(g.adapters.image.parameters());
  fill(g.adapters.text.parameters());
  g.temp.log_inv_tau = flat[off];
}

inline std::vector<double> analytic_gradient(const GradInstance& g, LossKind kind) {
  const auto fi = g.image.forward(g.raw_image);
  const auto ft = g.text.forward(g.raw_text);
  const LossResult r = evaluate_loss(g, kind, fi.embeddings, ft.embeddings);
  std::vector<double> out = flatten(g.image.backward(fi.cache, r.grad_image).parameters());
  const auto gt = flatten(g.text.backward(ft.cache, r.grad_text).parameters());
  out.insert(out.end(), gt.begin(), gt.end());
  for (const Adapter* a : {&g.adapters.image, &g.adapters.text}) {
    const Dense& d = r.grad_adapter(a->modality());
    if (d.weight.size() == 0) {
      out.insert(out.end(), a->dense().weight.size() + a->dense().bias.size(), 0.0);
    } else {
      out.insert(out.end(), d.weight.values().begin(), d.weight.values().end());
      out.insert(out.end(), d.bias.begin(), d.bias.end());
    }
  }
  out.push_back(r.grad_log_inv_tau);
  return out;
}

inline std::vector<double> numeric_gradient(const GradInstance& g, LossKind kind, double h) {
  GradInstance work = g;
  auto f = [&](std::span<const double> p) {
    unpack(work, p);
    return loss_value(work, kind);
  };
  return finite_difference_gradient(f, pack(g), h);
}

struct GroupReport {
  std::string name;
  double error = 0.0;  ///< relative error, or max |numeric| for groups with zero analytic gradient
  bool zero_group = false;
};

/// Per-group comparison. Groups whose analytic gradient is identically zero
/// are judged by the magnitude of the numeric estimate instead.
inline std::vector<GroupReport> check_gradients(const GradInstance& g, LossKind kind, double h) {
  const auto analytic = analytic_gradient(g, kind);
  const auto numeric = numeric_gradient(g, kind, h);
  std::vector<GroupReport> out;
  for (const auto& grp : param_groups(g)) {
    std::span<const double> a(analytic.data() + grp.offset, grp.size), n(numeric.data() + grp.offset, grp.size);
    GroupReport rep{grp.name, 0.0, std::all_of(a.begin(), a.end(), [](double v) { return v == 0.0; })};
    if (rep.zero_group) {
      for (double v : n) rep.error = std::max(rep.error, std::abs(v));
    } else {
      rep.error = compare_gradients(a, n).max_relative_error;
    }
    out.push_back(rep);
  }
  return out;
}

}  // namespace ping::testing
