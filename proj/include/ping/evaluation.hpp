// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ping/embedding_core.hpp"
#include "ping/synthetic_data.hpp"
#include "ping/trainer.hpp"

namespace ping {

struct RetrievalResult {
  std::vector<std::size_t> ks;
  std::vector<double> i2t_at_k;  ///< same order as ks
  std::vector<double> t2i_at_k;
};

/// Recall@K for both directions. Row i's true column is pairing[i] (a
/// permutation); ranking is by descending similarity, ties to the lower index.
/// Throws ParameterError when any K exceeds the candidate count.
RetrievalResult recall_at_k(const SimilarityMatrix& sim, std::span<const std::size_t> pairing,
                            std::span<const std::size_t> ks);

/// Fraction of images whose most similar prototype (ties to the lowest class)
/// is their label. Throws IndexError for a label >= prototype count.
double zero_shot_top1(const FeatureBatch& image_embeds, const FeatureBatch& class_prototypes,
                      std::span<const std::uint32_t> labels);

struct ProbeConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 512;
  double lr = 1e-2;
  std::uint64_t seed = 0;
};

/// Multinomial logistic regression on frozen embeddings (AdamW with a cosine
/// schedule); returns test top-1 accuracy.
double linear_probe(const FeatureBatch& train_x, std::span<const std::uint32_t> train_y, const FeatureBatch& test_x,
                    std::span<const std::uint32_t> test_y, const ProbeConfig& cfg);

struct SplitEmbeddings {
  FeatureBatch image;
  FeatureBatch text;
  std::vector<std::uint32_t> labels;
};

/// Student embeddings of one split's clean views.
SplitEmbeddings embed_split(const TrainedModel& model, const PairedDataset& data, Split split);

/// Text-encoder embeddings of each class's noiseless text view.
FeatureBatch class_prototypes(const TrainedModel& model, const PairedDataset& data);

struct MetricRow {
  std::string split;
  std::string metric;  ///< i2t_recall | t2i_recall | zero_shot_top1 | linear_probe_top1
  std::size_t k = 1;
  double value = 0.0;
};

/// Retrieval at every K, zero-shot top-1 and (optionally) the linear probe
/// trained on the train split and scored on `split`.
std::vector<MetricRow> evaluate(const TrainedModel& model, const PairedDataset& data, Split split,
                                std::span<const std::size_t> ks, const ProbeConfig& probe, bool run_probe = true);

}  // namespace ping
