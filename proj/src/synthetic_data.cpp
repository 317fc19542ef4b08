// SPDX-License-Identifier: Apache-2.0
#include "ping/synthetic_data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "ping/binary_io.hpp"
#include "ping/errors.hpp"

namespace ping {
namespace {

constexpr char kDataMagic[] = "PINGDATA";
constexpr std::uint32_t kDataVersion = 1;

Matrix gaussian_matrix(std::size_t rows, std::size_t cols, double scale, Rng& rng) {
  Matrix m(rows, cols);
  for (double& v : m.values()) v = scale * standard_normal(rng);
  return m;
}

// out = P u + noise
void project(const Matrix& projection, std::span<const double> latent, double noise, Rng& rng,
             std::span<double> out) {
  for (std::size_t r = 0; r < projection.rows(); ++r) {
    double s = 0.0;
    auto pr = projection.row(r);
    for (std::size_t m = 0; m < latent.size(); ++m) s += pr[m] * latent[m];
    out[r] = s + noise * standard_normal(rng);
  }
}

double mask_probability(double strength) { return std::min(0.9, strength / 4.0); }

}  // namespace

void GenConfig::validate() const {
  if (num_classes == 0 || n_train == 0 || n_val == 0 || n_test == 0 || d_latent == 0 || d_raw_image == 0 ||
      d_raw_text == 0) {
    throw ConfigError("GenConfig: all counts and dimensions must be positive");
  }
  if (!(sigma_within >= 0.0) || !(sigma_view >= 0.0)) throw ConfigError("GenConfig: sigmas must be non-negative");
}

const char* to_string(Split s) noexcept {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "?";
}

std::vector<std::size_t> PairedDataset::indices(Split split) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].split == split) out.push_back(i);
  }
  return out;
}

std::vector<std::uint32_t> PairedDataset::labels(std::span<const std::size_t> idx) const {
  std::vector<std::uint32_t> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(samples.at(i).class_id);
  return out;
}

PairedDataset generate_dataset(const GenConfig& cfg) {
  cfg.validate();
  Rng rng = make_rng(cfg.seed, Stream::kDataset);
  const double proj_scale = 1.0 / std::sqrt(static_cast<double>(cfg.d_latent));

  const Matrix centers = gaussian_matrix(cfg.num_classes, cfg.d_latent, 1.0, rng);
  const Matrix proj_image = gaussian_matrix(cfg.d_raw_image, cfg.d_latent, proj_scale, rng);
  const Matrix proj_text = gaussian_matrix(cfg.d_raw_text, cfg.d_latent, proj_scale, rng);

  PairedDataset data;
  data.num_classes = cfg.num_classes;
  const std::size_t total = cfg.n_train + cfg.n_val + cfg.n_test;
  data.samples.reserve(total);
  data.image_raw = Matrix(total, cfg.d_raw_image);
  data.text_raw = Matrix(total, cfg.d_raw_text);
  data.class_image_views = Matrix(cfg.num_classes, cfg.d_raw_image);
  data.class_text_views = Matrix(cfg.num_classes, cfg.d_raw_text);

  for (std::size_t c = 0; c < cfg.num_classes; ++c) {
    project(proj_image, centers.row(c), 0.0, rng, data.class_image_views.row(c));
    project(proj_text, centers.row(c), 0.0, rng, data.class_text_views.row(c));
  }

  std::vector<double> latent(cfg.d_latent);
  const std::pair<Split, std::size_t> splits[] = {
      {Split::kTrain, cfg.n_train}, {Split::kVal, cfg.n_val}, {Split::kTest, cfg.n_test}};
  for (const auto& [split, count] : splits) {
    for (std::size_t i = 0; i < count; ++i) {
      const std::size_t k = data.samples.size();
      const auto cls = static_cast<std::uint32_t>(i % cfg.num_classes);
      data.samples.push_back({k, cls, split});
      auto center = centers.row(cls);
      for (std::size_t m = 0; m < cfg.d_latent; ++m) latent[m] = center[m] + cfg.sigma_within * standard_normal(rng);
      project(proj_image, latent, cfg.sigma_view, rng, data.image_raw.row(k));
      project(proj_text, latent, cfg.sigma_view, rng, data.text_raw.row(k));
    }
  }
  return data;
}

std::vector<double> augment(std::span<const double> view, double strength, Rng& rng) {
  std::vector<double> out(view.begin(), view.end());
  if (strength == 0.0) return out;
  if (!(strength > 0.0)) throw ParameterError("augment: strength must be non-negative");
  const double p_mask = mask_probability(strength);
  for (double& v : out) {
    const double noise = strength * standard_normal(rng);
    v = uniform_unit(rng) < p_mask ? 0.0 : v + noise;
  }
  return out;
}

Matrix augment(const Matrix& raw, double strength, Rng& rng) {
  if (strength == 0.0) return raw;
  Matrix out(raw.rows(), raw.cols());
  for (std::size_t r = 0; r < raw.rows(); ++r) {
    auto row = augment(raw.row(r), strength, rng);
    std::copy(row.begin(), row.end(), out.row(r).begin());
  }
  return out;
}

void write_dataset(const std::filesystem::path& path, const PairedDataset& data) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("cannot open " + path.string() + " for writing");
  io::Writer w(os);
  w.put_bytes({kDataMagic, 8});
  w.put<std::uint32_t>(kDataVersion);
  w.put<std::uint32_t>(0);
  w.put<std::uint64_t>(data.samples.size());
  w.put<std::uint32_t>(static_cast<std::uint32_t>(data.num_classes));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(data.image_raw.cols()));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(data.text_raw.cols()));
  w.put<std::uint32_t>(0);  // dtype f32
  for (std::size_t k = 0; k < data.samples.size(); ++k) {
    const auto& s = data.samples[k];
    w.put<std::uint64_t>(s.id);
    w.put<std::uint32_t>(s.class_id);
    w.put<std::uint8_t>(static_cast<std::uint8_t>(s.split));
    w.put_zeros(3);
    for (double v : data.image_raw.row(k)) w.put<float>(static_cast<float>(v));
    for (double v : data.text_raw.row(k)) w.put<float>(static_cast<float>(v));
  }
  for (double v : data.class_image_views.values()) w.put<float>(static_cast<float>(v));
  for (double v : data.class_text_views.values()) w.put<float>(static_cast<float>(v));
  if (!w.good()) throw Error("write failed for " + path.string());
}

PairedDataset read_dataset(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open " + path.string());
  io::Reader r(is);
  if (r.get_bytes(8, "magic") != std::string(kDataMagic, 8)) throw FormatError("bad PINGDATA magic", 0);
  if (r.get<std::uint32_t>("version") != kDataVersion) throw FormatError("unsupported PINGDATA version", 8);
  r.get<std::uint32_t>("reserved");
  const auto count = r.get<std::uint64_t>("count");
  const auto classes = r.get<std::uint32_t>("class count");
  const auto d_image = r.get<std::uint32_t>("image dim");
  const auto d_text = r.get<std::uint32_t>("text dim");
  if (r.get<std::uint32_t>("dtype") != 0) throw FormatError("unsupported PINGDATA dtype", r.offset() - 4);

  PairedDataset data;
  data.num_classes = classes;
  data.image_raw = Matrix(count, d_image);
  data.text_raw = Matrix(count, d_text);
  data.samples.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    SampleInfo s;
    s.id = r.get<std::uint64_t>("sample id");
    s.class_id = r.get<std::uint32_t>("class id");
    const auto split = r.get<std::uint8_t>("split");
    if (split > 2) throw FormatError("bad split tag", r.offset() - 1);
    s.split = static_cast<Split>(split);
    r.get_bytes(3, "reserved");
    data.samples.push_back(s);
    for (double& v : data.image_raw.row(k)) v = r.get<float>("image value");
    for (double& v : data.text_raw.row(k)) v = r.get<float>("text value");
  }
  data.class_image_views = Matrix(classes, d_image);
  data.class_text_views = Matrix(classes, d_text);
  for (double& v : data.class_image_views.values()) v = r.get<float>("class image view");
  for (double& v : data.class_text_views.values()) v = r.get<float>("class text view");
  return data;
}

}  // namespace ping
