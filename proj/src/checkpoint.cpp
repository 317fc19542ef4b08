// SPDX-License-Identifier: Apache-2.0
#include "ping/checkpoint.hpp"

#include <algorithm>
#include <fstream>

#include "ping/binary_io.hpp"
#include "ping/errors.hpp"

namespace ping {
namespace {

constexpr char kCkptMagic[] = "PINGCKPT";
constexpr std::uint32_t kCkptVersion = 1;
constexpr const char* kLayerNames[] = {"backbone.weight",   "backbone.bias",   "head_hidden.weight",
                                       "head_hidden.bias",  "head_out.weight", "head_out.bias"};

// Mutable views of every tensor, paired with its checkpoint name.
std::vector<std::pair<std::string, std::span<double>>> named_views(TrainedModel& model) {
  std::vector<std::pair<std::string, std::span<double>>> out;
  for (auto [prefix, enc] : {std::pair{"image.", &model.image}, std::pair{"text.", &model.text}}) {
    auto params = enc->parameters();
    for (std::size_t i = 0; i < params.size(); ++i) out.emplace_back(std::string(prefix) + kLayerNames[i], params[i]);
  }
  for (auto [prefix, ad] : {std::pair{"adapter.image.", &model.adapters.image},
                            std::pair{"adapter.text.", &model.adapters.text}}) {
    auto params = ad->parameters();
    out.emplace_back(std::string(prefix) + "weight", params[0]);
    out.emplace_back(std::string(prefix) + "bias", params[1]);
  }
  out.emplace_back("log_inv_tau", std::span<double>(&model.temperature.log_inv_tau, 1));
  return out;
}

}  // namespace

Checkpoint snapshot(const TrainedModel& model) {
  TrainedModel copy = model;
  Checkpoint ckpt;
  for (auto& [name, view] : named_views(copy)) ckpt.tensors.emplace_back(name, std::vector<double>(view.begin(), view.end()));
  return ckpt;
}

void restore(const Checkpoint& ckpt, TrainedModel& model) {
  auto views = named_views(model);
  if (views.size() != ckpt.tensors.size()) throw FormatError("checkpoint tensor count does not match the model");
  for (std::size_t i = 0; i < views.size(); ++i) {
    const auto& [name, values] = ckpt.tensors[i];
    if (name != views[i].first || values.size() != views[i].second.size()) {
      throw FormatError("checkpoint tensor '" + name + "' does not match model tensor '" + views[i].first + "'");
    }
    std::copy(values.begin(), values.end(), views[i].second.begin());
  }
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("cannot open " + path.string() + " for writing");
  io::Writer w(os);
  w.put_bytes({kCkptMagic, 8});
  w.put<std::uint32_t>(kCkptVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& [name, values] : ckpt.tensors) {
    w.put<std::uint32_t>(static_cast<std::uint32_t>(name.size()));
    w.put_bytes(name);
    w.put<std::uint64_t>(values.size());
    for (double v : values) w.put<double>(v);
  }
  os.flush();
  if (!w.good()) throw Error("write failed for " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open " + path.string());
  io::Reader r(is);
  if (r.get_bytes(8, "magic") != std::string(kCkptMagic, 8)) throw FormatError("bad checkpoint magic", 0);
  if (r.get<std::uint32_t>("version") != kCkptVersion) throw FormatError("unsupported checkpoint version", 8);
  const auto count = r.get<std::uint32_t>("tensor count");
  Checkpoint ckpt;
  for (std::uint32_t t = 0; t < count; ++t) {
    const auto len = r.get<std::uint32_t>("name length");
    std::string name = r.get_bytes(len, "tensor name");
    const auto n = r.get<std::uint64_t>("value count");
    std::vector<double> values(n);
    for (double& v : values) v = r.get<double>("tensor value");
    ckpt.tensors.emplace_back(std::move(name), std::move(values));
  }
  if (!r.at_end()) throw FormatError("trailing bytes after checkpoint tensors", r.offset());
  return ckpt;
}

}  // namespace ping
