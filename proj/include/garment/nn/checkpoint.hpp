#pragma once

#include <fstream>
#include <string>

#include <json.hpp>

#include "garment/error.hpp"
#include "garment/graph.hpp"
#include "garment/nn/mlp.hpp"

namespace garment::nn {

inline constexpr int kCheckpointVersion = 1;

inline nlohmann::json mlp_to_json(const Mlp& m) {
  nlohmann::json j;
  j["sizes"] = m.spec.sizes;
  j["layer_norm"] = m.spec.layer_norm;
  nlohmann::json weights = nlohmann::json::array();
  nlohmann::json biases = nlohmann::json::array();
  for (const Tensor2& w : m.W) weights.push_back(w.v);
  for (const auto& b : m.b) biases.push_back(b);
  j["W"] = std::move(weights);
  j["b"] = std::move(biases);
  if (m.spec.layer_norm) {
    j["ln_gamma"] = m.ln_gamma;
    j["ln_beta"] = m.ln_beta;
  }
  return j;
}

inline Mlp mlp_from_json(const nlohmann::json& j) {
  Mlp m;
  m.spec.sizes = j.at("sizes").get<std::vector<int>>();
  m.spec.layer_norm = j.at("layer_norm").get<bool>();
  m.allocate();
  const auto& weights = j.at("W");
  const auto& biases = j.at("b");
  if (weights.size() != m.W.size() || biases.size() != m.b.size())
    throw Error("io", "checkpoint: layer count mismatch");
  for (std::size_t l = 0; l < m.W.size(); ++l) {
    auto wv = weights[l].get<std::vector<double>>();
    if (wv.size() != m.W[l].v.size())
      throw Error("io", "checkpoint: weight size mismatch");
    m.W[l].v = std::move(wv);
    m.b[l] = biases[l].get<std::vector<double>>();
  }
  if (m.spec.layer_norm) {
    m.ln_gamma = j.at("ln_gamma").get<std::vector<double>>();
    m.ln_beta = j.at("ln_beta").get<std::vector<double>>();
  }
  return m;
}

inline nlohmann::json vec3_to_json(const Vec3& v) {
  return nlohmann::json::array({v.x, v.y, v.z});
}

inline Vec3 vec3_from_json(const nlohmann::json& j) {
  return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()};
}

inline nlohmann::json stats_to_json(const NormalizationStats& s) {
  nlohmann::json j;
  j["pos_mean"] = vec3_to_json(s.pos_mean);
  j["pos_std"] = vec3_to_json(s.pos_std);
  j["edge_mean"] = vec3_to_json(s.edge_mean);
  j["edge_std"] = vec3_to_json(s.edge_std);
  j["len_mean"] = s.len_mean;
  j["len_std"] = s.len_std;
  j["act_mean"] = vec3_to_json(s.act_mean);
  j["act_std"] = vec3_to_json(s.act_std);
  j["target_std"] = vec3_to_json(s.target_std);
  j["zero_std_replaced"] = s.zero_std_replaced;
  return j;
}

inline NormalizationStats stats_from_json(const nlohmann::json& j) {
  NormalizationStats s;
  s.pos_mean = vec3_from_json(j.at("pos_mean"));
  s.pos_std = vec3_from_json(j.at("pos_std"));
  s.edge_mean = vec3_from_json(j.at("edge_mean"));
  s.edge_std = vec3_from_json(j.at("edge_std"));
  s.len_mean = j.at("len_mean").get<double>();
  s.len_std = j.at("len_std").get<double>();
  s.act_mean = vec3_from_json(j.at("act_mean"));
  s.act_std = vec3_from_json(j.at("act_std"));
  s.target_std = vec3_from_json(j.at("target_std"));
  s.zero_std_replaced = j.at("zero_std_replaced").get<bool>();
  return s;
}

inline void write_checkpoint(const std::string& path, const nlohmann::json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("io", "cannot write checkpoint: " + path);
  out << j.dump();
}

inline nlohmann::json read_checkpoint(const std::string& path,
                                      const std::string& expected_kind) {
  std::ifstream in(path);
  if (!in) throw Error("missing-model", "cannot open checkpoint: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error("io", std::string("bad checkpoint: ") + e.what());
  }
  if (j.value("format_version", -1) != kCheckpointVersion)
    throw Error("io", "unsupported checkpoint format version");
  if (j.value("kind", "") != expected_kind)
    throw Error("io", "checkpoint kind mismatch: expected " + expected_kind);
  return j;
}

}  // namespace garment::nn
