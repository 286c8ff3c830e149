#pragma once

#include <fstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "cmab/instance.hpp"

namespace cmab {

// On-disk schema:
//   {"d": int, "arms": [[int,...],...], "mu": [real,...], "noise": "..."}
// Arm members are 1-based in files; "mu"/"noise" are omitted for bare
// families.

inline nlohmann::json family_to_json(const SuperArmFamily& family) {
  nlohmann::json j;
  j["d"] = family.d;
  auto& arms = j["arms"] = nlohmann::json::array();
  for (const Subset& arm : family.arms) {
    nlohmann::json a = nlohmann::json::array();
    for (int e : arm) a.push_back(e + 1);
    arms.push_back(std::move(a));
  }
  return j;
}

inline SuperArmFamily family_from_json(const nlohmann::json& j) {
  SuperArmFamily family;
  family.d = j.at("d").get<int>();
  for (const auto& a : j.at("arms")) {
    Subset arm;
    for (const auto& e : a) arm.push_back(e.get<int>() - 1);
    family.arms.push_back(std::move(arm));
  }
  return make_family(family.d, std::move(family.arms));
}

inline nlohmann::json instance_to_json(const BanditInstance& inst) {
  nlohmann::json j = family_to_json(inst.family);
  j["mu"] = std::vector<double>(inst.mu.data(), inst.mu.data() + inst.mu.size());
  j["noise"] = inst.noise == NoiseKind::bernoulli ? "bernoulli" : "uniform";
  return j;
}

inline NoiseKind noise_from_string(const std::string& s) {
  if (s == "bernoulli") return NoiseKind::bernoulli;
  if (s == "uniform") return NoiseKind::uniform_interval;
  throw std::invalid_argument("unknown noise law: " + s);
}

inline BanditInstance instance_from_json(const nlohmann::json& j) {
  SuperArmFamily family = family_from_json(j);
  const auto& mu_list = j.at("mu");
  Eigen::VectorXd mu(mu_list.size());
  for (Eigen::Index e = 0; e < mu.size(); ++e) mu[e] = mu_list[e].get<double>();
  NoiseKind noise = j.contains("noise")
                        ? noise_from_string(j["noise"].get<std::string>())
                        : NoiseKind::bernoulli;
  return make_instance(std::move(family), std::move(mu), noise);
}

inline nlohmann::json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  nlohmann::json j;
  in >> j;
  return j;
}

inline void save_json_file(const std::string& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << j.dump(2) << '\n';
}

}  // namespace cmab
