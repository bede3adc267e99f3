#pragma once

// JSON measure specifications.
//
//   {"family":"discrete-atoms","atoms":[{"weight":1.0,"masses":[0.5,0.5]}]}
//   {"family":"binary-density","theta":0.5,"epsilon":0.001}
//   {"family":"stable-tree","beta":1.5,"delta":1e-4,"epsilon":0.01,
//    "pool_size":20000,"pool_seed":24301}
//   {"family":"truncated","base":{...},"N":2,"epsilon":0.2}
//
// Doubles are written in shortest round-trip form, so parameters reload
// bit-exactly.

#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "fragtree/dislocation.hpp"
#include "fragtree/errors.hpp"

namespace fragtree {

inline nlohmann::json measure_to_json(const DislocationMeasure& m) {
  nlohmann::json j;
  j["family"] = family_name(m.family());
  switch (m.family()) {
    case Family::DiscreteAtoms: {
      auto atoms = nlohmann::json::array();
      for (const auto& a : std::get<DiscreteAtoms>(m.variant()).atoms)
        atoms.push_back({{"weight", a.weight}, {"masses", a.split.masses()}});
      j["atoms"] = atoms;
      break;
    }
    case Family::BinaryDensity:
      j["theta"] = std::get<BinaryDensity>(m.variant()).theta;
      j["epsilon"] = m.restriction_eps();
      break;
    case Family::StableTree: {
      const auto& st = std::get<StableTree>(m.variant());
      j["beta"] = st.beta;
      j["delta"] = st.delta;
      j["epsilon"] = m.restriction_eps();
      j["pool_size"] = st.pool_size;
      j["pool_seed"] = st.pool_seed;
      break;
    }
    case Family::Truncated: {
      const auto& t = std::get<Truncated>(m.variant());
      j["base"] = measure_to_json(*t.base);
      j["N"] = t.n_blocks;
      j["epsilon"] = t.eps;
      break;
    }
  }
  return j;
}

inline DislocationMeasure measure_from_json(const nlohmann::json& j) {
  try {
    if (!j.is_object()) throw ValidationError("measure spec must be a JSON object");
    const std::string family = j.at("family").get<std::string>();
    if (family == "discrete-atoms") {
      std::vector<Atom> atoms;
      for (const auto& a : j.at("atoms"))
        atoms.push_back(
            Atom{a.at("weight").get<double>(),
                 RankedMassSequence::from_unsorted(a.at("masses").get<std::vector<double>>())});
      return DislocationMeasure::discrete(std::move(atoms));
    }
    if (family == "binary-density")
      return DislocationMeasure::binary_density(j.at("theta").get<double>(),
                                                j.at("epsilon").get<double>());
    if (family == "stable-tree")
      return DislocationMeasure::stable_tree(
          j.at("beta").get<double>(), j.at("delta").get<double>(), j.at("epsilon").get<double>(),
          j.value("pool_size", std::size_t{20000}), j.value("pool_seed", std::uint64_t{0x5eed}));
    if (family == "truncated")
      return DislocationMeasure::truncated(measure_from_json(j.at("base")),
                                           j.at("N").get<std::size_t>(),
                                           j.at("epsilon").get<double>());
    throw ValidationError("unknown measure family '" + family + "'");
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed measure spec: ") + e.what());
  }
}

inline std::string measure_to_string(const DislocationMeasure& m) { return measure_to_json(m).dump(); }

inline DislocationMeasure measure_from_string(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("measure spec: ") + e.what(), e.byte);
  }
  return measure_from_json(j);
}

inline DislocationMeasure load_measure(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open measure file " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return measure_from_string(buf.str());
}

/// FNV-1a over the canonical JSON text.
inline std::uint64_t measure_hash(const DislocationMeasure& m) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : measure_to_string(m)) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace fragtree
