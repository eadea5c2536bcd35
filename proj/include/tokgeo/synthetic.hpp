#pragma once

// Seeded synthetic traces, so every downstream module can be exercised
// without a real model.

#include <cmath>
#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/QR>
#include <nlohmann/json.hpp>

#include "tokgeo/actdump.hpp"
#include "tokgeo/errors.hpp"
#include "tokgeo/linalg.hpp"

namespace tokgeo {

struct IsotropicGaussian {
  double sigma = 1.0;
};

// Every row is mu + sigma * z with mu a fixed direction of norm mean_norm
// shared by all layers of the trace.
struct SharedMeanPlusNoise {
  double mean_norm = 1.0;
  double sigma = 1.0;
};

// Rows are Gaussian combinations of a seeded orthonormal basis of rank k.
struct ConfinedSubspace {
  int rank = 1;
  double sigma = 1.0;
};

using LayerGenerator = std::variant<IsotropicGaussian, SharedMeanPlusNoise, ConfinedSubspace>;

struct SyntheticSpec {
  std::string model_label = "synthetic";
  int token_count = 0;
  int embed_dim = 0;
  bool random_init = false;
  std::vector<int> excluded_token_positions;
  std::vector<LayerGenerator> layers;  // one generator per layer; size is m
};

// Mean vector with exact norm mean_norm and a seeded direction.
inline Vector shared_mean_direction(int dim, double mean_norm, std::uint64_t seed) {
  auto rng = make_rng(seed, {0x6d65616eu});
  Vector mu = gaussian_matrix(dim, 1, rng).col(0);
  return mu * (mean_norm / mu.norm());
}

// Ensemble of n tokens drawn as mu + sigma * z.
inline Matrix shared_mean_ensemble(int n, int dim, double mean_norm, double sigma, std::uint64_t seed,
                                   std::uint64_t stream) {
  const Vector mu = shared_mean_direction(dim, mean_norm, seed);
  auto rng = make_rng(seed, {stream});
  Matrix out = gaussian_matrix(dim, n, rng).transpose() * sigma;
  out.rowwise() += mu.transpose();
  return out;
}

// Mean norm giving an expected correlator of e0 when the noise is N(0, I).
inline double mean_norm_for_correlator(double e0, int dim) { return std::sqrt(e0 / (1.0 - e0) * dim); }

inline ActivationTrace generate_synthetic_trace(const SyntheticSpec& spec, std::uint64_t seed) {
  ActivationTrace trace;
  auto& m = trace.manifest;
  m.model_label = spec.model_label;
  m.layer_count = static_cast<int>(spec.layers.size());
  m.token_count = spec.token_count;
  m.embed_dim = spec.embed_dim;
  m.random_init = spec.random_init;
  m.excluded_token_positions = spec.excluded_token_positions;
  try {
    validate_manifest(m);
  } catch (const FormatError& e) {
    throw SpecError(e.what());
  }

  const int n = spec.token_count;
  const int dim = spec.embed_dim;
  for (int k = 0; k < m.layer_count; ++k) {
    const auto layer_stream = static_cast<std::uint64_t>(k) + 1;
    LayerActivations layer;
    layer.layer_index = k;
    std::visit(
        [&](const auto& gen) {
          using G = std::decay_t<decltype(gen)>;
          if constexpr (std::is_same_v<G, IsotropicGaussian>) {
            auto rng = make_rng(seed, {layer_stream});
            layer.values = gaussian_matrix(dim, n, rng).transpose() * gen.sigma;
          } else if constexpr (std::is_same_v<G, SharedMeanPlusNoise>) {
            if (gen.sigma < 0 || gen.mean_norm < 0) throw SpecError("shared_mean: sigma and mean_norm must be >= 0");
            layer.values = shared_mean_ensemble(n, dim, gen.mean_norm, gen.sigma, seed, layer_stream);
          } else {
            if (gen.rank < 1 || gen.rank > dim)
              throw SpecError("confined_subspace rank " + std::to_string(gen.rank) + " must lie in [1, embed_dim]");
            auto rng = make_rng(seed, {layer_stream});
            Eigen::HouseholderQR<Eigen::MatrixXd> qr(gaussian_matrix(dim, gen.rank, rng));
            const Eigen::MatrixXd basis = qr.householderQ() * Eigen::MatrixXd::Identity(dim, gen.rank);
            const Eigen::MatrixXd coeffs = gaussian_matrix(gen.rank, n, rng) * gen.sigma;
            layer.values = (basis * coeffs).transpose();
          }
        },
        spec.layers[static_cast<std::size_t>(k)]);
    trace.layers.push_back(std::move(layer));
  }
  return trace;
}

inline LayerGenerator layer_generator_from_json(const nlohmann::json& j) {
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "isotropic" || kind == "isotropic_gaussian") return IsotropicGaussian{j.value("sigma", 1.0)};
  if (kind == "shared_mean" || kind == "shared_mean_plus_noise")
    return SharedMeanPlusNoise{j.at("mean_norm").get<double>(), j.at("sigma").get<double>()};
  if (kind == "confined_subspace") return ConfinedSubspace{j.at("rank").get<int>(), j.value("sigma", 1.0)};
  throw SpecError("unknown layer kind '" + kind + "'");
}

// {"model_label", "token_count", "embed_dim", "random_init",
//  "excluded_token_positions", "layers": [{"kind": ...}, ...]}
// A single-entry "layers" list may be replicated with "layer_count".
inline SyntheticSpec synthetic_spec_from_json(const nlohmann::json& j) {
  SyntheticSpec spec;
  try {
    spec.model_label = j.value("model_label", std::string("synthetic"));
    spec.token_count = j.at("token_count").get<int>();
    spec.embed_dim = j.at("embed_dim").get<int>();
    spec.random_init = j.value("random_init", false);
    spec.excluded_token_positions = j.value("excluded_token_positions", std::vector<int>{});
    for (const auto& l : j.at("layers")) spec.layers.push_back(layer_generator_from_json(l));
    if (j.contains("layer_count")) {
      const int count = j["layer_count"].get<int>();
      if (spec.layers.size() == 1) {
        spec.layers.assign(static_cast<std::size_t>(std::max(count, 0)), spec.layers.front());
      } else if (count != static_cast<int>(spec.layers.size())) {
        throw SpecError("layer_count disagrees with the layers list");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw SpecError(std::string("malformed synthetic spec: ") + e.what());
  }
  return spec;
}

}  // namespace tokgeo
