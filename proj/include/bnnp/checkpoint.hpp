#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>

#include <json.hpp>

#include "bnnp/ensemble.hpp"
#include "bnnp/nn.hpp"
#include "bnnp/variational.hpp"

namespace bnnp {

// BNNPRIOR container: "BNNPRIOR", u16 version, u32 metadata length, JSON
// metadata, then little-endian f64 arrays per component: mean, factors
// column-major, and the diagonal when the component carries one. Diagonal
// families store mean then log_std; isotropic priors have no payload.
inline constexpr std::uint16_t kPriorFormatVersion = 1;

struct PriorCheckpoint {
  ArchSpec arch;
  Prior prior;
  std::uint64_t seed = 0;
  std::string phi_kind;  // loss the prior was learned from, "none" for isotropic
  nlohmann::json provenance = nlohmann::json::object();
};

// lowrank | diag | mixture | isotropic
std::string family_tag(const Prior& prior);

std::string encode_prior(const PriorCheckpoint& c);
PriorCheckpoint decode_prior(std::string_view bytes);

void save_prior(const std::string& path, const PriorCheckpoint& c);
PriorCheckpoint load_prior(const std::string& path);

// A single weight vector in the same container, family "point".
std::string encode_weights(const ArchSpec& arch, const ParamVector& w, const nlohmann::json& provenance);
std::pair<ArchSpec, ParamVector> decode_weights(std::string_view bytes);

// Directory of member_NNN.bnnp weight files plus manifest.json (member count,
// averaging mode, arch, file list and free-form `info`).
void save_ensemble(const std::string& dir, const Ensemble& e, const nlohmann::json& info);
Ensemble load_ensemble(const std::string& dir, nlohmann::json* info = nullptr);

// Hex FNV-1a hash of the encoded checkpoint, recorded in transfer provenance.
std::string content_hash(std::string_view bytes);

}  // namespace bnnp
