#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "flake/crypto.hpp"
#include "flake/error.hpp"

namespace flake {

/// Public record of one input party: identity, verification keys, and where
/// to reach its data source. Secret keys never appear here.
struct PartyInfo {
  std::string party_id;
  std::string sign_public_key_b64;
  std::string box_public_key_b64;
  std::string address = "127.0.0.1";
  std::uint16_t port = 0;

  bool operator==(const PartyInfo&) const = default;
};

/// Shared view of a session: every input party plus the function party
/// endpoint. The function party has a signing key for acknowledgements but
/// no box key, so sealed material relayed through it stays opaque.
struct PartyRegistry {
  std::vector<PartyInfo> input_parties;
  std::string function_sign_public_key_b64;
  std::string function_address = "127.0.0.1";
  std::uint16_t function_port = 0;

  bool operator==(const PartyRegistry&) const = default;

  const PartyInfo& find(const std::string& party_id) const {
    for (const PartyInfo& p : input_parties) {
      if (p.party_id == party_id) return p;
    }
    throw ProtocolError("registry: unknown party '" + party_id + "'");
  }

  bool contains(const std::string& party_id) const {
    return std::any_of(input_parties.begin(), input_parties.end(),
                       [&](const PartyInfo& p) { return p.party_id == party_id; });
  }
};

inline void to_json(nlohmann::json& j, const PartyInfo& p) {
  j = nlohmann::json{{"party_id", p.party_id},
                     {"sign_public_key", p.sign_public_key_b64},
                     {"box_public_key", p.box_public_key_b64},
                     {"address", p.address},
                     {"port", p.port}};
}

inline void from_json(const nlohmann::json& j, PartyInfo& p) {
  j.at("party_id").get_to(p.party_id);
  j.at("sign_public_key").get_to(p.sign_public_key_b64);
  j.at("box_public_key").get_to(p.box_public_key_b64);
  j.at("address").get_to(p.address);
  j.at("port").get_to(p.port);
}

inline void to_json(nlohmann::json& j, const PartyRegistry& r) {
  j = nlohmann::json{{"input_parties", r.input_parties},
                     {"function_party",
                      {{"sign_public_key", r.function_sign_public_key_b64},
                       {"address", r.function_address},
                       {"port", r.function_port}}}};
}

inline void from_json(const nlohmann::json& j, PartyRegistry& r) {
  j.at("input_parties").get_to(r.input_parties);
  const nlohmann::json& fp = j.at("function_party");
  fp.at("sign_public_key").get_to(r.function_sign_public_key_b64);
  fp.at("address").get_to(r.function_address);
  fp.at("port").get_to(r.function_port);
}

inline void validate_registry(const PartyRegistry& registry) {
  std::vector<std::string> ids;
  for (const PartyInfo& p : registry.input_parties) {
    if (p.party_id.empty() || p.party_id.size() > 8) {
      throw ValidationError("registry: party id '" + p.party_id + "' must be 1 to 8 bytes");
    }
    ids.push_back(p.party_id);
  }
  std::sort(ids.begin(), ids.end());
  if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) {
    throw ValidationError("registry: duplicate party ids");
  }
}

inline PartyRegistry load_registry(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open registry file: " + path);
  nlohmann::json j;
  try {
    in >> j;
    PartyRegistry r = j.get<PartyRegistry>();
    validate_registry(r);
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("malformed registry file " + path + ": " + e.what());
  }
}

inline void save_registry(const PartyRegistry& registry, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write registry file: " + path);
  out << nlohmann::json(registry).dump(2) << '\n';
}

/// The lexicographically smallest input party id leads seed distribution.
/// Every party evaluates this locally and reaches the same answer, so no
/// election messages are needed.
inline std::string elect_leader(const PartyRegistry& registry) {
  if (registry.input_parties.size() < 2) {
    throw ProtocolError("leader election requires at least 2 input parties, got " +
                        std::to_string(registry.input_parties.size()));
  }
  validate_registry(registry);
  const auto it = std::min_element(
      registry.input_parties.begin(), registry.input_parties.end(),
      [](const PartyInfo& a, const PartyInfo& b) { return a.party_id < b.party_id; });
  return it->party_id;
}

/// Secret key material held by one party, derived deterministically from a
/// private seed so test fixtures and registries stay reproducible.
struct PartyKeys {
  std::string party_id;
  SignKeyPair sign;
  BoxKeyPair box;
};

inline PartyKeys derive_party_keys(CryptoProvider& crypto, const std::string& party_id,
                                   std::uint64_t secret_seed) {
  return PartyKeys{party_id, crypto.sign_keypair(secret_seed), crypto.box_keypair(secret_seed)};
}

inline PartyInfo party_info_from_keys(const PartyKeys& keys, const std::string& address,
                                      std::uint16_t port) {
  PartyInfo info;
  info.party_id = keys.party_id;
  info.sign_public_key_b64 = to_base64(keys.sign.public_key);
  info.box_public_key_b64 = to_base64(keys.box.public_key);
  info.address = address;
  info.port = port;
  return info;
}

}  // namespace flake
