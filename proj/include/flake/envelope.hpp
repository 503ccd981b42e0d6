#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "flake/crypto.hpp"
#include "flake/error.hpp"
#include "flake/linalg.hpp"
#include "flake/registry.hpp"

namespace flake {

/// Sealed mask parameters in transit from the leader to one input party.
/// The ciphertext can only be opened by the recipient's box key; the
/// signature lets the recipient confirm who sealed it and for whom. A relay
/// sees ids and opaque bytes, nothing else.
struct SeedEnvelope {
  std::string sender_id;
  std::string recipient_id;
  Bytes ciphertext;
  Bytes signature;

  bool operator==(const SeedEnvelope&) const = default;
};

struct SeedMaterial {
  std::uint64_t seed = 0;
  MaskDims dims{1, 2};

  bool operator==(const SeedMaterial&) const = default;
};

namespace envdetail {

/// Fixed 24-byte plaintext: seed, feature count, mask width, each u64 LE.
inline Bytes pack_material(const SeedMaterial& m) {
  Bytes out;
  out.reserve(24);
  const std::uint64_t words[3] = {m.seed, m.dims.f, m.dims.k};
  for (std::uint64_t w : words) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(w >> (8 * i)));
  }
  return out;
}

inline SeedMaterial unpack_material(const Bytes& plain) {
  if (plain.size() != 24) {
    throw CryptoError("seed envelope: plaintext has " + std::to_string(plain.size()) +
                      " bytes, expected 24");
  }
  std::uint64_t words[3] = {0, 0, 0};
  for (int w = 0; w < 3; ++w) {
    for (int i = 7; i >= 0; --i) words[w] = (words[w] << 8) | plain[w * 8 + i];
  }
  return SeedMaterial{words[0], MaskDims(words[1], words[2])};
}

/// The signature covers sender, recipient, and ciphertext so an envelope
/// cannot be re-addressed or re-stuffed without detection.
inline Bytes signed_view(const SeedEnvelope& env) {
  Bytes msg(env.sender_id.begin(), env.sender_id.end());
  msg.push_back(0);
  msg.insert(msg.end(), env.recipient_id.begin(), env.recipient_id.end());
  msg.push_back(0);
  msg.insert(msg.end(), env.ciphertext.begin(), env.ciphertext.end());
  return msg;
}

}  // namespace envdetail

inline SeedEnvelope seal_seed(CryptoProvider& crypto, const SeedMaterial& material,
                              const std::string& recipient_id, const PartyRegistry& registry,
                              const PartyKeys& sender) {
  const PartyInfo& recipient = registry.find(recipient_id);
  SeedEnvelope env;
  env.sender_id = sender.party_id;
  env.recipient_id = recipient_id;
  env.ciphertext = crypto.seal(envdetail::pack_material(material),
                               from_base64(recipient.box_public_key_b64));
  env.signature = crypto.sign(envdetail::signed_view(env), sender.sign.secret_key);
  return env;
}

inline SeedMaterial open_seed(CryptoProvider& crypto, const SeedEnvelope& env,
                              const PartyKeys& recipient, const PartyRegistry& registry) {
  if (env.recipient_id != recipient.party_id) {
    throw CryptoError("seed envelope addressed to '" + env.recipient_id + "', not '" +
                      recipient.party_id + "'");
  }
  const Bytes sender_pk = from_base64(registry.find(env.sender_id).sign_public_key_b64);
  if (!crypto.verify(envdetail::signed_view(env), env.signature, sender_pk)) {
    throw CryptoError("seed envelope: signature verification failed");
  }
  const std::optional<Bytes> plain = crypto.seal_open(env.ciphertext, recipient.box);
  if (!plain) throw CryptoError("seed envelope: cannot decrypt ciphertext");
  return envdetail::unpack_material(*plain);
}

inline Bytes envelope_to_payload(const SeedEnvelope& env) {
  nlohmann::json j{{"sender", env.sender_id},
                   {"recipient", env.recipient_id},
                   {"ciphertext", to_base64(env.ciphertext)},
                   {"signature", to_base64(env.signature)}};
  const std::string text = j.dump();
  return Bytes(text.begin(), text.end());
}

inline SeedEnvelope envelope_from_payload(const Bytes& payload) {
  try {
    const nlohmann::json j = nlohmann::json::parse(payload.begin(), payload.end());
    SeedEnvelope env;
    env.sender_id = j.at("sender").get<std::string>();
    env.recipient_id = j.at("recipient").get<std::string>();
    env.ciphertext = from_base64(j.at("ciphertext").get<std::string>());
    env.signature = from_base64(j.at("signature").get<std::string>());
    return env;
  } catch (const nlohmann::json::exception& e) {
    throw ProtocolError(std::string("malformed seed envelope payload: ") + e.what());
  }
}

}  // namespace flake
