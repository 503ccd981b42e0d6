#pragma once

#include <cstdint>
#include <optional>

#include "flake/crypto.hpp"
#include "flake/rng.hpp"

namespace flake::testing {

/// Deterministic stand-in for SodiumCrypto. Keys, signatures, and sealed
/// boxes are reproducible mixes with the same shapes and failure modes as
/// the real provider (wrong key or tampered bytes fail to open or verify),
/// but no actual cryptography happens. In this fake, the public and secret
/// halves of a keypair are equal, which is exactly what makes it usable in
/// hermetic tests and unusable for anything else.
class FakeCrypto final : public CryptoProvider {
 public:
  SignKeyPair sign_keypair(std::uint64_t seed) override {
    const Bytes key = derive(seed, 0x7369676eULL);  // "sign"
    return SignKeyPair{key, key};
  }

  BoxKeyPair box_keypair(std::uint64_t seed) override {
    const Bytes key = derive(seed, 0x626f78ULL);  // "box"
    return BoxKeyPair{key, key};
  }

  Bytes sign(const Bytes& message, const Bytes& sign_secret_key) override {
    return tag(message, sign_secret_key);
  }

  bool verify(const Bytes& message, const Bytes& signature, const Bytes& sign_public_key) override {
    return signature == tag(message, sign_public_key);
  }

  Bytes seal(const Bytes& message, const Bytes& box_public_key) override {
    Bytes out = tag(message, box_public_key);
    std::uint64_t i = 0;
    CounterRng stream(digest(box_public_key), 0x7374726dULL);
    for (std::uint8_t byte : message) {
      out.push_back(byte ^ static_cast<std::uint8_t>(stream.next_u64() >> (8 * (i++ % 8))));
    }
    return out;
  }

  std::optional<Bytes> seal_open(const Bytes& sealed, const BoxKeyPair& recipient) override {
    if (sealed.size() < kTagBytes) return std::nullopt;
    Bytes plain;
    std::uint64_t i = 0;
    CounterRng stream(digest(recipient.public_key), 0x7374726dULL);
    for (std::size_t p = kTagBytes; p < sealed.size(); ++p) {
      plain.push_back(sealed[p] ^ static_cast<std::uint8_t>(stream.next_u64() >> (8 * (i++ % 8))));
    }
    const Bytes expected = tag(plain, recipient.public_key);
    if (!std::equal(expected.begin(), expected.end(), sealed.begin())) return std::nullopt;
    return plain;
  }

 private:
  static constexpr std::size_t kTagBytes = 16;

  static Bytes derive(std::uint64_t seed, std::uint64_t domain) {
    CounterRng rng(seed, domain);
    Bytes out;
    for (int word = 0; word < 4; ++word) {
      const std::uint64_t v = rng.next_u64();
      for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    return out;
  }

  static std::uint64_t digest(const Bytes& data) {
    std::uint64_t h = 0x811C9DC5ULL;
    for (std::uint8_t byte : data) h = mix64(h ^ byte);
    return h;
  }

  /// Keyed 16-byte checksum standing in for a MAC or signature.
  static Bytes tag(const Bytes& message, const Bytes& key) {
    const std::uint64_t h = mix64(digest(key) ^ digest(message) ^ message.size());
    Bytes out;
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(h >> (8 * i)));
    const std::uint64_t h2 = mix64(h);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(h2 >> (8 * i)));
    return out;
  }
};

}  // namespace flake::testing
