#pragma once

#include <sodium.h>

#include <cstdint>
#include <cstring>
#include <optional>
#include <string>
#include <vector>

#include "flake/error.hpp"

namespace flake {

using Bytes = std::vector<std::uint8_t>;

struct SignKeyPair {
  Bytes public_key;
  Bytes secret_key;
};

struct BoxKeyPair {
  Bytes public_key;
  Bytes secret_key;
};

/// Pluggable cryptography. The default SodiumCrypto provides real Ed25519
/// signatures and X25519 sealed boxes; tests may substitute a deterministic
/// fake so protocol behaviour can be asserted without key ceremonies.
class CryptoProvider {
 public:
  virtual ~CryptoProvider() = default;

  /// Deterministic keypairs: the same seed always yields the same keys, and
  /// signing and box keys drawn from one seed are unrelated.
  virtual SignKeyPair sign_keypair(std::uint64_t seed) = 0;
  virtual BoxKeyPair box_keypair(std::uint64_t seed) = 0;

  virtual Bytes sign(const Bytes& message, const Bytes& sign_secret_key) = 0;
  virtual bool verify(const Bytes& message, const Bytes& signature, const Bytes& sign_public_key) = 0;

  /// Anonymous public-key encryption to the recipient; only the holder of
  /// the matching secret key can open the result.
  virtual Bytes seal(const Bytes& message, const Bytes& box_public_key) = 0;
  virtual std::optional<Bytes> seal_open(const Bytes& sealed, const BoxKeyPair& recipient) = 0;
};

class SodiumCrypto final : public CryptoProvider {
 public:
  SodiumCrypto() {
    if (sodium_init() < 0) throw CryptoError("libsodium initialisation failed");
  }

  SignKeyPair sign_keypair(std::uint64_t seed) override {
    const Bytes material = derive_seed(seed, "flake.sign");
    SignKeyPair kp;
    kp.public_key.resize(crypto_sign_PUBLICKEYBYTES);
    kp.secret_key.resize(crypto_sign_SECRETKEYBYTES);
    if (crypto_sign_seed_keypair(kp.public_key.data(), kp.secret_key.data(), material.data()) != 0) {
      throw CryptoError("sign keypair derivation failed");
    }
    return kp;
  }

  BoxKeyPair box_keypair(std::uint64_t seed) override {
    const Bytes material = derive_seed(seed, "flake.box");
    BoxKeyPair kp;
    kp.public_key.resize(crypto_box_PUBLICKEYBYTES);
    kp.secret_key.resize(crypto_box_SECRETKEYBYTES);
    if (crypto_box_seed_keypair(kp.public_key.data(), kp.secret_key.data(), material.data()) != 0) {
      throw CryptoError("box keypair derivation failed");
    }
    return kp;
  }

  Bytes sign(const Bytes& message, const Bytes& sign_secret_key) override {
    if (sign_secret_key.size() != crypto_sign_SECRETKEYBYTES) {
      throw CryptoError("sign: secret key has wrong length");
    }
    Bytes sig(crypto_sign_BYTES);
    if (crypto_sign_detached(sig.data(), nullptr, message.data(), message.size(),
                             sign_secret_key.data()) != 0) {
      throw CryptoError("sign: signing failed");
    }
    return sig;
  }

  bool verify(const Bytes& message, const Bytes& signature, const Bytes& sign_public_key) override {
    if (signature.size() != crypto_sign_BYTES || sign_public_key.size() != crypto_sign_PUBLICKEYBYTES) {
      return false;
    }
    return crypto_sign_verify_detached(signature.data(), message.data(), message.size(),
                                       sign_public_key.data()) == 0;
  }

  Bytes seal(const Bytes& message, const Bytes& box_public_key) override {
    if (box_public_key.size() != crypto_box_PUBLICKEYBYTES) {
      throw CryptoError("seal: public key has wrong length");
    }
    Bytes sealed(crypto_box_SEALBYTES + message.size());
    if (crypto_box_seal(sealed.data(), message.data(), message.size(), box_public_key.data()) != 0) {
      throw CryptoError("seal: encryption failed");
    }
    return sealed;
  }

  std::optional<Bytes> seal_open(const Bytes& sealed, const BoxKeyPair& recipient) override {
    if (sealed.size() < crypto_box_SEALBYTES ||
        recipient.public_key.size() != crypto_box_PUBLICKEYBYTES ||
        recipient.secret_key.size() != crypto_box_SECRETKEYBYTES) {
      return std::nullopt;
    }
    Bytes plain(sealed.size() - crypto_box_SEALBYTES);
    if (crypto_box_seal_open(plain.data(), sealed.data(), sealed.size(), recipient.public_key.data(),
                             recipient.secret_key.data()) != 0) {
      return std::nullopt;
    }
    return plain;
  }

 private:
  /// Expand a 64-bit seed plus a domain label into 32 bytes of key material.
  static Bytes derive_seed(std::uint64_t seed, const char* domain) {
    Bytes input(std::strlen(domain) + 8);
    std::memcpy(input.data(), domain, std::strlen(domain));
    for (int i = 0; i < 8; ++i) {
      input[std::strlen(domain) + i] = static_cast<std::uint8_t>(seed >> (8 * i));
    }
    Bytes out(32);
    if (crypto_generichash(out.data(), out.size(), input.data(), input.size(), nullptr, 0) != 0) {
      throw CryptoError("seed derivation failed");
    }
    return out;
  }
};

inline std::string to_base64(const Bytes& data) {
  if (sodium_init() < 0) throw CryptoError("libsodium initialisation failed");
  std::string out(sodium_base64_ENCODED_LEN(data.size(), sodium_base64_VARIANT_ORIGINAL), '\0');
  sodium_bin2base64(out.data(), out.size(), data.data(), data.size(), sodium_base64_VARIANT_ORIGINAL);
  out.resize(std::strlen(out.c_str()));
  return out;
}

inline Bytes from_base64(const std::string& text) {
  if (sodium_init() < 0) throw CryptoError("libsodium initialisation failed");
  Bytes out(text.size());
  std::size_t out_len = 0;
  if (sodium_base642bin(out.data(), out.size(), text.data(), text.size(), nullptr, &out_len, nullptr,
                        sodium_base64_VARIANT_ORIGINAL) != 0) {
    throw ValidationError("invalid base64 input");
  }
  out.resize(out_len);
  return out;
}

}  // namespace flake
