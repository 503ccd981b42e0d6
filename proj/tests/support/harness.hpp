#pragma once

#include <cstdint>
#include <exception>
#include <functional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "flake/crypto.hpp"
#include "flake/net.hpp"
#include "flake/protocol.hpp"
#include "flake/registry.hpp"
#include "support/fake_crypto.hpp"

namespace flake::testing {

/// Declarative description of a loopback session: n input parties plus the
/// function party, all on threads in this process, talking real TCP on
/// 127.0.0.1 with an ephemeral port.
struct SessionSpec {
  std::size_t parties = 3;
  std::size_t samples_per_party = 5;
  std::size_t rounds = 1;
  MaskDims dims{4, 8};
  std::uint64_t mask_seed = 7;
  std::size_t chunk_rows = 256;
  double timeout_s = 15.0;
  bool train = false;
  std::vector<double> c_grid;
  std::vector<int> degree_grid;
  CvOptions cv;
  /// Data per (party index, round); defaulted to seeded Gaussian blobs.
  std::function<RoundData(std::size_t party, std::size_t round)> data;
  std::function<void(const Frame&)> frame_observer;
};

struct SessionOutcome {
  FunctionPartyResult function_result;
  std::vector<InputPartyResult> input_results;  // index = party index
  PartyRegistry registry;
  std::vector<PartyKeys> keys;  // index = party index
};

inline std::string party_name(std::size_t index) { return "p" + std::to_string(index); }

inline std::uint64_t party_private_seed(std::size_t index) { return 1000 + index; }

inline RoundData default_round_data(const SessionSpec& spec, std::size_t party, std::size_t round) {
  CounterRng rng(spec.mask_seed ^ (party * 7919 + round * 104729 + 13), 0x64617461ULL);
  RoundData data;
  data.features = Matrix(spec.samples_per_party, spec.dims.f);
  data.labels.resize(spec.samples_per_party);
  for (std::size_t i = 0; i < spec.samples_per_party; ++i) {
    const int label = i % 2 == 0 ? 1 : -1;
    data.labels[i] = label;
    for (std::size_t j = 0; j < spec.dims.f; ++j) {
      data.features(i, j) = rng.next_gaussian() + label * 1.5;
    }
  }
  return data;
}

inline SessionOutcome run_loopback_session(const SessionSpec& spec) {
  FakeCrypto crypto;

  SessionOutcome out;
  for (std::size_t i = 0; i < spec.parties; ++i) {
    out.keys.push_back(derive_party_keys(crypto, party_name(i), 100 + i));
    out.registry.input_parties.push_back(party_info_from_keys(out.keys.back(), "127.0.0.1", 0));
  }
  out.registry.function_sign_public_key_b64 = to_base64(crypto.sign_keypair(999).public_key);

  TcpListener listener("127.0.0.1", 0);
  out.registry.function_address = "127.0.0.1";
  out.registry.function_port = listener.port();

  FunctionPartyConfig fn_cfg;
  fn_cfg.registry = out.registry;
  fn_cfg.listener = &listener;
  fn_cfg.timeout_s = spec.timeout_s;
  fn_cfg.rounds = spec.rounds;
  fn_cfg.train = spec.train;
  fn_cfg.c_grid = spec.c_grid;
  fn_cfg.degree_grid = spec.degree_grid;
  fn_cfg.cv = spec.cv;
  fn_cfg.frame_observer = spec.frame_observer;

  std::exception_ptr fn_error;
  std::thread fn_thread([&] {
    try {
      out.function_result = run_function_party(fn_cfg);
    } catch (...) {
      fn_error = std::current_exception();
    }
  });

  out.input_results.resize(spec.parties);
  std::vector<std::exception_ptr> party_errors(spec.parties);
  std::vector<std::thread> party_threads;
  for (std::size_t i = 0; i < spec.parties; ++i) {
    party_threads.emplace_back([&, i] {
      try {
        InputPartyConfig cfg;
        cfg.registry = out.registry;
        cfg.keys = out.keys[i];
        cfg.crypto = &crypto;
        cfg.private_seed = party_private_seed(i);
        cfg.timeout_s = spec.timeout_s;
        cfg.chunk_rows = spec.chunk_rows;
        cfg.rounds = spec.rounds;
        cfg.material = SeedMaterial{spec.mask_seed, spec.dims};
        cfg.data_for_round = [&spec, i](std::size_t round) {
          return spec.data ? spec.data(i, round) : default_round_data(spec, i, round);
        };
        out.input_results[i] = run_input_party(cfg);
      } catch (...) {
        party_errors[i] = std::current_exception();
      }
    });
  }

  for (std::thread& t : party_threads) t.join();
  fn_thread.join();

  if (fn_error) std::rethrow_exception(fn_error);
  for (const std::exception_ptr& e : party_errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

}  // namespace flake::testing
