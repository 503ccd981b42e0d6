#pragma once

#include <chrono>
#include <cmath>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "flake/envelope.hpp"
#include "flake/error.hpp"
#include "flake/gram.hpp"
#include "flake/masking.hpp"
#include "flake/matrix.hpp"
#include "flake/net.hpp"
#include "flake/registry.hpp"
#include "flake/svm.hpp"
#include "flake/wire.hpp"

namespace flake {

/// Transfer-time model: payload time plus latency inflated by the expected
/// retransmission fraction.
inline double estimate_comm_time(double datasize_bytes, double bandwidth_bytes_per_s,
                                 double latency_s, double packetloss_fraction) {
  if (bandwidth_bytes_per_s <= 0.0) {
    throw ValidationError("estimate_comm_time: bandwidth must be positive");
  }
  return datasize_bytes / bandwidth_bytes_per_s + latency_s * (1.0 + packetloss_fraction);
}

namespace protodetail {

inline Matrix labels_to_matrix(const std::vector<int>& labels) {
  Matrix m(labels.size(), 1);
  for (std::size_t i = 0; i < labels.size(); ++i) m(i, 0) = static_cast<double>(labels[i]);
  return m;
}

inline std::vector<int> labels_from_matrix(const Matrix& m) {
  if (m.rows() > 0 && m.cols() != 1) {
    throw ProtocolError("label payload must be a single column, got " + std::to_string(m.cols()));
  }
  std::vector<int> labels(m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const double v = m(i, 0);
    if (std::abs(v - std::round(v)) > 1e-9) {
      throw ProtocolError("label payload holds non-integer value " + std::to_string(v));
    }
    labels[i] = static_cast<int>(std::llround(v));
  }
  return labels;
}

inline Matrix vstack(const std::vector<Matrix>& parts) {
  if (parts.empty()) return Matrix(0, 0);
  std::size_t rows = 0;
  for (const Matrix& p : parts) rows += p.rows();
  Matrix out(rows, parts.front().cols());
  std::size_t at = 0;
  for (const Matrix& p : parts) {
    if (p.cols() != out.cols()) throw ProtocolError("chunk width changed mid-stream");
    out.set_block(at, 0, p);
    at += p.rows();
  }
  return out;
}

inline std::string error_text(const Frame& f) {
  return std::string(f.payload.begin(), f.payload.end());
}

}  // namespace protodetail

/// Streams one masked payload as ceil(n / chunk_rows) MASKED_CHUNK frames
/// followed by CHUNK_END, whose payload carries the sample labels as an
/// n-by-1 matrix. The receiver reassembles chunks in arrival order.
inline void chunk_and_send(const MaskedMatrix& masked, const std::vector<int>& labels,
                           std::size_t chunk_rows, TcpStream& conn) {
  if (chunk_rows < 1) throw ValidationError("chunk_and_send: chunk_rows must be >= 1");
  if (labels.size() != masked.sample_count()) {
    throw ValidationError("chunk_and_send: " + std::to_string(labels.size()) + " labels for " +
                          std::to_string(masked.sample_count()) + " samples");
  }
  const Matrix& payload = masked.payload;
  const auto iteration = static_cast<std::uint32_t>(masked.iteration);
  for (std::size_t start = 0; start < payload.rows(); start += chunk_rows) {
    const std::size_t len = std::min(chunk_rows, payload.rows() - start);
    conn.send_frame(Frame{MsgType::masked_chunk, masked.party_id, iteration,
                          encode_matrix(payload.block(start, 0, len, payload.cols()))});
  }
  conn.send_frame(Frame{MsgType::chunk_end, masked.party_id, iteration,
                        encode_matrix(protodetail::labels_to_matrix(labels))});
}

/// One round of samples from a party's local source.
struct RoundData {
  Matrix features;
  std::vector<int> labels;
};

struct InputPartyConfig {
  PartyRegistry registry;
  PartyKeys keys;
  CryptoProvider* crypto = nullptr;
  std::uint64_t private_seed = 1;  // seeds the party-private left-inverse family
  double timeout_s = 30.0;
  std::size_t chunk_rows = 256;
  std::size_t rounds = 1;
  SeedMaterial material;  // distributed by this party if it is elected leader
  std::function<RoundData(std::size_t round)> data_for_round;
};

struct InputPartyResult {
  std::string leader_id;
  SeedMaterial material;
  std::size_t rounds_completed = 0;
};

/// Input-party state machine: hello, seed distribution or receipt, then one
/// mask-and-send pass per round, each acknowledged by the function party.
/// Single-threaded by design.
inline InputPartyResult run_input_party(const InputPartyConfig& cfg) {
  if (cfg.crypto == nullptr) throw ValidationError("run_input_party: crypto provider required");
  if (!cfg.data_for_round) throw ValidationError("run_input_party: data source required");
  if (cfg.rounds < 1) throw ValidationError("run_input_party: rounds must be >= 1");
  const std::string leader = elect_leader(cfg.registry);
  const std::string& self = cfg.keys.party_id;
  if (!cfg.registry.contains(self)) throw ProtocolError("party '" + self + "' not in registry");

  TcpStream conn =
      TcpStream::connect(cfg.registry.function_address, cfg.registry.function_port, cfg.timeout_s);
  conn.send_frame(Frame{MsgType::hello, self, 0, {}});

  SeedMaterial material = cfg.material;
  if (leader == self) {
    for (const PartyInfo& peer : cfg.registry.input_parties) {
      if (peer.party_id == self) continue;
      const SeedEnvelope env = seal_seed(*cfg.crypto, material, peer.party_id, cfg.registry, cfg.keys);
      conn.send_frame(Frame{MsgType::seed_envelope, self, 0, envelope_to_payload(env)});
    }
  } else {
    const Frame f = conn.recv_frame();
    if (f.type == MsgType::error) {
      throw ProtocolError("session aborted: " + protodetail::error_text(f));
    }
    if (f.type != MsgType::seed_envelope) {
      throw ProtocolError("expected relayed seed envelope, got msg_type " +
                          std::to_string(static_cast<int>(f.type)));
    }
    material = open_seed(*cfg.crypto, envelope_from_payload(f.payload), cfg.keys, cfg.registry);
  }

  MaskContext ctx = build_mask_context(material.seed, material.dims, self, cfg.private_seed);
  InputPartyResult result{leader, material, 0};
  for (std::size_t round = 0; round < cfg.rounds; ++round) {
    if (round > 0) ctx = advance_iteration(ctx);
    const RoundData data = cfg.data_for_round(round);
    const MaskedMatrix masked = mask(data.features, ctx);
    chunk_and_send(masked, data.labels, cfg.chunk_rows, conn);

    const Frame ack = conn.recv_frame();
    if (ack.type == MsgType::error) {
      throw ProtocolError("session aborted: " + protodetail::error_text(ack));
    }
    if (ack.type != MsgType::gram_ack || ack.iteration != round) {
      throw ProtocolError("expected gram ack for round " + std::to_string(round));
    }
    ++result.rounds_completed;
  }
  return result;
}

struct FunctionPartyConfig {
  PartyRegistry registry;
  TcpListener* listener = nullptr;  // bound by the caller, which therefore knows the port
  double timeout_s = 30.0;
  std::size_t rounds = 1;
  bool train = false;
  std::vector<double> c_grid;     // empty: default grid
  std::vector<int> degree_grid;   // empty: default grid
  CvOptions cv;
  std::function<void(const Frame&)> frame_observer;  // test hook, sees every received frame
};

struct FunctionPartyResult {
  GramStore store;                       // final gram plus stored payloads for later updates
  std::vector<int> labels;               // row-aligned with store.gram()
  std::vector<std::string> party_order;  // registry order, the segment order per round
  std::optional<CvReport> report;
  std::size_t relayed_envelopes = 0;
};

/// Function-party state machine. Accepts every registered input party, then
/// serves each connection from its own receiver thread. Seed envelopes are
/// relayed to their recipient without being opened; this process holds no
/// key that could open them. Gram assembly for a round starts only after
/// every party's CHUNK_END; the main thread is the only writer to the store
/// and to the sockets.
inline FunctionPartyResult run_function_party(const FunctionPartyConfig& cfg) {
  if (cfg.listener == nullptr) throw ValidationError("run_function_party: listener required");
  if (cfg.rounds < 1) throw ValidationError("run_function_party: rounds must be >= 1");
  const std::size_t n_parties = cfg.registry.input_parties.size();
  if (n_parties < 2) {
    throw ProtocolError("a private session requires at least 2 input parties, got " +
                        std::to_string(n_parties));
  }

  // Accept and identify every party before anything else flows; afterwards
  // a relay target always has a live connection.
  std::vector<TcpStream> conns;
  std::map<std::string, std::size_t> conn_index;
  for (std::size_t i = 0; i < n_parties; ++i) {
    TcpStream stream = cfg.listener->accept(cfg.timeout_s);
    const Frame hello = stream.recv_frame();
    if (hello.type != MsgType::hello) throw ProtocolError("expected hello as first frame");
    if (!cfg.registry.contains(hello.party_id)) {
      throw ProtocolError("hello from unregistered party '" + hello.party_id + "'");
    }
    if (conn_index.count(hello.party_id) != 0) {
      throw ProtocolError("duplicate hello from party '" + hello.party_id + "'");
    }
    if (cfg.frame_observer) cfg.frame_observer(hello);
    conn_index[hello.party_id] = conns.size();
    conns.push_back(std::move(stream));
  }

  struct Mailbox {
    std::mutex mu;
    std::condition_variable cv;
    std::deque<Frame> frames;
    std::string failure;
  } box;

  std::vector<std::thread> receivers;
  auto receive_loop = [&](std::size_t idx, const std::string& expected_id) {
    std::size_t ends_seen = 0;
    try {
      while (ends_seen < cfg.rounds) {
        Frame f = conns[idx].recv_frame();
        if (f.party_id != expected_id) {
          throw ProtocolError("frame claims party '" + f.party_id + "' on connection of '" +
                              expected_id + "'");
        }
        if (f.type == MsgType::chunk_end) ++ends_seen;
        const bool is_error = f.type == MsgType::error;
        {
          std::lock_guard lock(box.mu);
          box.frames.push_back(std::move(f));
        }
        box.cv.notify_one();
        if (is_error) return;
      }
    } catch (const std::exception& e) {
      std::lock_guard lock(box.mu);
      if (box.failure.empty()) box.failure = expected_id + ": " + e.what();
      box.cv.notify_one();
    }
  };
  receivers.reserve(n_parties);
  for (const auto& [id, idx] : conn_index) receivers.emplace_back(receive_loop, idx, id);

  auto abort_session = [&](const std::string& reason) {
    const std::vector<std::uint8_t> payload(reason.begin(), reason.end());
    for (TcpStream& c : conns) {
      try {
        c.send_frame(Frame{MsgType::error, "", 0, payload});
      } catch (const IoError&) {
        // Peer already gone; the session is aborting anyway.
      }
    }
    for (TcpStream& c : conns) c.close();
    for (std::thread& t : receivers) {
      if (t.joinable()) t.join();
    }
  };

  FunctionPartyResult result;
  for (const PartyInfo& p : cfg.registry.input_parties) result.party_order.push_back(p.party_id);

  try {
    std::map<std::string, std::vector<Matrix>> round_chunks;
    std::map<std::string, std::vector<int>> round_labels;
    std::map<std::string, bool> round_done;

    for (std::size_t round = 0; round < cfg.rounds; ++round) {
      round_chunks.clear();
      round_labels.clear();
      round_done.clear();

      while (round_done.size() < n_parties) {
        Frame f;
        {
          std::unique_lock lock(box.mu);
          const bool woke = box.cv.wait_for(
              lock, std::chrono::duration<double>(cfg.timeout_s),
              [&] { return !box.frames.empty() || !box.failure.empty(); });
          if (!box.failure.empty()) throw ProtocolError("receive failed: " + box.failure);
          if (!woke) {
            throw ProtocolError("round " + std::to_string(round) + ": missing party past timeout");
          }
          f = std::move(box.frames.front());
          box.frames.pop_front();
        }
        if (cfg.frame_observer) cfg.frame_observer(f);

        switch (f.type) {
          case MsgType::error:
            throw ProtocolError("party '" + f.party_id + "' aborted: " + protodetail::error_text(f));
          case MsgType::seed_envelope: {
            // Blind relay: addressing comes from the envelope JSON; the
            // ciphertext is passed through untouched and unopened.
            const SeedEnvelope env = envelope_from_payload(f.payload);
            if (env.sender_id != f.party_id) {
              throw ProtocolError("envelope sender '" + env.sender_id + "' does not match frame");
            }
            const auto it = conn_index.find(env.recipient_id);
            if (it == conn_index.end()) {
              throw ProtocolError("envelope for unknown recipient '" + env.recipient_id + "'");
            }
            conns[it->second].send_frame(f);
            ++result.relayed_envelopes;
            break;
          }
          case MsgType::masked_chunk: {
            if (f.iteration != round) {
              throw ProtocolError("chunk for round " + std::to_string(f.iteration) +
                                  " during round " + std::to_string(round));
            }
            if (round_done.count(f.party_id) != 0) {
              throw ProtocolError("chunk from '" + f.party_id + "' after its chunk_end");
            }
            round_chunks[f.party_id].push_back(decode_matrix(f.payload));
            break;
          }
          case MsgType::chunk_end: {
            if (f.iteration != round) {
              throw ProtocolError("chunk_end for round " + std::to_string(f.iteration) +
                                  " during round " + std::to_string(round));
            }
            round_labels[f.party_id] = protodetail::labels_from_matrix(decode_matrix(f.payload));
            round_done[f.party_id] = true;
            break;
          }
          case MsgType::hello:
          case MsgType::gram_ack:
            throw ProtocolError("unexpected msg_type " + std::to_string(static_cast<int>(f.type)) +
                                " from '" + f.party_id + "'");
        }
      }

      // All parties finished this round: fold their payloads into the store
      // in registry order so segment layout is deterministic.
      for (const std::string& id : result.party_order) {
        MaskedMatrix masked;
        masked.payload = protodetail::vstack(round_chunks[id]);
        masked.party_id = id;
        masked.iteration = static_cast<std::uint32_t>(round);
        if (round_labels[id].size() != masked.sample_count()) {
          throw ProtocolError("party '" + id + "' sent " + std::to_string(round_labels[id].size()) +
                              " labels for " + std::to_string(masked.sample_count()) + " rows");
        }
        if (round == 0) {
          result.store.add_party(masked);
        } else {
          result.store.extend_with_data(masked);
        }
        result.labels.insert(result.labels.end(), round_labels[id].begin(), round_labels[id].end());
      }

      for (TcpStream& c : conns) {
        c.send_frame(Frame{MsgType::gram_ack, "", static_cast<std::uint32_t>(round), {}});
      }
    }

    for (std::thread& t : receivers) t.join();
  } catch (...) {
    abort_session("function party error");
    throw;
  }

  if (cfg.train) {
    const std::vector<double> cs = cfg.c_grid.empty() ? default_c_grid() : cfg.c_grid;
    const std::vector<int> ps = cfg.degree_grid.empty() ? default_degree_grid() : cfg.degree_grid;
    result.report = cross_validate_grid(result.store.gram().values(), result.labels, cs, ps, cfg.cv);
  }
  return result;
}

}  // namespace flake
