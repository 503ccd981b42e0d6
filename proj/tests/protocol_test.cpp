#include "flake/protocol.hpp"

#include <gtest/gtest.h>

#include <atomic>
#include <string>
#include <thread>
#include <vector>

#include "flake/error.hpp"
#include "flake/masking.hpp"
#include "flake/net.hpp"
#include "support/fake_crypto.hpp"
#include "support/harness.hpp"
#include "support/oracles.hpp"

namespace flake {
namespace {

using testing::party_name;
using testing::party_private_seed;
using testing::run_loopback_session;
using testing::SessionSpec;

TEST(EstimateCommTime, MatchesTransferTimeModel) {
  EXPECT_NEAR(estimate_comm_time(1.31e6, 1.25e6, 0.0, 0.0), 1.048, 1e-9);
  EXPECT_NEAR(estimate_comm_time(1.31e6, 1.25e6, 0.1, 0.02), 1.150, 1e-9);
  EXPECT_NEAR(estimate_comm_time(0.0, 5.0, 0.25, 0.5), 0.375, 1e-12);
}

TEST(EstimateCommTime, RejectsNonPositiveBandwidth) {
  EXPECT_THROW(estimate_comm_time(1.0, 0.0, 0.0, 0.0), ValidationError);
  EXPECT_THROW(estimate_comm_time(1.0, -2.0, 0.0, 0.0), ValidationError);
}

Matrix seeded_matrix(std::uint64_t seed, std::size_t rows, std::size_t cols) {
  CounterRng rng(seed, 0);
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) m(i, j) = rng.next_gaussian();
  }
  return m;
}

/// Runs chunk_and_send against a live loopback socket and returns the frames
/// the receiver saw, in order.
std::vector<Frame> send_and_collect(const MaskedMatrix& masked, const std::vector<int>& labels,
                                    std::size_t chunk_rows) {
  TcpListener listener("127.0.0.1", 0);
  std::thread sender([&] {
    TcpStream conn = TcpStream::connect("127.0.0.1", listener.port(), 5.0);
    chunk_and_send(masked, labels, chunk_rows, conn);
  });
  TcpStream conn = listener.accept(5.0);
  std::vector<Frame> frames;
  while (true) {
    frames.push_back(conn.recv_frame());
    if (frames.back().type == MsgType::chunk_end) break;
  }
  sender.join();
  return frames;
}

TEST(ChunkAndSend, SplitsRowsByCeilingRule) {
  MaskedMatrix masked{seeded_matrix(3, 5, 4), "alice", 2};
  const std::vector<int> labels = {1, -1, 1, -1, 1};
  const std::vector<Frame> frames = send_and_collect(masked, labels, 2);

  // n=5, chunk_rows=2: chunks of 2, 2, 1 rows, then the terminator.
  ASSERT_EQ(frames.size(), 4u);
  const std::size_t expected_rows[] = {2, 2, 1};
  for (int i = 0; i < 3; ++i) {
    EXPECT_EQ(frames[i].type, MsgType::masked_chunk);
    EXPECT_EQ(frames[i].party_id, "alice");
    EXPECT_EQ(frames[i].iteration, 2u);
    EXPECT_EQ(decode_matrix(frames[i].payload).rows(), expected_rows[i]);
  }
  EXPECT_EQ(frames[3].type, MsgType::chunk_end);
  EXPECT_EQ(protodetail::labels_from_matrix(decode_matrix(frames[3].payload)), labels);
}

TEST(ChunkAndSend, OversizedChunkRowsYieldsSingleChunk) {
  MaskedMatrix masked{seeded_matrix(4, 3, 6), "bob", 0};
  const std::vector<Frame> frames = send_and_collect(masked, {1, 1, -1}, 100);
  ASSERT_EQ(frames.size(), 2u);
  EXPECT_EQ(decode_matrix(frames[0].payload), masked.payload);
}

TEST(ChunkAndSend, ReassemblyIsBitIdentical) {
  MaskedMatrix masked{seeded_matrix(11, 100, 10), "carol", 0};
  const std::vector<int> labels(100, 1);
  const std::vector<Frame> frames = send_and_collect(masked, labels, 7);

  std::vector<Matrix> chunks;
  for (const Frame& f : frames) {
    if (f.type == MsgType::masked_chunk) chunks.push_back(decode_matrix(f.payload));
  }
  EXPECT_EQ(chunks.size(), 15u);  // ceil(100 / 7)
  EXPECT_EQ(protodetail::vstack(chunks), masked.payload);
}

TEST(ChunkAndSend, ValidatesArguments) {
  MaskedMatrix masked{seeded_matrix(5, 4, 3), "d", 0};
  TcpStream unconnected;
  EXPECT_THROW(chunk_and_send(masked, {1, 1, 1, 1}, 0, unconnected), ValidationError);
  EXPECT_THROW(chunk_and_send(masked, {1, 1}, 2, unconnected), ValidationError);
}

TEST(Net, ConnectToClosedPortTimesOut) {
  TcpListener probe("127.0.0.1", 0);
  const std::uint16_t dead_port = probe.port();
  // Destroying the listener frees the port; nothing accepts there now.
  {
    TcpListener discard(std::move(probe));
  }
  EXPECT_THROW(TcpStream::connect("127.0.0.1", dead_port, 0.3), IoError);
}

TEST(Net, AcceptTimesOutWithoutClient) {
  TcpListener listener("127.0.0.1", 0);
  EXPECT_GT(listener.port(), 0);
  EXPECT_THROW(listener.accept(0.2), IoError);
}

TEST(LoopbackSession, GramMatchesPlaintextOracle) {
  // Three parties with 4, 3, and 2 samples.
  const std::vector<Matrix> plain = {seeded_matrix(21, 4, 5), seeded_matrix(22, 3, 5),
                                     seeded_matrix(23, 2, 5)};
  const std::vector<std::vector<int>> labels = {{1, -1, 1, -1}, {1, 1, -1}, {-1, 1}};

  SessionSpec spec;
  spec.parties = 3;
  spec.dims = MaskDims(5, 10);
  spec.data = [&](std::size_t party, std::size_t) {
    return RoundData{plain[party], labels[party]};
  };
  const auto outcome = run_loopback_session(spec);

  const GramMatrix& gram = outcome.function_result.store.gram();
  EXPECT_EQ(gram.total_samples(), 9u);
  EXPECT_EQ(gram.block_index().size(), 9u);  // 3x3 party pairs
  const Matrix expected = oracle::plaintext_gram(plain);
  EXPECT_LE(relative_frobenius_distance(gram.values(), expected), 1e-8);
  validate_gram(gram);

  std::vector<int> expected_labels;
  for (const auto& l : labels) expected_labels.insert(expected_labels.end(), l.begin(), l.end());
  EXPECT_EQ(outcome.function_result.labels, expected_labels);
}

TEST(LoopbackSession, LeaderDistributesSeedToAllOthers) {
  SessionSpec spec;
  spec.parties = 4;
  const auto outcome = run_loopback_session(spec);

  // p0 is the lexicographic leader; it fans out one envelope per peer.
  EXPECT_EQ(outcome.function_result.relayed_envelopes, 3u);
  for (const InputPartyResult& r : outcome.input_results) {
    EXPECT_EQ(r.leader_id, "p0");
    EXPECT_EQ(r.material, (SeedMaterial{spec.mask_seed, spec.dims}));
    EXPECT_EQ(r.rounds_completed, 1u);
  }
}

TEST(LoopbackSession, StoredPayloadsAreBitIdenticalToLocalMasking) {
  SessionSpec spec;
  spec.parties = 2;
  spec.samples_per_party = 6;
  const auto outcome = run_loopback_session(spec);

  // Re-derive party p1's mask context offline; the payload the function
  // party stored must match the local masking bit for bit.
  const MaskContext ctx =
      build_mask_context(spec.mask_seed, spec.dims, party_name(1), party_private_seed(1));
  const RoundData data = testing::default_round_data(spec, 1, 0);
  const MaskedMatrix local = mask(data.features, ctx);

  const auto stored = outcome.function_result.store.stored_payloads(party_name(1));
  ASSERT_EQ(stored.size(), 1u);
  EXPECT_EQ(stored[0].payload, local.payload);
}

TEST(LoopbackSession, MultiRoundUpdatesExtendTheGram) {
  SessionSpec spec;
  spec.parties = 3;
  spec.samples_per_party = 4;
  spec.rounds = 3;
  spec.dims = MaskDims(3, 6);
  const auto outcome = run_loopback_session(spec);

  const GramMatrix& gram = outcome.function_result.store.gram();
  EXPECT_EQ(gram.segments().size(), 9u);  // 3 parties x 3 rounds
  EXPECT_EQ(gram.total_samples(), 36u);

  // Plaintext concatenated in segment order: parties within each round.
  std::vector<Matrix> plain;
  for (std::size_t round = 0; round < spec.rounds; ++round) {
    for (std::size_t party = 0; party < spec.parties; ++party) {
      plain.push_back(testing::default_round_data(spec, party, round).features);
    }
  }
  EXPECT_LE(relative_frobenius_distance(gram.values(), oracle::plaintext_gram(plain)), 1e-8);

  // Later rounds mask under advanced contexts.
  MaskContext ctx = build_mask_context(spec.mask_seed, spec.dims, party_name(2), party_private_seed(2));
  ctx = advance_iteration(ctx);
  ctx = advance_iteration(ctx);
  const MaskedMatrix local = mask(testing::default_round_data(spec, 2, 2).features, ctx);
  const auto stored = outcome.function_result.store.stored_payloads(party_name(2));
  ASSERT_EQ(stored.size(), 3u);
  EXPECT_EQ(stored[2].payload, local.payload);
  EXPECT_EQ(stored[2].iteration, 2u);
}

TEST(LoopbackSession, FramesFromInputPartiesEncodeMaskedWidthOnly) {
  std::vector<Frame> captured;
  SessionSpec spec;
  spec.parties = 3;
  spec.dims = MaskDims(3, 9);  // deliberately k != 2f or f+1
  spec.chunk_rows = 2;
  spec.frame_observer = [&](const Frame& f) { captured.push_back(f); };
  run_loopback_session(spec);

  std::size_t chunk_frames = 0;
  for (const Frame& f : captured) {
    if (f.type == MsgType::masked_chunk) {
      const Matrix m = decode_matrix(f.payload);
      EXPECT_EQ(m.cols(), spec.dims.k);
      EXPECT_NE(m.cols(), spec.dims.f);
      ++chunk_frames;
    }
    if (f.type == MsgType::chunk_end) {
      EXPECT_EQ(decode_matrix(f.payload).cols(), 1u);
    }
  }
  // 5 samples in chunks of 2 rows: 3 frames per party.
  EXPECT_EQ(chunk_frames, 9u);
}

TEST(LoopbackSession, RelayedEnvelopesOpenOnlyForTheirRecipients) {
  std::vector<Frame> captured;
  SessionSpec spec;
  spec.parties = 3;
  spec.frame_observer = [&](const Frame& f) {
    if (f.type == MsgType::seed_envelope) captured.push_back(f);
  };
  const auto outcome = run_loopback_session(spec);
  ASSERT_EQ(captured.size(), 2u);

  testing::FakeCrypto crypto;
  for (const Frame& f : captured) {
    const SeedEnvelope env = envelope_from_payload(f.payload);

    // The intended recipient opens it.
    std::size_t recipient = env.recipient_id == party_name(1) ? 1 : 2;
    ASSERT_EQ(env.recipient_id, party_name(recipient));
    const SeedMaterial opened =
        open_seed(crypto, env, outcome.keys[recipient], outcome.registry);
    EXPECT_EQ(opened, (SeedMaterial{spec.mask_seed, spec.dims}));

    // The function party's own key material cannot: box keys derived from
    // its seed do not decrypt, and no other party's keys do either.
    PartyKeys function_as_recipient;
    function_as_recipient.party_id = env.recipient_id;
    function_as_recipient.sign = crypto.sign_keypair(999);
    function_as_recipient.box = crypto.box_keypair(999);
    EXPECT_THROW(open_seed(crypto, env, function_as_recipient, outcome.registry), CryptoError);

    PartyKeys other = outcome.keys[recipient == 1 ? 2 : 1];
    other.party_id = env.recipient_id;  // force past the addressing check
    EXPECT_THROW(open_seed(crypto, env, other, outcome.registry), CryptoError);
  }
}

TEST(LoopbackSession, DeterministicAcrossRuns) {
  SessionSpec spec;
  spec.parties = 3;
  spec.samples_per_party = 4;
  spec.rounds = 2;
  const auto a = run_loopback_session(spec);
  const auto b = run_loopback_session(spec);
  EXPECT_EQ(a.function_result.store.gram().values(), b.function_result.store.gram().values());
  EXPECT_EQ(a.function_result.labels, b.function_result.labels);
  EXPECT_EQ(a.function_result.party_order, b.function_result.party_order);
}

TEST(LoopbackSession, TrainingProducesCvReport) {
  SessionSpec spec;
  spec.parties = 3;
  spec.samples_per_party = 8;
  spec.train = true;
  spec.c_grid = {1.0};
  spec.degree_grid = {1};
  spec.cv.folds = 2;
  const auto outcome = run_loopback_session(spec);

  ASSERT_TRUE(outcome.function_result.report.has_value());
  const CvReport& report = *outcome.function_result.report;
  EXPECT_EQ(report.best_c, 1.0);
  EXPECT_EQ(report.best_p, 1);
  EXPECT_EQ(report.fold_aucs.size(), 2u);
  EXPECT_GE(report.mean_auc, 0.5);
  EXPECT_LE(report.mean_auc, 1.0 + 1e-12);
}

TEST(InputParty, ValidatesConfigBeforeTouchingTheNetwork) {
  testing::FakeCrypto crypto;
  PartyRegistry registry;
  for (std::size_t i = 0; i < 2; ++i) {
    registry.input_parties.push_back(
        party_info_from_keys(derive_party_keys(crypto, party_name(i), i), "127.0.0.1", 0));
  }

  InputPartyConfig cfg;
  cfg.registry = registry;
  cfg.keys = derive_party_keys(crypto, "p0", 0);
  cfg.data_for_round = [](std::size_t) { return RoundData{Matrix(1, 1), {1}}; };
  EXPECT_THROW(run_input_party(cfg), ValidationError);  // no crypto provider

  cfg.crypto = &crypto;
  cfg.data_for_round = nullptr;
  EXPECT_THROW(run_input_party(cfg), ValidationError);  // no data source

  cfg.data_for_round = [](std::size_t) { return RoundData{Matrix(1, 1), {1}}; };
  cfg.keys = derive_party_keys(crypto, "ghost", 9);
  EXPECT_THROW(run_input_party(cfg), ProtocolError);  // not in registry

  cfg.keys = derive_party_keys(crypto, "p0", 0);
  cfg.registry.input_parties.resize(1);
  EXPECT_THROW(run_input_party(cfg), ProtocolError);  // single-party session
}

TEST(FunctionParty, FailsWhenAPartyNeverConnects) {
  testing::FakeCrypto crypto;
  PartyRegistry registry;
  for (std::size_t i = 0; i < 2; ++i) {
    registry.input_parties.push_back(
        party_info_from_keys(derive_party_keys(crypto, party_name(i), i), "127.0.0.1", 0));
  }
  TcpListener listener("127.0.0.1", 0);
  registry.function_port = listener.port();

  FunctionPartyConfig cfg;
  cfg.registry = registry;
  cfg.listener = &listener;
  cfg.timeout_s = 0.3;
  EXPECT_THROW(run_function_party(cfg), IoError);
}

TEST(FunctionParty, RejectsHelloFromUnregisteredParty) {
  testing::FakeCrypto crypto;
  PartyRegistry registry;
  for (std::size_t i = 0; i < 2; ++i) {
    registry.input_parties.push_back(
        party_info_from_keys(derive_party_keys(crypto, party_name(i), i), "127.0.0.1", 0));
  }
  TcpListener listener("127.0.0.1", 0);
  registry.function_port = listener.port();

  std::thread rogue([&] {
    try {
      TcpStream conn = TcpStream::connect("127.0.0.1", listener.port(), 5.0);
      conn.send_frame(Frame{MsgType::hello, "intruder", 0, {}});
      conn.recv_frame();
    } catch (const std::exception&) {
      // The function party slams the door; any error here is expected.
    }
  });

  FunctionPartyConfig cfg;
  cfg.registry = registry;
  cfg.listener = &listener;
  cfg.timeout_s = 5.0;
  EXPECT_THROW(run_function_party(cfg), ProtocolError);
  rogue.join();
}

TEST(FunctionParty, AbortsSessionOnMismatchedPayloadWidths) {
  testing::FakeCrypto crypto;
  std::vector<PartyKeys> keys;
  PartyRegistry registry;
  for (std::size_t i = 0; i < 2; ++i) {
    keys.push_back(derive_party_keys(crypto, party_name(i), 100 + i));
    registry.input_parties.push_back(party_info_from_keys(keys.back(), "127.0.0.1", 0));
  }
  TcpListener listener("127.0.0.1", 0);
  registry.function_address = "127.0.0.1";
  registry.function_port = listener.port();

  FunctionPartyConfig fn_cfg;
  fn_cfg.registry = registry;
  fn_cfg.listener = &listener;
  fn_cfg.timeout_s = 10.0;

  std::exception_ptr fn_error;
  std::thread fn_thread([&] {
    try {
      run_function_party(fn_cfg);
    } catch (...) {
      fn_error = std::current_exception();
    }
  });

  // Honest leader p0 masks to k=8 columns.
  std::exception_ptr leader_error;
  std::thread leader([&] {
    try {
      InputPartyConfig cfg;
      cfg.registry = registry;
      cfg.keys = keys[0];
      cfg.crypto = &crypto;
      cfg.material = SeedMaterial{7, MaskDims(4, 8)};
      cfg.timeout_s = 10.0;
      cfg.data_for_round = [](std::size_t) {
        return RoundData{seeded_matrix(5, 3, 4), {1, -1, 1}};
      };
      run_input_party(cfg);
    } catch (...) {
      leader_error = std::current_exception();
    }
  });

  // Rogue p1 ignores the seed material and sends 5-column payloads.
  std::thread rogue([&] {
    try {
      TcpStream conn = TcpStream::connect("127.0.0.1", listener.port(), 10.0);
      conn.send_frame(Frame{MsgType::hello, "p1", 0, {}});
      const Frame envelope = conn.recv_frame();  // relayed seed, ignored
      (void)envelope;
      conn.send_frame(Frame{MsgType::masked_chunk, "p1", 0, encode_matrix(seeded_matrix(9, 2, 5))});
      conn.send_frame(Frame{MsgType::chunk_end, "p1", 0,
                            encode_matrix(protodetail::labels_to_matrix({1, -1}))});
      conn.recv_frame();
    } catch (const std::exception&) {
      // Abort reaches the rogue as an error frame or a closed connection.
    }
  });

  fn_thread.join();
  leader.join();
  rogue.join();

  ASSERT_TRUE(fn_error != nullptr);
  EXPECT_THROW(std::rethrow_exception(fn_error), ProtocolError);
  ASSERT_TRUE(leader_error != nullptr);
  EXPECT_THROW(std::rethrow_exception(leader_error), ProtocolError);
}

}  // namespace
}  // namespace flake
