#pragma once

#include <zlib.h>

#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "flake/error.hpp"
#include "flake/matrix.hpp"

namespace flake {

/// Message kinds carried by a frame.
enum class MsgType : std::uint8_t {
  hello = 1,          // party announces itself
  seed_envelope = 2,  // sealed seed material, relayed blindly
  masked_chunk = 3,   // one compressed slice of a masked payload
  chunk_end = 4,      // no more chunks for this iteration (payload: labels)
  gram_ack = 5,       // function party confirms assembly
  error = 6,          // UTF-8 diagnostic, aborts the session
};

inline constexpr char kFrameMagic[4] = {'F', 'L', 'K', '1'};
inline constexpr std::size_t kFrameHeaderSize = 4 + 1 + 8 + 4 + 8;
inline constexpr std::size_t kPartyIdBytes = 8;

/// One protocol message.
///
///   offset  size  field
///        0     4  magic "FLK1"
///        4     1  msg_type
///        5     8  party_id, NUL-padded
///       13     4  iteration, u32 little-endian
///       17     8  payload_len, u64 little-endian
///       25     n  payload
struct Frame {
  MsgType type = MsgType::hello;
  std::string party_id;
  std::uint32_t iteration = 0;
  std::vector<std::uint8_t> payload;

  bool operator==(const Frame&) const = default;
};

namespace wiredetail {

inline void put_u32le(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline void put_u64le(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline std::uint32_t get_u32le(const std::uint8_t* p) {
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

inline std::uint64_t get_u64le(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

inline bool known_msg_type(std::uint8_t t) { return t >= 1 && t <= 6; }

}  // namespace wiredetail

inline std::vector<std::uint8_t> encode_frame(const Frame& frame) {
  if (frame.party_id.size() > kPartyIdBytes) {
    throw ProtocolError("encode_frame: party id '" + frame.party_id + "' exceeds 8 bytes");
  }
  std::vector<std::uint8_t> out;
  out.reserve(kFrameHeaderSize + frame.payload.size());
  out.insert(out.end(), kFrameMagic, kFrameMagic + 4);
  out.push_back(static_cast<std::uint8_t>(frame.type));
  for (std::size_t i = 0; i < kPartyIdBytes; ++i) {
    out.push_back(i < frame.party_id.size() ? static_cast<std::uint8_t>(frame.party_id[i]) : 0);
  }
  wiredetail::put_u32le(out, frame.iteration);
  wiredetail::put_u64le(out, frame.payload.size());
  out.insert(out.end(), frame.payload.begin(), frame.payload.end());
  return out;
}

/// Parsed fixed-size header; used by stream readers to learn how many
/// payload bytes follow.
struct FrameHeader {
  MsgType type = MsgType::hello;
  std::string party_id;
  std::uint32_t iteration = 0;
  std::uint64_t payload_len = 0;
};

inline FrameHeader parse_frame_header(const std::uint8_t* bytes) {
  if (std::memcmp(bytes, kFrameMagic, 4) != 0) throw ProtocolError("frame: bad magic");
  const std::uint8_t raw_type = bytes[4];
  if (!wiredetail::known_msg_type(raw_type)) {
    throw ProtocolError("frame: unknown msg_type " + std::to_string(raw_type));
  }
  FrameHeader h;
  h.type = static_cast<MsgType>(raw_type);
  const char* id = reinterpret_cast<const char*>(bytes + 5);
  std::size_t id_len = 0;
  while (id_len < kPartyIdBytes && id[id_len] != '\0') ++id_len;
  h.party_id.assign(id, id_len);
  h.iteration = wiredetail::get_u32le(bytes + 13);
  h.payload_len = wiredetail::get_u64le(bytes + 17);
  return h;
}

inline Frame decode_frame(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < kFrameHeaderSize) throw ProtocolError("frame: truncated header");
  const FrameHeader h = parse_frame_header(bytes.data());
  if (bytes.size() - kFrameHeaderSize != h.payload_len) {
    throw ProtocolError("frame: payload_len " + std::to_string(h.payload_len) + " but " +
                        std::to_string(bytes.size() - kFrameHeaderSize) + " bytes present");
  }
  Frame f;
  f.type = h.type;
  f.party_id = h.party_id;
  f.iteration = h.iteration;
  f.payload.assign(bytes.begin() + kFrameHeaderSize, bytes.end());
  return f;
}

/// Raw DEFLATE (RFC 1951, no zlib/gzip wrapper).
inline std::vector<std::uint8_t> deflate_raw(const std::uint8_t* data, std::size_t size) {
  z_stream strm{};
  if (deflateInit2(&strm, Z_DEFAULT_COMPRESSION, Z_DEFLATED, -15, 8, Z_DEFAULT_STRATEGY) != Z_OK) {
    throw IoError("deflate: init failed");
  }
  std::vector<std::uint8_t> out(deflateBound(&strm, size));
  strm.next_in = const_cast<Bytef*>(data);
  strm.avail_in = static_cast<uInt>(size);
  strm.next_out = out.data();
  strm.avail_out = static_cast<uInt>(out.size());
  const int rc = deflate(&strm, Z_FINISH);
  deflateEnd(&strm);
  if (rc != Z_STREAM_END) throw IoError("deflate: compression failed");
  out.resize(out.size() - strm.avail_out);
  return out;
}

inline std::vector<std::uint8_t> inflate_raw(const std::uint8_t* data, std::size_t size) {
  z_stream strm{};
  if (inflateInit2(&strm, -15) != Z_OK) throw IoError("inflate: init failed");
  strm.next_in = const_cast<Bytef*>(data);
  strm.avail_in = static_cast<uInt>(size);
  std::vector<std::uint8_t> out;
  std::uint8_t buf[1 << 15];
  int rc = Z_OK;
  do {
    strm.next_out = buf;
    strm.avail_out = sizeof(buf);
    rc = inflate(&strm, Z_NO_FLUSH);
    if (rc != Z_OK && rc != Z_STREAM_END) {
      inflateEnd(&strm);
      throw ProtocolError("inflate: corrupt DEFLATE stream");
    }
    out.insert(out.end(), buf, buf + (sizeof(buf) - strm.avail_out));
  } while (rc != Z_STREAM_END && (strm.avail_in > 0 || strm.avail_out == 0));
  inflateEnd(&strm);
  if (rc != Z_STREAM_END) throw ProtocolError("inflate: truncated DEFLATE stream");
  return out;
}

/// Matrix wire format: DEFLATE over [rows u64 LE | cols u64 LE | doubles LE
/// row-major]. Values survive bit-exactly.
inline std::vector<std::uint8_t> encode_matrix(const Matrix& m) {
  std::vector<std::uint8_t> body;
  body.reserve(16 + m.rows() * m.cols() * 8);
  wiredetail::put_u64le(body, m.rows());
  wiredetail::put_u64le(body, m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) {
      wiredetail::put_u64le(body, std::bit_cast<std::uint64_t>(m(i, j)));
    }
  }
  return deflate_raw(body.data(), body.size());
}

inline Matrix decode_matrix(const std::vector<std::uint8_t>& wire) {
  const std::vector<std::uint8_t> body = inflate_raw(wire.data(), wire.size());
  if (body.size() < 16) throw ProtocolError("matrix wire: truncated header");
  const std::uint64_t rows = wiredetail::get_u64le(body.data());
  const std::uint64_t cols = wiredetail::get_u64le(body.data() + 8);
  if (body.size() != 16 + rows * cols * 8) {
    throw ProtocolError("matrix wire: body has " + std::to_string(body.size()) + " bytes, header claims " +
                        std::to_string(rows) + "x" + std::to_string(cols));
  }
  Matrix m(rows, cols);
  const std::uint8_t* p = body.data() + 16;
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j, p += 8) {
      m(i, j) = std::bit_cast<double>(wiredetail::get_u64le(p));
    }
  }
  return m;
}

}  // namespace flake
