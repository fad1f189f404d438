#ifndef AFFORGE_CODEC_HPP
#define AFFORGE_CODEC_HPP

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <openssl/evp.h>

#include "afforge/error.hpp"
#include "afforge/grid.hpp"

namespace afforge {

inline std::string base64_encode(std::span<const std::uint8_t> bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes.data(),
                                static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

inline std::vector<std::uint8_t> base64_decode(std::string_view text) {
  if (text.size() % 4 != 0) throw Error(ErrorKind::InvalidArgument, "base64 length not a multiple of 4");
  std::vector<std::uint8_t> out(3 * (text.size() / 4));
  const int n = EVP_DecodeBlock(out.data(), reinterpret_cast<const unsigned char*>(text.data()),
                                static_cast<int>(text.size()));
  if (n < 0) throw Error(ErrorKind::InvalidArgument, "invalid base64");
  std::size_t pad = 0;
  if (!text.empty() && text.back() == '=') ++pad;
  if (text.size() > 1 && text[text.size() - 2] == '=') ++pad;
  out.resize(static_cast<std::size_t>(n) - pad);
  return out;
}

// Explicit little-endian scalars, independent of host byte order.

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline std::uint32_t get_u32(std::span<const std::uint8_t> in, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in[at + i]) << (8 * i);
  return v;
}

inline std::uint64_t get_u64(std::span<const std::uint8_t> in, std::size_t at) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(in[at + i]) << (8 * i);
  return v;
}

inline std::vector<std::uint8_t> pack_f32_le(std::span<const float> values) {
  std::vector<std::uint8_t> out;
  out.reserve(values.size() * 4);
  for (float f : values) put_u32(out, std::bit_cast<std::uint32_t>(f));
  return out;
}

inline std::vector<float> unpack_f32_le(std::span<const std::uint8_t> bytes) {
  if (bytes.size() % 4 != 0) throw Error(ErrorKind::CorruptBlob, "float32 payload length not a multiple of 4");
  std::vector<float> out(bytes.size() / 4);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::bit_cast<float>(get_u32(bytes, 4 * i));
  return out;
}

/// Wire form of a float map: {"h", "w", "data": base64 LE float32 row-major}.
struct EncodedMap {
  int h = 0;
  int w = 0;
  std::string data;
};

inline EncodedMap encode_map(const Grid<float>& map) {
  return {map.height(), map.width(), base64_encode(pack_f32_le(map.values()))};
}

inline Grid<float> decode_map(const EncodedMap& enc) {
  auto values = unpack_f32_le(base64_decode(enc.data));
  if (enc.h < 0 || enc.w < 0 || values.size() != static_cast<std::size_t>(enc.h) * enc.w) {
    throw Error(ErrorKind::DimensionMismatch, "encoded map size does not match h*w");
  }
  return Grid<float>(enc.w, enc.h, std::move(values));
}

// On-disk blobs: 8-byte magic | u32 version | u32 rows | u32 cols | payload.

using BlobMagic = std::array<char, 8>;

inline constexpr std::uint32_t kBlobVersion = 1;
inline constexpr std::size_t kBlobHeaderSize = 20;

inline constexpr BlobMagic kHeatMagic{'A', 'F', 'G', 'H', 'E', 'A', 'T', '\0'};
inline constexpr BlobMagic kSupportMagic{'A', 'F', 'G', 'S', 'U', 'P', 'P', '\0'};
inline constexpr BlobMagic kDepthMagic{'A', 'F', 'G', 'D', 'P', 'T', 'H', '\0'};
inline constexpr BlobMagic kMap2dMagic{'A', 'F', 'G', 'H', 'M', '2', 'D', '\0'};
inline constexpr BlobMagic kPointsMagic{'A', 'F', 'G', 'P', 'N', 'T', 'S', '\0'};
inline constexpr BlobMagic kIndexMagic{'A', 'F', 'G', 'I', 'D', 'X', '\0', '\0'};

struct Blob {
  std::uint32_t rows = 0;
  std::uint32_t cols = 0;
  std::vector<std::uint8_t> payload;
};

inline std::vector<std::uint8_t> encode_blob(const BlobMagic& magic, std::uint32_t rows, std::uint32_t cols,
                                             std::span<const std::uint8_t> payload) {
  std::vector<std::uint8_t> out;
  out.reserve(kBlobHeaderSize + payload.size());
  out.insert(out.end(), magic.begin(), magic.end());
  put_u32(out, kBlobVersion);
  put_u32(out, rows);
  put_u32(out, cols);
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

/// Validates magic, version and payload length (rows * cols * elem_size).
inline Blob decode_blob(const BlobMagic& magic, std::span<const std::uint8_t> bytes, std::size_t elem_size) {
  if (bytes.size() < kBlobHeaderSize) throw Error(ErrorKind::CorruptBlob, "blob shorter than header");
  if (std::memcmp(bytes.data(), magic.data(), magic.size()) != 0) {
    throw Error(ErrorKind::CorruptBlob, "blob magic mismatch");
  }
  if (get_u32(bytes, 8) != kBlobVersion) throw Error(ErrorKind::SchemaVersionMismatch, "unsupported blob version");
  Blob blob;
  blob.rows = get_u32(bytes, 12);
  blob.cols = get_u32(bytes, 16);
  const std::size_t expected = static_cast<std::size_t>(blob.rows) * blob.cols * elem_size;
  if (bytes.size() - kBlobHeaderSize != expected) {
    throw Error(ErrorKind::CorruptBlob, "blob payload is " + std::to_string(bytes.size() - kBlobHeaderSize) +
                                            " bytes, expected " + std::to_string(expected));
  }
  blob.payload.assign(bytes.begin() + kBlobHeaderSize, bytes.end());
  return blob;
}

}  // namespace afforge

#endif  // AFFORGE_CODEC_HPP
