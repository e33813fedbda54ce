#pragma once

// Wire framing: len:u32 big-endian || payload. Nothing else travels on the
// wire; in particular the dialect index is never transmitted.

#include <cstring>
#include <cstddef>
#include <cstdint>
#include <optional>

#include "mpd/bytes.hpp"
#include "mpd/error.hpp"

namespace mpd {

inline constexpr std::size_t kFrameHeader = 4;
inline constexpr std::size_t kMaxPayload = std::size_t{1} << 24;
inline constexpr std::uint8_t kAckByte = 0x06;

inline Bytes encode_frame(ByteView payload) {
  if (payload.size() > kMaxPayload) throw Error(Errc::ChannelError, "frame payload too large");
  const auto n = static_cast<std::uint32_t>(payload.size());
  Bytes out(kFrameHeader + payload.size());
  out[0] = static_cast<std::uint8_t>(n >> 24);
  out[1] = static_cast<std::uint8_t>(n >> 16);
  out[2] = static_cast<std::uint8_t>(n >> 8);
  out[3] = static_cast<std::uint8_t>(n);
  if (!payload.empty()) std::memcpy(out.data() + kFrameHeader, payload.data(), payload.size());
  return out;
}

inline const Bytes& ack_payload() {
  static const Bytes ack{kAckByte};
  return ack;
}

inline bool is_ack(ByteView payload) { return payload.size() == 1 && payload[0] == kAckByte; }

/// Incremental decoder for a byte stream carrying frames.
class FrameDecoder {
 public:
  explicit FrameDecoder(std::size_t max_payload = kMaxPayload) : max_payload_(max_payload) {}

  void feed(ByteView data) { buf_.insert(buf_.end(), data.begin(), data.end()); }

  /// Next complete payload, if any. Throws ChannelError on an oversized header.
  std::optional<Bytes> next() {
    if (buf_.size() < kFrameHeader) return std::nullopt;
    const std::size_t n = std::size_t{buf_[0]} << 24 | std::size_t{buf_[1]} << 16 |
                          std::size_t{buf_[2]} << 8 | std::size_t{buf_[3]};
    if (n > max_payload_) throw Error(Errc::ChannelError, "frame length exceeds cap");
    if (buf_.size() < kFrameHeader + n) return std::nullopt;
    Bytes payload(buf_.begin() + kFrameHeader, buf_.begin() + kFrameHeader + n);
    buf_.erase(buf_.begin(), buf_.begin() + kFrameHeader + n);
    return payload;
  }

  std::size_t buffered() const { return buf_.size(); }

 private:
  std::size_t max_payload_;
  Bytes buf_;
};

}  // namespace mpd
