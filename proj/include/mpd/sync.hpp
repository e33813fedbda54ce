#pragma once

/**
 * @file sync.hpp
 * @brief Self-synchronizing dialect selection.
 *
 * Both endpoints keep a FIFO of the last h wire payloads. The concatenation
 * of that FIFO (oldest first) is fed together with the pre-shared key into a
 * modified keyed hash,
 *
 *     S = H((K' ^ opad) || H(K' ^ ipad) || M)
 *
 * where the inner hash covers only the padded key. Unlike RFC 2104 HMAC the
 * cached payloads M sit in the outer hash input. S is read as a big-endian
 * unsigned integer and quantized onto the dialect table with
 *
 *     n = S // (S_max // n_max + 1) + 1
 *
 * so adding or dropping a dialect only changes n_max.
 *
 * Selection depends only on (K, h, hash, buffer); two endpoints whose last h
 * cached payloads agree select the same dialect regardless of any earlier
 * divergence.
 */

#include <boost/multiprecision/cpp_int.hpp>

#include <cstddef>
#include <deque>
#include <array>
#include <fstream>
#include <optional>
#include <memory>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <openssl/md5.h>

#include "mpd/bytes.hpp"
#include "mpd/dialect.hpp"
#include "mpd/digest.hpp"
#include "mpd/error.hpp"

#if defined(__GNUC__)
#define MPD_NO_DEPRECATION_BEGIN \
  _Pragma("GCC diagnostic push") _Pragma("GCC diagnostic ignored \"-Wdeprecated-declarations\"")
#define MPD_NO_DEPRECATION_END _Pragma("GCC diagnostic pop")
#else
#define MPD_NO_DEPRECATION_BEGIN
#define MPD_NO_DEPRECATION_END
#endif

namespace mpd {

using BigUint = boost::multiprecision::cpp_int;

inline constexpr std::uint8_t kInnerPad = 0x36;
inline constexpr std::uint8_t kOuterPad = 0x5c;
inline constexpr std::string_view kDefaultInitialPacket = "MPD-INIT";

struct PseudoRandomValue {
  BigUint value;
  BigUint max;  // 2^(8 * digest_len) - 1
};

inline BigUint from_big_endian(ByteView digest) {
  BigUint v = 0;
  for (auto b : digest) v = (v << 8) | b;
  return v;
}

inline BigUint max_for_digest(std::size_t digest_len) {
  return (BigUint(1) << (8 * digest_len)) - 1;
}

/// Key padded (or pre-hashed, when longer than a block) to the hash block size.
inline Bytes block_key(ByteView key, const HashFunction& hash) {
  Bytes k(key.begin(), key.end());
  if (k.size() > hash.block_size()) k = hash(k);
  k.resize(hash.block_size(), 0x00);
  return k;
}

/// Fixed-capacity digest output.
struct DigestBuffer {
  std::array<std::uint8_t, EVP_MAX_MD_SIZE> bytes{};
  std::size_t size = 0;
  ByteView view() const { return {bytes.data(), size}; }
};

/// Keyed hash with the key-dependent prefix hashed once:
/// S = H((K' xor opad) || H(K' xor ipad) || M).
/// MD5, the default, runs on the low-level API; EVP dispatch costs more than
/// the compression itself for messages this short.
class KeyedHasher {
 public:
  KeyedHasher(ByteView key, const HashFunction& hash) : prefix_(hash.begin()) {
    if (key.empty()) throw Error(Errc::EmptyKey, "keyed hash requires a non-empty key");
    Bytes kp = block_key(key, hash);
    Bytes inner_key = kp, outer_key = kp;
    for (auto& b : inner_key) b ^= kInnerPad;
    for (auto& b : outer_key) b ^= kOuterPad;
    const Bytes inner = hash(inner_key);
    prefix_.update(outer_key).update(inner);
    if (hash.name() == "md5" || hash.name() == "MD5") {
      md5_.emplace();
      MPD_NO_DEPRECATION_BEGIN
      MD5_Init(&*md5_);
      MD5_Update(&*md5_, outer_key.data(), outer_key.size());
      MD5_Update(&*md5_, inner.data(), inner.size());
      MPD_NO_DEPRECATION_END
    }
  }

  /// Digest of the concatenation of `parts`.
  template <class Range>
  DigestBuffer digest_concat_into(const Range& parts) const {
    DigestBuffer out;
    if (md5_) {
      MPD_NO_DEPRECATION_BEGIN
      MD5_CTX ctx = *md5_;
      for (const auto& p : parts) MD5_Update(&ctx, p.data(), p.size());
      MD5_Final(out.bytes.data(), &ctx);
      MPD_NO_DEPRECATION_END
      out.size = MD5_DIGEST_LENGTH;
      return out;
    }
    HashFunction::Context ctx(prefix_);
    for (const auto& p : parts) ctx.update(p);
    const Bytes d = ctx.final();
    std::copy(d.begin(), d.end(), out.bytes.begin());
    out.size = d.size();
    return out;
  }

  template <class Range>
  Bytes digest_concat(const Range& parts) const {
    const auto d = digest_concat_into(parts);
    return Bytes(d.bytes.begin(), d.bytes.begin() + d.size);
  }

  Bytes digest(ByteView message) const { return digest_concat(std::array<ByteView, 1>{message}); }

 private:
  HashFunction::Context prefix_;
  std::optional<MD5_CTX> md5_;
};

inline Bytes keyed_hash_digest(ByteView key, ByteView message, const HashFunction& hash) {
  return KeyedHasher(key, hash).digest(message);
}

inline PseudoRandomValue keyed_hash(ByteView key, ByteView message,
                                    const HashFunction& hash = HashFunction("md5")) {
  const Bytes d = keyed_hash_digest(key, message, hash);
  return {from_big_endian(d), max_for_digest(d.size())};
}

/// Consistent-hash quantization of `s` in [0, s_max] onto 1..n_max.
template <class Int>
std::size_t map_index(const Int& s, const Int& s_max, std::size_t n_max) {
  if (n_max == 0) throw Error(Errc::ConfigError, "n_max must be positive");
  if (s > s_max) throw Error(Errc::ConfigError, "pseudo-random value exceeds its maximum");
  if (n_max == 1) return 1;  // s_max + 1 may not be representable in Int
  const Int divisor = s_max / static_cast<Int>(n_max) + 1;
  return static_cast<std::size_t>(s / divisor) + 1;
}

inline std::size_t map_index(const PseudoRandomValue& s, std::size_t n_max) {
  return map_index<BigUint>(s.value, s.max, n_max);
}

// ---------------------------------------------------------------------------

/// Ordered dialect list addressed by 1-based index; order is significant.
class DialectTable {
 public:
  DialectTable() = default;
  explicit DialectTable(std::vector<DialectSpec> entries) : entries_(std::move(entries)) {
    if (entries_.empty()) throw Error(Errc::ConfigError, "dialect table must not be empty");
    for (const auto& e : entries_)
      if (!structurally_valid(e))
        throw Error(Errc::ConfigError, "structurally invalid entry: " + to_string(e));
  }

  std::size_t n_max() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }

  const DialectSpec& at(std::size_t n) const {
    if (n < 1 || n > entries_.size())
      throw Error(Errc::ConfigError, "dialect index " + std::to_string(n) + " out of range");
    return entries_[n - 1];
  }

  const std::vector<DialectSpec>& entries() const { return entries_; }

  bool operator==(const DialectTable&) const = default;

 private:
  std::vector<DialectSpec> entries_;
};

inline DialectTable table_add(const DialectTable& table, const DialectSpec& spec) {
  auto entries = table.entries();
  entries.push_back(spec);
  return DialectTable(std::move(entries));
}

inline DialectTable table_remove(const DialectTable& table) {
  if (table.n_max() < 2) throw Error(Errc::LastDialect, "cannot remove the sole dialect");
  auto entries = table.entries();
  entries.pop_back();
  return DialectTable(std::move(entries));
}

inline DialectSpec parse_spec_line(const std::string& line) {
  std::istringstream in(line);
  std::string kind;
  in >> kind;
  std::vector<long long> args;
  long long v;
  while (in >> v) args.push_back(v);
  if (!in.eof()) throw Error(Errc::ConfigError, "bad table line: " + line);
  auto need = [&](std::size_t count) {
    if (args.size() != count) throw Error(Errc::ConfigError, "wrong arity: " + line);
    for (auto a : args)
      if (a < 0) throw Error(Errc::ConfigError, "negative parameter: " + line);
  };
  DialectSpec spec;
  if (kind == "identity") {
    need(0);
    spec = Identity{};
  } else if (kind == "shuffle") {
    need(3);
    spec = Shuffle{static_cast<std::size_t>(args[0]), static_cast<std::size_t>(args[1]),
                   static_cast<std::size_t>(args[2])};
  } else if (kind == "split") {
    need(3);
    spec = Split{static_cast<std::size_t>(args[0]), static_cast<std::size_t>(args[1]),
                 static_cast<std::size_t>(args[2])};
  } else {
    throw Error(Errc::ConfigError, "unknown dialect kind: " + kind);
  }
  if (!structurally_valid(spec)) throw Error(Errc::ConfigError, "invalid parameters: " + line);
  return spec;
}

/// Table text: one entry per line ("identity", "shuffle p l o", "split t1 t2 t3");
/// '#' starts a comment.
inline DialectTable parse_table(std::string_view text) {
  std::vector<DialectSpec> entries;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    entries.push_back(parse_spec_line(line));
  }
  return DialectTable(std::move(entries));
}

inline std::string format_table(const DialectTable& table) {
  std::string out;
  for (const auto& e : table.entries()) out += to_string(e) + "\n";
  return out;
}

inline DialectTable load_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::ConfigError, "cannot read table file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_table(ss.str());
}

// ---------------------------------------------------------------------------

class SyncState {
 public:
  SyncState(Bytes key, std::size_t depth, ByteView initial_packet,
            HashFunction hash = HashFunction("md5"))
      : key_(std::move(key)), depth_(depth), hash_(std::move(hash)) {
    if (depth_ < 1) throw Error(Errc::InvalidDepth, "buffer depth must be >= 1");
    if (key_.empty()) throw Error(Errc::EmptyKey, "sync state requires a key");
    hasher_ = std::make_shared<const KeyedHasher>(key_, hash_);
    buffer_.assign(depth_, Bytes(initial_packet.begin(), initial_packet.end()));
  }

  const Bytes& key() const { return key_; }
  std::size_t depth() const { return depth_; }
  const HashFunction& hash() const { return hash_; }
  const std::deque<Bytes>& buffer() const { return buffer_; }

  /// Cached payloads concatenated oldest-first.
  Bytes cached_message() const {
    return concat(std::vector<Bytes>(buffer_.begin(), buffer_.end()));
  }

  Bytes draw_digest() const { return hasher_->digest_concat(buffer_); }
  DigestBuffer draw_digest_into() const { return hasher_->digest_concat_into(buffer_); }

  PseudoRandomValue draw() const {
    const Bytes d = draw_digest();
    return {from_big_endian(d), max_for_digest(d.size())};
  }

  void cache_update(ByteView wire_payload) {
    Bytes slot = std::move(buffer_.front());
    buffer_.pop_front();
    slot.assign(wire_payload.begin(), wire_payload.end());
    buffer_.push_back(std::move(slot));
  }

  bool operator==(const SyncState& o) const {
    return key_ == o.key_ && depth_ == o.depth_ && hash_ == o.hash_ && buffer_ == o.buffer_;
  }

 private:
  Bytes key_;
  std::size_t depth_;
  HashFunction hash_;
  std::shared_ptr<const KeyedHasher> hasher_;  // immutable, shared between copies
  std::deque<Bytes> buffer_;
};

inline SyncState init_state(Bytes key, std::size_t depth,
                            ByteView initial_packet = ByteView(
                                reinterpret_cast<const std::uint8_t*>(kDefaultInitialPacket.data()),
                                kDefaultInitialPacket.size()),
                            HashFunction hash = HashFunction("md5")) {
  return SyncState(std::move(key), depth, initial_packet, std::move(hash));
}

inline void cache_update(SyncState& state, ByteView wire_payload) {
  state.cache_update(wire_payload);
}

struct Selection {
  std::size_t index;
  DialectSpec spec;
};

inline Selection next_index(const SyncState& state, const DialectTable& table) {
  const DigestBuffer buf = state.draw_digest_into();
  const ByteView d = buf.view();
  std::size_t n;
  if (d.size() <= 16) {
    // Same arithmetic in a native 128-bit integer.
    using U128 = unsigned __int128;
    U128 s = 0;
    for (auto b : d) s = (s << 8) | b;
    const U128 s_max = d.size() == 16 ? ~U128(0) : (U128(1) << (8 * d.size())) - 1;
    n = map_index<U128>(s, s_max, table.n_max());
  } else {
    n = map_index(PseudoRandomValue{from_big_endian(d), max_for_digest(d.size())}, table.n_max());
  }
  return {n, table.at(n)};
}

}  // namespace mpd
