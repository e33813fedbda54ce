#pragma once

/**
 * @file dialect.hpp
 * @brief Dialect generating functions and their inverses.
 *
 * A dialect is an invertible rewrite of one application-layer message.
 * Two families are provided:
 *
 *  - Shuffle(p, l, o): swaps the l-byte segment starting at p with the
 *    l-byte segment starting at p + o. Segments are 0-based, half-open.
 *    Because both segments have the same length the transform is its own
 *    inverse.
 *  - Split(t1, t2, t3): fragments the message into four sub-packets of
 *    lengths t1, t2, t3 and k - t1 - t2 - t3. The inverse is concatenation.
 *
 * A spec that is not applicable to a message of a given length degrades to
 * Identity on both the sending and the receiving side, so short messages
 * never break synchronization.
 */

#include <algorithm>
#include <cstddef>
#include <string>
#include <variant>
#include <vector>

#include "mpd/bytes.hpp"
#include "mpd/error.hpp"

namespace mpd {

struct Identity {
  bool operator==(const Identity&) const = default;
};

struct Shuffle {
  std::size_t position = 0;
  std::size_t length = 1;
  std::size_t offset = 1;
  bool operator==(const Shuffle&) const = default;
};

struct Split {
  std::size_t t1 = 1;
  std::size_t t2 = 1;
  std::size_t t3 = 1;
  bool operator==(const Split&) const = default;

  std::size_t head_length() const { return t1 + t2 + t3; }
};

using DialectSpec = std::variant<Identity, Shuffle, Split>;

/// Four sub-packets produced by a Split dialect.
using SubPackets = std::vector<Bytes>;

inline constexpr std::size_t kSplitParts = 4;

enum class DialectKind { Identity, Shuffle, Split };

inline DialectKind kind_of(const DialectSpec& spec) {
  return static_cast<DialectKind>(spec.index());
}

/// Structural validity, independent of any message length.
inline bool structurally_valid(const DialectSpec& spec) {
  if (const auto* s = std::get_if<Shuffle>(&spec))
    return s->length >= 1 && s->offset >= s->length;
  if (const auto* s = std::get_if<Split>(&spec)) return s->t1 >= 1 && s->t2 >= 1 && s->t3 >= 1;
  return true;
}

/// True iff `spec` can be applied to a message of `k` bytes.
inline bool validate_params(const DialectSpec& spec, std::size_t k) {
  if (!structurally_valid(spec)) return false;
  if (const auto* s = std::get_if<Shuffle>(&spec))
    return s->position + s->offset + s->length <= k;
  if (const auto* s = std::get_if<Split>(&spec)) return s->head_length() < k;
  return true;
}

inline std::string to_string(const DialectSpec& spec) {
  if (const auto* s = std::get_if<Shuffle>(&spec))
    return "shuffle " + std::to_string(s->position) + " " + std::to_string(s->length) + " " +
           std::to_string(s->offset);
  if (const auto* s = std::get_if<Split>(&spec))
    return "split " + std::to_string(s->t1) + " " + std::to_string(s->t2) + " " +
           std::to_string(s->t3);
  return "identity";
}

namespace detail {
inline void require_feasible(const DialectSpec& spec, std::size_t k) {
  if (!validate_params(spec, k))
    throw Error(Errc::InfeasibleParams,
                to_string(spec) + " on a " + std::to_string(k) + "-byte message");
}
}  // namespace detail

inline Bytes shuffle_apply(ByteView m, const Shuffle& s) {
  detail::require_feasible(s, m.size());
  const auto p = s.position, l = s.length, o = s.offset;
  Bytes out;
  out.reserve(m.size());
  auto put = [&](std::size_t from, std::size_t to) {
    out.insert(out.end(), m.begin() + from, m.begin() + to);
  };
  put(0, p);
  put(p + o, p + o + l);
  put(p + l, p + o);
  put(p, p + l);
  put(p + o + l, m.size());
  return out;
}

inline Bytes shuffle_invert(ByteView m2, const Shuffle& s) { return shuffle_apply(m2, s); }

inline SubPackets split_apply(ByteView m, const Split& s) {
  detail::require_feasible(s, m.size());
  const std::size_t cuts[] = {0, s.t1, s.t1 + s.t2, s.head_length(), m.size()};
  SubPackets parts;
  parts.reserve(kSplitParts);
  for (std::size_t i = 0; i < kSplitParts; ++i)
    parts.emplace_back(m.begin() + cuts[i], m.begin() + cuts[i + 1]);
  return parts;
}

inline Bytes split_invert(const SubPackets& parts) {
  if (parts.size() != kSplitParts)
    throw Error(Errc::WrongPartCount,
                "expected 4 sub-packets, got " + std::to_string(parts.size()));
  return concat(parts);
}

/// Number of wire units `spec` produces for a message of `k` bytes.
inline std::size_t arity(const DialectSpec& spec, std::size_t k) {
  return std::holds_alternative<Split>(spec) && validate_params(spec, k) ? kSplitParts : 1;
}

inline std::vector<Bytes> apply_dialect(const DialectSpec& spec, ByteView m) {
  if (!validate_params(spec, m.size())) return {Bytes(m.begin(), m.end())};
  if (const auto* s = std::get_if<Shuffle>(&spec)) return {shuffle_apply(m, *s)};
  if (const auto* s = std::get_if<Split>(&spec)) return split_apply(m, *s);
  return {Bytes(m.begin(), m.end())};
}

inline Bytes invert_dialect(const DialectSpec& spec, const std::vector<Bytes>& units) {
  if (std::holds_alternative<Split>(spec) && units.size() == kSplitParts)
    return split_invert(units);
  if (units.size() != 1)
    throw Error(Errc::WrongPartCount, to_string(spec) + " cannot take " +
                                          std::to_string(units.size()) + " units");
  const auto& m2 = units.front();
  if (std::holds_alternative<Split>(spec) && validate_params(spec, m2.size()))
    throw Error(Errc::WrongPartCount,
                to_string(spec) + " is feasible for " + std::to_string(m2.size()) +
                    " bytes, expected 4 units");
  if (const auto* s = std::get_if<Shuffle>(&spec); s && validate_params(spec, m2.size()))
    return shuffle_invert(m2, *s);
  // Identity, an infeasible shuffle, or a split the sender could not apply.
  return m2;
}

}  // namespace mpd
