#pragma once

#include <string>
#include <string_view>

#include "mpd/error.hpp"
#include "mpd/protocols/ftp.hpp"
#include "mpd/protocols/mqtt.hpp"
#include "mpd/session.hpp"
#include "mpd/sync.hpp"

namespace mpd {

enum class Protocol { Ftp, Mqtt };

inline Protocol parse_protocol(std::string_view name) {
  if (name == "ftp") return Protocol::Ftp;
  if (name == "mqtt") return Protocol::Mqtt;
  throw Error(Errc::UnknownProtocol, std::string(name));
}

inline const char* protocol_name(Protocol p) { return p == Protocol::Ftp ? "ftp" : "mqtt"; }

struct ProtocolProfile {
  Protocol protocol;
  DialectTable table;
  DialectPolicy policy;
};

/// Requests carry dialects; the table mixes shuffles of the verb region with
/// four-way splits.
inline DialectTable default_ftp_table() {
  return DialectTable({
      Shuffle{1, 1, 3},
      Shuffle{0, 1, 3},
      Shuffle{0, 2, 2},
      Shuffle{0, 1, 1},
      Shuffle{1, 1, 2},
      Split{1, 2, 2},
      Split{1, 2, 1},
      Split{2, 2, 1},
  });
}

/// Shuffle-only variant of the ftp table.
inline DialectTable ftp_shuffle_table() {
  return DialectTable({
      Shuffle{1, 1, 3},
      Shuffle{0, 1, 3},
      Shuffle{0, 2, 2},
      Shuffle{0, 1, 1},
      Shuffle{1, 1, 2},
      Shuffle{0, 1, 2},
      Shuffle{2, 1, 2},
      Shuffle{0, 1, 4},
  });
}

/// Every entry moves the control byte away from position 0.
inline DialectTable default_mqtt_table() {
  return DialectTable({
      Shuffle{0, 1, 1},
      Shuffle{0, 1, 2},
      Shuffle{0, 1, 3},
      Shuffle{0, 2, 2},
      Shuffle{0, 2, 3},
      Shuffle{0, 1, 4},
      Shuffle{0, 3, 3},
      Shuffle{0, 2, 4},
  });
}

inline ProtocolProfile profile(Protocol protocol) {
  if (protocol == Protocol::Ftp) {
    DialectPolicy policy;
    policy.dialect_bearing = [](ByteView) { return true; };
    policy.mirror_response = false;
    policy.valid_response = [](ByteView r) { return ftp::valid_response(r); };
    return {protocol, default_ftp_table(), std::move(policy)};
  }
  DialectPolicy policy;
  policy.dialect_bearing = [](ByteView r) { return mqtt::is_connect(r); };
  policy.mirror_response = true;
  policy.valid_response = [](ByteView r) { return mqtt::try_parse(r).has_value(); };
  return {protocol, default_mqtt_table(), std::move(policy)};
}

inline ProtocolProfile profile(std::string_view name) { return profile(parse_protocol(name)); }

}  // namespace mpd
