#pragma once

#include <stdexcept>
#include <string>

namespace mpd {

enum class Errc {
  InfeasibleParams,
  WrongPartCount,
  EmptyKey,
  InvalidDepth,
  LastDialect,
  ParseError,
  UnknownProtocol,
  ConfigError,
  ChannelError,
  UnknownHash,
};

inline const char* errc_name(Errc e) {
  switch (e) {
    case Errc::InfeasibleParams: return "InfeasibleParams";
    case Errc::WrongPartCount: return "WrongPartCount";
    case Errc::EmptyKey: return "EmptyKey";
    case Errc::InvalidDepth: return "InvalidDepth";
    case Errc::LastDialect: return "LastDialect";
    case Errc::ParseError: return "ParseError";
    case Errc::UnknownProtocol: return "UnknownProtocol";
    case Errc::ConfigError: return "ConfigError";
    case Errc::ChannelError: return "ChannelError";
    case Errc::UnknownHash: return "UnknownHash";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace mpd
