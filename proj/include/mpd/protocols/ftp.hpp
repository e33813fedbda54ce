#pragma once

// Minimal file-retrieval protocol. Requests are "rget,<name>", "ls" or
// "quit"; responses are "OK,<body>", "ERR,<reason>" or "BYE".

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <optional>
#include <string>
#include <vector>

#include "mpd/bytes.hpp"
#include "mpd/error.hpp"
#include "mpd/session.hpp"

namespace mpd::ftp {

enum class Verb { Rget, Ls, Quit };

struct Command {
  Verb verb = Verb::Ls;
  std::optional<std::string> arg;
  bool operator==(const Command&) const = default;
};

inline bool valid_filename(std::string_view name) {
  if (name.empty() || name == "." || name == "..") return false;
  return std::all_of(name.begin(), name.end(),
                     [](char c) { return c > 0x20 && c < 0x7f && c != '/' && c != '\\'; });
}

inline std::optional<Command> try_parse(ByteView bytes) {
  const std::string s = to_string(bytes);
  if (s == "ls") return Command{Verb::Ls, std::nullopt};
  if (s == "quit") return Command{Verb::Quit, std::nullopt};
  constexpr std::string_view prefix = "rget,";
  if (s.size() > prefix.size() && s.compare(0, prefix.size(), prefix) == 0) {
    std::string name = s.substr(prefix.size());
    if (valid_filename(name)) return Command{Verb::Rget, std::move(name)};
  }
  return std::nullopt;
}

inline Command parse(ByteView bytes) {
  auto cmd = try_parse(bytes);
  if (!cmd) throw Error(Errc::ParseError, "not an ftp command: " + escape(bytes));
  return *cmd;
}

inline Bytes render(const Command& cmd) {
  switch (cmd.verb) {
    case Verb::Ls: return to_bytes("ls");
    case Verb::Quit: return to_bytes("quit");
    case Verb::Rget: return to_bytes("rget," + cmd.arg.value_or(""));
  }
  return {};
}

inline Command rget(std::string name) { return {Verb::Rget, std::move(name)}; }

inline const std::string kNotFound = "ERR,notfound";
inline const std::string kIoError = "ERR,io";
inline const std::string kBye = "BYE";

inline Bytes handle(const Command& cmd, const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  try {
    switch (cmd.verb) {
      case Verb::Quit: return to_bytes(kBye);
      case Verb::Ls: {
        std::vector<std::string> names;
        for (const auto& entry : fs::directory_iterator(root))
          if (entry.is_regular_file()) names.push_back(entry.path().filename().string());
        std::sort(names.begin(), names.end());
        std::string body = "OK,";
        for (std::size_t i = 0; i < names.size(); ++i) body += (i ? "\n" : "") + names[i];
        return to_bytes(body);
      }
      case Verb::Rget: {
        const fs::path file = root / cmd.arg.value_or("");
        if (!fs::is_regular_file(file)) return to_bytes(kNotFound);
        std::ifstream in(file, std::ios::binary);
        if (!in) return to_bytes(kIoError);
        Bytes out = to_bytes("OK,");
        out.insert(out.end(), std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
        if (in.bad()) return to_bytes(kIoError);
        return out;
      }
    }
  } catch (const fs::filesystem_error&) {
    return to_bytes(kIoError);
  }
  return to_bytes(kIoError);
}

inline bool valid_response(ByteView r) {
  const std::string_view s(reinterpret_cast<const char*>(r.data()), r.size());
  return s == kBye || s.starts_with("OK,") || s.starts_with("ERR,");
}

/// Per-connection server application. Every request is dialect-bearing.
class ServerApp final : public mpd::ServerApp {
 public:
  explicit ServerApp(std::filesystem::path root) : root_(std::move(root)) {}

  bool expects_dialect() const override { return true; }
  bool validate(ByteView request) const override { return try_parse(request).has_value(); }
  std::optional<Bytes> handle(ByteView request) override {
    const auto cmd = parse(request);
    if (cmd.verb == Verb::Quit) quit_ = true;
    ++handled_;
    return ftp::handle(cmd, root_);
  }
  bool wants_close() const override { return quit_; }

  std::size_t handled() const { return handled_; }

 private:
  std::filesystem::path root_;
  bool quit_ = false;
  std::size_t handled_ = 0;
};

}  // namespace mpd::ftp
