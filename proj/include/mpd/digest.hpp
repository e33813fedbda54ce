#pragma once

// Thin RAII wrapper over OpenSSL message digests, selected by name.

#include <openssl/evp.h>

#include <memory>
#include <string>

#include "mpd/bytes.hpp"
#include "mpd/error.hpp"

namespace mpd {

class HashFunction {
 public:
  /// Any digest OpenSSL knows by name ("md5", "sha1", "sha256", ...).
  explicit HashFunction(std::string name = "md5") : name_(std::move(name)) {
    md_ = EVP_get_digestbyname(name_.c_str());
    if (md_ == nullptr) throw Error(Errc::UnknownHash, name_);
  }

  const std::string& name() const { return name_; }
  std::size_t digest_size() const { return static_cast<std::size_t>(EVP_MD_size(md_)); }
  std::size_t block_size() const { return static_cast<std::size_t>(EVP_MD_block_size(md_)); }

  class Context {
   public:
    explicit Context(const EVP_MD* md) : ctx_(EVP_MD_CTX_new()), md_(md) {
      if (!ctx_ || EVP_DigestInit_ex(ctx_.get(), md_, nullptr) != 1)
        throw Error(Errc::UnknownHash, "digest init failed");
    }
    /// Forks the running digest, e.g. to reuse a hashed prefix.
    Context(const Context& o) : ctx_(EVP_MD_CTX_new()), md_(o.md_) {
      if (!ctx_ || EVP_MD_CTX_copy_ex(ctx_.get(), o.ctx_.get()) != 1)
        throw Error(Errc::UnknownHash, "digest copy failed");
    }
    Context(Context&&) noexcept = default;
    Context& operator=(Context&&) noexcept = default;
    Context& operator=(const Context&) = delete;
    Context& update(ByteView data) {
      if (!data.empty()) EVP_DigestUpdate(ctx_.get(), data.data(), data.size());
      return *this;
    }
    Bytes final() {
      Bytes out(static_cast<std::size_t>(EVP_MD_size(md_)));
      unsigned int len = 0;
      EVP_DigestFinal_ex(ctx_.get(), out.data(), &len);
      out.resize(len);
      return out;
    }

   private:
    struct Free {
      void operator()(EVP_MD_CTX* c) const { EVP_MD_CTX_free(c); }
    };
    std::unique_ptr<EVP_MD_CTX, Free> ctx_;
    const EVP_MD* md_;
  };

  Context begin() const { return Context(md_); }

  Bytes operator()(ByteView data) const { return begin().update(data).final(); }

  bool operator==(const HashFunction& other) const { return md_ == other.md_; }

 private:
  std::string name_;
  const EVP_MD* md_ = nullptr;
};

}  // namespace mpd
