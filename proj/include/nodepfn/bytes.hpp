#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "nodepfn/error.hpp"

namespace nodepfn {

static_assert(std::endian::native == std::endian::little,
              "file formats are little-endian; big-endian hosts are unsupported");

class ByteWriter {
 public:
  template <typename T>
  void put(T v) {
    const std::size_t at = buf_.size();
    buf_.resize(at + sizeof(T));
    std::memcpy(buf_.data() + at, &v, sizeof(T));
  }

  void put_bytes(const void* data, std::size_t n) {
    const std::size_t at = buf_.size();
    buf_.resize(at + n);
    std::memcpy(buf_.data() + at, data, n);
  }

  void put_string(const std::string& s) {
    put<uint32_t>(static_cast<uint32_t>(s.size()));
    put_bytes(s.data(), s.size());
  }

  std::size_t size() const { return buf_.size(); }
  std::vector<unsigned char> take() { return std::move(buf_); }
  const std::vector<unsigned char>& bytes() const { return buf_; }

 private:
  std::vector<unsigned char> buf_;
};

class ByteReader {
 public:
  explicit ByteReader(const std::vector<unsigned char>& bytes) : bytes_(bytes) {}

  template <typename T>
  T get(const char* field) {
    if (at_ + sizeof(T) > bytes_.size()) fail(field);
    T v;
    std::memcpy(&v, bytes_.data() + at_, sizeof(T));
    at_ += sizeof(T);
    return v;
  }

  void get_bytes(void* out, std::size_t n, const char* field) {
    if (at_ + n > bytes_.size()) fail(field);
    std::memcpy(out, bytes_.data() + at_, n);
    at_ += n;
  }

  std::string get_string(const char* field) {
    const uint32_t len = get<uint32_t>(field);
    if (at_ + len > bytes_.size()) fail(field);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + at_), len);
    at_ += len;
    return s;
  }

  std::size_t offset() const { return at_; }
  bool exhausted() const { return at_ == bytes_.size(); }

  [[noreturn]] void fail(const char* field) const {
    throw ValidationError(std::string("file truncated while reading '") + field + "' at offset " +
                          std::to_string(at_));
  }

  [[noreturn]] void reject(const char* field, const std::string& why) const {
    throw ValidationError(std::string("invalid field '") + field + "' near offset " +
                          std::to_string(at_) + ": " + why);
  }

 private:
  const std::vector<unsigned char>& bytes_;
  std::size_t at_ = 0;
};

uint32_t crc32(const unsigned char* data, std::size_t n);

}  // namespace nodepfn
