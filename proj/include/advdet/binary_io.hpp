#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "advdet/error.hpp"

namespace advdet {

using bytes = std::vector<std::uint8_t>;

inline bytes read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), errc::io, "cannot open '" + path.string() + "'");
  in.seekg(0, std::ios::end);
  const auto size = static_cast<std::size_t>(in.tellg());
  in.seekg(0, std::ios::beg);
  bytes data(size);
  if (size) in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(size));
  require(static_cast<bool>(in), errc::io, "failed reading '" + path.string() + "'");
  return data;
}

inline std::string read_text(const std::filesystem::path& path) {
  const bytes b = read_file(path);
  return std::string(b.begin(), b.end());
}

/// Write to `<path>.tmp` then rename, so readers never observe a partial file.
inline void write_file_atomic(const std::filesystem::path& path, const bytes& data) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(out), errc::io, "cannot write '" + tmp.string() + "'");
    out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
    require(static_cast<bool>(out), errc::io, "failed writing '" + tmp.string() + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  require(!ec, errc::io, "cannot rename to '" + path.string() + "': " + ec.message());
}

inline void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
  write_file_atomic(path, bytes(text.begin(), text.end()));
}

/// Little-endian writer.
class ByteWriter {
 public:
  void tag(const char (&t)[5]) { buf_.insert(buf_.end(), t, t + 4); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  bytes& data() { return buf_; }

 private:
  bytes buf_;
};

/// Little-endian reader over an owned buffer; running past the end is a
/// consistency error (the header promised more than the file holds).
class ByteReader {
 public:
  explicit ByteReader(const bytes& data) : data_(data) {}

  std::string tag() {
    need(4);
    std::string t(reinterpret_cast<const char*>(&data_[pos_]), 4);
    pos_ += 4;
    return t;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(data_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(data_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }

  std::size_t remaining() const { return data_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    require(pos_ + n <= data_.size(), errc::consistency, "payload truncated");
  }

  const bytes& data_;
  std::size_t pos_ = 0;
};

inline std::uint32_t read_be32(const bytes& d, std::size_t off) {
  return (static_cast<std::uint32_t>(d[off]) << 24) | (static_cast<std::uint32_t>(d[off + 1]) << 16) |
         (static_cast<std::uint32_t>(d[off + 2]) << 8) | static_cast<std::uint32_t>(d[off + 3]);
}

}  // namespace advdet
