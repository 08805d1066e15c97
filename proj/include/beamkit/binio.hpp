#pragma once

#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "beamkit/errors.hpp"

namespace beamkit {

// Little-endian raw encoders for the on-disk artifacts.
struct BinWriter {
  std::vector<unsigned char> bytes;

  template <typename T>
  void put(const T& v) {
    const auto* p = reinterpret_cast<const unsigned char*>(&v);
    bytes.insert(bytes.end(), p, p + sizeof(T));
  }
  void put_raw(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    bytes.insert(bytes.end(), p, p + n);
  }
  void put_string(const std::string& s) {
    put<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    put_raw(s.data(), s.size());
  }
};

struct BinReader {
  const std::vector<unsigned char>& bytes;
  std::uint64_t pos = 0;

  template <typename T>
  T get(const char* what) {
    if (pos + sizeof(T) > bytes.size())
      throw FormatError(std::string("truncated file while reading ") + what,
                        pos);
    T v;
    std::memcpy(&v, bytes.data() + pos, sizeof(T));
    pos += sizeof(T);
    return v;
  }
  std::string get_string(const char* what) {
    const auto n = get<std::uint32_t>(what);
    if (pos + n > bytes.size())
      throw FormatError(std::string("truncated file while reading ") + what,
                        pos);
    std::string s(reinterpret_cast<const char*>(bytes.data() + pos), n);
    pos += n;
    return s;
  }
};

}  // namespace beamkit
