#include "beamkit/io_util.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "beamkit/errors.hpp"

namespace beamkit {

std::vector<unsigned char> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open file: " + path, 0);
  in.seekg(0, std::ios::end);
  const auto size = static_cast<std::size_t>(in.tellg());
  in.seekg(0, std::ios::beg);
  std::vector<unsigned char> bytes(size);
  if (size > 0 && !in.read(reinterpret_cast<char*>(bytes.data()),
                           static_cast<std::streamsize>(size)))
    throw FormatError("short read: " + path,
                      static_cast<std::uint64_t>(in.gcount()));
  return bytes;
}

void write_file_atomic(const std::string& path, const void* data,
                       std::size_t size) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  const fs::path tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open for write: " + tmp.string());
    if (size > 0)
      out.write(static_cast<const char*>(data),
                static_cast<std::streamsize>(size));
    if (!out) throw Error("write failed: " + tmp.string());
  }
  fs::rename(tmp, target);
}

void write_text_atomic(const std::string& path, const std::string& text) {
  write_file_atomic(path, text.data(), text.size());
}

int thread_budget() {
  const char* env = std::getenv("BEAMKIT_THREADS");
  if (!env) return 1;
  const int n = std::atoi(env);
  return n > 0 ? n : 1;
}

}  // namespace beamkit
