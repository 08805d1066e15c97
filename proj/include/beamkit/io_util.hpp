#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace beamkit {

// Whole-file helpers. Writes go through a temp file in the same directory
// followed by an atomic rename.
std::vector<unsigned char> read_file_bytes(const std::string& path);
void write_file_atomic(const std::string& path, const void* data,
                       std::size_t size);
void write_text_atomic(const std::string& path, const std::string& text);

// Parallelism cap: BEAMKIT_THREADS env var, default 1.
int thread_budget();

}  // namespace beamkit
