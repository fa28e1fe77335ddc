#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace mgopt {

std::string read_file(const std::string& path);

// Writes to a temporary file in the same directory, then renames over the
// target, so readers never observe a partial file.
void write_file_atomic(const std::string& path, const std::string& content);

std::uint64_t fnv1a64(const void* data, std::size_t len);
std::uint64_t fnv1a64(const std::string& s);

// Content digest of a file, formatted as "fnv1a64:<16 hex digits>".
std::string file_digest(const std::string& path);

// Combined digest over several already-formatted digests (order matters).
std::string combine_digests(const std::vector<std::string>& parts);

std::string to_hex(std::uint64_t v);

}  // namespace mgopt
