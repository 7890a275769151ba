#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace gpdeg::cli {

std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

/// UTC time in ISO 8601, taken from SOURCE_DATE_EPOCH when that is set.
std::string build_timestamp();

/// Record of one command run, written as manifest.json in its output directory.
struct Manifest {
  std::string command;
  std::optional<std::uint64_t> seed;
  std::vector<std::pair<std::string, std::filesystem::path>> inputs;  // role, path
  std::vector<std::pair<std::string, std::string>> settings;          // key, value
  std::string status = "ok";
  std::string message;

  /// Hashes inputs and every regular file already in out_dir, then writes
  /// out_dir/manifest.json.
  void write(const std::filesystem::path& out_dir) const;
};

}  // namespace gpdeg::cli
