#include "gpdeg/manifest.hpp"

#include <algorithm>
#include <cstdlib>
#include <ctime>

#include <openssl/evp.h>

#include <json.hpp>

#include "gpdeg/errors.hpp"
#include "gpdeg/io.hpp"

namespace gpdeg::cli {

using nlohmann::json;

std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw Error("SHA-256 computation failed");
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 0xf];
  }
  return out;
}

std::string sha256_file(const std::filesystem::path& path) { return sha256_hex(io::read_file(path)); }

std::string build_timestamp() {
  std::time_t t = std::time(nullptr);
  if (const char* epoch = std::getenv("SOURCE_DATE_EPOCH")) {
    char* end = nullptr;
    long long v = std::strtoll(epoch, &end, 10);
    if (end != epoch && *end == '\0') t = static_cast<std::time_t>(v);
  }
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

namespace {

// The digest of a lone config file, or of the concatenated digests of several.
json config_hash(const std::vector<std::string>& digests) {
  if (digests.empty()) return nullptr;
  if (digests.size() == 1) return digests.front();
  std::string joined;
  for (const auto& d : digests) joined += d;
  return sha256_hex(joined);
}

}  // namespace

void Manifest::write(const std::filesystem::path& out_dir) const {
  json input_list = json::array();
  std::vector<std::string> config_digests;
  for (const auto& [role, path] : inputs) {
    const std::string digest = sha256_file(path);
    if (role == "config") config_digests.push_back(digest);
    input_list.push_back({{"role", role}, {"file", path.filename().string()}, {"sha256", digest}});
  }
  json setting_map = json::object();
  for (const auto& [k, v] : settings) setting_map[k] = v;

  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(out_dir)) {
    if (entry.is_regular_file() && entry.path().filename() != "manifest.json") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  json outputs = json::array();
  for (const auto& f : files) outputs.push_back({{"file", f.filename().string()}, {"sha256", sha256_file(f)}});

  json j = {{"command", command},
            {"software_version", GPDEG_VERSION},
            {"status", status},
            {"seed", seed ? json(*seed) : json(nullptr)},
            {"config_sha256", config_hash(config_digests)},
            {"inputs", input_list},
            {"settings", setting_map},
            {"outputs", outputs},
            {"created", build_timestamp()}};
  if (!message.empty()) j["message"] = message;
  io::write_file(out_dir / "manifest.json", j.dump(2) + "\n");
}

}  // namespace gpdeg::cli
