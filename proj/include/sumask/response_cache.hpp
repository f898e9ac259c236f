#pragma once
// Content-addressed persistent store of provider responses.
//
// Layout: <root>/<d0d1>/<d2d3>/<digest>.json, one JSON file per entry.
// Writes go to a temporary file in the target directory followed by an
// atomic rename, so readers never observe partial entries.

#include <atomic>
#include <cerrno>
#include <chrono>
#include <cstdio>
#include <cstring>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <thread>

#include <fcntl.h>
#include <unistd.h>

#include "sumask/core.hpp"
#include "sumask/hashing.hpp"

namespace sumask {

namespace fs = std::filesystem;

struct CacheKeyFields {
  std::string provider_id;
  std::string model_id;
  std::string prompt;
  double temperature = 0.0;
  int max_tokens = 0;
  int sample_index = 0;
  std::string registry_version;
};

// Fixed field order, each field as name=<byte length>:<bytes>\n, temperature
// in decimal with six fractional digits.
inline std::string canonical_key_encoding(const CacheKeyFields& f) {
  char temperature[64];
  std::snprintf(temperature, sizeof temperature, "%.6f", f.temperature);
  std::string out;
  auto field = [&out](std::string_view name, std::string_view value) {
    out.append(name);
    out.push_back('=');
    out.append(std::to_string(value.size()));
    out.push_back(':');
    out.append(value);
    out.push_back('\n');
  };
  field("provider", f.provider_id);
  field("model", f.model_id);
  field("prompt", f.prompt);
  field("temperature", temperature);
  field("max_tokens", std::to_string(f.max_tokens));
  field("sample_index", std::to_string(f.sample_index));
  field("registry_version", f.registry_version);
  return out;
}

struct CacheKey {
  std::string digest;  // 64 lowercase hex chars

  static CacheKey make(const CacheKeyFields& fields) { return {sha256_hex(canonical_key_encoding(fields))}; }
  friend bool operator==(const CacheKey&, const CacheKey&) = default;
};

struct CacheEntry {
  CacheKey key;
  std::string value;
  std::string created_at;
  json meta = json::object();
};

inline std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

struct CacheStats {
  std::size_t entries = 0;
  std::uintmax_t bytes = 0;
};

class ResponseCache {
 public:
  // `durable` fsyncs each entry before the rename. Concurrent readers never
  // see partial files either way; only crash safety differs.
  explicit ResponseCache(fs::path root, bool durable = true) : root_(std::move(root)), durable_(durable) {}

  const fs::path& root() const noexcept { return root_; }
  bool durable() const noexcept { return durable_; }

  fs::path path_for(const CacheKey& key) const {
    if (key.digest.size() != 64) throw StorageError("malformed cache digest '" + key.digest + "'");
    return root_ / key.digest.substr(0, 2) / key.digest.substr(2, 2) / (key.digest + ".json");
  }

  std::optional<CacheEntry> get(const CacheKey& key) const {
    const auto path = path_for(key);
    std::error_code ec;
    if (!fs::exists(path, ec)) return std::nullopt;
    std::ifstream in(path, std::ios::binary);
    if (!in) throw StorageError("cannot read " + path.string());
    json j;
    try {
      j = json::parse(in);
    } catch (const json::exception& e) {
      throw StorageError("corrupt cache entry " + path.string() + ": " + e.what());
    }
    CacheEntry entry;
    entry.key = {j.at("key").get<std::string>()};
    entry.value = j.at("value").get<std::string>();
    entry.created_at = j.value("created_at", std::string());
    entry.meta = j.value("meta", json::object());
    return entry;
  }

  void put(const CacheEntry& entry) const {
    const auto path = path_for(entry.key);
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    if (ec) throw StorageError("cannot create " + path.parent_path().string() + ": " + ec.message());

    const json j = {{"key", entry.key.digest},
                    {"value", entry.value},
                    {"created_at", entry.created_at.empty() ? utc_timestamp() : entry.created_at},
                    {"meta", entry.meta}};
    const std::string body = j.dump(2) + "\n";

    static std::atomic<std::uint64_t> counter{0};
    std::ostringstream tmp_name;
    tmp_name << "." << entry.key.digest << ".tmp." << ::getpid() << "."
             << std::hash<std::thread::id>{}(std::this_thread::get_id()) << "." << counter.fetch_add(1);
    const auto tmp = path.parent_path() / tmp_name.str();

    write_file(tmp, body, durable_);
    if (std::rename(tmp.c_str(), path.c_str()) != 0) {
      const std::string reason = std::strerror(errno);
      fs::remove(tmp, ec);
      throw StorageError("cannot rename into " + path.string() + ": " + reason);
    }
  }

  CacheStats stats() const {
    CacheStats s;
    std::error_code ec;
    if (!fs::exists(root_, ec)) return s;
    for (const auto& item : fs::recursive_directory_iterator(root_, ec)) {
      if (!item.is_regular_file()) continue;
      const auto name = item.path().filename().string();
      if (name.size() == 69 && name.ends_with(".json")) {
        ++s.entries;
        s.bytes += item.file_size();
      }
    }
    return s;
  }

  // Removes every entry file and the prefix directories; returns the count.
  std::size_t purge() const {
    const auto before = stats().entries;
    std::error_code ec;
    if (!fs::exists(root_, ec)) return 0;
    for (const auto& item : fs::directory_iterator(root_, ec)) {
      const auto name = item.path().filename().string();
      if (item.is_directory() && name.size() == 2) fs::remove_all(item.path(), ec);
    }
    return before;
  }

 private:
  static void write_file(const fs::path& path, const std::string& body, bool sync) {
    const int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
    if (fd < 0) throw StorageError("cannot open " + path.string() + ": " + std::strerror(errno));
    std::size_t written = 0;
    while (written < body.size()) {
      const auto n = ::write(fd, body.data() + written, body.size() - written);
      if (n < 0) {
        if (errno == EINTR) continue;
        const std::string reason = std::strerror(errno);
        ::close(fd);
        throw StorageError("write failed on " + path.string() + ": " + reason);
      }
      written += static_cast<std::size_t>(n);
    }
    if ((sync && ::fsync(fd) != 0) || ::close(fd) != 0)
      throw StorageError("cannot flush " + path.string() + ": " + std::strerror(errno));
  }

  fs::path root_;
  bool durable_ = true;
};

}  // namespace sumask
