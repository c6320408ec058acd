#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>

namespace lapprod {

// Incremental SHA-256, hex digests throughout.
class Sha256 {
 public:
  Sha256();
  ~Sha256();
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;

  void update(std::span<const std::byte> bytes);
  void update(const void* data, std::size_t size);
  std::string hex_digest();

 private:
  void* ctx_;
};

std::string sha256_hex(std::span<const std::byte> bytes);
std::string sha256_file(const std::filesystem::path& path);

}  // namespace lapprod
