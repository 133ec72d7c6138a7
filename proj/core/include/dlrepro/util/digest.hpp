#pragma once

#include <string>
#include <string_view>

namespace dlrepro {

/// Lowercase hex SHA-256 of `data`.
std::string sha256_hex(std::string_view data);

/// Incremental SHA-256 for hashing many pieces without concatenating them.
class Sha256 {
 public:
  Sha256();
  ~Sha256();
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;

  void update(std::string_view data);
  // Length-prefixed update so that ("ab","c") and ("a","bc") hash differently.
  void update_field(std::string_view data);
  std::string hex_digest();

 private:
  struct Impl;
  Impl* impl_;
};

}  // namespace dlrepro
