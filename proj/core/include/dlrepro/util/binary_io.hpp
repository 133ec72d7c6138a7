#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace dlrepro {

// Little-endian, length-prefixed encoding used by the index blobs.
class BinaryWriter {
 public:
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void f64(double v);
  void str(std::string_view s);
  const std::string& bytes() const { return buf_; }

 private:
  std::string buf_;
};

class BinaryReader {
 public:
  explicit BinaryReader(std::string_view data) : data_(data) {}
  std::uint32_t u32();
  std::uint64_t u64();
  double f64();
  std::string str();
  bool done() const { return pos_ == data_.size(); }

 private:
  void need(std::size_t n) const;
  std::string_view data_;
  std::size_t pos_ = 0;
};

}  // namespace dlrepro
