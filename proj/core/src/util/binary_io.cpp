#include "dlrepro/util/binary_io.hpp"

#include <bit>
#include <cstring>

#include "dlrepro/util/error.hpp"

namespace dlrepro {

void BinaryWriter::u32(std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void BinaryWriter::u64(std::uint64_t v) {
  for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void BinaryWriter::f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

void BinaryWriter::str(std::string_view s) {
  u64(s.size());
  buf_.append(s.data(), s.size());
}

void BinaryReader::need(std::size_t n) const {
  if (data_.size() - pos_ < n) throw Error(ErrorKind::Parse, "truncated binary blob");
}

std::uint32_t BinaryReader::u32() {
  need(4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i)
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
  pos_ += 4;
  return v;
}

std::uint64_t BinaryReader::u64() {
  need(8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i)
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
  pos_ += 8;
  return v;
}

double BinaryReader::f64() { return std::bit_cast<double>(u64()); }

std::string BinaryReader::str() {
  auto n = u64();
  need(n);
  std::string s(data_.substr(pos_, n));
  pos_ += n;
  return s;
}

}  // namespace dlrepro
