// SPDX-License-Identifier: Apache-2.0
#include "gcrf/binary_io.hpp"

#include <bit>
#include <cstring>
#include <string>

#include "gcrf/error.hpp"

namespace gcrf {

void ByteWriter::magic(std::string_view tag) {
  out_.insert(out_.end(), tag.begin(), tag.end());
}

void ByteWriter::u32(std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void ByteWriter::u64(std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void ByteWriter::f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

void ByteWriter::f64s(std::span<const double> values) {
  out_.reserve(out_.size() + values.size() * 8);
  for (double v : values) f64(v);
}

void ByteWriter::bytes(std::span<const std::uint8_t> data) {
  out_.insert(out_.end(), data.begin(), data.end());
}

void ByteReader::need(std::size_t n) const {
  if (data_.size() - pos_ < n) {
    throw Error(ErrorKind::kBadInput, "truncated binary data");
  }
}

void ByteReader::expect_magic(std::string_view tag) {
  need(tag.size());
  if (std::memcmp(data_.data() + pos_, tag.data(), tag.size()) != 0) {
    throw Error(ErrorKind::kBadInput, "bad magic, expected " + std::string(tag));
  }
  pos_ += tag.size();
}

std::uint32_t ByteReader::u32() {
  need(4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(data_[pos_ + i]) << (8 * i);
  pos_ += 4;
  return v;
}

std::uint64_t ByteReader::u64() {
  need(8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(data_[pos_ + i]) << (8 * i);
  pos_ += 8;
  return v;
}

double ByteReader::f64() { return std::bit_cast<double>(u64()); }

void ByteReader::f64s(std::span<double> out) {
  need(out.size() * 8);
  for (double& v : out) v = f64();
}

std::span<const std::uint8_t> ByteReader::bytes(std::size_t n) {
  need(n);
  auto s = data_.subspan(pos_, n);
  pos_ += n;
  return s;
}

}  // namespace gcrf
