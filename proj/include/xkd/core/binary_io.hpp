// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

namespace xkd {

static_assert(std::endian::native == std::endian::little, "file formats assume a little-endian host");

/// Little-endian primitive writer over a binary stream.
class BinaryWriter {
public:
    explicit BinaryWriter(std::ostream& out) : out_(out) {}

    void bytes(const void* data, std::size_t n);
    void u32(std::uint32_t v) { bytes(&v, sizeof v); }
    void u64(std::uint64_t v) { bytes(&v, sizeof v); }
    void f64(double v) { bytes(&v, sizeof v); }
    void f64s(const std::vector<double>& v) { bytes(v.data(), v.size() * sizeof(double)); }
    /// u32 length, then the characters.
    void str(const std::string& s);

private:
    std::ostream& out_;
};

/// Reader counterpart. Every short read throws FormatError naming `what`.
class BinaryReader {
public:
    explicit BinaryReader(std::istream& in) : in_(in) {}

    void bytes(void* data, std::size_t n, const char* what);
    std::uint32_t u32(const char* what);
    std::uint64_t u64(const char* what);
    double f64(const char* what);
    std::vector<double> f64s(std::size_t n, const char* what);
    std::string str(const char* what, std::size_t max_len = 1u << 16);
    bool at_end();

private:
    std::istream& in_;
};

}  // namespace xkd
