// SPDX-License-Identifier: Apache-2.0
#include "xkd/core/binary_io.hpp"

#include "xkd/core/error.hpp"

namespace xkd {

void BinaryWriter::bytes(const void* data, std::size_t n) {
    out_.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
    if (!out_) throw FormatError("write failed");
}

void BinaryWriter::str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
}

void BinaryReader::bytes(void* data, std::size_t n, const char* what) {
    in_.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) throw FormatError(std::string("truncated file reading ") + what);
}

std::uint32_t BinaryReader::u32(const char* what) {
    std::uint32_t v;
    bytes(&v, sizeof v, what);
    return v;
}

std::uint64_t BinaryReader::u64(const char* what) {
    std::uint64_t v;
    bytes(&v, sizeof v, what);
    return v;
}

double BinaryReader::f64(const char* what) {
    double v;
    bytes(&v, sizeof v, what);
    return v;
}

std::vector<double> BinaryReader::f64s(std::size_t n, const char* what) {
    std::vector<double> v(n);
    bytes(v.data(), n * sizeof(double), what);
    return v;
}

std::string BinaryReader::str(const char* what, std::size_t max_len) {
    const std::uint32_t n = u32(what);
    if (n > max_len) throw FormatError(std::string("implausible string length reading ") + what);
    std::string s(n, '\0');
    bytes(s.data(), n, what);
    return s;
}

bool BinaryReader::at_end() { return in_.peek() == std::char_traits<char>::eof(); }

}  // namespace xkd
