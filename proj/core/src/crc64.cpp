#include "kdlab/crc64.hpp"

#include <array>

namespace kdlab {

namespace {

std::array<std::uint64_t, 256> make_table() {
    // Reflected form of the ECMA-182 polynomial.
    constexpr std::uint64_t poly = 0xc96c5795d7870f42ULL;
    std::array<std::uint64_t, 256> table{};
    for (std::uint64_t i = 0; i < 256; ++i) {
        std::uint64_t crc = i;
        for (int bit = 0; bit < 8; ++bit)
            crc = (crc & 1) ? (crc >> 1) ^ poly : crc >> 1;
        table[static_cast<std::size_t>(i)] = crc;
    }
    return table;
}

const std::array<std::uint64_t, 256>& table() {
    static const auto t = make_table();
    return t;
}

}  // namespace

void Crc64::update(const void* bytes, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(bytes);
    const auto& t = table();
    for (std::size_t i = 0; i < n; ++i)
        state_ = t[(state_ ^ p[i]) & 0xff] ^ (state_ >> 8);
}

}  // namespace kdlab
