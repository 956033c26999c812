#pragma once

#include <cstddef>
#include <cstdint>

namespace kdlab {

// CRC-64/XZ (ECMA-182 polynomial, reflected, init/xorout all-ones).
// Used as the integrity checksum in the parameter and dataset file formats
// and as the content checksum of Parameters.
class Crc64 {
public:
    Crc64() = default;

    void update(const void* bytes, std::size_t n);
    std::uint64_t value() const { return ~state_; }

    static std::uint64_t of(const void* bytes, std::size_t n) {
        Crc64 c;
        c.update(bytes, n);
        return c.value();
    }

private:
    std::uint64_t state_ = ~0ULL;
};

}  // namespace kdlab
