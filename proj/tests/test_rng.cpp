#include <doctest.h>

#include <cmath>

#include "flatreg/rng.hpp"

using flatreg::Rng;

TEST_CASE("philox4x32-10 known-answer vectors") {
    // Reference vectors from the Random123 distribution (kat_vectors).
    auto out = Rng::block({0u, 0u, 0u, 0u}, {0u, 0u});
    CHECK(out[0] == 0x6627e8d5u);
    CHECK(out[1] == 0xe169c58du);
    CHECK(out[2] == 0xbc57ac4cu);
    CHECK(out[3] == 0x9b00dbd8u);

    out = Rng::block({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu},
                     {0xffffffffu, 0xffffffffu});
    CHECK(out[0] == 0x408f276du);
    CHECK(out[1] == 0x41c83b0eu);
    CHECK(out[2] == 0xa20bc7c6u);
    CHECK(out[3] == 0x6d5451fdu);

    out = Rng::block({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u},
                     {0xa4093822u, 0x299f31d0u});
    CHECK(out[0] == 0xd16cfe09u);
    CHECK(out[1] == 0x94fdccebu);
    CHECK(out[2] == 0x5001e420u);
    CHECK(out[3] == 0x24126ea1u);
}

TEST_CASE("streams are deterministic and distinct") {
    Rng a(42, 0), b(42, 0), c(42, 1);
    bool all_equal = true, any_equal_cross = true;
    for (int i = 0; i < 64; ++i) {
        const auto xa = a.next_u32();
        all_equal = all_equal && (xa == b.next_u32());
        any_equal_cross = any_equal_cross && (xa == c.next_u32());
    }
    CHECK(all_equal);
    CHECK_FALSE(any_equal_cross);
}

TEST_CASE("uniform and normal moments") {
    Rng rng(7, 0);
    const int n = 200000;
    double mean_u = 0.0, mean_n = 0.0, var_n = 0.0;
    for (int i = 0; i < n; ++i) {
        const double u = rng.uniform();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
        mean_u += u;
        const double z = rng.normal();
        mean_n += z;
        var_n += z * z;
    }
    mean_u /= n;
    mean_n /= n;
    var_n /= n;
    CHECK(std::abs(mean_u - 0.5) < 0.005);
    CHECK(std::abs(mean_n) < 0.01);
    CHECK(std::abs(var_n - 1.0) < 0.02);
}

TEST_CASE("uniform_int stays in range and hits all cells") {
    Rng rng(9, 2);
    int counts[7] = {0};
    for (int i = 0; i < 7000; ++i) {
        const auto v = rng.uniform_int(7);
        REQUIRE(v < 7);
        ++counts[v];
    }
    for (int c : counts) CHECK(c > 800);
}
