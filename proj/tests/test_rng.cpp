#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "lada/rng.hpp"

using lada::Rng;

TEST_CASE("splitmix64 matches the published reference sequence") {
    // First outputs for seed 1234567 from the reference implementation
    // (Vigna's splitmix64.c), computed independently.
    Rng rng(1234567);
    CHECK(rng.next_u64() == 6457827717110365317ull);
    CHECK(rng.next_u64() == 3203168211198807973ull);
    CHECK(rng.next_u64() == 9817491932198370423ull);
}

TEST_CASE("uniform stays in [0,1) and is deterministic per seed") {
    Rng a(42), b(42), c(43);
    bool same = true, diff = false;
    for (int i = 0; i < 1000; ++i) {
        double x = a.uniform();
        CHECK(x >= 0.0);
        CHECK(x < 1.0);
        same = same && (x == b.uniform());
        diff = diff || (x != c.uniform());
    }
    CHECK(same);
    CHECK(diff);
}

TEST_CASE("uniform(lo,hi) respects the interval") {
    Rng rng(7);
    for (int i = 0; i < 200; ++i) {
        double x = rng.uniform(-2.5, 1.5);
        CHECK(x >= -2.5);
        CHECK(x < 1.5);
    }
}

TEST_CASE("normal has roughly standard moments") {
    Rng rng(99);
    const int n = 20000;
    double sum = 0.0, sq = 0.0;
    for (int i = 0; i < n; ++i) {
        double x = rng.normal();
        sum += x;
        sq += x * x;
    }
    double mean = sum / n;
    double var = sq / n - mean * mean;
    CHECK(std::fabs(mean) < 0.03);
    CHECK(std::fabs(var - 1.0) < 0.05);
}

TEST_CASE("below(n) covers the full range without bias toward low values") {
    Rng rng(5);
    std::vector<int> counts(10, 0);
    for (int i = 0; i < 10000; ++i) {
        std::size_t v = rng.below(10);
        REQUIRE(v < 10);
        ++counts[v];
    }
    for (int c : counts) CHECK(c > 800);
}

TEST_CASE("shuffle permutes and is seed-deterministic") {
    std::vector<std::size_t> v(20);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = i;
    auto w = v;
    Rng a(11), b(11);
    a.shuffle(v);
    b.shuffle(w);
    CHECK(v == w);
    auto sorted = v;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < sorted.size(); ++i) CHECK(sorted[i] == i);
}

TEST_CASE("fork produces decorrelated independent streams") {
    Rng base(123);
    Rng f0 = Rng(123).fork(0);
    Rng f1 = Rng(123).fork(1);
    std::set<std::uint64_t> seen;
    for (int i = 0; i < 100; ++i) {
        seen.insert(f0.next_u64());
        seen.insert(f1.next_u64());
        seen.insert(base.next_u64());
    }
    CHECK(seen.size() == 300);
}
