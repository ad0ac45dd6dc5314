#include <cstdio>
#include <filesystem>
#include <fstream>

#include "doctest.h"

#include "dinf/container.hpp"
#include "dinf/parallel.hpp"
#include "dinf/rng.hpp"

using namespace dinf;

TEST_CASE("rng: identical (seed, path) gives identical sequences") {
    RngStream a = RngStream(42).child("noise", 3).child("x", 7);
    RngStream b = RngStream(42).child("noise", 3).child("x", 7);
    Sampler sa(a), sb(b);
    for (int i = 0; i < 100; ++i) {
        CHECK(sa.normal() == sb.normal());
        CHECK(sa.uniform_index(1000) == sb.uniform_index(1000));
    }
}

TEST_CASE("rng: distinct paths give distinct sequences") {
    Sampler a(RngStream(42).child("a", 0));
    Sampler b(RngStream(42).child("a", 1));
    Sampler c(RngStream(42).child("b", 0));
    Sampler d(RngStream(43).child("a", 0));
    bool ab = false, ac = false, ad = false;
    for (int i = 0; i < 16; ++i) {
        const double va = a.normal();
        ab |= va != b.normal();
        ac |= va != c.normal();
        ad |= va != d.normal();
    }
    CHECK(ab);
    CHECK(ac);
    CHECK(ad);
}

TEST_CASE("rng: sibling streams look independent") {
    // correlation of normals across 2000 sibling pairs stays small
    const int n = 2000;
    double sxy = 0, sx = 0, sy = 0, sxx = 0, syy = 0;
    for (int i = 0; i < n; ++i) {
        const double x = Sampler(RngStream(7).child("pair", i).child("l")).normal();
        const double y = Sampler(RngStream(7).child("pair", i).child("r")).normal();
        sx += x; sy += y; sxy += x * y; sxx += x * x; syy += y * y;
    }
    const double corr = (sxy - sx * sy / n) /
                        std::sqrt((sxx - sx * sx / n) * (syy - sy * sy / n));
    CHECK(std::abs(corr) < 0.1);
}

TEST_CASE("parallel: blocked reduce is bitwise stable across worker counts") {
    const std::size_t n = 1000;
    std::vector<double> xs(n);
    Sampler smp(RngStream(11).child("xs"));
    for (auto& x : xs) x = smp.normal();

    auto run = [&]() {
        return parallel::blocked_reduce<double>(
            n, parallel::kDefaultBlock, [] { return 0.0; },
            [&](double& acc, std::size_t i) { acc += xs[i] * xs[i]; },
            [](double& lhs, double rhs) { lhs += rhs; });
    };

    const int saved = parallel::max_workers();
    parallel::set_max_workers(1);
    const double r1 = run();
    parallel::set_max_workers(4);
    const double r4 = run();
    parallel::set_max_workers(8);
    const double r8 = run();
    parallel::set_max_workers(saved);

    CHECK(r1 == r4);
    CHECK(r1 == r8);

    double serial = 0.0;
    for (double x : xs) serial += x * x;
    CHECK(r1 == doctest::Approx(serial).epsilon(1e-13));
}

TEST_CASE("container: roundtrip is bit-exact") {
    ArtifactContainer c;
    Vec v(3);
    v << 1.5, -2.25, 1e-300;
    c.add_vector("vec", v);
    Mat m(2, 2);
    m << 1, 2, 3, 4;
    c.add_matrix("mat", m);
    c.add_scalar_u64("meta/seed", 0xdeadbeefull);
    c.add_string("meta/note", "hello");
    std::vector<std::int8_t> q = {-128, 0, 127};
    c.add_i8("quant", {3}, q);

    const auto bytes = c.serialize();
    const auto c2 = ArtifactContainer::deserialize(bytes);
    CHECK(c2.get_vector("vec") == v);
    CHECK(c2.get_matrix("mat") == m);
    CHECK(c2.get_scalar_u64("meta/seed") == 0xdeadbeefull);
    CHECK(c2.get_string("meta/note") == "hello");
    CHECK(c2.get_i8("quant") == q);
    CHECK(c2.serialize() == bytes);
}

TEST_CASE("container: corrupted checksum is detected") {
    ArtifactContainer c;
    c.add_scalar_u64("x", 1);
    auto bytes = c.serialize();
    for (std::size_t flip : {std::size_t(6), bytes.size() - 1, bytes.size() / 2}) {
        auto bad = bytes;
        bad[flip] ^= 0x01;
        CHECK_THROWS_AS(ArtifactContainer::deserialize(bad), ContainerError);
    }
}

TEST_CASE("container: duplicate names rejected") {
    ArtifactContainer c;
    c.add_scalar_u64("x", 1);
    CHECK_THROWS_AS(c.add_scalar_u64("x", 2), ContainerError);
}

TEST_CASE("container: file write/read") {
    const auto path = std::filesystem::temp_directory_path() / "dinf_test_container.dinf";
    ArtifactContainer c;
    Vec v = Vec::LinSpaced(10, 0.0, 1.0);
    c.add_vector("v", v);
    c.write_file(path);
    const auto c2 = ArtifactContainer::read_file(path);
    CHECK(c2.get_vector("v") == v);
    std::filesystem::remove(path);
}
