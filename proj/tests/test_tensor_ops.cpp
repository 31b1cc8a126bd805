#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "spi/tensor_ops.hpp"

using spi::Matrix;
using spi::Vector;

namespace {

// Random matrix with dyadic-rational entries so symmetric round trips are exact.
Matrix random_dyadic(std::mt19937& rng, Eigen::Index rows, Eigen::Index cols) {
    std::uniform_int_distribution<int> dist(-64, 64);
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = dist(rng) / 8.0;
    return m;
}

} // namespace

TEST_CASE("vec stacks columns") {
    Matrix m(2, 2);
    m << 1, 3, 2, 4;
    Vector expected(4);
    expected << 1, 2, 3, 4;
    REQUIRE(spi::vec(m) == expected);

    REQUIRE(spi::vec(Matrix::Constant(1, 1, 7.0)) == Vector::Constant(1, 7.0));
    REQUIRE(spi::vec(Matrix::Zero(2, 3)) == Vector::Zero(6));
}

TEST_CASE("vecs packs the upper triangle with doubled off-diagonals") {
    Vector id2(3);
    id2 << 1, 0, 1;
    REQUIRE(spi::vecs(Matrix::Identity(2, 2)) == id2);

    Matrix s(2, 2);
    s << 1, 2, 2, 3;
    Vector expected(3);
    expected << 1, 4, 3;
    REQUIRE(spi::vecs(s) == expected);

    Vector id3(6);
    id3 << 1, 0, 0, 1, 0, 1;
    REQUIRE(spi::vecs(Matrix::Identity(3, 3)) == id3);

    REQUIRE_THROWS_AS(spi::vecs(Matrix::Zero(2, 3)), std::invalid_argument);
}

TEST_CASE("vecv lists ordered pairwise products") {
    Vector v(2);
    v << 1, 2;
    Vector expected(3);
    expected << 1, 2, 4;
    REQUIRE(spi::vecv(v) == expected);

    REQUIRE(spi::vecv(Vector::Zero(3)) == Vector::Zero(6));
    REQUIRE(spi::vecv(Vector::Constant(1, 3.0)) == Vector::Constant(1, 9.0));
}

TEST_CASE("mat_from_vecs inverts vecs") {
    Vector w(3);
    w << 1, 4, 3;
    Matrix expected(2, 2);
    expected << 1, 2, 2, 3;
    REQUIRE(spi::mat_from_vecs(w) == expected);

    Vector id(3);
    id << 1, 0, 1;
    REQUIRE(spi::mat_from_vecs(id) == Matrix::Identity(2, 2));
    REQUIRE(spi::mat_from_vecs(Vector::Constant(1, 5.0)) == Matrix::Constant(1, 1, 5.0));

    REQUIRE_THROWS_AS(spi::mat_from_vecs(Vector::Zero(4)), std::invalid_argument);
}

TEST_CASE("kron matches the block definition") {
    Matrix nilpotent(2, 2);
    nilpotent << 0, 1, 0, 0;
    Matrix expected = Matrix::Zero(4, 4);
    expected.block(0, 0, 2, 2) = nilpotent;
    expected.block(2, 2, 2, 2) = nilpotent;
    REQUIRE(spi::kron(Matrix::Identity(2, 2), nilpotent) == expected);

    Matrix m(2, 2);
    m << 1, 2, 3, 4;
    REQUIRE(spi::kron(Matrix::Constant(1, 1, 2.0), m) == (2.0 * m).eval());

    Vector u(2), b(2);
    u << 1, 2;
    b << 0, 1;
    Vector uv(4);
    uv << 0, 1, 0, 2;
    REQUIRE(spi::kron(u, b) == uv);
}

TEST_CASE("quadratic-form identity: dot(vecs(P), vecv(x)) equals x'Px") {
    std::mt19937 rng(7);
    std::uniform_int_distribution<int> dim_dist(1, 9);
    for (int trial = 0; trial < 1000; ++trial) {
        const Eigen::Index a = dim_dist(rng);
        Matrix half = random_dyadic(rng, a, a);
        Matrix p = half + half.transpose();
        Vector x = random_dyadic(rng, a, 1);
        const double direct = x.dot(p * x);
        const double packed = spi::vecs(p).dot(spi::vecv(x));
        REQUIRE_THAT(packed, Catch::Matchers::WithinRel(direct, 1e-12) ||
                                 Catch::Matchers::WithinAbs(direct, 1e-13));
    }
}

TEST_CASE("vecs round-trip is exact") {
    std::mt19937 rng(11);
    for (int trial = 0; trial < 100; ++trial) {
        const Eigen::Index a = 1 + trial % 8;
        Matrix half = random_dyadic(rng, a, a);
        Matrix s = half + half.transpose();
        REQUIRE(spi::mat_from_vecs(spi::vecs(s)) == s);
    }
}

TEST_CASE("kron mixed-product rule") {
    std::mt19937 rng(13);
    for (int trial = 0; trial < 50; ++trial) {
        Matrix a = random_dyadic(rng, 2, 3);
        Matrix b = random_dyadic(rng, 3, 2);
        Matrix c = random_dyadic(rng, 3, 2);
        Matrix d = random_dyadic(rng, 2, 4);
        Matrix lhs = spi::kron(a, b) * spi::kron(c, d);
        Matrix rhs = spi::kron((a * c).eval(), (b * d).eval());
        REQUIRE((lhs - rhs).norm() <= 1e-12 * std::max(1.0, rhs.norm()));
    }
}
