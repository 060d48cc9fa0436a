#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <sstream>

#include "meldctl/meld.hpp"
#include "meldctl/system.hpp"

using namespace meldctl;

namespace {

StateVec<ThreeRModel> home_state() { return {0.0, M_PI / 4, 0.0, 0.0, 0.0, 0.0}; }

Choice s1() { return Choice::from_indices({2, 3, 4}, 7); }
Choice s2() { return Choice::from_indices({1, 5, 6}, 7); }
Choice s3() { return Choice::from_indices({2, 5, 6}, 7); }
Choice s4() { return Choice::from_indices({0, 5, 6}, 7); }
Choice s5() { return Choice::from_indices({0, 1, 2}, 7); }

std::uint64_t splitmix(std::uint64_t& s) {
    s += 0x9e3779b97f4a7c15ull;
    std::uint64_t z = s;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

double unif(std::uint64_t& s, double lo, double hi) {
    return lo + (hi - lo) * (splitmix(s) >> 11) * 0x1.0p-53;
}

}  // namespace

TEST_CASE("square choice enumeration is complete and lexicographic") {
    auto cs = square_choices(7, 3);
    CHECK(cs.size() == 35);
    CHECK(cs.front().indices == std::vector<int>{0, 1, 2});
    CHECK(cs.back().indices == std::vector<int>{4, 5, 6});
    for (std::size_t k = 1; k < cs.size(); ++k) CHECK(cs[k - 1].indices < cs[k].indices);
    for (const auto& c : cs) CHECK(c.size() == 3);

    auto small = square_choices(3, 2);
    REQUIRE(small.size() == 3);
    CHECK(small[0].indices == std::vector<int>{0, 1});
    CHECK(small[1].indices == std::vector<int>{0, 2});
    CHECK(small[2].indices == std::vector<int>{1, 2});
}

TEST_CASE("enumeration guards") {
    CHECK_THROWS_AS(square_choices(7, 7), DimensionMismatch);
    CHECK_THROWS_AS(square_choices(7, 0), DimensionMismatch);
    CHECK_THROWS_AS(square_choices(32, 3), DimensionMismatch);
    CHECK_THROWS_AS(square_choices(31, 15), SizeOverflow);
}

TEST_CASE("choice constructors agree and validate") {
    auto a = Choice::from_indices({4, 2, 3}, 7);
    CHECK(a.bits == 28);
    CHECK(a.indices == std::vector<int>{2, 3, 4});
    auto b = Choice::from_bits(28, 7);
    CHECK(b.indices == a.indices);

    CHECK(s5().bits == 7);
    CHECK(s2().bits == 98);
    CHECK(s3().bits == 100);
    CHECK(s4().bits == 97);

    CHECK_THROWS_AS(Choice::from_indices({0, 7}, 7), IndexOutOfRange);
    CHECK_THROWS_AS(Choice::from_indices({1, 1}, 7), DimensionMismatch);
    CHECK_THROWS_AS(Choice::from_bits(1u << 7, 7), IndexOutOfRange);
}

TEST_CASE("selection matrix extracts rows and satisfies the algebra") {
    auto sel = selection_matrix(Choice::from_indices({0, 2}, 3), 3);
    Eigen::VectorXd v(3);
    v << 10.0, 20.0, 30.0;
    Eigen::VectorXd got = sel.apply(v);
    CHECK(got(0) == 10.0);
    CHECK(got(1) == 30.0);

    std::uint64_t st = 99;
    for (int trial = 0; trial < 10; ++trial) {
        auto cs = square_choices(7, 3);
        const auto& sigma = cs[static_cast<std::size_t>(splitmix(st) % cs.size())];
        auto G = selection_matrix(sigma, 7);
        Eigen::MatrixXd Gd = G.dense();
        CHECK(((Gd * Gd.transpose()) - Eigen::MatrixXd::Identity(3, 3)).norm() == 0.0);

        Eigen::MatrixXd A(7, 3);
        for (int r = 0; r < 7; ++r)
            for (int c = 0; c < 3; ++c) A(r, c) = unif(st, -2.0, 2.0);
        Eigen::MatrixXd picked = G.apply(A);
        Eigen::MatrixXd direct = Gd * A;
        CHECK((picked - direct).norm() == 0.0);
    }
}

TEST_CASE("all-joint choice is a meld, its interaction inverts the inertia matrix") {
    ThreeRModel arm;
    auto x0 = home_state();
    auto cert = certify_meld(arm, s5(), x0);
    CHECK(cert.is_meld);
    CHECK(cert.r_sigma == std::vector<int>{2, 2, 2});
    CHECK(cert.degree_sum == 6);
    CHECK(cert.reject_reason.empty());

    std::array<double, 3> q{x0[0], x0[1], x0[2]};
    double M[3][3];
    arm.mass_matrix(q, M);
    Eigen::Matrix3d Me;
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) Me(r, c) = M[r][c];
    CHECK(cert.det_A == doctest::Approx(1.0 / Me.determinant()).epsilon(1e-10));
    CHECK(cert.det_A > 0.0);
}

TEST_CASE("mixed joint and gripper choices certify at the home state") {
    ThreeRModel arm;
    auto x0 = home_state();
    for (auto sigma : {s1(), s2(), s3()}) {
        auto cert = certify_meld(arm, sigma, x0);
        CHECK(cert.is_meld);
        CHECK(cert.degree_sum == 6);
    }
}

TEST_CASE("second-gripper choice is singular at the straight elbow and recovers off it") {
    ThreeRModel arm;
    auto cert0 = certify_meld(arm, s4(), home_state());
    CHECK(!cert0.is_meld);
    CHECK(cert0.reject_reason == "singular-interaction");
    CHECK(std::fabs(cert0.det_A) < 1e-14);

    StateVec<ThreeRModel> bent{0.3, 0.7, 0.9, 0.0, 0.0, 0.0};
    auto cert1 = certify_meld(arm, s4(), bent);
    CHECK(cert1.is_meld);
}

TEST_CASE("first-joint-plus-first-gripper choice is singular everywhere sampled") {
    ThreeRModel arm;
    auto sigma = Choice::from_indices({0, 3, 4}, 7);
    std::uint64_t st = 7;
    for (int trial = 0; trial < 20; ++trial) {
        StateVec<ThreeRModel> x{};
        for (int c = 0; c < 3; ++c) x[c] = unif(st, -1.2, 1.2);
        auto cert = certify_meld(arm, sigma, x);
        CHECK(!cert.is_meld);
        CHECK(cert.reject_reason == "singular-interaction");
    }
}

TEST_CASE("deck sweep at the home state classifies every choice") {
    ThreeRModel arm;
    auto certs = enumerate_melds(arm, home_state());
    REQUIRE(certs.size() == 35);

    int meld_count = 0;
    for (const auto& c : certs) {
        CHECK(c.degree_sum == 6);  // every deck output has degree two here
        meld_count += c.is_meld ? 1 : 0;
        CHECK(c.is_meld == c.reject_reason.empty());
    }
    CHECK(meld_count == 29);

    auto flag = [&](std::uint32_t bits) {
        for (const auto& c : certs)
            if (c.sigma.bits == bits) return c.is_meld;
        FAIL("choice not found");
        return false;
    };
    CHECK(flag(s5().bits));
    CHECK(flag(s1().bits));
    CHECK(flag(s2().bits));
    CHECK(flag(s3().bits));
    CHECK(!flag(s4().bits));
}

TEST_CASE("meld decisions survive an independent full-pivot factorization") {
    ThreeRModel arm;
    auto x0 = home_state();
    auto certs = enumerate_melds(arm, x0);
    for (const auto& cert : certs) {
        Eigen::MatrixXd A = interaction_matrix_deg(arm, cert.sigma.indices, cert.r_sigma, x0);
        Eigen::FullPivLU<Eigen::MatrixXd> lu(A);
        bool invertible = lu.rank() == 3;
        bool decision = cert.degree_sum == 6 && invertible;
        CHECK(decision == cert.is_meld);
        CHECK(lu.determinant() == doctest::Approx(cert.det_A).epsilon(1e-9));
    }
}

TEST_CASE("double integrator deck has exactly one meld") {
    DoubleIntegratorModel di;
    StateVec<DoubleIntegratorModel> x0{0.3, -0.1};
    auto certs = enumerate_melds(di, x0);
    REQUIRE(certs.size() == 2);
    CHECK(certs[0].sigma.indices == std::vector<int>{0});
    CHECK(certs[0].is_meld);
    CHECK(certs[0].r_sigma == std::vector<int>{2});
    CHECK(certs[1].sigma.indices == std::vector<int>{1});
    CHECK(!certs[1].is_meld);
    CHECK(certs[1].reject_reason == "degree-sum-mismatch");
    CHECK(certs[1].degree_sum == 1);
}

TEST_CASE("all-joint choice stays valid across sampled configurations") {
    ThreeRModel arm;
    auto cert = certify_meld(arm, s5(), home_state());
    std::uint64_t st = 1234;
    for (int trial = 0; trial < 1000; ++trial) {
        StateVec<ThreeRModel> x{};
        for (int c = 0; c < 3; ++c) x[c] = unif(st, -3.0, 3.0);
        for (int c = 3; c < 6; ++c) x[c] = unif(st, -2.0, 2.0);
        CHECK(validity_membership(arm, cert, x));
    }
}

TEST_CASE("membership holds at the certificate point and fails at the stretch") {
    ThreeRModel arm;
    auto x0 = home_state();
    auto cert = certify_meld(arm, s1(), x0);
    CHECK(validity_membership(arm, cert, x0));

    StateVec<ThreeRModel> stretch{0.0, 0.0, 0.0, 0.0, 0.0, 0.0};
    CHECK(!validity_membership(arm, cert, stretch));
}

TEST_CASE("compatibility is joint membership") {
    ThreeRModel arm;
    auto x0 = home_state();
    auto a = certify_meld(arm, s1(), x0);
    auto b = certify_meld(arm, s5(), x0);
    CHECK(compatible_at(arm, a, a, x0));
    CHECK(compatible_at(arm, a, b, x0));

    StateVec<ThreeRModel> stretch{0.0, 0.0, 0.0, 0.0, 0.0, 0.0};
    CHECK(!compatible_at(arm, a, b, stretch));
}

TEST_CASE("choice report serializes one row per choice") {
    ThreeRModel arm;
    auto certs = enumerate_melds(arm, home_state());
    std::ostringstream os;
    write_choice_csv(os, certs);
    std::istringstream is(os.str());
    std::string line;
    REQUIRE(std::getline(is, line));
    CHECK(line == "sigma_bits,degree_sum,det_A,cond_A,is_meld,reject_reason");
    int rows = 0;
    while (std::getline(is, line)) ++rows;
    CHECK(rows == 35);
}
