#include "dynsir/model_params.hpp"

#include <doctest.h>

#include <numeric>

using namespace dynsir;

namespace {

ModelSpec case6b() { return ModelSpec::single(3, 1, 1, 1, -1, 0, 0); }

} // namespace

TEST_CASE("validate rejects broken specs")
{
    ModelSpec s = case6b();
    CHECK_NOTHROW(s.validate());

    ModelSpec bad = s;
    bad.kappa_beta(0, 0) = 0.5;
    CHECK_THROWS_AS(bad.validate(), InvalidArgument);

    bad = s;
    bad.mu(0, 0) = 0.0;
    CHECK_THROWS_AS(bad.validate(), InvalidArgument);

    ModelSpec two;
    two.k = 2;
    two.p = Vector(2);
    two.p << 0.5, 0.5;
    two.lambda = Matrix::Ones(2, 2);
    two.mu = Matrix::Ones(2, 2);
    two.beta = Matrix::Ones(2, 2);
    two.gamma = Vector::Ones(2);
    two.kappa_lambda = Matrix::Zero(2, 2);
    two.kappa_mu = Matrix::Zero(2, 2);
    two.kappa_beta = Matrix::Constant(2, 2, -1.0);
    CHECK_NOTHROW(two.validate());
    two.lambda(0, 1) = 2.0;
    CHECK_THROWS_AS(two.validate(), InvalidArgument);
    two.lambda(0, 1) = 1.0;
    two.p << 0.5, 0.6;
    CHECK_THROWS_AS(two.validate(), InvalidArgument);
}

TEST_CASE("realized rates follow the power laws")
{
    const RealizedRates r = realize_rates(case6b(), 1000);
    CHECK(r.lambda_n(0, 0) == doctest::Approx(0.003).epsilon(1e-14));
    CHECK(r.beta_n(0, 0) == 1.0);
    CHECK(r.mu_n(0, 0) == 1.0);

    ModelSpec s = case6b();
    CHECK(realize_rates(s, 1000000).beta_n(0, 0) == 1.0);
}

TEST_CASE("largest remainder split")
{
    Vector p(2);
    p << 0.5, 0.5;
    const auto sizes = split_population(p, 1001);
    CHECK(sizes.size() == 2);
    CHECK(sizes[0] + sizes[1] == 1001);
    CHECK(sizes[0] == 501);
    CHECK(sizes[1] == 500);

    Vector q(3);
    q << 0.2, 0.3, 0.5;
    const auto s3 = split_population(q, 7);
    CHECK(std::accumulate(s3.begin(), s3.end(), 0L) == 7);
}

TEST_CASE("case 6b classification")
{
    const RegimeReport rep = classify_regime(case6b());
    REQUIRE(rep.pairs.size() == 1);
    CHECK(rep.pairs[0].case_label == "6b");
    CHECK_FALSE(rep.pairs[0].homogeneous);
    CHECK(rep.pairs[0].constraints_ok);
    REQUIRE(rep.pairs[0].limit_r0);
    CHECK(*rep.pairs[0].limit_r0 == doctest::Approx(2.0).epsilon(1e-14));
    CHECK(rep.overall_ok);
    CHECK(limit_r0_matrix(case6b())(0, 0) == doctest::Approx(2.0).epsilon(1e-14));
}

TEST_CASE("case 9 classification")
{
    const RegimeReport rep = classify_regime(ModelSpec::single(1, 1, 2, 1, 0, 0, -1));
    CHECK(rep.pairs[0].case_label == "9");
    CHECK(rep.pairs[0].homogeneous);
    REQUIRE(rep.pairs[0].limit_r0);
    CHECK(*rep.pairs[0].limit_r0 == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("case 6a constraint violation")
{
    const RegimeReport rep = classify_regime(ModelSpec::single(3, 1, 1, 1, -1, 0, -0.5));
    CHECK(rep.pairs[0].case_label == "6a");
    CHECK_FALSE(rep.pairs[0].constraints_ok);
    CHECK_FALSE(rep.pairs[0].limit_r0);
    CHECK_FALSE(rep.overall_ok);
    CHECK_FALSE(rep.pairs[0].diagnostic.empty());
    CHECK_THROWS_AS(limit_r0_matrix(ModelSpec::single(3, 1, 1, 1, -1, 0, -0.5)), InvalidArgument);
}

TEST_CASE("pair without contacts has zero R0")
{
    ModelSpec s;
    s.k = 2;
    s.p = Vector::Constant(2, 0.5);
    s.lambda = Matrix::Constant(2, 2, 3.0);
    s.mu = Matrix::Ones(2, 2);
    s.beta = Matrix::Ones(2, 2);
    s.beta(0, 1) = 0.0;
    s.gamma = Vector::Ones(2);
    s.kappa_lambda = Matrix::Constant(2, 2, -1.0);
    s.kappa_mu = Matrix::Zero(2, 2);
    s.kappa_beta = Matrix::Zero(2, 2);
    const Matrix r0 = limit_r0_matrix(s);
    CHECK(r0(0, 1) == 0.0);
    CHECK(r0(0, 0) == doctest::Approx(2.0));
    const auto mask = homogeneity_mask(classify_regime(s), 2);
    CHECK_FALSE(mask[0][0]);
    CHECK_FALSE(mask[1][1]);
}
