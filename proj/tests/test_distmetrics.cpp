#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <random>

#include "ldlmoe/mmd.hpp"

using namespace ldlmoe;

namespace {

struct McEstimate {
    double value;
    double se;
};

// Monte-Carlo oracle for one kernel expectation E_{x~P,y~Q}[k(x,y)].
McEstimate mc_kernel_expectation(const GaussianMixture1D& P, const GaussianMixture1D& Q,
                                 double kappa, std::size_t n, std::uint64_t seed) {
    auto xs = sample_mixture(P, n, seed);
    auto ys = sample_mixture(Q, n, seed + 1);
    double sum = 0, sumsq = 0;
    for (std::size_t i = 0; i < n; ++i) {
        double d = xs[i] - ys[i];
        double k = std::exp(-d * d / (2.0 * kappa * kappa));
        sum += k;
        sumsq += k * k;
    }
    double mean = sum / static_cast<double>(n);
    double var = sumsq / static_cast<double>(n) - mean * mean;
    return {mean, std::sqrt(std::max(var, 0.0) / static_cast<double>(n))};
}

McEstimate mc_mmd2(const GaussianMixture1D& P, const GaussianMixture1D& Q, double kappa,
                   std::size_t n, std::uint64_t seed) {
    auto epp = mc_kernel_expectation(P, P, kappa, n, seed * 10 + 1);
    auto eqq = mc_kernel_expectation(Q, Q, kappa, n, seed * 10 + 3);
    auto epq = mc_kernel_expectation(P, Q, kappa, n, seed * 10 + 5);
    double se = std::sqrt(epp.se * epp.se + eqq.se * eqq.se + 4.0 * epq.se * epq.se);
    return {epp.value + eqq.value - 2.0 * epq.value, se};
}

GaussianMixture1D random_mixture(std::mt19937_64& rng, std::size_t max_components = 4) {
    std::uniform_int_distribution<std::size_t> nc(1, max_components);
    std::uniform_real_distribution<double> um(-3, 3), uv(0.1, 2.0), uw(0.2, 1.0);
    std::size_t n = nc(rng);
    GaussianMixture1D m;
    double total = 0;
    for (std::size_t i = 0; i < n; ++i) {
        m.weights.push_back(uw(rng));
        m.means.push_back(um(rng));
        m.vars.push_back(uv(rng));
        total += m.weights.back();
    }
    for (auto& w : m.weights) w /= total;
    return m;
}

}  // namespace

TEST_CASE("mmd2_closed basics") {
    auto P = GaussianMixture1D::single(0.0, 1.0);

    SECTION("identical distributions give zero") {
        CHECK(mmd2_closed(P, P, 1.0) <= 1e-12);
        std::mt19937_64 rng(1);
        auto M = random_mixture(rng);
        CHECK(mmd2_closed(M, M, 0.7) <= 1e-12);
    }
    SECTION("self kernel expectation of N(0,1) at kappa=1 is 1/sqrt(3)") {
        double e = mixture_kernel_expectation(P, P, 1.0);
        CHECK(e == Catch::Approx(1.0 / std::sqrt(3.0)).epsilon(1e-12));
        auto mc = mc_kernel_expectation(P, P, 1.0, 1000000, 7);
        CHECK(std::fabs(e - mc.value) <= 3.0 * mc.se);
    }
    SECTION("hand-derived N(0,1) vs N(1,1) value") {
        auto Q = GaussianMixture1D::single(1.0, 1.0);
        double expect = 2.0 * (1.0 / std::sqrt(3.0)) * (1.0 - std::exp(-1.0 / 6.0));
        CHECK(mmd2_closed(P, Q, 1.0) == Catch::Approx(expect).epsilon(1e-12));
        auto mc = mc_mmd2(P, Q, 1.0, 1000000, 3);
        CHECK(std::fabs(mmd2_closed(P, Q, 1.0) - mc.value) <= 3.0 * mc.se);
    }
    SECTION("kappa must be positive") { CHECK_THROWS(mmd2_closed(P, P, 0.0)); }
}

TEST_CASE("mmd2_closed properties") {
    std::mt19937_64 rng(23);
    SECTION("symmetric, nonnegative, matches Monte Carlo") {
        for (int trial = 0; trial < 10; ++trial) {
            auto P = random_mixture(rng);
            auto Q = random_mixture(rng);
            double kappa = 0.5 + 0.1 * trial;
            double pq = mmd2_closed(P, Q, kappa);
            CHECK(pq == mmd2_closed(Q, P, kappa));  // exact symmetry
            CHECK(pq >= 0.0);
            auto mc = mc_mmd2(P, Q, kappa, 200000, static_cast<std::uint64_t>(trial));
            CHECK(std::fabs(pq - mc.value) <= 3.0 * mc.se + 1e-9);
        }
    }
    SECTION("zero iff equal up to component permutation") {
        for (int trial = 0; trial < 20; ++trial) {
            auto P = random_mixture(rng, 4);
            std::vector<std::size_t> perm(P.components());
            for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
            std::shuffle(perm.begin(), perm.end(), rng);
            GaussianMixture1D Q;
            for (auto i : perm) {
                Q.weights.push_back(P.weights[i]);
                Q.means.push_back(P.means[i]);
                Q.vars.push_back(P.vars[i]);
            }
            CHECK(mmd2_closed(P, Q, 1.0) <= 1e-12);
            // a genuinely different mixture is strictly positive
            auto R = random_mixture(rng);
            R.means[0] += 1.0;
            if (std::fabs(R.mean() - P.mean()) > 0.1) CHECK(mmd2_closed(P, R, 1.0) > 1e-10);
        }
    }
}

TEST_CASE("median_bandwidth") {
    CHECK(median_bandwidth({0, 1, 3}) == Catch::Approx(2.0));  // pairwise {1,2,3}
    CHECK(median_bandwidth({0, 1}) == Catch::Approx(1.0));
    CHECK_THROWS(median_bandwidth({5, 5, 5}));
    CHECK_THROWS(median_bandwidth({5}));
}

TEST_CASE("rff_features") {
    SECTION("constant frequency gives sqrt(2)") {
        RFFMap map{1, {0.0}, {0.0}, 1.0};
        auto f = rff_features({-3.0, 0.0, 17.0}, map);
        for (const auto& row : f) CHECK(row[0] == Catch::Approx(std::sqrt(2.0)));
    }
    SECTION("squared feature norm never exceeds 2") {
        auto map = RFFMap::create(64, 1.0, 5);
        auto f = rff_features({0.3, -1.2, 5.0}, map);
        for (const auto& row : f) {
            double n2 = 0;
            for (double v : row) n2 += v * v;
            CHECK(n2 <= 2.0 + 1e-12);
        }
    }
    SECTION("kernel approximation error shrinks with D") {
        std::mt19937_64 rng(77);
        std::uniform_real_distribution<double> u(-3, 3);
        std::vector<std::pair<double, double>> pairs(100);
        for (auto& p : pairs) p = {u(rng), u(rng)};
        double kappa = 1.0;
        auto median_err = [&](std::size_t D) {
            auto map = RFFMap::create(D, kappa, 11);
            std::vector<double> errs;
            for (auto [x, y] : pairs) {
                auto fx = rff_features({x}, map)[0];
                auto fy = rff_features({y}, map)[0];
                double dot = 0;
                for (std::size_t k = 0; k < D; ++k) dot += fx[k] * fy[k];
                double exact = std::exp(-(x - y) * (x - y) / (2 * kappa * kappa));
                errs.push_back(std::fabs(dot - exact));
            }
            std::sort(errs.begin(), errs.end());
            return std::pair{errs[errs.size() / 2], errs.back()};
        };
        auto [med_hi, max_hi] = median_err(4096);
        auto [med_lo, max_lo] = median_err(256);
        CHECK(max_hi < 0.05);
        CHECK(med_hi < med_lo);
    }
}

TEST_CASE("mmd2_rff") {
    SECTION("identical sample sets give zero") {
        auto map = RFFMap::create(128, 1.0, 9);
        std::vector<double> s = {0.1, 0.5, -1.0, 2.0};
        CHECK(mmd2_rff(s, s, map) == Catch::Approx(0.0).margin(1e-15));
    }
    SECTION("single samples give a finite nonnegative value") {
        auto map = RFFMap::create(64, 1.0, 9);
        double v = mmd2_rff({0.0}, {3.0}, map);
        CHECK(v >= 0.0);
        CHECK(std::isfinite(v));
    }
    SECTION("matches the exact Gram-matrix estimate within 10%") {
        std::mt19937_64 rng(123);
        std::normal_distribution<double> n0(0.0, 1.0), n3(3.0, 1.0);
        std::size_t n = 2000;
        std::vector<double> xs(n), ys(n);
        for (auto& v : xs) v = n0(rng);
        for (auto& v : ys) v = n3(rng);
        double kappa = 1.0;
        // exact biased (V-statistic) MMD^2 via the kernel trick
        auto kfn = [&](double a, double b) {
            return std::exp(-(a - b) * (a - b) / (2 * kappa * kappa));
        };
        double kxx = 0, kyy = 0, kxy = 0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                kxx += kfn(xs[i], xs[j]);
                kyy += kfn(ys[i], ys[j]);
                kxy += kfn(xs[i], ys[j]);
            }
        double exact = (kxx + kyy - 2 * kxy) / static_cast<double>(n * n);
        auto map = RFFMap::create(2048, kappa, 17);
        double approx = mmd2_rff(xs, ys, map);
        CHECK(std::fabs(approx - exact) / exact < 0.10);
    }
}

TEST_CASE("kl_categorical") {
    CategoricalDist P{{0.3, 0.7}};
    CHECK(kl_categorical(P, P) == Catch::Approx(0.0).margin(1e-12));
    CHECK(kl_categorical({{1.0, 0.0}}, {{0.5, 0.5}}) == Catch::Approx(std::log(2.0)));
    double v = kl_categorical({{0.5, 0.5}}, {{1.0, 0.0}});
    CHECK(v > 1.0);
    CHECK(std::isfinite(v));
    CHECK_THROWS(kl_categorical({{1.0}}, {{0.5, 0.5}}));

    // Gibbs' inequality on randomized valid pairs
    std::mt19937_64 rng(55);
    std::uniform_real_distribution<double> u(0.01, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> p(6), q(6);
        double sp = 0, sq = 0;
        for (std::size_t i = 0; i < 6; ++i) {
            p[i] = u(rng);
            q[i] = u(rng);
            sp += p[i];
            sq += q[i];
        }
        for (std::size_t i = 0; i < 6; ++i) {
            p[i] /= sp;
            q[i] /= sq;
        }
        CHECK(kl_categorical({p}, {q}) >= 0.0);
    }
}

TEST_CASE("sample_mixture") {
    SECTION("seeded resample is bit-identical") {
        auto mix = GaussianMixture1D{{0.5, 0.5}, {0.0, 3.0}, {1.0, 0.5}};
        CHECK(sample_mixture(mix, 100, 42) == sample_mixture(mix, 100, 42));
    }
    SECTION("degenerate weight draws only from component 1") {
        auto mix = GaussianMixture1D{{1.0, 0.0}, {0.0, 100.0}, {1.0, 1.0}};
        for (double x : sample_mixture(mix, 1000, 1)) CHECK(std::fabs(x) < 10.0);
    }
    SECTION("CLT: mean of 1e6 standard normal draws near 0") {
        auto s = sample_mixture(GaussianMixture1D::single(0.0, 1.0), 1000000, 2024);
        double m = 0;
        for (double x : s) m += x;
        m /= 1e6;
        CHECK(std::fabs(m) < 4e-3);
    }
}

TEST_CASE("mixture moments match the law of total variance") {
    std::mt19937_64 rng(61);
    for (int trial = 0; trial < 30; ++trial) {
        auto M = random_mixture(rng);
        // explicit two-moment oracle
        double m = 0;
        for (std::size_t i = 0; i < M.components(); ++i) m += M.weights[i] * M.means[i];
        double ex2 = 0;
        for (std::size_t i = 0; i < M.components(); ++i)
            ex2 += M.weights[i] * (M.vars[i] + M.means[i] * M.means[i]);
        CHECK(M.mean() == Catch::Approx(m));
        CHECK(M.variance() == Catch::Approx(ex2 - m * m));
    }
}

TEST_CASE("central interval brackets the right mass") {
    auto mix = GaussianMixture1D{{0.5, 0.5}, {-2.0, 2.0}, {0.5, 0.5}};
    auto [lo, hi] = mix.central_interval(0.9);
    CHECK(mix.cdf(lo) == Catch::Approx(0.05).margin(1e-6));
    CHECK(mix.cdf(hi) == Catch::Approx(0.95).margin(1e-6));
}
