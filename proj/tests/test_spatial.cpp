#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "ste/rng.hpp"
#include "ste/spatial.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

using namespace ste;

namespace {

NodeCoords at(double lat, double lon, std::string id = "x") { return {std::move(id), lat, lon}; }

} // namespace

TEST_CASE("haversine reference points") {
    CHECK(haversine(at(12.5, -30.0), at(12.5, -30.0)) == 0.0);

    const double pole_to_pole = haversine(at(90, 0), at(-90, 0));
    CHECK(pole_to_pole == doctest::Approx(std::numbers::pi * 6371.0).epsilon(1e-12));
    CHECK(pole_to_pole == doctest::Approx(20015.09).epsilon(1e-6));

    const double quarter = haversine(at(0, 0), at(0, 90));
    CHECK(quarter == doctest::Approx(std::numbers::pi * 6371.0 / 2.0).epsilon(1e-12));
    CHECK(quarter == doctest::Approx(10007.54).epsilon(1e-6));

    // configurable radius scales linearly
    CHECK(haversine(at(0, 0), at(0, 90), 1.0) == doctest::Approx(std::numbers::pi / 2.0));
}

TEST_CASE("haversine rejects out-of-range coordinates") {
    CHECK_THROWS_AS((void)haversine(at(91, 0), at(0, 0)), std::invalid_argument);
    CHECK_THROWS_AS((void)haversine(at(0, 0), at(0, 181)), std::invalid_argument);
    CHECK_THROWS_AS((void)haversine(at(0, 0), at(0, 0), 0.0), std::invalid_argument);
}

TEST_CASE("haversine is a metric on random triples") {
    Rng rng(21);
    for (int trial = 0; trial < 1000; ++trial) {
        NodeCoords a = at(rng.uniform(-90, 90), rng.uniform(-180, 180));
        NodeCoords b = at(rng.uniform(-90, 90), rng.uniform(-180, 180));
        NodeCoords c = at(rng.uniform(-90, 90), rng.uniform(-180, 180));
        const double ab = haversine(a, b), ba = haversine(b, a);
        const double bc = haversine(b, c), ac = haversine(a, c);
        CHECK(ab == ba);
        CHECK(ab >= 0.0);
        CHECK(ac <= ab + bc + 1e-9);
    }
}

TEST_CASE("adjacency kernel and threshold") {
    SUBCASE("coincident nodes get weight one") {
        std::vector<NodeCoords> coords = {at(10, 10, "a"), at(10, 10, "b")};
        auto d = distance_matrix(coords);
        auto A = build_adjacency(d, 2, 100.0, 0.5);
        CHECK(A[1] == 1.0);
        CHECK(A[2] == 1.0);
        CHECK(A[0] == 0.0);
        CHECK(A[3] == 0.0);
    }
    SUBCASE("values just below the threshold truncate to zero, at it survive") {
        // single pair: pick sigma so the kernel lands exactly around epsilon
        std::vector<double> d = {0.0, 100.0, 100.0, 0.0};
        const double eps = 0.1;
        const double sigma_keep = -100.0 * 100.0 / std::log(eps);          // kernel exactly eps
        const double sigma_drop = -100.0 * 100.0 / std::log(eps - 1e-9);   // kernel eps - 1e-9
        auto kept = build_adjacency(d, 2, sigma_keep, eps);
        CHECK(kept[1] == doctest::Approx(eps));
        auto dropped = build_adjacency(d, 2, sigma_drop, eps);
        CHECK(dropped[1] == 0.0);
    }
    SUBCASE("three nodes on a line match the brute-force kernel") {
        std::vector<NodeCoords> coords = {at(0, 0, "a"), at(0, 1, "b"), at(0, 2, "c")};
        auto d = distance_matrix(coords);
        const double sigma_sq = default_sigma_sq(d, 3);
        auto A = build_adjacency(d, 3, sigma_sq, 0.1);
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
                const double dij = d[i * 3 + j];
                double want = i == j ? 0.0 : std::exp(-dij * dij / sigma_sq);
                if (want < 0.1) want = 0.0;
                CHECK(A[i * 3 + j] == doctest::Approx(want).epsilon(1e-15));
            }
        // symmetry and sparsity radius
        const double radius = std::sqrt(-sigma_sq * std::log(0.1));
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
                CHECK(A[i * 3 + j] == A[j * 3 + i]);
                if (i != j) CHECK((A[i * 3 + j] > 0.0) == (d[i * 3 + j] <= radius));
            }
    }
    SUBCASE("argument validation") {
        std::vector<double> d1 = {0.0};
        CHECK_THROWS_AS((void)build_adjacency(d1, 1, 1.0, 0.1), std::invalid_argument);
        std::vector<double> d2 = {0, 1, 1, 0};
        CHECK_THROWS_AS((void)build_adjacency(d2, 2, 0.0, 0.1), std::invalid_argument);
        CHECK_THROWS_AS((void)build_adjacency(d2, 2, 1.0, 1.0), std::invalid_argument);
    }
}

TEST_CASE("inverse-distance weights") {
    SUBCASE("two nodes normalize to a swap matrix for any alpha") {
        std::vector<NodeCoords> coords = {at(0, 0, "a"), at(0, 10, "b")};
        auto d = distance_matrix(coords);
        for (int alpha : {1, 2, 3}) {
            auto W = build_weights(d, 2, alpha);
            CHECK(W == std::vector<double>{0, 1, 1, 0});
        }
    }
    SUBCASE("equilateral triangle gives 0.5 everywhere off-diagonal") {
        std::vector<NodeCoords> coords = {at(0, 0, "a"), at(0, 120, "b"), at(0, -120, "c")};
        auto d = distance_matrix(coords);
        auto W = build_weights(d, 3, 2);
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) CHECK(W[i * 3 + j] == doctest::Approx(i == j ? 0.0 : 0.5));
    }
    SUBCASE("coincident nodes are rejected with a deduplication hint") {
        std::vector<NodeCoords> coords = {at(5, 5, "a"), at(5, 5, "b")};
        auto d = distance_matrix(coords);
        CHECK_THROWS_WITH_AS((void)build_weights(d, 2, 1),
                             "build_weights: nodes 0 and 1 are coincident; deduplicate locations before building weights",
                             std::invalid_argument);
    }
    SUBCASE("powers: identity first, rows stay stochastic") {
        Rng rng(3);
        std::vector<NodeCoords> coords;
        for (int i = 0; i < 6; ++i) coords.push_back(at(rng.uniform(-60, 60), rng.uniform(-170, 170), "n" + std::to_string(i)));
        auto d = distance_matrix(coords);
        auto W = build_weights(d, 6, 2);
        auto powers = matrix_powers(W, 6, 3);
        REQUIRE(powers.size() == 4);
        for (int i = 0; i < 6; ++i)
            for (int j = 0; j < 6; ++j) CHECK(powers[0][i * 6 + j] == (i == j ? 1.0 : 0.0));
        for (const auto& P : powers)
            for (int i = 0; i < 6; ++i) {
                double row = 0.0;
                for (int j = 0; j < 6; ++j) row += P[i * 6 + j];
                CHECK(row == doctest::Approx(1.0).epsilon(1e-12));
            }
        // direct check: powers[2] equals W*W by brute force
        for (int i = 0; i < 6; ++i)
            for (int j = 0; j < 6; ++j) {
                double want = 0.0;
                for (int k = 0; k < 6; ++k) want += W[i * 6 + k] * W[k * 6 + j];
                CHECK(powers[2][i * 6 + j] == doctest::Approx(want).epsilon(1e-14));
            }
    }
}

TEST_CASE("morans_i") {
    SUBCASE("two antithetic nodes give -1") {
        std::vector<double> W = {0, 1, 1, 0};
        CHECK(morans_i({1.0, -1.0}, W, 2) == doctest::Approx(-1.0));
    }
    SUBCASE("constant field errors") {
        std::vector<double> W = {0, 1, 1, 0};
        CHECK_THROWS_WITH_AS((void)morans_i({2.0, 2.0}, W, 2), "morans_i: undefined Moran's I for constant field",
                             std::invalid_argument);
    }
    SUBCASE("zero total weight errors") {
        std::vector<double> W = {0, 0, 0, 0};
        CHECK_THROWS_AS((void)morans_i({1.0, -1.0}, W, 2), std::invalid_argument);
    }
    SUBCASE("random field equals the brute-force double sum") {
        Rng rng(9);
        const std::int64_t n = 12;
        std::vector<double> W(n * n, 0.0);
        for (std::int64_t i = 0; i < n; ++i)
            for (std::int64_t j = 0; j < n; ++j)
                if (i != j) W[i * n + j] = rng.uniform(0.0, 1.0);
        std::vector<double> y(n);
        for (auto& v : y) v = rng.normal();
        double mean = 0.0;
        for (double v : y) mean += v;
        mean /= static_cast<double>(n);
        double s0 = 0.0, cross = 0.0, ss = 0.0;
        for (std::int64_t i = 0; i < n; ++i) {
            ss += (y[i] - mean) * (y[i] - mean);
            for (std::int64_t j = 0; j < n; ++j) {
                if (i == j) continue;
                s0 += W[i * n + j];
                cross += W[i * n + j] * (y[i] - mean) * (y[j] - mean);
            }
        }
        const double want = static_cast<double>(n) * cross / (s0 * ss);
        CHECK(std::abs(morans_i(y, W, n) - want) < 1e-12);
    }
    SUBCASE("invariant under adding a constant") {
        Rng rng(10);
        const std::int64_t n = 8;
        std::vector<double> W(n * n, 0.0);
        for (std::int64_t i = 0; i < n; ++i)
            for (std::int64_t j = 0; j < n; ++j)
                if (i != j) W[i * n + j] = rng.uniform(0.0, 1.0);
        std::vector<double> y(n), y_shift(n);
        for (std::int64_t i = 0; i < n; ++i) {
            y[i] = rng.normal();
            y_shift[i] = y[i] + 1234.5;
        }
        CHECK(morans_i(y, W, n) == doctest::Approx(morans_i(y_shift, W, n)).epsilon(1e-9));
    }
}

TEST_CASE("morans_i_series slice policy") {
    // 6-node ring: neighbors adjacent
    const std::int64_t n = 6;
    std::vector<double> W(n * n, 0.0);
    for (std::int64_t i = 0; i < n; ++i) {
        W[i * n + (i + 1) % n] = 1.0;
        W[i * n + (i + n - 1) % n] = 1.0;
    }
    SUBCASE("identical rows are all missing") {
        std::vector<double> panel = {1, 1, 1, 1, 1, 1, 2, 2, 2, 2, 2, 2};
        auto s = morans_i_series(panel, 2, n, W);
        CHECK(std::isnan(s[0]));
        CHECK(std::isnan(s[1]));
    }
    SUBCASE("informative rows match the scalar op; signs follow clustering") {
        // clustered: same-sign arcs; dispersed: alternating signs
        std::vector<double> clustered = {1, 1, 1, -1, -1, -1};
        std::vector<double> dispersed = {1, -1, 1, -1, 1, -1};
        std::vector<double> panel;
        panel.insert(panel.end(), clustered.begin(), clustered.end());
        panel.insert(panel.end(), dispersed.begin(), dispersed.end());
        panel.insert(panel.end(), clustered.begin(), clustered.end());
        auto s = morans_i_series(panel, 3, n, W);
        CHECK(s[0] == doctest::Approx(morans_i(clustered, W, n)));
        CHECK(s[1] == doctest::Approx(morans_i(dispersed, W, n)));
        CHECK(s[0] > 0.0);
        CHECK(s[1] < 0.0);
        CHECK(s[2] == doctest::Approx(s[0]));
    }
}

TEST_CASE("make_graph_spec wires everything together") {
    std::vector<NodeCoords> coords = {at(0, 0, "a"), at(0, 1, "b"), at(1, 0, "c"), at(1, 1, "d")};
    GraphOptions opt;
    opt.max_lag = 2;
    opt.alpha = 2;
    auto g = make_graph_spec(coords, opt);
    CHECK(g.n == 4);
    CHECK(g.sigma_sq > 0.0);
    REQUIRE(g.A.size() == 16);
    REQUIRE(g.W.size() == 16);
    REQUIRE(g.W_powers.size() == 3);
    for (int i = 0; i < 4; ++i) {
        CHECK(g.A[i * 4 + i] == 0.0);
        CHECK(g.W[i * 4 + i] == 0.0);
        double row = 0.0;
        for (int j = 0; j < 4; ++j) row += g.W[i * 4 + j];
        CHECK(row == doctest::Approx(1.0).epsilon(1e-12));
    }
    CHECK_THROWS_AS((void)make_graph_spec({at(0, 0, "a"), at(0, 0, "a")}, opt), std::invalid_argument);
}
