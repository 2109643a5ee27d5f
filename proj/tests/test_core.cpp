#include <catch2/catch_amalgamated.hpp>

#include <random>
#include <sstream>

#include "mmc/config.hpp"
#include "mmc/core.hpp"

using namespace mmc;
using Catch::Approx;

TEST_CASE("derived constants of the comparison case", "[core]") {
    auto p = preset_table1();
    auto d = derive_constants(p);

    // closed forms evaluated independently
    double w0_arm = 0.5 * 18.6e-3 * 2000.0 * 2000.0 * 200.0;
    double e_req = 6.0 * w0_arm / 1250e6;
    double c1 = 1.0 / (8.0 * 0.86 * 2.0 * pi * 50.0 * e_req);

    CHECK(d.u_cap_nominal == Approx(2000.0));
    CHECK(d.e_req == Approx(e_req));
    CHECK(d.e_req == Approx(0.035712).epsilon(1e-9));
    CHECK(d.c1 == Approx(c1));
    CHECK(d.c1 == Approx(0.012955).epsilon(1e-4));
    CHECK(d.u_acv_rms == Approx(0.86 * 200e3 / std::sqrt(2.0)));
    CHECK(d.i_base == Approx(1250e6 / (3.0 * d.u_acv_rms)));
}

TEST_CASE("constants scale as expected", "[core]") {
    auto p = preset_table1();
    auto d0 = derive_constants(p);

    auto p2 = p;
    p2.c_sm *= 2.0;
    auto d2 = derive_constants(p2);
    CHECK(d2.e_req == Approx(2.0 * d0.e_req));
    CHECK(d2.c1 == Approx(0.5 * d0.c1));

    // scaling capacity and capacitance together leaves e_req unchanged
    auto p3 = p;
    p3.c_sm *= 3.0;
    p3.s_rated *= 3.0;
    p3.p_rated *= 3.0;
    CHECK(derive_constants(p3).e_req == Approx(d0.e_req));
}

TEST_CASE("parameter validation names the offending field", "[core]") {
    auto p = preset_table1();
    p.x_eq_pu = 0.26;
    CHECK_THROWS_WITH(derive_constants(p), Catch::Matchers::ContainsSubstring("x_eq_pu"));
    p = preset_table1();
    p.c_sm = 0.0;
    CHECK_THROWS_WITH(derive_constants(p), Catch::Matchers::ContainsSubstring("c_sm"));
    p = preset_table1();
    p.u_acv_pu = 1.2;
    CHECK_THROWS_AS(derive_constants(p), InvalidParameter);
    p = preset_table1();
    p.n_submodules = 0;
    CHECK_THROWS_AS(derive_constants(p), InvalidParameter);
}

TEST_CASE("required-range boundary profile", "[core]") {
    RequiredRange r{0.5};
    CHECK(boundary_profile(r, pi / 6) == Approx(1.0));
    CHECK(boundary_profile(r, pi / 2) == Approx(0.5));
    CHECK(boundary_profile(r, 0.0) == Approx(1.0));
    CHECK(boundary_profile(r, -5 * pi / 6) == Approx(1.0));

    std::mt19937 rng(7);
    std::uniform_real_distribution<double> u(-pi, pi);
    for (int k = 0; k < 500; ++k) {
        double phi = u(rng);
        double i = boundary_profile(r, phi);
        CHECK(i * std::abs(std::sin(phi)) <= r.q_max_pu + 1e-12);
        CHECK(i == Approx(boundary_profile(r, -phi)));
        CHECK(i == Approx(boundary_profile(r, wrap_angle(pi - phi))));
    }
}

TEST_CASE("pq mapping", "[core]") {
    auto [p1, q1] = pq_of({1.0, 0.0});
    CHECK(p1 == Approx(1.0));
    CHECK(q1 == Approx(0.0).margin(1e-15));

    auto [p2, q2] = pq_of({1.0, pi / 6});
    CHECK(p2 == Approx(0.8660254038).epsilon(1e-9));
    CHECK(q2 == Approx(0.5).epsilon(1e-9));

    auto [p3, q3] = pq_of({1.0, pi});
    CHECK(p3 == Approx(-1.0));
    CHECK(q3 == Approx(0.0).margin(1e-12));

    std::mt19937 rng(11);
    std::uniform_real_distribution<double> u(-pi, pi);
    std::uniform_real_distribution<double> ui(0.0, 1.5);
    for (int k = 0; k < 200; ++k) {
        OperatingPoint pt{ui(rng), u(rng)};
        auto [pp, qq] = pq_of(pt);
        CHECK(pp * pp + qq * qq == Approx(pt.i_ac_pu * pt.i_ac_pu).margin(1e-12));
    }
}

TEST_CASE("boundary traces a closed curve with the requested reactive cap", "[core]") {
    RequiredRange r{0.5};
    double qmax_seen = 0.0;
    for (int k = 0; k < 720; ++k) {
        double phi = -pi + 2 * pi * k / 720.0;
        auto [pp, qq] = pq_of({boundary_profile(r, wrap_angle(phi)), wrap_angle(phi)});
        qmax_seen = std::max(qmax_seen, std::abs(qq));
    }
    CHECK(qmax_seen == Approx(r.q_max_pu).epsilon(1e-9));
}

TEST_CASE("angle wrap convention", "[core]") {
    CHECK(wrap_angle(-pi) == Approx(pi));
    CHECK(wrap_angle(pi) == Approx(pi));
    CHECK(wrap_angle(3 * pi / 2) == Approx(-pi / 2));
    CHECK(wrap_angle(0.25) == Approx(0.25));
}

TEST_CASE("configuration file round trip", "[core]") {
    std::istringstream in(R"(
# comparison case
[converter]
u_dc_nominal_v = 400e3
n_submodules = 200
c_sm_farads = 18.6e-3
s_rated_va = 1250e6
p_rated_w = 1250e6
x_eq_pu = 0.25
x_arm_pu = 0.15
x_t_pu = 0.10
u_acv_pu = 0.86
frequency_hz = 50
u_cap_ref_v = 2000

[range]
q_max_pu = 0.5
)");
    auto cfg = parse_config(in);
    CHECK(cfg.params.u_dc_nominal == Approx(400e3));
    CHECK(cfg.params.n_submodules == 200);
    CHECK(cfg.range.q_max_pu == Approx(0.5));

    auto preset = preset_config("table1");
    CHECK(preset.params.c_sm == Approx(cfg.params.c_sm));
    CHECK(preset.params.u_acv_pu == Approx(cfg.params.u_acv_pu));
}

TEST_CASE("configuration errors", "[core]") {
    std::istringstream missing("u_dc_nominal_v = 400e3\n");
    CHECK_THROWS_AS(parse_config(missing), ConfigError);

    std::istringstream unknown(R"(
u_dc_nominal_v = 400e3
n_submodules = 200
c_sm_farads = 18.6e-3
s_rated_va = 1250e6
p_rated_w = 1250e6
x_eq_pu = 0.25
x_arm_pu = 0.15
x_t_pu = 0.10
u_acv_pu = 0.86
frequency_hz = 50
q_max_pu = 0.5
bogus_key = 1
)");
    CHECK_THROWS_WITH(parse_config(unknown), Catch::Matchers::ContainsSubstring("bogus_key"));

    CHECK_THROWS_AS(preset_config("nope"), ConfigError);
}
