#include <catch2/catch_amalgamated.hpp>

#include "mmc/simulator.hpp"
#include "mmc/waveform.hpp"

using namespace mmc;
using Catch::Approx;

namespace {

SimResult run_point(const ConverterParams& p, Scheme s, OperatingPoint pt, bool openloop = false,
                    int periods = 22) {
    ControllerConfig cfg;
    cfg.scheme = s;
    cfg.target = pt;
    cfg.open_loop_refs = openloop;
    return simulate(p, cfg, periods * p.period(), p.period() / 4000.0);
}

}  // namespace

TEST_CASE("simulation preconditions", "[simulator]") {
    auto p = preset_table1();
    ControllerConfig cfg;
    cfg.target = {0.5, 0.0};
    CHECK_THROWS_AS(simulate(p, cfg, 10.0 * p.period(), p.period() / 4000.0), InvalidParameter);
    CHECK_THROWS_AS(simulate(p, cfg, 22.0 * p.period(), p.period() / 1000.0), InvalidParameter);
}

TEST_CASE("no-load equilibrium", "[simulator]") {
    auto p = preset_table1();
    auto r = run_point(p, Scheme::Direct, {0.0, 0.0});
    auto m = extract_metrics(r, 2);
    CHECK(m.cap_dc_mean_pu == Approx(1.0).margin(1e-3));
    for (int a = 0; a < 6; ++a) CHECK(m.cap_dc_pu[a] == Approx(1.0).margin(1e-3));

    // dc component of the insertion index stays at one half
    double f_mean = 0.0;
    std::size_t spp = r.steps_per_period, end = r.series.size() - 1;
    for (std::size_t i = end - spp; i < end; ++i) f_mean += r.series[i].f[0];
    f_mean /= spp;
    CHECK(f_mean == Approx(0.5).margin(1e-3));
}

TEST_CASE("fourier extraction is exact on pure tones", "[simulator]") {
    auto p = preset_table1();
    SimResult r;
    r.params = p;
    r.steps_per_period = 4000;
    r.dt = p.period() / 4000.0;
    double w = p.omega();
    for (int k = 0; k <= 12000; ++k) {
        SimRecord s;
        s.t = r.dt * k;
        for (int a = 0; a < 6; ++a) s.u_sigma[a] = p.n_submodules * (2000.0 + 30.0 * std::sin(w * s.t));
        for (int j = 0; j < 3; ++j) {
            s.i_com[j] = 100.0;
            s.i_ac[j] = 500.0 * std::sin(w * s.t - 2.0 * pi / 3.0 * j - 0.3);
        }
        s.f[0] = 0.5 - 0.4 * std::sin(w * s.t);
        r.series.push_back(s);
    }
    auto m = extract_metrics(r, 2);
    CHECK(m.cap_dc_mean_pu == Approx(1.0).margin(1e-9));
    CHECK(m.cap_peak_max_pu == Approx(2030.0 / 2000.0).margin(1e-7));
    CHECK(m.i_ac_pu[0] * derive_constants(p).i_base * std::sqrt(2.0) == Approx(500.0).margin(1e-9));
    CHECK(m.phi_meas[0] == Approx(0.3).margin(1e-9));
    CHECK(m.i_dc_meas == Approx(300.0).margin(1e-9));
    CHECK(m.f_peak == Approx(0.9).margin(1e-6));
}

TEST_CASE("open-loop reference feed reproduces the solved point", "[simulator]") {
    auto p = preset_table1();
    OperatingPoint A{1.0, pi / 6};
    auto r = run_point(p, Scheme::Direct, A, true);
    auto m = extract_metrics(r, 2);
    CHECK(std::abs(m.i_ac_pu[0] - A.i_ac_pu) < 0.01);
    CHECK(std::abs(wrap_angle(m.phi_meas[0] - A.phi)) < pi / 180.0);

    auto sol = solve_direct(p, A);
    CHECK(m.k_cir_meas == Approx(sol.k_cir).epsilon(0.05));
    CHECK(m.cap_dc_mean_pu == Approx(1.0 + sol.dc_cap_deviation_pu).margin(0.01));
}

TEST_CASE("suppression loop nullifies the second harmonic", "[simulator]") {
    auto p = preset_table1();
    auto r = run_point(p, Scheme::ImprovedDirect, {1.0, pi / 6});
    auto m = extract_metrics(r, 2);
    double i_ac_rms = m.i_ac_pu[0] * derive_constants(p).i_base;
    for (int j = 0; j < 3; ++j) CHECK(m.i_cir2_rms[j] < 0.02 * i_ac_rms);
}

TEST_CASE("capacitor dc rises when absorbing reactive power", "[simulator]") {
    auto p = preset_table1();
    auto r = run_point(p, Scheme::Direct, {1.0, -pi / 6});
    auto m = extract_metrics(r, 2);
    CHECK(m.cap_dc_mean_pu > 1.0);
}

TEST_CASE("measured margin matches the analytic one at point D", "[simulator]") {
    auto p = preset_table1();
    OperatingPoint D{1.0, 5 * pi / 6};
    auto r = run_point(p, Scheme::IndirectClosedLoop, D);
    auto m = extract_metrics(r, 2);
    auto analytic = scheme_margin(p, solve_indirect(p, D));
    CHECK(m.df_margin == Approx(analytic.delta_f_margin).margin(0.01));
}

TEST_CASE("phase legs agree under balanced operation", "[simulator]") {
    auto p = preset_table1();
    auto r = run_point(p, Scheme::Direct, {1.0, pi / 6});
    auto m = extract_metrics(r, 2);
    for (int j = 1; j < 3; ++j) {
        CHECK(m.i_ac_pu[j] == Approx(m.i_ac_pu[0]).epsilon(1e-3));
        CHECK(m.i_cir2_rms[j] == Approx(m.i_cir2_rms[0]).epsilon(1e-3).margin(1e-3));
    }
    for (int a = 2; a < 6; a += 2) {
        CHECK(m.cap_dc_pu[a] == Approx(m.cap_dc_pu[0]).epsilon(1e-3));
        CHECK(m.cap_peak_pu[a] == Approx(m.cap_peak_pu[0]).epsilon(1e-3));
    }
}

TEST_CASE("lossless energy bookkeeping", "[simulator]") {
    auto p = preset_table1();
    ControllerConfig cfg;
    cfg.scheme = Scheme::Direct;
    cfg.target = {1.0, pi / 6};
    cfg.r_series_pu = 0.0;
    auto r = simulate(p, cfg, 22 * p.period(), p.period() / 4000.0);
    CHECK(energy_audit_max_residual(r) < 1e-3 * p.s_rated);
}

TEST_CASE("metrics converge under step halving", "[simulator]") {
    auto p = preset_table1();
    OperatingPoint A{1.0, pi / 6};
    ControllerConfig cfg;
    cfg.scheme = Scheme::Direct;
    cfg.target = A;
    auto ra = simulate(p, cfg, 22 * p.period(), p.period() / 4000.0);
    auto rb = simulate(p, cfg, 22 * p.period(), p.period() / 8000.0);
    auto ma = extract_metrics(ra, 2);
    auto mb = extract_metrics(rb, 2);
    CHECK(std::abs(ma.i_ac_pu[0] - mb.i_ac_pu[0]) / mb.i_ac_pu[0] < 5e-4);
    CHECK(std::abs(ma.k_cir_meas - mb.k_cir_meas) / mb.k_cir_meas < 5e-4);
    CHECK(std::abs(ma.cap_peak_max_pu - mb.cap_peak_max_pu) / mb.cap_peak_max_pu < 5e-4);
    CHECK(std::abs(ma.f_peak - mb.f_peak) / mb.f_peak < 5e-4);
}

TEST_CASE("reference step settles onto the new analytic state", "[simulator]") {
    auto p = preset_table1();
    double T = p.period();
    auto rep = simulate_step(p, Scheme::IndirectClosedLoop, {1.0, pi}, {1.0, 0.0}, 10 * T, 40 * T);
    CHECK(rep.settled);
    CHECK(std::abs(rep.final_p_err_pu) < 0.02);
    CHECK(std::abs(rep.final_q_err_pu) < 0.02);
}

TEST_CASE("reactive steps do not disturb active power of indirect modulation", "[simulator]") {
    auto p = preset_table1();
    double T = p.period();
    auto rep =
        simulate_step(p, Scheme::IndirectClosedLoop, {1.0, -pi / 2}, {1.0, pi / 2}, 10 * T, 40 * T);
    CHECK(rep.settled);
    CHECK(rep.max_p_excursion_pu < 0.05);
}

TEST_CASE("zero-magnitude step leaves the trajectory unchanged", "[simulator]") {
    auto p = preset_table1();
    double T = p.period();
    OperatingPoint A{1.0, pi / 6};
    auto rep = simulate_step(p, Scheme::Direct, A, A, 10 * T, 22 * T);
    auto base = run_point(p, Scheme::Direct, A, false, 22);
    REQUIRE(rep.result.series.size() == base.series.size());
    for (std::size_t k = 0; k < base.series.size(); k += 1000) {
        CHECK(rep.result.series[k].u_sigma[0] ==
              Approx(base.series[k].u_sigma[0]).epsilon(1e-9));
        CHECK(rep.result.series[k].i_ac[0] == Approx(base.series[k].i_ac[0]).margin(1e-6 * 4845));
    }
}

TEST_CASE("instability guard aborts a hopeless configuration", "[simulator]") {
    auto p = preset_table1();
    p.c_sm = 1.2e-3;  // capacitors far too small at rated current
    ControllerConfig cfg;
    cfg.scheme = Scheme::Direct;
    cfg.target = {1.0, pi / 2};
    cfg.shoot_init = false;
    CHECK_THROWS_AS(simulate(p, cfg, 22 * p.period(), p.period() / 4000.0), Error);
}

TEST_CASE("hybrid margins need a hybrid mode", "[simulator]") {
    auto p = preset_table1();
    CHECK_THROWS_AS(hybrid_mode_margin(p, {1.0, pi / 6}, Scheme::Direct), InvalidParameter);
}
