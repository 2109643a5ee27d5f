#pragma once

#include <complex>
#include <sstream>
#include <utility>
#include <vector>

#include "mmc/core.hpp"
#include "mmc/newton.hpp"

// Per-scheme steady-state solution: required output voltage, dc current,
// second-harmonic circulating current, modulation references, capacitor dc
// deviation, ripple harmonics and arm-energy ripple.
//
// Conventions, used consistently everywhere:
//   valve voltage       sqrt(2) U_acv sin(wt)
//   ac output current   sqrt(2) I_ac sin(wt - phi)
//   arm currents        i_p,n = I_dc/3 +/- i_ac/2 + i_cir2
//   circulating current i_cir2 = sqrt(2) k_cir I_ac sin(2wt + theta_cir)

namespace mmc {

struct SteadyStateSolution {
    Scheme scheme = Scheme::Direct;
    double i_ac_pu = 0.0;  // operating point, carried for downstream evaluators
    double phi = 0.0;
    double m_conv1 = 0.0;
    double delta_conv1 = 0.0;
    double m_ref1 = 0.0;
    double delta_ref1 = 0.0;
    double m_ref2 = 0.0;
    double delta_ref2 = 0.0;
    double h = 1.0;
    double k_cir = 0.0;
    double theta_cir = 0.0;
    double dc_cap_deviation_pu = 0.0;
    double i_dc = 0.0;  // A
    double residual_norm = 0.0;
    int iterations = 0;
};

/// Fundamental voltage the converter must synthesize to drive the requested
/// current through the interface reactance. Returns (m_conv1, delta_conv1).
inline std::pair<double, double> required_output_voltage(const ConverterParams& p,
                                                         const OperatingPoint& pt) {
    p.validate();
    pt.validate();
    double xi = p.x_eq_pu * pt.i_ac_pu;
    double re = 1.0 + xi * std::sin(pt.phi);
    double im = xi * std::cos(pt.phi);
    double m = p.u_acv_pu * std::hypot(re, im);
    double delta = std::atan2(im, re);
    return {m, delta};
}

/// DC-link current from lossless power balance at the internal voltage.
/// This is the unique value that makes the arm-energy ripple zero-mean.
inline double dc_link_current(const ConverterParams& p, const OperatingPoint& pt, double m_conv1,
                              double delta_conv1) {
    auto d = derive_constants(p);
    double u_conv1_rms = m_conv1 * (p.u_dc_nominal / 2.0) / std::sqrt(2.0);
    double i_rms = pt.i_ac_pu * d.i_base;
    return 3.0 * u_conv1_rms * i_rms * std::cos(delta_conv1 + pt.phi) / p.u_dc_nominal;
}

struct CirculatingParams {
    double k_cir = 0.0;
    double theta_cir = 0.0;
    // partials with respect to (m_ref1, delta_ref1), for the Newton Jacobian
    double dk_dm = 0.0, dk_dd = 0.0, dth_dm = 0.0, dth_dd = 0.0;
};

// Second-harmonic circulating current index and phase for direct modulation.
// The loop reactance term uses the full physical arm reactance, i.e. twice
// the valve-side referred x_arm_pu.
inline CirculatingParams circulating_params_d(const ConverterParams& p, double m_ref1,
                                              double delta_ref1, double phi) {
    if (!(m_ref1 >= 0.0 && m_ref1 <= 1.2))
        throw InvalidParameter("circulating_params: m_ref1 outside [0, 1.2]");
    auto d = derive_constants(p);
    double M = m_ref1;
    double c = std::cos(phi + delta_ref1);
    double s = std::sin(phi + delta_ref1);
    double q = 3.0 - M * M;
    double r2 = q * q * c * c + 9.0 * s * s;
    double R = std::sqrt(r2);

    double loop = 2.0 * p.x_arm_pu * p.u_acv_pu / d.c1;
    double den = loop - 4.0 - 8.0 * M * M / 3.0;
    if (std::abs(den) < 1e-6 * loop) {
        std::ostringstream os;
        os << "circulating_params: singular denominator at m_ref1 = " << M
           << ", delta_ref1 = " << delta_ref1 << ", phi = " << phi;
        throw SingularDenominator(os.str());
    }

    CirculatingParams out;
    double k_raw = M * R / den;
    double u = q * c;  // phasor components of the drive
    double v = 3.0 * s;
    double theta = std::atan2(u, v) + 2.0 * delta_ref1;

    double dR2_dM = -4.0 * M * q * c * c;
    double dR2_dd = 2.0 * s * c * (9.0 - q * q);
    double dR_dM = R > 0.0 ? dR2_dM / (2.0 * R) : 0.0;
    double dR_dd = R > 0.0 ? dR2_dd / (2.0 * R) : 0.0;
    double dden_dM = -16.0 * M / 3.0;
    double dk_dM = (R + M * dR_dM) / den - M * R * dden_dM / (den * den);
    double dk_dd = M * dR_dd / den;

    double du_dM = -2.0 * M * c;
    double du_dd = -q * s;
    double dv_dd = 3.0 * c;
    double dth_dM = r2 > 0.0 ? v * du_dM / r2 : 0.0;
    double dth_dd = (r2 > 0.0 ? (v * du_dd - u * dv_dd) / r2 : 0.0) + 2.0;

    if (k_raw < 0.0) {  // keep the index non-negative, absorb the sign in the phase
        k_raw = -k_raw;
        dk_dM = -dk_dM;
        dk_dd = -dk_dd;
        theta += pi;
    }
    out.k_cir = k_raw;
    out.theta_cir = wrap_angle(theta);
    out.dk_dm = dk_dM;
    out.dk_dd = dk_dd;
    out.dth_dm = dth_dM;
    out.dth_dd = dth_dd;
    return out;
}

inline std::pair<double, double> circulating_params(const ConverterParams& p, double m_ref1,
                                                    double delta_ref1, double phi) {
    auto cp = circulating_params_d(p, m_ref1, delta_ref1, phi);
    return {cp.k_cir, cp.theta_cir};
}

/// Exact closed-form mapping for both indirect variants: the reference is the
/// required output itself and all deviation channels are zero.
inline SteadyStateSolution solve_indirect(const ConverterParams& p, const OperatingPoint& pt,
                                          Scheme scheme = Scheme::IndirectClosedLoop) {
    if (!is_indirect(scheme)) throw InvalidParameter("solve_indirect: scheme must be indirect");
    auto [m, delta] = required_output_voltage(p, pt);
    SteadyStateSolution s;
    s.scheme = scheme;
    s.i_ac_pu = pt.i_ac_pu;
    s.phi = pt.phi;
    s.m_conv1 = m;
    s.delta_conv1 = delta;
    s.m_ref1 = m;
    s.delta_ref1 = delta;
    s.i_dc = dc_link_current(p, pt, m, delta);
    s.residual_norm = 0.0;
    return s;
}

struct DirectResidualTerms {
    double target_re = 0.0, target_im = 0.0;
    double c1 = 0.0, i = 0.0, phi = 0.0;
};

namespace detail {

// Residual of the fundamental voltage synthesis identity for direct
// modulation, as two real equations on the sin/cos axes, with the
// second-harmonic circulating current fully coupled at every iterate.
inline void direct_residual(const ConverterParams& p, const DirectResidualTerms& T,
                            const Eigen::Vector2d& x, Eigen::Vector2d& F, Eigen::Matrix2d* J) {
    double M = x[0], delta = x[1];
    double c1 = T.c1, I = T.i, phi = T.phi;
    auto cp = circulating_params_d(p, std::clamp(M, 0.0, 1.2), delta, phi);
    double k = cp.k_cir, th = cp.theta_cir;

    double D = c1 * I * (8.0 - 3.0 * M * M);
    double K12 = 12.0 * c1 * M * k * I;
    double K4 = 4.0 * c1 * M * M * M * k * I;
    double cd = std::cos(delta), sd = std::sin(delta);
    double C1 = std::cos(th - delta), S1 = std::sin(th - delta);
    double C2 = std::cos(2.0 * delta - th), S2 = std::sin(2.0 * delta - th);

    F[0] = M * cd + D * std::sin(phi) + K12 * C1 - K4 * C2 * cd - T.target_re;
    F[1] = M * sd + D * std::cos(phi) + K12 * S1 - K4 * C2 * sd - T.target_im;

    if (J) {
        double Dp = -6.0 * c1 * I * M;
        double K12_m = 12.0 * c1 * I * (k + M * cp.dk_dm);
        double K12_d = 12.0 * c1 * I * M * cp.dk_dd;
        double K4_m = 4.0 * c1 * I * (3.0 * M * M * k + M * M * M * cp.dk_dm);
        double K4_d = 4.0 * c1 * I * M * M * M * cp.dk_dd;
        double dC1_m = -S1 * cp.dth_dm;
        double dC1_d = -S1 * (cp.dth_dd - 1.0);
        double dS1_m = C1 * cp.dth_dm;
        double dS1_d = C1 * (cp.dth_dd - 1.0);
        double dC2_m = S2 * cp.dth_dm;
        double dC2_d = -S2 * (2.0 - cp.dth_dd);

        (*J)(0, 0) = cd + Dp * std::sin(phi) + K12_m * C1 + K12 * dC1_m -
                     (K4_m * C2 + K4 * dC2_m) * cd;
        (*J)(0, 1) = -M * sd + K12_d * C1 + K12 * dC1_d - (K4_d * C2 + K4 * dC2_d) * cd +
                     K4 * C2 * sd;
        (*J)(1, 0) = sd + Dp * std::cos(phi) + K12_m * S1 + K12 * dS1_m -
                     (K4_m * C2 + K4 * dC2_m) * sd;
        (*J)(1, 1) = M * cd + K12_d * S1 + K12 * dS1_d - (K4_d * C2 + K4 * dC2_d) * sd -
                     K4 * C2 * cd;
    }
}

}  // namespace detail

/// Direct modulation: solve the fundamental reference (m_ref1, delta_ref1)
/// whose synthesized output, including capacitor-ripple and circulating
/// current deviations, equals the required voltage; then evaluate the
/// capacitor dc deviation.
inline SteadyStateSolution solve_direct(const ConverterParams& p, const OperatingPoint& pt,
                                        const NewtonOptions& opts = {}) {
    auto d = derive_constants(p);
    auto [mc, dc] = required_output_voltage(p, pt);
    if (!(mc < 1.2))
        throw SolverFailure("solve_direct: required modulation index " + std::to_string(mc) +
                            " exceeds the sanity bound 1.2");

    DirectResidualTerms T;
    T.target_re = mc * std::cos(dc);
    T.target_im = mc * std::sin(dc);
    T.c1 = d.c1;
    T.i = pt.i_ac_pu;
    T.phi = pt.phi;

    Eigen::Vector2d x(mc, dc);
    auto report = newton_solve<2>(
        x, [&](const Eigen::Vector2d& xv, Eigen::Vector2d& F, Eigen::Matrix2d* J) {
            detail::direct_residual(p, T, xv, F, J);
        },
        opts);

    SteadyStateSolution s;
    s.scheme = Scheme::Direct;
    s.i_ac_pu = pt.i_ac_pu;
    s.phi = pt.phi;
    s.m_conv1 = mc;
    s.delta_conv1 = dc;
    s.m_ref1 = x[0];
    s.delta_ref1 = wrap_angle(x[1]);
    auto cp = circulating_params_d(p, s.m_ref1, s.delta_ref1, pt.phi);
    s.k_cir = cp.k_cir;
    s.theta_cir = cp.theta_cir;
    s.dc_cap_deviation_pu =
        -4.0 * d.c1 * s.m_ref1 * pt.i_ac_pu * std::sin(pt.phi + s.delta_ref1) -
        4.0 * d.c1 * s.m_ref1 * s.m_ref1 * s.k_cir * pt.i_ac_pu *
            std::cos(s.theta_cir - 2.0 * s.delta_ref1);
    s.i_dc = dc_link_current(p, pt, mc, dc);
    s.residual_norm = report.residual_norm;
    s.iterations = report.iterations;
    return s;
}

namespace detail {

struct ImprovedTerms {
    double target_re = 0.0, target_im = 0.0;
    double c1 = 0.0, i = 0.0, phi = 0.0;
};

// Five real equations for improved direct modulation. Unknowns are
// (h, m_ref1, delta_ref1, a2, b2) with the injected second harmonic in
// Cartesian form a2 sin(2wt) + b2 cos(2wt); the Cartesian parameterization
// keeps the Jacobian regular when the injection is zero.
//   R0: dc balance of the common-mode inserted voltage
//   R1, R2: the second harmonic of the common-mode voltage is nulled
//   R3, R4: the synthesized fundamental equals the required output
inline void improved_residual(const ImprovedTerms& T, const Eigen::Matrix<double, 5, 1>& x,
                              Eigen::Matrix<double, 5, 1>& F, Eigen::Matrix<double, 5, 5>* J) {
    double h = x[0], M = x[1], d1 = x[2], a2 = x[3], b2 = x[4];
    double c1 = T.c1, I = T.i, phi = T.phi;
    double sphi = std::sin(phi), cphi = std::cos(phi);
    double sY = std::sin(d1 + phi), cY = std::cos(d1 + phi);
    double sD = std::sin(d1 - phi), cD = std::cos(d1 - phi);
    double s1 = std::sin(d1), c1d = std::cos(d1);
    double s2d = std::sin(2.0 * d1), c2d = std::cos(2.0 * d1);
    double M2sq = a2 * a2 + b2 * b2;
    double M3 = M * M * M;

    double G = a2 * std::cos(phi - d1) - b2 * std::sin(phi - d1);
    double H3 = a2 * c1d + b2 * s1;
    double H4 = b2 * c1d - a2 * s1;

    F[0] = h * (1.0 + c1 * M * I * G) - 1.0 - 4.0 * c1 * I * M * sY;
    F[1] = (6.0 * c1 * M * I / h) * cD - 2.0 * c1 * h * M3 * I * cY * c2d -
           (4.0 / 3.0) * c1 * M * I * sY * a2 - (2.0 / 3.0) * c1 * M * I * cY * b2 + a2;
    F[2] = (6.0 * c1 * M * I / h) * sD - 2.0 * c1 * h * M3 * I * cY * s2d +
           (2.0 / 3.0) * c1 * M * I * cY * a2 - (4.0 / 3.0) * c1 * M * I * sY * b2 + b2;
    double amp = 8.0 / (h * h) - (4.0 / 3.0) * M2sq + M * M;
    F[3] = c1 * I * amp * sphi - c1 * h * M * M * I * cY * H3 + M * c1d +
           4.0 * c1 * M * M * I * cY * s1 - T.target_re;
    F[4] = c1 * I * amp * cphi - c1 * h * M * M * I * cY * H4 + M * s1 -
           4.0 * c1 * M * M * I * cY * c1d - T.target_im;

    if (J) {
        double dG_dd1 = a2 * std::sin(phi - d1) + b2 * std::cos(phi - d1);
        auto& Jm = *J;
        Jm.setZero();
        // R0
        Jm(0, 0) = 1.0 + c1 * M * I * G;
        Jm(0, 1) = h * c1 * I * G - 4.0 * c1 * I * sY;
        Jm(0, 2) = h * c1 * M * I * dG_dd1 - 4.0 * c1 * I * M * cY;
        Jm(0, 3) = h * c1 * M * I * std::cos(phi - d1);
        Jm(0, 4) = -h * c1 * M * I * std::sin(phi - d1);
        // R1
        Jm(1, 0) = -(6.0 * c1 * M * I / (h * h)) * cD - 2.0 * c1 * M3 * I * cY * c2d;
        Jm(1, 1) = (6.0 * c1 * I / h) * cD - 6.0 * c1 * h * M * M * I * cY * c2d -
                   (4.0 / 3.0) * c1 * I * sY * a2 - (2.0 / 3.0) * c1 * I * cY * b2;
        Jm(1, 2) = -(6.0 * c1 * M * I / h) * sD -
                   2.0 * c1 * h * M3 * I * (-sY * c2d - 2.0 * cY * s2d) -
                   (4.0 / 3.0) * c1 * M * I * cY * a2 + (2.0 / 3.0) * c1 * M * I * sY * b2;
        Jm(1, 3) = -(4.0 / 3.0) * c1 * M * I * sY + 1.0;
        Jm(1, 4) = -(2.0 / 3.0) * c1 * M * I * cY;
        // R2
        Jm(2, 0) = -(6.0 * c1 * M * I / (h * h)) * sD - 2.0 * c1 * M3 * I * cY * s2d;
        Jm(2, 1) = (6.0 * c1 * I / h) * sD - 6.0 * c1 * h * M * M * I * cY * s2d +
                   (2.0 / 3.0) * c1 * I * cY * a2 - (4.0 / 3.0) * c1 * I * sY * b2;
        Jm(2, 2) = (6.0 * c1 * M * I / h) * cD -
                   2.0 * c1 * h * M3 * I * (-sY * s2d + 2.0 * cY * c2d) -
                   (2.0 / 3.0) * c1 * M * I * sY * a2 - (4.0 / 3.0) * c1 * M * I * cY * b2;
        Jm(2, 3) = (2.0 / 3.0) * c1 * M * I * cY;
        Jm(2, 4) = -(4.0 / 3.0) * c1 * M * I * sY + 1.0;
        // R3
        Jm(3, 0) = -16.0 * c1 * I * sphi / (h * h * h) - c1 * M * M * I * cY * H3;
        Jm(3, 1) = 2.0 * c1 * I * M * sphi - 2.0 * c1 * h * M * I * cY * H3 + c1d +
                   8.0 * c1 * M * I * cY * s1;
        Jm(3, 2) = -c1 * h * M * M * I * (-sY * H3 + cY * H4) - M * s1 +
                   4.0 * c1 * M * M * I * (-sY * s1 + cY * c1d);
        Jm(3, 3) = -(8.0 / 3.0) * c1 * I * a2 * sphi - c1 * h * M * M * I * cY * c1d;
        Jm(3, 4) = -(8.0 / 3.0) * c1 * I * b2 * sphi - c1 * h * M * M * I * cY * s1;
        // R4
        Jm(4, 0) = -16.0 * c1 * I * cphi / (h * h * h) - c1 * M * M * I * cY * H4;
        Jm(4, 1) = 2.0 * c1 * I * M * cphi - 2.0 * c1 * h * M * I * cY * H4 + s1 -
                   8.0 * c1 * M * I * cY * c1d;
        Jm(4, 2) = -c1 * h * M * M * I * (-sY * H4 - cY * H3) + M * c1d +
                   4.0 * c1 * M * M * I * (sY * c1d + cY * s1);
        Jm(4, 3) = -(8.0 / 3.0) * c1 * I * a2 * cphi + c1 * h * M * M * I * cY * s1;
        Jm(4, 4) = -(8.0 / 3.0) * c1 * I * b2 * cphi - c1 * h * M * M * I * cY * c1d;
    }
}

inline Eigen::Matrix<double, 5, 1> improved_solve_at(const ImprovedTerms& T,
                                                     Eigen::Matrix<double, 5, 1> x0,
                                                     const NewtonOptions& opts,
                                                     NewtonReport& report) {
    report = newton_solve<5>(
        x0,
        [&](const Eigen::Matrix<double, 5, 1>& xv, Eigen::Matrix<double, 5, 1>& F,
            Eigen::Matrix<double, 5, 5>* J) { improved_residual(T, xv, F, J); },
        opts);
    return x0;
}

}  // namespace detail

/// Improved direct modulation: capacitor-voltage control reshapes the dc
/// reference (factor h) and the suppression loop injects a second harmonic;
/// the five unknowns solve dc balance, second-harmonic nulling and the
/// fundamental synthesis identity jointly. Falls back to a short current
/// continuation ramp if the full-current solve does not converge.
inline SteadyStateSolution solve_improved_direct(const ConverterParams& p,
                                                 const OperatingPoint& pt,
                                                 const NewtonOptions& opts = {}) {
    auto d = derive_constants(p);
    auto [mc, dc] = required_output_voltage(p, pt);

    detail::ImprovedTerms T;
    T.target_re = mc * std::cos(dc);
    T.target_im = mc * std::sin(dc);
    T.c1 = d.c1;
    T.phi = pt.phi;

    Eigen::Matrix<double, 5, 1> x;
    x << 1.0, mc, dc, 0.0, 0.0;
    NewtonReport report;
    try {
        T.i = pt.i_ac_pu;
        x = detail::improved_solve_at(T, x, opts, report);
    } catch (const SolverFailure&) {
        x << 1.0, mc, dc, 0.0, 0.0;
        for (int step = 1; step <= 4; ++step) {
            T.i = pt.i_ac_pu * step / 4.0;
            auto [mi, di] =
                required_output_voltage(p, OperatingPoint{pt.i_ac_pu * step / 4.0, pt.phi});
            T.target_re = mi * std::cos(di);
            T.target_im = mi * std::sin(di);
            x = detail::improved_solve_at(T, x, opts, report);
        }
    }

    SteadyStateSolution s;
    s.scheme = Scheme::ImprovedDirect;
    s.i_ac_pu = pt.i_ac_pu;
    s.phi = pt.phi;
    s.m_conv1 = mc;
    s.delta_conv1 = dc;
    s.h = x[0];
    s.m_ref1 = x[1];
    s.delta_ref1 = wrap_angle(x[2]);
    s.m_ref2 = std::hypot(x[3], x[4]);
    s.delta_ref2 = s.m_ref2 > 1e-14 ? std::atan2(x[4], x[3]) : 0.0;
    s.i_dc = dc_link_current(p, pt, mc, dc);
    s.residual_norm = report.residual_norm;
    s.iterations = report.iterations;
    return s;
}

inline SteadyStateSolution solve_scheme(const ConverterParams& p, const OperatingPoint& pt,
                                        Scheme scheme, const NewtonOptions& opts = {}) {
    switch (scheme) {
        case Scheme::Direct: return solve_direct(p, pt, opts);
        case Scheme::IndirectClosedLoop:
        case Scheme::IndirectOpenLoop: return solve_indirect(p, pt, scheme);
        case Scheme::ImprovedDirect: return solve_improved_direct(p, pt, opts);
        default:
            throw InvalidParameter(std::string("solve_scheme: no steady-state analytics for ") +
                                   scheme_name(scheme) + "; use the simulator");
    }
}

// Capacitor voltage ripple per harmonic order, upper arm of the reference
// phase. Each order is one complex phasor P with ripple Re(P exp(j k w t)).
struct CapRippleHarmonics {
    std::complex<double> order1, order2, order3;
    double omega = 0.0;

    double eval_upper(double t) const {
        using namespace std::complex_literals;
        return (order1 * std::exp(1i * (omega * t))).real() +
               (order2 * std::exp(1i * (2.0 * omega * t))).real() +
               (order3 * std::exp(1i * (3.0 * omega * t))).real();
    }
    // the lower arm is the upper arm half a period later
    double eval_lower(double t) const {
        return -(order1 * std::exp(std::complex<double>(0, omega * t))).real() +
               (order2 * std::exp(std::complex<double>(0, 2.0 * omega * t))).real() -
               (order3 * std::exp(std::complex<double>(0, 3.0 * omega * t))).real();
    }
};

/// Ripple phasors consistent with the exact average capacitor model
/// C du/dt = f i under the solved references. All amplitudes carry 1/(w C).
inline CapRippleHarmonics cap_ripple_harmonics(const ConverterParams& p,
                                               const SteadyStateSolution& sol) {
    auto d = derive_constants(p);
    double i_ac = sol.i_ac_pu * d.i_base;
    double M = sol.m_ref1, delta = sol.delta_ref1, k = sol.k_cir, th = sol.theta_cir;
    double phi = sol.phi;
    double s = std::sqrt(2.0) * i_ac / (p.omega() * p.c_sm);
    using namespace std::complex_literals;
    CapRippleHarmonics out;
    out.omega = p.omega();
    out.order1 = -(s / 4.0) * std::exp(-1i * phi) +
                 (s * M * M * std::cos(delta + phi) / 8.0) * std::exp(1i * delta) +
                 1i * (s * M * k / 4.0) * std::exp(1i * (th - delta));
    out.order2 = -(s * k / 4.0) * std::exp(1i * th) -
                 1i * (s * M / 16.0) * std::exp(1i * (delta - phi));
    out.order3 = -1i * (s * M * k / 12.0) * std::exp(1i * (th + delta));
    return out;
}

// Arm energy ripple as a two-harmonic trig polynomial plus the dc level W0.
// Upper arm: W(t) = w0 + Re(h1 e^{jwt}) + Re(h2 e^{j2wt}); the lower arm
// flips the fundamental.
struct ArmEnergyRipple {
    double w0 = 0.0;  // J
    std::complex<double> h1, h2;
    double omega = 0.0;

    double ripple_upper(double t) const {
        return (h1 * std::exp(std::complex<double>(0, omega * t))).real() +
               (h2 * std::exp(std::complex<double>(0, 2.0 * omega * t))).real();
    }
    double ripple_lower(double t) const {
        return -(h1 * std::exp(std::complex<double>(0, omega * t))).real() +
               (h2 * std::exp(std::complex<double>(0, 2.0 * omega * t))).real();
    }
    double energy_upper(double t) const { return w0 + ripple_upper(t); }
    double energy_lower(double t) const { return w0 + ripple_lower(t); }
};

/// Closed-form antiderivative of the arm power under sinusoidal output and
/// the power-balance dc current. Throws if the integrand has a dc component,
/// which signals an inconsistent i_dc.
inline ArmEnergyRipple arm_energy_ripple(const ConverterParams& p,
                                         const SteadyStateSolution& sol) {
    auto d = derive_constants(p);
    double w = p.omega();
    double i_ac = sol.i_ac_pu * d.i_base;
    double u_conv1 = sol.m_conv1 * (p.u_dc_nominal / 2.0) / std::sqrt(2.0);
    double dc_integrand = p.u_dc_nominal * sol.i_dc / 6.0 -
                          (u_conv1 * i_ac / 2.0) * std::cos(sol.delta_conv1 + sol.phi);
    if (std::abs(dc_integrand) > 1e-9 * p.s_rated) {
        std::ostringstream os;
        os << "arm_energy_ripple: arm power has a dc component of " << dc_integrand
           << " W; i_dc is inconsistent with the operating point";
        throw Error(os.str());
    }
    using namespace std::complex_literals;
    ArmEnergyRipple out;
    out.omega = w;
    out.w0 = 0.5 * p.c_sm * p.u_cap_target() * p.u_cap_target() * p.n_submodules;
    out.h1 = -(std::sqrt(2.0) * p.u_dc_nominal * i_ac / (4.0 * w)) * std::exp(-1i * sol.phi) +
             (std::sqrt(2.0) * u_conv1 * sol.i_dc / (3.0 * w)) * std::exp(1i * sol.delta_conv1);
    out.h2 = -1i * (u_conv1 * i_ac / (4.0 * w)) * std::exp(1i * (sol.delta_conv1 - sol.phi));
    return out;
}

/// Flat record for CSV emission; field names match the type definition.
inline std::vector<std::pair<std::string, std::string>> solution_record(
    const SteadyStateSolution& s) {
    auto f = [](double v) {
        char buf[40];
        std::snprintf(buf, sizeof(buf), "%.9g", v);
        return std::string(buf);
    };
    return {
        {"scheme", scheme_name(s.scheme)},
        {"m_conv1", f(s.m_conv1)},
        {"delta_conv1", f(s.delta_conv1)},
        {"m_ref1", f(s.m_ref1)},
        {"delta_ref1", f(s.delta_ref1)},
        {"m_ref2", f(s.m_ref2)},
        {"delta_ref2", f(s.delta_ref2)},
        {"h", f(s.h)},
        {"k_cir", f(s.k_cir)},
        {"theta_cir", f(s.theta_cir)},
        {"dc_cap_deviation_pu", f(s.dc_cap_deviation_pu)},
        {"i_dc", f(s.i_dc)},
        {"residual_norm", f(s.residual_norm)},
    };
}

}  // namespace mmc
