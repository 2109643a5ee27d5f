#pragma once

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

// Parameter model, per-unit system and operating envelope shared by all
// analysis modules. Everything here is a pure function over value types.

namespace mmc {

inline constexpr double pi = std::numbers::pi;

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct InvalidParameter : Error {
    using Error::Error;
};
struct SolverFailure : Error {
    using Error::Error;
};
struct SingularDenominator : Error {
    using Error::Error;
};
struct NegativeEnergyError : Error {
    using Error::Error;
};
struct BracketError : Error {
    using Error::Error;
};
struct NotSettledError : Error {
    using Error::Error;
};
struct InstabilityError : Error {
    using Error::Error;
};
struct ConfigError : Error {
    using Error::Error;
};

/// Wrap an angle to (-pi, pi].
inline double wrap_angle(double a) {
    double y = std::remainder(a, 2.0 * pi);
    if (y <= -pi) y += 2.0 * pi;
    return y;
}

enum class Scheme {
    Direct,
    IndirectClosedLoop,
    IndirectOpenLoop,
    ImprovedDirect,
    DirectCvcOnly,   // diagnostic: direct + capacitor-voltage control only
    DirectCcscOnly,  // diagnostic: direct + circulating-current suppression only
};

inline bool is_indirect(Scheme s) {
    return s == Scheme::IndirectClosedLoop || s == Scheme::IndirectOpenLoop;
}

/// Schemes with closed-form or iterative steady-state analytics. The two
/// diagnostic hybrids are defined operationally through the simulator.
inline bool has_analytics(Scheme s) {
    return s == Scheme::Direct || is_indirect(s) || s == Scheme::ImprovedDirect;
}

inline const char* scheme_name(Scheme s) {
    switch (s) {
        case Scheme::Direct: return "direct";
        case Scheme::IndirectClosedLoop: return "indirect";
        case Scheme::IndirectOpenLoop: return "indirect-open";
        case Scheme::ImprovedDirect: return "improved-direct";
        case Scheme::DirectCvcOnly: return "direct-cvc-only";
        case Scheme::DirectCcscOnly: return "direct-ccsc-only";
    }
    return "?";
}

inline Scheme parse_scheme(const std::string& name) {
    if (name == "direct") return Scheme::Direct;
    if (name == "indirect" || name == "indirect-closed") return Scheme::IndirectClosedLoop;
    if (name == "indirect-open") return Scheme::IndirectOpenLoop;
    if (name == "improved-direct" || name == "improved") return Scheme::ImprovedDirect;
    if (name == "direct-cvc-only" || name == "cvc-only") return Scheme::DirectCvcOnly;
    if (name == "direct-ccsc-only" || name == "ccsc-only") return Scheme::DirectCcscOnly;
    throw ConfigError("unknown scheme: " + name);
}

// Converter ratings. Reactances are per unit on the valve-side base; the
// valve voltage u_acv_pu is per unit of half the dc-link voltage on an
// amplitude basis, so a modulation index of u_acv_pu reproduces it exactly.
struct ConverterParams {
    double u_dc_nominal = 0.0;  // V
    int n_submodules = 0;       // per arm
    double c_sm = 0.0;          // F
    double s_rated = 0.0;       // VA
    double p_rated = 0.0;       // W
    double x_eq_pu = 0.0;
    double x_arm_pu = 0.0;  // valve-side referred (half the physical arm reactance)
    double x_t_pu = 0.0;
    double u_acv_pu = 0.0;
    double frequency = 50.0;  // Hz
    double u_cap_ref = 0.0;   // V; 0 selects the default u_dc_nominal / n_submodules

    double omega() const { return 2.0 * pi * frequency; }
    double period() const { return 1.0 / frequency; }
    double u_cap_target() const {
        return u_cap_ref > 0.0 ? u_cap_ref : u_dc_nominal / n_submodules;
    }

    void validate() const {
        auto positive = [](double v, const char* field) {
            if (!(v > 0.0) || !std::isfinite(v))
                throw InvalidParameter(std::string("ConverterParams: ") + field +
                                       " must be strictly positive");
        };
        positive(u_dc_nominal, "u_dc_nominal");
        if (n_submodules <= 0) throw InvalidParameter("ConverterParams: n_submodules must be positive");
        positive(c_sm, "c_sm");
        positive(s_rated, "s_rated");
        positive(p_rated, "p_rated");
        positive(x_eq_pu, "x_eq_pu");
        positive(x_arm_pu, "x_arm_pu");
        positive(x_t_pu, "x_t_pu");
        positive(frequency, "frequency");
        if (!(u_acv_pu > 0.0 && u_acv_pu < 1.0))
            throw InvalidParameter("ConverterParams: u_acv_pu must lie in (0, 1)");
        if (std::abs(x_eq_pu - (x_t_pu + x_arm_pu)) > 1e-12)
            throw InvalidParameter("ConverterParams: x_eq_pu must equal x_t_pu + x_arm_pu");
        if (u_cap_ref < 0.0) throw InvalidParameter("ConverterParams: u_cap_ref must be non-negative");
    }
};

struct DerivedConstants {
    double u_cap_nominal;  // V
    double e_req;          // s, rated stored energy over rated VA
    double c1;             // converter coefficient
    double i_base;         // A rms, per-phase current base
    double u_acv_rms;      // V rms line-to-ground
};

/// Closed-form constants of the per-unit system. i_base carries rated power
/// at unity current and power factor; c1 couples capacitor ripple into the
/// modulation identities.
inline DerivedConstants derive_constants(const ConverterParams& p) {
    p.validate();
    DerivedConstants d{};
    d.u_cap_nominal = p.u_dc_nominal / p.n_submodules;
    d.e_req = 6.0 * (0.5 * p.c_sm * d.u_cap_nominal * d.u_cap_nominal * p.n_submodules) / p.s_rated;
    d.c1 = 1.0 / (8.0 * p.u_acv_pu * p.omega() * d.e_req);
    d.u_acv_rms = p.u_acv_pu * (p.u_dc_nominal / 2.0) / std::sqrt(2.0);
    d.i_base = p.s_rated / (3.0 * d.u_acv_rms);
    return d;
}

/// Impedance base: u_acv_rms / i_base.
inline double impedance_base(const ConverterParams& p) {
    auto d = derive_constants(p);
    return d.u_acv_rms / d.i_base;
}

// Operating point: ac current magnitude in per unit and the power factor
// angle. The current phasor is I at angle -phi against the valve voltage at
// angle 0, so positive phi exports reactive power.
struct OperatingPoint {
    double i_ac_pu = 0.0;
    double phi = 0.0;  // rad, (-pi, pi]

    void validate() const {
        if (!(i_ac_pu >= 0.0) || !std::isfinite(i_ac_pu))
            throw InvalidParameter("OperatingPoint: i_ac_pu must be non-negative");
        if (!(phi > -pi - 1e-12 && phi <= pi + 1e-12) || !std::isfinite(phi))
            throw InvalidParameter("OperatingPoint: phi must lie in (-pi, pi]");
    }
};

/// (P*, Q*) of an operating point, per unit of rated apparent power.
inline std::pair<double, double> pq_of(const OperatingPoint& pt) {
    pt.validate();
    return {pt.i_ac_pu * std::cos(pt.phi), pt.i_ac_pu * std::sin(pt.phi)};
}

struct RequiredRange {
    double q_max_pu = 0.5;

    void validate() const {
        if (!(q_max_pu > 0.0 && q_max_pu <= 1.0))
            throw InvalidParameter("RequiredRange: q_max_pu must lie in (0, 1]");
    }
};

/// Required-range boundary current at angle phi: full current until the
/// reactive cap binds, then Q_max / |sin phi|.
inline double boundary_profile(const RequiredRange& range, double phi) {
    range.validate();
    double s = std::abs(std::sin(phi));
    if (s * 1.0 <= range.q_max_pu) return 1.0;
    return range.q_max_pu / s;
}

/// Comparison case used throughout: 1250 MVA, +/-200 kV, 200 SMs per arm,
/// 18.6 mF submodule capacitance, 50 Hz, valve voltage 0.86 p.u.
inline ConverterParams preset_table1() {
    ConverterParams p;
    p.u_dc_nominal = 400e3;
    p.n_submodules = 200;
    p.c_sm = 18.6e-3;
    p.s_rated = 1250e6;
    p.p_rated = 1250e6;
    p.x_eq_pu = 0.25;
    p.x_arm_pu = 0.15;
    p.x_t_pu = 0.10;
    p.u_acv_pu = 0.86;
    p.frequency = 50.0;
    p.u_cap_ref = 2000.0;
    return p;
}

inline RequiredRange preset_table1_range() { return RequiredRange{0.5}; }

}  // namespace mmc
