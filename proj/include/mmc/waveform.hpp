#pragma once

#include <algorithm>
#include <functional>
#include <vector>

#include "mmc/csv.hpp"
#include "mmc/steady_state.hpp"

// Reference waveform and capacitor voltage over one fundamental period,
// extrema extraction and the linear modulation margin.

namespace mmc {

enum class Arm { Upper, Lower };

struct PeriodWaveform {
    double t1 = 0.0;  // period, s
    std::vector<double> t;
    std::vector<double> v;
    std::function<double(double)> eval;  // continuous evaluator, may be empty
    double t_peak = 0.0, f_peak = 0.0;
    double t_valley = 0.0, f_valley = 0.0;
};

struct MarginReport {
    double f_peak = 0.0;
    double f_valley = 0.0;
    double delta_f_margin = 0.0;
    bool linear = false;
};

struct CapVoltageReport {
    double peak_pu = 0.0;  // of the nominal capacitor voltage
    double dc_pu = 0.0;
    PeriodWaveform waveform;  // volts, upper arm
};

namespace detail {

// Golden-section refinement of a maximum of fn inside [a, b].
inline std::pair<double, double> golden_max(const std::function<double(double)>& fn, double a,
                                            double b, double tol_t) {
    const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
    double x1 = b - gr * (b - a), x2 = a + gr * (b - a);
    double f1 = fn(x1), f2 = fn(x2);
    while (b - a > tol_t) {
        if (f1 < f2) {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + gr * (b - a);
            f2 = fn(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - gr * (b - a);
            f1 = fn(x1);
        }
    }
    double tm = 0.5 * (a + b);
    return {tm, fn(tm)};
}

// Quadratic fit through three equidistant samples around index i.
inline std::pair<double, double> quad_refine(const std::vector<double>& t,
                                             const std::vector<double>& v, std::size_t i,
                                             double t1) {
    std::size_t n = v.size();
    double dt = t1 / static_cast<double>(n);
    double ym = v[(i + n - 1) % n], y0 = v[i], yp = v[(i + 1) % n];
    double denom = ym - 2.0 * y0 + yp;
    if (std::abs(denom) < 1e-300) return {t[i], y0};
    double off = 0.5 * (ym - yp) / denom;
    off = std::clamp(off, -0.5, 0.5);
    double yr = y0 - 0.25 * (ym - yp) * off;
    return {t[i] + off * dt, yr};
}

}  // namespace detail

/// Grid argmax/argmin over the samples, refined on the continuous evaluator
/// when present (golden section to |dt| < 1e-9 T1), otherwise by local
/// quadratic interpolation.
inline void extrema(PeriodWaveform& w) {
    if (w.v.size() < 1024) throw InvalidParameter("extrema: waveform needs at least 1024 samples");
    std::size_t imax = 0, imin = 0;
    for (std::size_t i = 1; i < w.v.size(); ++i) {
        if (w.v[i] > w.v[imax]) imax = i;
        if (w.v[i] < w.v[imin]) imin = i;
    }
    double dt = w.t1 / static_cast<double>(w.v.size());
    if (w.eval) {
        double tol = 1e-9 * w.t1;
        auto [tp, fp] = detail::golden_max(w.eval, w.t[imax] - dt, w.t[imax] + dt, tol);
        auto neg = [&](double x) { return -w.eval(x); };
        auto [tv, fvn] = detail::golden_max(neg, w.t[imin] - dt, w.t[imin] + dt, tol);
        w.t_peak = tp;
        w.f_peak = std::max(fp, w.v[imax]);
        w.t_valley = tv;
        w.f_valley = std::min(-fvn, w.v[imin]);
    } else {
        std::tie(w.t_peak, w.f_peak) = detail::quad_refine(w.t, w.v, imax, w.t1);
        std::tie(w.t_valley, w.f_valley) = detail::quad_refine(w.t, w.v, imin, w.t1);
        w.f_peak = std::max(w.f_peak, w.v[imax]);
        w.f_valley = std::min(w.f_valley, w.v[imin]);
    }
    w.t_peak = std::fmod(w.t_peak + w.t1, w.t1);
    w.t_valley = std::fmod(w.t_valley + w.t1, w.t1);
}

inline PeriodWaveform make_period_waveform(std::function<double(double)> fn, double t1,
                                           std::size_t n = 4096) {
    PeriodWaveform w;
    w.t1 = t1;
    w.t.resize(n);
    w.v.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        w.t[i] = t1 * static_cast<double>(i) / static_cast<double>(n);
        w.v[i] = fn(w.t[i]);
    }
    w.eval = std::move(fn);
    extrema(w);
    return w;
}

inline PeriodWaveform make_sampled_waveform(std::vector<double> t, std::vector<double> v,
                                            double t1) {
    PeriodWaveform w;
    w.t1 = t1;
    w.t = std::move(t);
    w.v = std::move(v);
    extrema(w);
    return w;
}

/// Margin to the linear modulation constraint 0 <= f <= 1.
inline MarginReport margin(const PeriodWaveform& w) {
    MarginReport r;
    r.f_peak = w.f_peak;
    r.f_valley = w.f_valley;
    r.delta_f_margin = std::min(w.f_valley - 0.0, 1.0 - w.f_peak);
    r.linear = r.delta_f_margin > 0.0;
    return r;
}

// Reusable per-solution RWF evaluator. For the indirect family the
// denominator tracks the calculated capacitor voltage from the arm energy.
class RwfEvaluator {
  public:
    RwfEvaluator(const ConverterParams& p, const SteadyStateSolution& sol, Arm arm)
        : scheme_(sol.scheme), arm_(arm), omega_(p.omega()) {
        if (!has_analytics(scheme_))
            throw InvalidParameter(std::string("rwf_eval: no analytic waveform for ") +
                                   scheme_name(scheme_));
        m1_ = sol.m_ref1;
        d1_ = sol.delta_ref1;
        m2_ = sol.m_ref2;
        d2_ = sol.delta_ref2;
        h_ = sol.h;
        if (is_indirect(scheme_)) {
            energy_ = arm_energy_ripple(p, sol);
            u_dc_half_ = p.u_dc_nominal / 2.0;
            u_conv1_amp_ = std::sqrt(2.0) * sol.m_conv1 * (p.u_dc_nominal / 2.0) / std::sqrt(2.0);
            n_ = p.n_submodules;
            nc_d_ = static_cast<double>(p.n_submodules) * p.c_sm;
            dconv_ = sol.delta_conv1;
        }
    }

    double operator()(double t) const {
        double sgn = arm_ == Arm::Upper ? -1.0 : 1.0;
        switch (scheme_) {
            case Scheme::Direct:
                return 0.5 + sgn * (m1_ / 2.0) * std::sin(omega_ * t + d1_);
            case Scheme::ImprovedDirect:
                return 1.0 / (2.0 * h_) + sgn * (m1_ / 2.0) * std::sin(omega_ * t + d1_) +
                       (m2_ / 2.0) * std::sin(2.0 * omega_ * t + d2_);
            default: {
                double w = arm_ == Arm::Upper ? energy_.energy_upper(t) : energy_.energy_lower(t);
                if (!(w > 0.0))
                    throw NegativeEnergyError(
                        "rwf_eval: arm energy is not positive; capacitance too small for this point");
                double u_cap = std::sqrt(2.0 * w / nc_d_);
                double num = u_dc_half_ + sgn * u_conv1_amp_ * std::sin(omega_ * t + dconv_);
                return num / (n_ * u_cap);
            }
        }
    }

  private:
    Scheme scheme_;
    Arm arm_;
    double omega_;
    double m1_ = 0, d1_ = 0, m2_ = 0, d2_ = 0, h_ = 1;
    ArmEnergyRipple energy_;
    double u_dc_half_ = 0, u_conv1_amp_ = 0, dconv_ = 0, nc_d_ = 1;
    int n_ = 1;
};

inline double rwf_eval(Scheme scheme, const ConverterParams& p, const SteadyStateSolution& sol,
                       Arm arm, double t) {
    if (scheme != sol.scheme) throw InvalidParameter("rwf_eval: solution does not match scheme");
    return RwfEvaluator(p, sol, arm)(t);
}

inline PeriodWaveform rwf_waveform(const ConverterParams& p, const SteadyStateSolution& sol,
                                   Arm arm, std::size_t n = 4096) {
    RwfEvaluator ev(p, sol, arm);
    return make_period_waveform([ev](double t) { return ev(t); }, p.period(), n);
}

/// Linear modulation margin of the solved scheme at this solution, upper and
/// lower arms combined (they share extrema half a period apart, so the upper
/// arm suffices for direct and indirect; the improved scheme is evaluated on
/// both arms).
inline MarginReport scheme_margin(const ConverterParams& p, const SteadyStateSolution& sol,
                                  std::size_t n = 4096) {
    auto wu = rwf_waveform(p, sol, Arm::Upper, n);
    auto mu = margin(wu);
    if (sol.scheme == Scheme::ImprovedDirect || is_indirect(sol.scheme)) {
        auto wl = rwf_waveform(p, sol, Arm::Lower, n);
        auto ml = margin(wl);
        MarginReport r;
        r.f_peak = std::max(mu.f_peak, ml.f_peak);
        r.f_valley = std::min(mu.f_valley, ml.f_valley);
        r.delta_f_margin = std::min(mu.delta_f_margin, ml.delta_f_margin);
        r.linear = r.delta_f_margin > 0.0;
        return r;
    }
    return mu;
}

// Capacitor voltage evaluator (volts, per SM) for a solved scheme.
class CapVoltageEvaluator {
  public:
    CapVoltageEvaluator(const ConverterParams& p, const SteadyStateSolution& sol, Arm arm)
        : arm_(arm) {
        direct_ = sol.scheme == Scheme::Direct;
        if (direct_) {
            ripple_ = cap_ripple_harmonics(p, sol);
            u_dc_ = derive_constants(p).u_cap_nominal * (1.0 + sol.dc_cap_deviation_pu);
        } else {
            energy_ = arm_energy_ripple(p, sol);
            nc_d_ = static_cast<double>(p.n_submodules) * p.c_sm;
        }
    }

    double operator()(double t) const {
        if (direct_) {
            double rip = arm_ == Arm::Upper ? ripple_.eval_upper(t) : ripple_.eval_lower(t);
            return u_dc_ + rip;
        }
        double w = arm_ == Arm::Upper ? energy_.energy_upper(t) : energy_.energy_lower(t);
        if (!(w > 0.0))
            throw NegativeEnergyError(
                "cap_voltage: arm energy is not positive; capacitance too small for this point");
        return std::sqrt(2.0 * w / nc_d_);
    }

  private:
    Arm arm_;
    bool direct_ = false;
    CapRippleHarmonics ripple_;
    double u_dc_ = 0.0;
    ArmEnergyRipple energy_;
    double nc_d_ = 1.0;
};

/// Capacitor voltage summary: analytic harmonic sum for direct modulation,
/// arm-energy square root for the indirect family and the improved scheme.
inline CapVoltageReport cap_voltage_report(Scheme scheme, const ConverterParams& p,
                                           const SteadyStateSolution& sol, std::size_t n = 4096) {
    if (scheme != sol.scheme)
        throw InvalidParameter("cap_voltage_report: solution does not match scheme");
    CapVoltageEvaluator ev(p, sol, Arm::Upper);
    auto w = make_period_waveform([ev](double t) { return ev(t); }, p.period(), n);
    double mean = 0.0;
    for (double v : w.v) mean += v;
    mean /= static_cast<double>(w.v.size());
    double u_nom = derive_constants(p).u_cap_nominal;
    CapVoltageReport r;
    r.peak_pu = w.f_peak / u_nom;
    r.dc_pu = mean / u_nom;
    r.waveform = std::move(w);
    return r;
}

/// Largest pointwise RWF gap between the indirect scheme and improved direct
/// modulation at one operating point (both arms).
inline double equivalence_gap(const ConverterParams& p, const OperatingPoint& pt,
                              std::size_t n = 4096) {
    auto si = solve_indirect(p, pt);
    auto sd = solve_improved_direct(p, pt);
    double gap = 0.0;
    for (Arm arm : {Arm::Upper, Arm::Lower}) {
        RwfEvaluator ei(p, si, arm), ed(p, sd, arm);
        for (std::size_t i = 0; i < n; ++i) {
            double t = p.period() * static_cast<double>(i) / static_cast<double>(n);
            gap = std::max(gap, std::abs(ei(t) - ed(t)));
        }
    }
    return gap;
}

/// CSV export with columns t_s, f_upper, f_lower, u_cap_upper_v.
inline CsvWriter waveform_csv(const ConverterParams& p, const SteadyStateSolution& sol,
                              std::size_t n = 4096) {
    RwfEvaluator fu(p, sol, Arm::Upper), fl(p, sol, Arm::Lower);
    CapVoltageEvaluator cu(p, sol, Arm::Upper);
    CsvWriter csv({"t_s", "f_upper", "f_lower", "u_cap_upper_v"});
    for (std::size_t i = 0; i < n; ++i) {
        double t = p.period() * static_cast<double>(i) / static_cast<double>(n);
        csv.add_row({fmt_double(t), fmt_double(fu(t)), fmt_double(fl(t)), fmt_double(cu(t))});
    }
    return csv;
}

}  // namespace mmc
