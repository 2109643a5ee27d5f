#pragma once

#include <cstdlib>
#include <optional>
#include <thread>

#include "mmc/waveform.hpp"

// Sweep analyses over the required PQ operating range: boundary scans,
// the linear-region search, region area, the maximum selectable valve-side
// voltage and submodule capacitance sizing.

namespace mmc {

/// Worker cap for sweeps: MMC_MODLAB_THREADS, hardware concurrency otherwise.
inline unsigned sweep_thread_cap() {
    if (const char* env = std::getenv("MMC_MODLAB_THREADS")) {
        long v = std::strtol(env, nullptr, 10);
        if (v >= 1) return static_cast<unsigned>(v);
    }
    unsigned hw = std::thread::hardware_concurrency();
    return hw ? hw : 1;
}

// Static chunking; each index writes its own slot, so the result does not
// depend on the worker count.
template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn, unsigned threads = 0) {
    if (threads == 0) threads = sweep_thread_cap();
    threads = static_cast<unsigned>(std::min<std::size_t>(threads, n));
    if (threads <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(threads);
    std::size_t chunk = (n + threads - 1) / threads;
    for (unsigned w = 0; w < threads; ++w) {
        std::size_t lo = w * chunk, hi = std::min(n, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([lo, hi, &fn] {
            for (std::size_t i = lo; i < hi; ++i) fn(i);
        });
    }
    for (auto& th : pool) th.join();
}

struct BoundaryRecord {
    double phi = 0.0;
    double i_pu = 0.0;
    double f_peak = 0.0;
    double f_valley = 0.0;
    double df_margin = 0.0;
    double cap_peak_pu = 0.0;
    double cap_dc_pu = 0.0;
    bool ok = false;
    std::string error;
};

struct BoundaryScan {
    Scheme scheme = Scheme::Direct;
    std::vector<BoundaryRecord> rows;

    double min_margin() const {
        double m = 1e300;
        for (const auto& r : rows)
            if (r.ok) m = std::min(m, r.df_margin);
        return m;
    }
    const BoundaryRecord* worst() const {
        const BoundaryRecord* w = nullptr;
        for (const auto& r : rows)
            if (r.ok && (!w || r.df_margin < w->df_margin)) w = &r;
        return w;
    }
    std::size_t ok_count() const {
        std::size_t n = 0;
        for (const auto& r : rows) n += r.ok;
        return n;
    }
};

struct ScanOptions {
    std::optional<double> i_override;  // fixed current instead of the boundary profile
    bool with_cap = true;              // also extract capacitor peak/dc
    unsigned threads = 0;              // 0: use the sweep cap
    std::size_t samples = 4096;
};

/// Scan the scheme's margins (and capacitor metrics) along the boundary of
/// the required range; per-point failures are recorded in the row and the
/// scan continues.
inline BoundaryScan scan_boundary(const ConverterParams& p, Scheme scheme,
                                  const RequiredRange& range, double dphi,
                                  const ScanOptions& opts = {}) {
    if (!(dphi > 0.0 && dphi <= pi / 18.0 + 1e-15))
        throw InvalidParameter("scan_boundary: dphi must lie in (0, pi/18]");
    auto n = static_cast<std::size_t>(std::llround(2.0 * pi / dphi));
    BoundaryScan scan;
    scan.scheme = scheme;
    scan.rows.resize(n);
    parallel_for(
        n,
        [&](std::size_t k) {
            double phi = -pi + dphi * static_cast<double>(k);
            BoundaryRecord& r = scan.rows[k];
            r.phi = phi;
            double phi_w = wrap_angle(phi);
            r.i_pu = opts.i_override ? *opts.i_override : boundary_profile(range, phi_w);
            try {
                auto sol = solve_scheme(p, OperatingPoint{r.i_pu, phi_w}, scheme);
                auto m = scheme_margin(p, sol, opts.samples);
                r.f_peak = m.f_peak;
                r.f_valley = m.f_valley;
                r.df_margin = m.delta_f_margin;
                if (opts.with_cap) {
                    auto cap = cap_voltage_report(scheme, p, sol, opts.samples);
                    r.cap_peak_pu = cap.peak_pu;
                    r.cap_dc_pu = cap.dc_pu;
                }
                r.ok = true;
            } catch (const Error& e) {
                r.ok = false;
                r.error = e.what();
            }
        },
        opts.threads);
    return scan;
}

struct RegionRecord {
    double phi = 0.0;
    double i_max_pu = 0.0;
};

struct PqRegion {
    Scheme scheme = Scheme::Direct;
    std::vector<RegionRecord> rows;
};

/// Polar trapezoid rule for the area swept by i_max(phi) in the PQ plane,
/// closed around the full circle.
inline double region_area(const PqRegion& region) {
    if (region.rows.empty()) throw InvalidParameter("region_area: empty region");
    double area = 0.0;
    std::size_t n = region.rows.size();
    for (std::size_t k = 0; k < n; ++k) {
        const auto& a = region.rows[k];
        const auto& b = region.rows[(k + 1) % n];
        double dphi = b.phi - a.phi;
        if (k + 1 == n) dphi = 2.0 * pi + b.phi - a.phi;
        area += 0.25 * (a.i_max_pu * a.i_max_pu + b.i_max_pu * b.i_max_pu) * dphi;
    }
    return area;
}

/// The required range itself as a region, for area comparisons.
inline PqRegion required_region(const RequiredRange& range, double dphi) {
    auto n = static_cast<std::size_t>(std::llround(2.0 * pi / dphi));
    PqRegion reg;
    reg.rows.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
        double phi = -pi + dphi * static_cast<double>(k);
        reg.rows[k] = {phi, boundary_profile(range, wrap_angle(phi))};
    }
    return reg;
}

/// Maximum linear-modulation current at each angle: start on the boundary
/// and walk the current down until the margin is positive. A point with no
/// feasible current is recorded as zero.
inline PqRegion scan_region(const ConverterParams& p, Scheme scheme, const RequiredRange& range,
                            double dphi, double di, unsigned threads = 0,
                            std::size_t samples = 4096) {
    if (!(dphi > 0.0) || !(di > 0.0))
        throw InvalidParameter("scan_region: dphi and di must be positive");
    auto n = static_cast<std::size_t>(std::llround(2.0 * pi / dphi));
    PqRegion reg;
    reg.scheme = scheme;
    reg.rows.resize(n);
    parallel_for(
        n,
        [&](std::size_t k) {
            double phi = -pi + dphi * static_cast<double>(k);
            double phi_w = wrap_angle(phi);
            double i = boundary_profile(range, phi_w);
            double i_max = 0.0;
            while (i > 0.0) {
                bool ok = false;
                try {
                    auto sol = solve_scheme(p, OperatingPoint{i, phi_w}, scheme);
                    ok = scheme_margin(p, sol, samples).delta_f_margin > 0.0;
                } catch (const Error&) {
                    ok = false;
                }
                if (ok) {
                    i_max = i;
                    break;
                }
                i -= di;
            }
            reg.rows[k] = {phi, i_max};
        },
        threads);
    return reg;
}

struct SizingResult {
    double u_msacv_pu = 0.0;
    double c_sm_required = 0.0;
    double e_req_at_solution = 0.0;
    double worst_phi = 0.0;
    double worst_i = 0.0;
};

namespace detail {

inline bool worlm_predicate(ConverterParams p, Scheme scheme, const RequiredRange& range,
                            double u_acv, double dphi) {
    // any valve voltage at or above unity forces the peak reference over the
    // linear bound somewhere on the boundary
    if (u_acv >= 1.0) return false;
    p.u_acv_pu = u_acv;
    ScanOptions opts;
    opts.with_cap = false;
    auto scan = scan_boundary(p, scheme, range, dphi, opts);
    if (scan.ok_count() != scan.rows.size()) return false;
    return scan.min_margin() >= 0.0;
}

}  // namespace detail

/// Maximum selectable valve-side voltage: bisection on the whole-range
/// linear-modulation predicate over u_acv in [0.5, 1.2].
inline SizingResult msacv(const ConverterParams& p, Scheme scheme, const RequiredRange& range,
                          double tol = 1e-3) {
    if (!(tol >= 1e-5)) throw InvalidParameter("msacv: tol must be at least 1e-5");
    const double dphi = pi / 180.0;
    double lo = 0.5, hi = 1.2;
    if (!detail::worlm_predicate(p, scheme, range, lo, dphi))
        throw BracketError("msacv: linear modulation already fails at u_acv = 0.5");
    if (detail::worlm_predicate(p, scheme, range, hi, dphi))
        throw BracketError("msacv: linear modulation still holds at u_acv = 1.2");
    while (hi - lo > tol) {
        double mid = 0.5 * (lo + hi);
        if (detail::worlm_predicate(p, scheme, range, mid, dphi))
            lo = mid;
        else
            hi = mid;
    }
    SizingResult r;
    r.u_msacv_pu = 0.5 * (lo + hi);
    r.c_sm_required = p.c_sm;
    ConverterParams ps = p;
    ps.u_acv_pu = lo;  // feasible side
    r.e_req_at_solution = derive_constants(ps).e_req;
    ScanOptions opts;
    opts.with_cap = false;
    auto scan = scan_boundary(ps, scheme, range, dphi, opts);
    if (const auto* w = scan.worst()) {
        r.worst_phi = w->phi;
        r.worst_i = w->i_pu;
    }
    return r;
}

namespace detail {

struct PeakScan {
    double peak = 0.0;
    double phi = 0.0, i = 0.0;
    bool ok = false;
};

inline PeakScan worst_cap_peak(ConverterParams p, Scheme scheme, const RequiredRange& range,
                               double c_sm, double dphi) {
    p.c_sm = c_sm;
    auto scan = scan_boundary(p, scheme, range, dphi);
    PeakScan out;
    if (scan.ok_count() != scan.rows.size()) return out;
    for (const auto& r : scan.rows) {
        if (r.cap_peak_pu > out.peak) {
            out.peak = r.cap_peak_pu;
            out.phi = r.phi;
            out.i = r.i_pu;
        }
    }
    out.ok = true;
    return out;
}

}  // namespace detail

/// Size the submodule capacitance so the worst boundary-point capacitor peak
/// meets the given limit, with the valve voltage set to this scheme's
/// maximum selectable value.
inline SizingResult size_energy_storage(const ConverterParams& p, Scheme scheme,
                                        const RequiredRange& range, double peak_limit,
                                        double tol = 1e-3) {
    if (!(peak_limit > 1.0)) throw InvalidParameter("size_energy_storage: peak_limit must exceed 1");
    const double dphi = pi / 180.0;
    auto ms = msacv(p, scheme, range);
    ConverterParams ps = p;
    ps.u_acv_pu = ms.u_msacv_pu;

    double lo = 1e-3, hi = 100e-3;
    auto at_lo = detail::worst_cap_peak(ps, scheme, range, lo, dphi);
    auto at_hi = detail::worst_cap_peak(ps, scheme, range, hi, dphi);
    if (!at_hi.ok || at_hi.peak > peak_limit)
        throw BracketError("size_energy_storage: peak limit unattainable at 100 mF");
    if (at_lo.ok && at_lo.peak <= peak_limit)
        throw BracketError("size_energy_storage: peak limit already met at 1 mF");

    detail::PeakScan at_mid;
    double mid = 0.5 * (lo + hi);
    for (int it = 0; it < 60; ++it) {
        mid = 0.5 * (lo + hi);
        at_mid = detail::worst_cap_peak(ps, scheme, range, mid, dphi);
        if (at_mid.ok && std::abs(at_mid.peak - peak_limit) <= tol) break;
        if (!at_mid.ok || at_mid.peak > peak_limit)
            lo = mid;
        else
            hi = mid;
    }
    SizingResult r;
    r.u_msacv_pu = ms.u_msacv_pu;
    r.c_sm_required = mid;
    ConverterParams pc = ps;
    pc.c_sm = mid;
    r.e_req_at_solution = derive_constants(pc).e_req;
    r.worst_phi = at_mid.phi;
    r.worst_i = at_mid.i;
    return r;
}

}  // namespace mmc
