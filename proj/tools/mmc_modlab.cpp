// Command-line front end: steady-state point studies, boundary and region
// sweeps, valve-voltage and capacitance sizing, and the time-domain
// average-model simulator, all with deterministic CSV output.

#include <CLI11.hpp>

#include <chrono>
#include <iostream>

#include "mmc/config.hpp"
#include "mmc/csv.hpp"
#include "mmc/region.hpp"
#include "mmc/simulator.hpp"
#include "mmc/steady_state.hpp"
#include "mmc/waveform.hpp"

namespace {

constexpr const char* kVersion = "mmc-modlab 1.0.0";

struct CommonArgs {
    std::string preset = "table1";
    std::string config_path;
    double uacv_override = 0.0;
    double qmax_override = 0.0;
    bool degrees = false;
};

mmc::Config resolve_config(const CommonArgs& a) {
    mmc::Config cfg = a.config_path.empty() ? mmc::preset_config(a.preset)
                                            : mmc::load_config(a.config_path);
    if (a.uacv_override > 0.0) cfg.params.u_acv_pu = a.uacv_override;
    if (a.qmax_override > 0.0) cfg.range.q_max_pu = a.qmax_override;
    cfg.params.validate();
    cfg.range.validate();
    return cfg;
}

double angle_in(const CommonArgs& a, double v) { return a.degrees ? v * mmc::pi / 180.0 : v; }

void add_common(CLI::App* cmd, CommonArgs& a) {
    cmd->add_option("--preset", a.preset, "built-in parameter preset")->capture_default_str();
    cmd->add_option("--config", a.config_path, "configuration file (overrides --preset)");
    cmd->add_option("--uacv", a.uacv_override, "override valve-side voltage, p.u.");
    cmd->add_option("--qmax", a.qmax_override, "override required reactive range, p.u.");
    cmd->add_flag("--deg", a.degrees, "angles are given in degrees");
}

class ManifestWriter {
  public:
    explicit ManifestWriter(std::string command) : command_(std::move(command)) {
        start_ = std::chrono::steady_clock::now();
    }
    void set(const std::string& k, const std::string& v) { settings_.emplace_back(k, v); }
    void set(const std::string& k, double v) { settings_.emplace_back(k, mmc::fmt_double(v)); }
    void add_output(const std::string& path) { outputs_.push_back(path); }
    void write(const std::string& path) {
        auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                      std::chrono::steady_clock::now() - start_)
                      .count();
        std::ofstream f(path, std::ios::binary);
        if (!f) throw mmc::Error("cannot open for writing: " + path);
        f << "command=" << command_ << '\n';
        f << "version=" << kVersion << '\n';
        for (const auto& [k, v] : settings_) f << k << '=' << v << '\n';
        for (const auto& o : outputs_) f << "output=" << o << '\n';
        f << "wall_ms=" << ms << '\n';
    }

  private:
    std::string command_;
    std::vector<std::pair<std::string, std::string>> settings_;
    std::vector<std::string> outputs_;
    std::chrono::steady_clock::time_point start_;
};

void print_record(const std::vector<std::pair<std::string, std::string>>& kv) {
    for (const auto& [k, v] : kv) std::cout << k << " = " << v << '\n';
}

std::vector<mmc::Scheme> parse_schemes(const std::vector<std::string>& names,
                                       std::vector<mmc::Scheme> fallback) {
    if (names.empty()) return fallback;
    std::vector<mmc::Scheme> out;
    for (const auto& n : names) out.push_back(mmc::parse_scheme(n));
    return out;
}

int cmd_point(const CommonArgs& common, const std::string& scheme_name, double i_pu, double phi,
              std::size_t samples, const std::string& csv_path) {
    auto cfg = resolve_config(common);
    auto scheme = mmc::parse_scheme(scheme_name);
    mmc::OperatingPoint pt{i_pu, mmc::wrap_angle(phi)};
    auto sol = mmc::solve_scheme(cfg.params, pt, scheme);
    auto m = mmc::scheme_margin(cfg.params, sol, samples);
    auto cap = mmc::cap_voltage_report(scheme, cfg.params, sol, samples);

    auto rec = mmc::solution_record(sol);
    rec.emplace_back("i_ac_pu", mmc::fmt_double(pt.i_ac_pu));
    rec.emplace_back("phi", mmc::fmt_double(pt.phi));
    rec.emplace_back("f_peak", mmc::fmt_double(m.f_peak));
    rec.emplace_back("f_valley", mmc::fmt_double(m.f_valley));
    rec.emplace_back("delta_f_margin", mmc::fmt_double(m.delta_f_margin));
    rec.emplace_back("linear", m.linear ? "1" : "0");
    rec.emplace_back("cap_peak_pu", mmc::fmt_double(cap.peak_pu));
    rec.emplace_back("cap_dc_pu", mmc::fmt_double(cap.dc_pu));
    print_record(rec);
    if (!csv_path.empty()) {
        auto csv = mmc::waveform_csv(cfg.params, sol, samples);
        csv.write(csv_path);
        std::cout << "waveform written to " << csv_path << '\n';
    }
    return 0;
}

int cmd_boundary(const CommonArgs& common, const std::vector<std::string>& scheme_names,
                 double dphi, double i_override, const std::string& out, bool svg) {
    auto cfg = resolve_config(common);
    auto schemes = parse_schemes(scheme_names, {mmc::Scheme::Direct, mmc::Scheme::IndirectClosedLoop,
                                                mmc::Scheme::ImprovedDirect});
    ManifestWriter manifest("boundary");
    manifest.set("dphi", dphi);
    manifest.set("u_acv_pu", cfg.params.u_acv_pu);
    manifest.set("q_max_pu", cfg.range.q_max_pu);

    std::vector<mmc::BoundaryScan> scans;
    for (auto s : schemes) {
        mmc::ScanOptions opts;
        if (i_override >= 0.0) opts.i_override = i_override;
        scans.push_back(mmc::scan_boundary(cfg.params, s, cfg.range, dphi, opts));
    }

    std::vector<std::string> header{"phi_rad", "i_pu"};
    for (auto s : schemes) {
        std::string p = mmc::scheme_name(s);
        for (const char* col : {"f_peak", "f_valley", "df_margin", "cap_peak_pu", "cap_dc_pu",
                                "status"})
            header.push_back(p + "_" + col);
    }
    mmc::CsvWriter csv(header);
    for (std::size_t k = 0; k < scans.front().rows.size(); ++k) {
        std::vector<std::string> row{mmc::fmt_double(scans.front().rows[k].phi),
                                     mmc::fmt_double(scans.front().rows[k].i_pu)};
        for (const auto& scan : scans) {
            const auto& r = scan.rows[k];
            row.push_back(mmc::fmt_double(r.f_peak));
            row.push_back(mmc::fmt_double(r.f_valley));
            row.push_back(mmc::fmt_double(r.df_margin));
            row.push_back(mmc::fmt_double(r.cap_peak_pu));
            row.push_back(mmc::fmt_double(r.cap_dc_pu));
            row.push_back(r.ok ? "ok" : "failed");
        }
        csv.add_row(row);
    }
    if (!out.empty()) {
        csv.write(out);
        manifest.add_output(out);
        std::cout << "boundary scan written to " << out << " (" << csv.row_count() << " rows)\n";
    } else {
        std::cout << csv.str();
    }
    std::size_t failed = 0;
    for (std::size_t i = 0; i < schemes.size(); ++i) {
        const auto* w = scans[i].worst();
        if (w)
            std::cout << "summary " << mmc::scheme_name(schemes[i])
                      << ": min df_margin = " << mmc::fmt_double(scans[i].min_margin())
                      << " at phi = " << mmc::fmt_double(w->phi) << '\n';
        failed += scans[i].rows.size() - scans[i].ok_count();
    }
    if (svg && !out.empty()) {
        std::vector<mmc::SvgSeries> series;
        const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c"};
        for (std::size_t i = 0; i < scans.size(); ++i) {
            mmc::SvgSeries s;
            s.label = mmc::scheme_name(schemes[i]);
            s.color = colors[i % 3];
            for (const auto& r : scans[i].rows)
                if (r.ok) {
                    s.x.push_back(r.phi);
                    s.y.push_back(r.df_margin);
                }
            series.push_back(std::move(s));
        }
        std::string svg_path = out + ".svg";
        mmc::write_svg_chart(svg_path, series, "linear modulation margin along the boundary");
        manifest.add_output(svg_path);
    }
    if (!out.empty()) manifest.write(out + ".manifest");
    bool any_ok = false;
    for (const auto& s : scans) any_ok = any_ok || s.ok_count() > 0;
    return any_ok ? 0 : 3;
}

int cmd_region(const CommonArgs& common, const std::vector<std::string>& scheme_names, double dphi,
               double di, const std::string& out, bool svg) {
    auto cfg = resolve_config(common);
    auto schemes = parse_schemes(scheme_names, {mmc::Scheme::Direct, mmc::Scheme::IndirectClosedLoop});
    ManifestWriter manifest("region");
    manifest.set("dphi", dphi);
    manifest.set("di", di);
    manifest.set("u_acv_pu", cfg.params.u_acv_pu);
    manifest.set("q_max_pu", cfg.range.q_max_pu);

    std::vector<mmc::PqRegion> regions;
    for (auto s : schemes) regions.push_back(mmc::scan_region(cfg.params, s, cfg.range, dphi, di));
    double req_area = mmc::region_area(mmc::required_region(cfg.range, dphi));

    std::vector<std::string> header{"phi_rad"};
    for (auto s : schemes) {
        std::string p = mmc::scheme_name(s);
        header.push_back(p + "_i_max_pu");
        header.push_back(p + "_p_pu");
        header.push_back(p + "_q_pu");
    }
    mmc::CsvWriter csv(header);
    for (std::size_t k = 0; k < regions.front().rows.size(); ++k) {
        std::vector<std::string> row{mmc::fmt_double(regions.front().rows[k].phi)};
        for (const auto& reg : regions) {
            double phi = reg.rows[k].phi, imax = reg.rows[k].i_max_pu;
            row.push_back(mmc::fmt_double(imax));
            row.push_back(mmc::fmt_double(imax * std::cos(phi)));
            row.push_back(mmc::fmt_double(imax * std::sin(phi)));
        }
        csv.add_row(row);
    }
    if (!out.empty()) {
        csv.write(out);
        manifest.add_output(out);
        std::cout << "region written to " << out << " (" << csv.row_count() << " rows)\n";
    } else {
        std::cout << csv.str();
    }
    std::cout << "summary required_area = " << mmc::fmt_double(req_area) << '\n';
    for (std::size_t i = 0; i < schemes.size(); ++i) {
        double a = mmc::region_area(regions[i]);
        std::cout << "summary " << mmc::scheme_name(schemes[i]) << ": area = " << mmc::fmt_double(a)
                  << ", ratio_to_required = " << mmc::fmt_double(a / req_area) << '\n';
    }
    if (svg && !out.empty()) {
        std::vector<mmc::SvgSeries> series;
        const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c"};
        for (std::size_t i = 0; i < regions.size(); ++i) {
            mmc::SvgSeries s;
            s.label = mmc::scheme_name(schemes[i]);
            s.color = colors[i % 3];
            for (const auto& r : regions[i].rows) {
                s.x.push_back(r.i_max_pu * std::cos(r.phi));
                s.y.push_back(r.i_max_pu * std::sin(r.phi));
            }
            series.push_back(std::move(s));
        }
        std::string svg_path = out + ".svg";
        mmc::write_svg_chart(svg_path, series, "linear PQ operating region");
        manifest.add_output(svg_path);
    }
    if (!out.empty()) manifest.write(out + ".manifest");
    return 0;
}

int cmd_msacv(const CommonArgs& common, const std::vector<std::string>& scheme_names, double tol,
              const std::string& out) {
    auto cfg = resolve_config(common);
    auto schemes = parse_schemes(scheme_names, {mmc::Scheme::Direct, mmc::Scheme::IndirectClosedLoop,
                                                mmc::Scheme::ImprovedDirect});
    mmc::CsvWriter csv({"scheme", "u_msacv_pu", "worst_phi", "worst_i_pu", "e_req_s"});
    for (auto s : schemes) {
        auto r = mmc::msacv(cfg.params, s, cfg.range, tol);
        csv.add_row({mmc::scheme_name(s), mmc::fmt_double(r.u_msacv_pu),
                     mmc::fmt_double(r.worst_phi), mmc::fmt_double(r.worst_i),
                     mmc::fmt_double(r.e_req_at_solution)});
        std::cout << "summary " << mmc::scheme_name(s)
                  << ": u_msacv_pu = " << mmc::fmt_double(r.u_msacv_pu) << '\n';
    }
    if (!out.empty()) {
        csv.write(out);
        std::cout << "msacv results written to " << out << '\n';
    }
    return 0;
}

int cmd_sizecap(const CommonArgs& common, const std::vector<std::string>& scheme_names,
                double peak_limit, double tol, const std::string& out) {
    auto cfg = resolve_config(common);
    auto schemes = parse_schemes(scheme_names, {mmc::Scheme::Direct, mmc::Scheme::IndirectClosedLoop});
    mmc::CsvWriter csv(
        {"scheme", "u_msacv_pu", "c_sm_required_f", "e_req_s", "worst_phi", "worst_i_pu"});
    for (auto s : schemes) {
        auto r = mmc::size_energy_storage(cfg.params, s, cfg.range, peak_limit, tol);
        csv.add_row({mmc::scheme_name(s), mmc::fmt_double(r.u_msacv_pu),
                     mmc::fmt_double(r.c_sm_required), mmc::fmt_double(r.e_req_at_solution),
                     mmc::fmt_double(r.worst_phi), mmc::fmt_double(r.worst_i)});
        std::cout << "summary " << mmc::scheme_name(s)
                  << ": c_sm = " << mmc::fmt_double(r.c_sm_required)
                  << " F, e_req = " << mmc::fmt_double(r.e_req_at_solution) << " s\n";
    }
    if (!out.empty()) {
        csv.write(out);
        std::cout << "sizing results written to " << out << '\n';
    }
    return 0;
}

mmc::CsvWriter series_csv(const mmc::SimResult& r, std::size_t every) {
    std::vector<std::string> header{"t_s"};
    const char* arms[] = {"pa", "na", "pb", "nb", "pc", "nc"};
    for (auto* a : arms) header.push_back(std::string("u_sigma_") + a + "_v");
    for (auto* a : arms) header.push_back(std::string("i_") + a + "_a");
    for (const char* ph : {"a", "b", "c"}) header.push_back(std::string("i_ac_") + ph + "_a");
    for (auto* a : arms) header.push_back(std::string("f_") + a);
    header.push_back("e_d_ref_v");
    header.push_back("inj2_a_v");
    mmc::CsvWriter csv(header);
    for (std::size_t k = 0; k < r.series.size(); k += every) {
        const auto& s = r.series[k];
        std::vector<std::string> row{mmc::fmt_double(s.t)};
        for (int a = 0; a < 6; ++a) row.push_back(mmc::fmt_double(s.u_sigma[a]));
        for (int j = 0; j < 3; ++j) {
            row.push_back(mmc::fmt_double(s.i_com[j] + 0.5 * s.i_ac[j]));
            row.push_back(mmc::fmt_double(s.i_com[j] - 0.5 * s.i_ac[j]));
        }
        for (int j = 0; j < 3; ++j) row.push_back(mmc::fmt_double(s.i_ac[j]));
        for (int a = 0; a < 6; ++a) row.push_back(mmc::fmt_double(s.f[a]));
        row.push_back(mmc::fmt_double(s.e_d_ref));
        row.push_back(mmc::fmt_double(s.inj2_a));
        csv.add_row(row);
    }
    return csv;
}

int cmd_simulate(const CommonArgs& common, const std::string& scheme_name, double i_pu, double phi,
                 int periods, int steps_per_period, bool openloop, const std::string& out,
                 std::size_t every) {
    auto cfg = resolve_config(common);
    mmc::ControllerConfig ctrl;
    ctrl.scheme = mmc::parse_scheme(scheme_name);
    ctrl.target = {i_pu, mmc::wrap_angle(phi)};
    ctrl.open_loop_refs = openloop;
    double T = cfg.params.period();
    ManifestWriter manifest("simulate");
    manifest.set("scheme", scheme_name);
    manifest.set("i_ac_pu", i_pu);
    manifest.set("phi", ctrl.target.phi);
    manifest.set("periods", static_cast<double>(periods));
    manifest.set("steps_per_period", static_cast<double>(steps_per_period));
    auto r = mmc::simulate(cfg.params, ctrl, periods * T, T / steps_per_period);
    auto m = mmc::extract_metrics(r, 2);

    std::vector<std::pair<std::string, std::string>> rec;
    rec.emplace_back("i_ac_pu_meas", mmc::fmt_double(m.i_ac_pu[0]));
    rec.emplace_back("phi_meas", mmc::fmt_double(m.phi_meas[0]));
    rec.emplace_back("i_dc_meas_a", mmc::fmt_double(m.i_dc_meas));
    rec.emplace_back("p_pu_meas", mmc::fmt_double(m.p_pu));
    rec.emplace_back("q_pu_meas", mmc::fmt_double(m.q_pu));
    rec.emplace_back("k_cir_meas", mmc::fmt_double(m.k_cir_meas));
    rec.emplace_back("cap_dc_pu_meas", mmc::fmt_double(m.cap_dc_mean_pu));
    rec.emplace_back("cap_peak_pu_meas", mmc::fmt_double(m.cap_peak_max_pu));
    rec.emplace_back("f_peak_meas", mmc::fmt_double(m.f_peak));
    rec.emplace_back("f_valley_meas", mmc::fmt_double(m.f_valley));
    rec.emplace_back("df_margin_meas", mmc::fmt_double(m.df_margin));
    rec.emplace_back("drift", mmc::fmt_double(m.drift));

    // analytics for the delta table
    mmc::Scheme analytic = mmc::has_analytics(ctrl.scheme) ? ctrl.scheme : mmc::Scheme::Direct;
    auto sol = mmc::solve_scheme(cfg.params, ctrl.target, analytic);
    auto mm = mmc::scheme_margin(cfg.params, sol);
    auto cap = mmc::cap_voltage_report(analytic, cfg.params, sol);
    rec.emplace_back("i_ac_pu_err", mmc::fmt_double(m.i_ac_pu[0] - ctrl.target.i_ac_pu));
    rec.emplace_back("k_cir_delta", mmc::fmt_double(m.k_cir_meas - sol.k_cir));
    rec.emplace_back("cap_dc_delta", mmc::fmt_double(
                                         m.cap_dc_mean_pu -
                                         (analytic == mmc::Scheme::Direct
                                              ? 1.0 + sol.dc_cap_deviation_pu
                                              : cap.dc_pu)));
    rec.emplace_back("cap_peak_delta", mmc::fmt_double(m.cap_peak_max_pu - cap.peak_pu));
    rec.emplace_back("df_margin_delta", mmc::fmt_double(m.df_margin - mm.delta_f_margin));
    print_record(rec);

    if (!out.empty()) {
        auto csv = series_csv(r, every);
        csv.write(out);
        manifest.add_output(out);
        manifest.write(out + ".manifest");
        std::cout << "series written to " << out << '\n';
    }
    return 0;
}

std::pair<double, double> parse_point(const std::string& s) {
    auto comma = s.find(',');
    if (comma == std::string::npos)
        throw mmc::ConfigError("point must be given as \"i,phi\": " + s);
    return {std::stod(s.substr(0, comma)), std::stod(s.substr(comma + 1))};
}

int cmd_step(const CommonArgs& common, const std::string& scheme_name, const std::string& from_s,
             const std::string& to_s, double t_step, int periods, const std::string& out,
             std::size_t every) {
    auto cfg = resolve_config(common);
    auto scheme = mmc::parse_scheme(scheme_name);
    auto [fi, fphi] = parse_point(from_s);
    auto [ti, tphi] = parse_point(to_s);
    mmc::OperatingPoint from{fi, mmc::wrap_angle(angle_in(common, fphi))};
    mmc::OperatingPoint to{ti, mmc::wrap_angle(angle_in(common, tphi))};
    double T = cfg.params.period();
    if (t_step <= 0.0) t_step = 10.0 * T;
    auto rep = mmc::simulate_step(cfg.params, scheme, from, to, t_step, periods * T);
    std::vector<std::pair<std::string, std::string>> rec;
    rec.emplace_back("settled", rep.settled ? "1" : "0");
    rec.emplace_back("settling_time_s", mmc::fmt_double(rep.settling_time));
    rec.emplace_back("max_p_excursion_pu", mmc::fmt_double(rep.max_p_excursion_pu));
    rec.emplace_back("max_q_excursion_pu", mmc::fmt_double(rep.max_q_excursion_pu));
    rec.emplace_back("final_p_err_pu", mmc::fmt_double(rep.final_p_err_pu));
    rec.emplace_back("final_q_err_pu", mmc::fmt_double(rep.final_q_err_pu));
    rec.emplace_back("final_cap_dc_err_pu", mmc::fmt_double(rep.final_cap_dc_err));
    print_record(rec);
    if (!out.empty()) {
        auto csv = series_csv(rep.result, every);
        csv.write(out);
        std::cout << "series written to " << out << '\n';
    }
    return rep.settled ? 0 : 3;
}

int cmd_compare(const CommonArgs& common, double i_pu, double phi, double tolerance) {
    auto cfg = resolve_config(common);
    mmc::OperatingPoint pt{i_pu, mmc::wrap_angle(phi)};
    double gap = mmc::equivalence_gap(cfg.params, pt);
    auto si = mmc::solve_indirect(cfg.params, pt);
    auto sd = mmc::solve_improved_direct(cfg.params, pt);
    auto ci = mmc::cap_voltage_report(si.scheme, cfg.params, si);
    auto cd = mmc::cap_voltage_report(sd.scheme, cfg.params, sd);
    std::cout << "equivalence_gap = " << mmc::fmt_double(gap) << '\n';
    std::cout << "cap_dc_indirect = " << mmc::fmt_double(ci.dc_pu)
              << ", cap_dc_improved = " << mmc::fmt_double(cd.dc_pu) << '\n';
    std::cout << "cap_peak_indirect = " << mmc::fmt_double(ci.peak_pu)
              << ", cap_peak_improved = " << mmc::fmt_double(cd.peak_pu) << '\n';
    bool pass = gap < tolerance;
    std::cout << (pass ? "PASS" : "FAIL") << " (tolerance " << mmc::fmt_double(tolerance) << ")\n";
    return pass ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{std::string(kVersion) +
                 " - quantitative comparison of MMC modulation schemes"};
    app.require_subcommand(1);

    CommonArgs common;

    // point
    auto* point = app.add_subcommand("point", "solve one operating point and print all metrics");
    add_common(point, common);
    std::string scheme = "direct";
    double i_pu = 1.0, phi = 0.0;
    std::size_t samples = 4096;
    std::string csv_path;
    point->add_option("--scheme", scheme, "modulation scheme")->capture_default_str();
    point->add_option("--i", i_pu, "ac current, p.u.")->capture_default_str();
    point->add_option("--phi", phi, "power factor angle");
    point->add_option("--samples", samples, "waveform samples per period");
    point->add_option("--csv", csv_path, "also write the period waveform CSV here");

    // boundary
    auto* boundary = app.add_subcommand("boundary", "scan margins along the required-range boundary");
    add_common(boundary, common);
    std::vector<std::string> schemes;
    double dphi = mmc::pi / 180.0, di = 0.005, i_override = -1.0;
    std::string out;
    bool svg = false;
    boundary->add_option("--scheme", schemes, "scheme (repeatable; default all three)");
    boundary->add_option("--dphi", dphi, "angle step")->capture_default_str();
    boundary->add_option("--i-override", i_override, "fixed current instead of the boundary");
    boundary->add_option("--out", out, "output CSV path");
    boundary->add_flag("--svg", svg, "also emit a margin chart next to the CSV");

    // region
    auto* region = app.add_subcommand("region", "search the linear PQ operating region");
    add_common(region, common);
    double rdphi = mmc::pi / 360.0;
    region->add_option("--scheme", schemes, "scheme (repeatable; default direct and indirect)");
    region->add_option("--dphi", rdphi, "angle step")->capture_default_str();
    region->add_option("--di", di, "current step")->capture_default_str();
    region->add_option("--out", out, "output CSV path");
    region->add_flag("--svg", svg, "also emit a region chart next to the CSV");

    // msacv
    auto* msacv_cmd = app.add_subcommand("msacv", "maximum selectable valve-side voltage");
    add_common(msacv_cmd, common);
    double tol = 1e-3;
    msacv_cmd->add_option("--scheme", schemes, "scheme (repeatable; default all three)");
    msacv_cmd->add_option("--tol", tol, "bisection tolerance, p.u.")->capture_default_str();
    msacv_cmd->add_option("--out", out, "output CSV path");

    // sizecap
    auto* sizecap = app.add_subcommand("sizecap", "size the submodule capacitance");
    add_common(sizecap, common);
    double peak_limit = 1.1;
    sizecap->add_option("--scheme", schemes, "scheme (repeatable; default direct and indirect)");
    sizecap->add_option("--peak-limit", peak_limit, "capacitor peak limit, p.u.")
        ->capture_default_str();
    sizecap->add_option("--tol", tol, "peak tolerance, p.u.")->capture_default_str();
    sizecap->add_option("--out", out, "output CSV path");

    // simulate
    auto* simulate = app.add_subcommand("simulate", "run the average-model simulator");
    add_common(simulate, common);
    int periods = 22, steps_per_period = 4000;
    bool openloop = false;
    std::size_t every = 1;
    simulate->add_option("--scheme", scheme, "modulation scheme")->capture_default_str();
    simulate->add_option("--i", i_pu, "ac current, p.u.")->capture_default_str();
    simulate->add_option("--phi", phi, "power factor angle");
    simulate->add_option("--periods", periods, "duration in fundamental periods")
        ->capture_default_str();
    simulate->add_option("--steps", steps_per_period, "plant steps per period")
        ->capture_default_str();
    simulate->add_flag("--openloop", openloop, "feed the solved references open loop");
    simulate->add_option("--out", out, "series CSV path");
    simulate->add_option("--every", every, "record every n-th step in the CSV");

    // step
    auto* step = app.add_subcommand("step", "reference step transient study");
    add_common(step, common);
    std::string from_s = "1.0,3.1415926", to_s = "1.0,0";
    double t_step = -1.0;
    step->add_option("--scheme", scheme, "modulation scheme")->capture_default_str();
    step->add_option("--from", from_s, "initial point as \"i,phi\"")->capture_default_str();
    step->add_option("--to", to_s, "final point as \"i,phi\"")->capture_default_str();
    step->add_option("--tstep", t_step, "step time, s (default 10 periods)");
    step->add_option("--periods", periods, "duration in fundamental periods")
        ->capture_default_str();
    step->add_option("--out", out, "series CSV path");
    step->add_option("--every", every, "record every n-th step in the CSV");

    // compare
    auto* compare = app.add_subcommand("compare", "indirect vs improved direct equivalence");
    add_common(compare, common);
    double gap_tol = 0.01;
    compare->add_option("--i", i_pu, "ac current, p.u.")->capture_default_str();
    compare->add_option("--phi", phi, "power factor angle");
    compare->add_option("--tol", gap_tol, "pass tolerance on the waveform gap")
        ->capture_default_str();

    CLI11_PARSE(app, argc, argv);

    try {
        if (point->parsed())
            return cmd_point(common, scheme, i_pu, angle_in(common, phi), samples, csv_path);
        if (boundary->parsed())
            return cmd_boundary(common, schemes, angle_in(common, dphi), i_override, out, svg);
        if (region->parsed())
            return cmd_region(common, schemes, angle_in(common, rdphi), di, out, svg);
        if (msacv_cmd->parsed()) return cmd_msacv(common, schemes, tol, out);
        if (sizecap->parsed()) return cmd_sizecap(common, schemes, peak_limit, tol, out);
        if (simulate->parsed())
            return cmd_simulate(common, scheme, i_pu, angle_in(common, phi), periods,
                                steps_per_period, openloop, out, every);
        if (step->parsed())
            return cmd_step(common, scheme, from_s, to_s, t_step, periods, out, every);
        if (compare->parsed()) return cmd_compare(common, i_pu, angle_in(common, phi), gap_tol);
    } catch (const mmc::InstabilityError& e) {
        std::cerr << "instability: " << e.what() << '\n';
        return 4;
    } catch (const mmc::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const mmc::InvalidParameter& e) {
        std::cerr << "invalid parameter: " << e.what() << '\n';
        return 2;
    } catch (const mmc::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    }
    return 2;
}
