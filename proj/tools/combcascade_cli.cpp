// Batch front end for the comb-cascade toolkit.
//
// Verbs:
//   steady    mean-field steady state            -> steadystate.csv, summary.json
//   noise     output covariance + noise maps     -> covariance.csv, intensity_noise.csv,
//                                                   twinbeam_map.csv (+ .pgm)
//   entangle  PPT bipartition scan               -> bipartitions.csv
//   optimize  three-parameter noise optimization -> opt_trace.csv, opt_result.json,
//                                                   twinbeam maps before/after
//   pulse     split-step propagation             -> spectra.csv
//   qsa       Jacobian propagation + binned maps -> binned_time/freq.csv (+ .pgm),
//                                                   qsa_summary.json
//
// Exit codes: 0 ok, 1 config, 2 non-convergence, 3 instability, 4 grid/memory.

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <string>

#include "combcascade/config.hpp"
#include "combcascade/io.hpp"
#include "combcascade/objectives.hpp"
#include "combcascade/qsa.hpp"

namespace cc = combcascade;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitNoConvergence = 2;
constexpr int kExitInstability = 3;
constexpr int kExitGrid = 4;

const std::set<std::string> kKnownKeys = {
    // [system]
    "system.i_lo", "system.i_hi", "system.J", "system.lambda0_nm", "system.omegaT_thz",
    "system.omega_m_hz", "system.beta0", "system.crystal_length_mm", "system.dispersion",
    "system.n_const", "system.Q_out", "system.Q_int", "system.Q_out_T", "system.Q_int_T",
    "system.pump_power_w", "system.seed_power_w", "system.eta_cutoff", "system.phase_matching",
    // [run]
    "run.analysis_omega_hz", "run.residual_tol", "run.max_time_s", "run.seed_photons",
    "run.dark_threshold",
    // [optimize]
    "optimize.objective", "optimize.pair_a_i", "optimize.pair_a_j", "optimize.pair_b_i",
    "optimize.pair_b_j", "optimize.comb_a", "optimize.comb_b", "optimize.q_min", "optimize.q_max",
    "optimize.power_min_w", "optimize.power_max_w", "optimize.budget", "optimize.starts",
    "optimize.seed", "optimize.target_improvement_db", "optimize.scope", "optimize.selftest",
    // [pulse]
    "pulse.i_lo", "pulse.i_hi", "pulse.betaL", "pulse.gammaL", "pulse.normalization",
    "pulse.use_dispersion", "pulse.qpm_compensated", "pulse.self_steepening", "pulse.xpm",
    "pulse.samples", "pulse.window_ps", "pulse.avg_power_w", "pulse.seed_avg_power_w",
    "pulse.rep_rate_hz", "pulse.duration_fs", "pulse.length_cm", "pulse.dz_mm",
    "pulse.checkpoints_cm",
    // [qsa]
    "qsa.memory_cap_gb", "qsa.time_half_range_ps", "qsa.time_bin_ps", "qsa.freq_half_range_thz",
    "qsa.freq_bin_thz",
    // [output]
    "output.dir", "output.heatmap",
};

cc::DispersionModel dispersion_from_config(const cc::Config& cfg) {
    const std::string name = cfg.get_string("system", "dispersion", "linbo3_e");
    if (name == "constant")
        return cc::DispersionModel::constant(cfg.get_double("system", "n_const", 1.0));
    return cc::DispersionModel::from_name(name);
}

cc::CombSystemSpec system_from_config(const cc::Config& cfg) {
    cc::CombSystemSpec s;
    s.i_lo = static_cast<int>(cfg.get_int("system", "i_lo", 0));
    s.i_hi = static_cast<int>(cfg.get_int("system", "i_hi", 1));
    s.J = static_cast<int>(cfg.get_int("system", "J", 1));
    s.lambda0 = cfg.get_double("system", "lambda0_nm") * 1e-9;
    s.omegaT0 = 2.0 * cc::kPi * cfg.get_double("system", "omegaT_thz") * 1e12;
    s.omega_m = 2.0 * cc::kPi * cfg.get_double("system", "omega_m_hz", 0.0);
    s.beta0 = cfg.get_double("system", "beta0", 0.0);
    s.crystal_length = cfg.get_double("system", "crystal_length_mm", 1.0) * 1e-3;
    s.dispersion = dispersion_from_config(cfg);
    const std::string pm = cfg.get_string("system", "phase_matching", "qpm_adjacent");
    if (pm == "qpm_adjacent")
        s.phase_matching = cc::PhaseMatchingMode::QpmAdjacent;
    else if (pm == "material")
        s.phase_matching = cc::PhaseMatchingMode::Material;
    else
        throw cc::ConfigError("system.phase_matching: unknown mode '" + pm + "'");
    s.eta_cutoff = cfg.get_double("system", "eta_cutoff", 1e-6);
    s.fill_uniform(cfg.get_double("system", "Q_out"), cfg.get_double("system", "Q_int", 1e30),
                   cfg.get_double("system", "pump_power_w", 0.0),
                   cfg.get_double("system", "seed_power_w", 0.0));
    s.Q_out_T = cfg.get_double("system", "Q_out_T");
    s.Q_int_T = cfg.get_double("system", "Q_int_T", 1e30);
    s.validate();
    return s;
}

cc::SteadyStateOptions run_options(const cc::Config& cfg) {
    cc::SteadyStateOptions opt;
    opt.residual_tol = cfg.get_double("run", "residual_tol", 1e-8);
    opt.max_time = cfg.get_double("run", "max_time_s", 0.0);
    opt.seed_photons = cfg.get_double("run", "seed_photons", 1e-6);
    return opt;
}

std::string mode_kind_name(const cc::ModeRecord& r) {
    return r.kind == cc::ModeKind::Idler ? "idler" : "subcomb";
}

void write_steady_csv(const std::string& path, const cc::ModeTable& table,
                      const Eigen::VectorXcd& a) {
    cc::CsvWriter csv(path, {"mode", "kind", "i", "j", "omega_rad_s", "re", "im", "photons"});
    for (int m = 0; m < table.n_modes(); ++m) {
        const auto& r = table.modes[m];
        csv.row({std::to_string(m), mode_kind_name(r),
                 std::to_string(r.kind == cc::ModeKind::Idler ? 0 : r.i), std::to_string(r.j),
                 cc::format_full(r.omega), cc::format_full(a[m].real()),
                 cc::format_full(a[m].imag()), cc::format_full(std::norm(a[m]))});
    }
}

struct SteadyBundle {
    cc::ModeTable table;
    cc::CouplingTable coupling;
    cc::SteadyState ss;
};

SteadyBundle solve_steady(const cc::CombSystemSpec& spec, const cc::SteadyStateOptions& opt) {
    SteadyBundle b;
    b.table = cc::build_mode_table(spec);
    b.coupling = cc::build_coupling_table(spec, b.table);
    b.ss = cc::steady_state(b.table, b.coupling, opt);
    return b;
}

int cmd_steady(const cc::Config& cfg, const std::string& out_dir) {
    const cc::CombSystemSpec spec = system_from_config(cfg);
    const SteadyBundle b = solve_steady(spec, run_options(cfg));
    write_steady_csv(out_dir + "/steadystate.csv", b.table, b.ss.state.a);

    const cc::ConservedQuantities inv = cc::conserved_quantities(b.table, b.ss.state.a);
    json summary;
    summary["converged"] = b.ss.converged;
    summary["residual"] = b.ss.residual;
    summary["integration_time_s"] = b.ss.integration_time;
    summary["oscillation_freq_rad_s"] = b.ss.oscillation_freq;
    summary["n_modes"] = b.table.n_modes();
    summary["invariants"] = {{"n_sub", inv.n_sub}, {"q_ladder", inv.q_ladder},
                             {"e_total_j", inv.e_total}};
    const int pump = b.table.subcomb_index(0, 0);
    if (pump >= 0 && b.table.modes[pump].drive_amp > 0.0)
        summary["pump_depletion"] = cc::pump_depletion_at(b.table, b.ss.state.a);
    std::ofstream(out_dir + "/summary.json") << summary.dump(2) << "\n";

    if (!b.ss.converged) {
        std::cerr << "steady state did not converge (residual " << b.ss.residual << ")\n";
        return kExitNoConvergence;
    }
    return kExitOk;
}

struct NoiseBundle {
    SteadyBundle steady;
    cc::DriftModel drift;
    cc::CovarianceMatrix cov;
};

NoiseBundle solve_noise(const cc::Config& cfg, double analysis_omega) {
    NoiseBundle nb;
    nb.steady = solve_steady(system_from_config(cfg), run_options(cfg));
    if (!nb.steady.ss.converged)
        throw cc::IntegrationError("steady state did not converge (residual " +
                                   std::to_string(nb.steady.ss.residual) + ")");
    nb.drift = cc::linearize(nb.steady.table, nb.steady.coupling, nb.steady.ss);
    nb.cov = cc::output_covariance(nb.drift, analysis_omega);
    return nb;
}

int cmd_noise(const cc::Config& cfg, const std::string& out_dir, double analysis_omega) {
    const NoiseBundle nb = solve_noise(cfg, analysis_omega);
    const double dark = cfg.get_double("run", "dark_threshold", cc::default_dark_threshold());
    cc::write_matrix_csv(out_dir + "/covariance.csv", nb.cov.sigma);

    const cc::ModeTable& table = nb.steady.table;
    {
        cc::CsvWriter csv(out_dir + "/intensity_noise.csv",
                          {"mode", "kind", "i", "j", "rin_db", "defined"});
        for (int m = 0; m < table.n_modes(); ++m) {
            const auto& r = table.modes[m];
            const auto rin = cc::intensity_noise(nb.cov, nb.drift.out_amp, m, dark);
            csv.row({std::to_string(m), mode_kind_name(r),
                     std::to_string(r.kind == cc::ModeKind::Idler ? 0 : r.i), std::to_string(r.j),
                     rin ? cc::format_full(*rin) : "nan", rin ? "1" : "0"});
        }
    }

    const cc::NoiseMap map = cc::twin_beam_map(nb.cov, nb.drift.out_amp, dark);
    Eigen::MatrixXd db = Eigen::MatrixXd::Zero(map.ratio.rows(), map.ratio.cols());
    for (int a = 0; a < map.ratio.rows(); ++a)
        for (int b = 0; b < map.ratio.cols(); ++b)
            db(a, b) = (a != b && map.defined[a] && map.defined[b])
                           ? 10.0 * std::log10(std::max(map.ratio(a, b), 1e-30))
                           : std::numeric_limits<double>::quiet_NaN();
    cc::write_matrix_csv(out_dir + "/twinbeam_map.csv", db);
    if (cfg.get_bool("output", "heatmap", true))
        cc::write_pgm_heatmap(out_dir + "/twinbeam_map.pgm", db, -40.0, 10.0);
    return kExitOk;
}

int cmd_entangle(const cc::Config& cfg, const std::string& out_dir, double analysis_omega) {
    const NoiseBundle nb = solve_noise(cfg, analysis_omega);
    const cc::ModeTable& table = nb.steady.table;
    std::uint64_t idler_mask = 0;
    for (int m = 0; m < table.n_modes(); ++m)
        if (table.modes[m].kind == cc::ModeKind::Idler) idler_mask |= 1ULL << m;
    const auto parts = cc::enumerate_bipartitions(table.n_modes(), 1000, idler_mask);

    cc::CsvWriter csv(out_dir + "/bipartitions.csv",
                      {"rank", "subset_mask", "size", "nu_min", "entangled", "idler_comb"});
    for (std::size_t r = 0; r < parts.size(); ++r) {
        const auto res = cc::ppt_min_symplectic(nb.cov, parts[r]);
        const bool starred =
            parts[r] == idler_mask ||
            parts[r] == ((((table.n_modes() == 63) ? (~0ULL >> 1) : ((1ULL << table.n_modes()) - 1)) &
                          ~idler_mask));
        csv.row({std::to_string(r), std::to_string(parts[r]),
                 std::to_string(std::popcount(parts[r])), cc::format_full(res.nu_min),
                 res.entangled ? "1" : "0", starred ? "1" : "0"});
    }
    return kExitOk;
}

int cmd_optimize(const cc::Config& cfg, const std::string& out_dir, double analysis_omega,
                 std::uint64_t seed_override, bool have_seed) {
    const long budget = cfg.get_int("optimize", "budget", 500);
    if (budget < 1) throw cc::ConfigError("optimize.budget must be >= 1");

    cc::OptimizationProblem prob;
    prob.budget = static_cast<int>(budget);
    prob.starts = static_cast<int>(cfg.get_int("optimize", "starts", 8));
    prob.seed = have_seed ? seed_override
                          : static_cast<std::uint64_t>(cfg.get_int("optimize", "seed", 0));
    prob.target_improvement = cfg.get_double("optimize", "target_improvement_db", 0.0);

    if (cfg.get_bool("optimize", "selftest", false)) {
        // analytic quadratic bowl in place of the physics objective
        prob.params = {{"x", -2.0, 2.0, false}, {"y", -2.0, 2.0, false}, {"z", -2.0, 2.0, false}};
        prob.objective = [](const Eigen::VectorXd& x) {
            return (x - Eigen::Vector3d(0.5, -0.25, 1.0)).squaredNorm();
        };
        prob.initial = Eigen::Vector3d(-1.0, 1.0, -1.0);
    } else {
        cc::TunableSystem sys;
        sys.base = system_from_config(cfg);
        sys.scope = cfg.get_string("optimize", "scope", "mode") == "comb"
                        ? cc::BoundaryScope::Comb
                        : cc::BoundaryScope::Mode;
        const double q_min = cfg.get_double("optimize", "q_min", 1e2);
        const double q_max = cfg.get_double("optimize", "q_max", 1e8);
        const double p_min = cfg.get_double("optimize", "power_min_w", 1e-3);
        const double p_max = cfg.get_double("optimize", "power_max_w", 1e4);
        prob.params = {{"Q_first", q_min, q_max, true},
                       {"Q_last", q_min, q_max, true},
                       {"seed_power_w", p_min, p_max, true}};
        const cc::SteadyStateOptions ss_opt = run_options(cfg);
        const std::string objective = cfg.get_string("optimize", "objective", "pair");
        const cc::ModeTable table0 = cc::build_mode_table(sys.base);
        if (objective == "pair") {
            const int a = table0.subcomb_index(
                static_cast<int>(cfg.get_int("optimize", "pair_a_i")),
                static_cast<int>(cfg.get_int("optimize", "pair_a_j", 0)));
            const int b = table0.subcomb_index(
                static_cast<int>(cfg.get_int("optimize", "pair_b_i")),
                static_cast<int>(cfg.get_int("optimize", "pair_b_j", 0)));
            if (a < 0 || b < 0 || a == b)
                throw cc::ConfigError("optimize.pair_*: invalid mode pair");
            prob.objective = [=](const Eigen::VectorXd& x) {
                return cc::objective_pair_noise(sys, x, a, b, analysis_omega, ss_opt);
            };
        } else if (objective == "comb") {
            // a comb selector is a subcomb index or "T" for the idler comb
            auto comb_modes = [&](const std::string& sel) {
                std::vector<int> v;
                for (int j = -table0.half_width(); j <= table0.half_width(); ++j)
                    v.push_back(sel == "T" ? table0.idler_index(j)
                                           : table0.subcomb_index(std::stoi(sel), j));
                for (int m : v)
                    if (m < 0) throw cc::ConfigError("optimize.comb selector out of range: " + sel);
                return v;
            };
            const auto ca = comb_modes(cfg.get_string("optimize", "comb_a"));
            const auto cb = comb_modes(cfg.get_string("optimize", "comb_b"));
            prob.objective = [=](const Eigen::VectorXd& x) {
                return cc::objective_comb_comb(sys, x, ca, cb, analysis_omega, ss_opt);
            };
        } else {
            throw cc::ConfigError("optimize.objective: unknown objective '" + objective + "'");
        }
        prob.initial = Eigen::Vector3d(
            sys.base.Q_out[0][0], sys.base.Q_out[0][0],
            std::clamp(sys.base.pump_power[1 - sys.base.i_lo][0], p_min, p_max));

        // before map at the initial point
        const cc::NoiseEvaluation before =
            cc::evaluate_noise_map(sys.apply(prob.initial[0], prob.initial[1], prob.initial[2]),
                                   analysis_omega, ss_opt);
        if (before.penalty == cc::PenaltyReason::None)
            cc::write_matrix_csv(out_dir + "/twinbeam_before.csv", before.map.ratio);
    }

    const cc::OptResult result = cc::optimize(prob);

    {
        cc::CsvWriter csv(out_dir + "/opt_trace.csv", {"eval", "p0", "p1", "p2", "value"});
        for (std::size_t t = 0; t < result.trace.size(); ++t) {
            const auto& pt = result.trace[t];
            csv.row({std::to_string(t), cc::format_full(pt.params[0]),
                     cc::format_full(pt.params[1]), cc::format_full(pt.params[2]),
                     cc::format_full(pt.value)});
        }
    }
    json res;
    res["initial_value"] = result.initial_value;
    res["best_value"] = result.best_value;
    res["improvement"] = result.improvement;
    res["budget_exhausted"] = result.budget_exhausted;
    res["evaluations"] = result.trace.size();
    for (std::size_t p = 0; p < prob.params.size(); ++p)
        res["best_params"][prob.params[p].name] = result.best_params[p];
    std::ofstream(out_dir + "/opt_result.json") << res.dump(2) << "\n";

    if (!cfg.get_bool("optimize", "selftest", false)) {
        cc::TunableSystem sys;
        sys.base = system_from_config(cfg);
        sys.scope = cfg.get_string("optimize", "scope", "mode") == "comb"
                        ? cc::BoundaryScope::Comb
                        : cc::BoundaryScope::Mode;
        const cc::NoiseEvaluation after = cc::evaluate_noise_map(
            sys.apply(result.best_params[0], result.best_params[1], result.best_params[2]),
            analysis_omega, run_options(cfg));
        if (after.penalty == cc::PenaltyReason::None)
            cc::write_matrix_csv(out_dir + "/twinbeam_after.csv", after.map.ratio);
    }
    return kExitOk;
}

cc::PulsePhysics pulse_physics_from_config(const cc::Config& cfg) {
    const std::string norm = cfg.get_string("pulse", "normalization", "photon");
    cc::PulsePhysics ph = cc::make_comb_pulse_physics(
        static_cast<int>(cfg.get_int("pulse", "i_lo", -2)),
        static_cast<int>(cfg.get_int("pulse", "i_hi", 2)),
        cfg.get_double("system", "lambda0_nm") * 1e-9,
        2.0 * cc::kPi * cfg.get_double("system", "omegaT_thz") * 1e12,
        cfg.get_double("pulse", "betaL"), cfg.get_double("pulse", "gammaL", 0.0),
        dispersion_from_config(cfg), cfg.get_bool("pulse", "use_dispersion", true),
        cfg.get_bool("pulse", "qpm_compensated", true));
    if (norm == "photon")
        ph.normalization = cc::CouplingNormalization::PhotonWeighted;
    else if (norm == "uniform")
        ph.normalization = cc::CouplingNormalization::Uniform;
    else
        throw cc::ConfigError("pulse.normalization: unknown value '" + norm + "'");
    ph.self_steepening = cfg.get_bool("pulse", "self_steepening", false);
    ph.xpm = cfg.get_bool("pulse", "xpm", false);
    ph.length = cfg.get_double("pulse", "length_cm", 10.0) * 1e-2;
    return ph;
}

struct PulseSetup {
    cc::PulsePhysics physics;
    cc::PulseGrid grid;
    cc::PulseState initial;
    double dz = 0.0;
    std::vector<double> checkpoints;  // m, ascending, ending at L
};

PulseSetup pulse_setup(const cc::Config& cfg) {
    PulseSetup s;
    s.physics = pulse_physics_from_config(cfg);
    s.grid.samples = static_cast<int>(cfg.get_int("pulse", "samples", 256));
    s.grid.window = cfg.get_double("pulse", "window_ps", 2.5) * 1e-12;
    cc::InitialPulseParams ip;
    ip.avg_power = cfg.get_double("pulse", "avg_power_w", 1.0);
    ip.seed_avg_power = cfg.get_double("pulse", "seed_avg_power_w", 0.0);
    ip.rep_rate = cfg.get_double("pulse", "rep_rate_hz", 200e3);
    ip.duration_fwhm = cfg.get_double("pulse", "duration_fs", 210.0) * 1e-15;
    s.initial = cc::build_initial_pulses(s.physics, s.grid, ip);
    const double dz_cfg = cfg.get_double("pulse", "dz_mm", 0.0) * 1e-3;
    s.dz = dz_cfg > 0.0 ? dz_cfg : 0.5 * cc::suggest_dz(s.physics, s.initial);
    s.dz = std::min(s.dz, s.physics.length);
    if (cfg.has("pulse", "checkpoints_cm")) {
        for (double z : cfg.get_doubles("pulse", "checkpoints_cm")) s.checkpoints.push_back(z * 1e-2);
        std::sort(s.checkpoints.begin(), s.checkpoints.end());
    }
    if (s.checkpoints.empty() || s.checkpoints.back() < s.physics.length)
        s.checkpoints.push_back(s.physics.length);
    return s;
}

void write_spectra_csv(const std::string& path, const cc::PulsePhysics& physics,
                       const std::vector<std::pair<double, cc::PulseState>>& snapshots) {
    std::vector<std::string> header = {"envelope", "carrier_rad_s", "omega_abs_rad_s"};
    for (const auto& [z, st] : snapshots) header.push_back("psd_z_" + cc::format_full(z));
    cc::CsvWriter csv(path, header);
    std::vector<std::vector<cc::EnvelopeSpectrum>> specs;
    for (const auto& [z, st] : snapshots) specs.push_back(cc::spectrum(physics, st));
    const int E = physics.n_envelopes();
    const int M = snapshots.front().second.grid.samples;
    for (int e = 0; e < E; ++e) {
        for (int m = 0; m < M; ++m) {
            std::vector<std::string> row = {std::to_string(e),
                                            cc::format_full(physics.carriers[e]),
                                            cc::format_full(specs.front()[e].omega[m])};
            for (const auto& sp : specs) row.push_back(cc::format_full(sp[e].psd[m]));
            csv.row(row);
        }
    }
}

int cmd_pulse(const cc::Config& cfg, const std::string& out_dir) {
    PulseSetup s = pulse_setup(cfg);
    std::vector<std::pair<double, cc::PulseState>> snapshots;
    snapshots.emplace_back(0.0, s.initial);
    cc::PulseState st = s.initial;
    double z = 0.0;
    for (double z_next : s.checkpoints) {
        if (z_next <= z) continue;
        st = cc::propagate(s.physics, st, s.dz, z_next - z);
        z = z_next;
        snapshots.emplace_back(z, st);
    }
    write_spectra_csv(out_dir + "/spectra.csv", s.physics, snapshots);

    const cc::PhotonLedger led0 = cc::photon_ledger(s.physics, s.initial);
    const cc::PhotonLedger led1 = cc::photon_ledger(s.physics, st);
    json summary;
    summary["length_m"] = s.physics.length;
    summary["dz_m"] = s.dz;
    summary["ledger_initial"] = {{"n_sub", led0.n_sub}, {"q_ladder", led0.q_ladder}};
    summary["ledger_final"] = {{"n_sub", led1.n_sub}, {"q_ladder", led1.q_ladder}};
    std::ofstream(out_dir + "/pulse_summary.json") << summary.dump(2) << "\n";
    return kExitOk;
}

void write_binned_map(const std::string& base, const cc::BinnedNoiseMap& map, bool heatmap) {
    const int B = map.n_bins();
    Eigen::MatrixXd db(B, B);
    for (int a = 0; a < B; ++a)
        for (int b = 0; b < B; ++b)
            db(a, b) = (a != b && map.defined[a] && map.defined[b])
                           ? 10.0 * std::log10(std::max(map.ratio(a, b), 1e-30))
                           : std::numeric_limits<double>::quiet_NaN();
    cc::write_matrix_csv(base + ".csv", db);
    if (heatmap) cc::write_pgm_heatmap(base + ".pgm", db, -20.0, 10.0);

    json axes = json::array();
    for (const auto& b : map.bins)
        axes.push_back({{"envelope", b.envelope},
                        {"domain", map.domain == cc::MapDomain::Time ? "time" : "frequency"},
                        {"center", b.center},
                        {"width", b.width}});
    json hdr;
    hdr["bins"] = axes;
    hdr["count"] = B;
    std::ofstream(base + "_axes.json") << hdr.dump(2) << "\n";
}

int cmd_qsa(const cc::Config& cfg, const std::string& out_dir) {
    PulseSetup s = pulse_setup(cfg);
    cc::QsaOptions qopt;
    qopt.memory_cap_bytes = cfg.get_double("qsa", "memory_cap_gb", 4.0) * 1e9;
    const cc::QsaResult res = cc::propagate_with_jacobian(s.physics, s.initial, s.dz,
                                                          s.physics.length, qopt);
    const cc::JacobianState js = cc::jacobian_state(s.physics, res);
    const cc::UltrafastCovariance cov = cc::output_covariance_ultrafast(js);

    const bool heatmap = cfg.get_bool("output", "heatmap", true);
    cc::BinSpec tspec;
    tspec.domain = cc::MapDomain::Time;
    tspec.half_range = cfg.get_double("qsa", "time_half_range_ps", 0.75) * 1e-12;
    tspec.width = cfg.get_double("qsa", "time_bin_ps", 0.012) * 1e-12;
    write_binned_map(out_dir + "/binned_time",
                     cc::binned_intensity_map(s.physics, res.out, cov, tspec), heatmap);

    cc::BinSpec fspec;
    fspec.domain = cc::MapDomain::Frequency;
    fspec.half_range = cfg.get_double("qsa", "freq_half_range_thz", 32.0) * 1e12;
    fspec.width = cfg.get_double("qsa", "freq_bin_thz", 0.52) * 1e12;
    write_binned_map(out_dir + "/binned_freq",
                     cc::binned_intensity_map(s.physics, res.out, cov, fspec), heatmap);

    json summary;
    summary["steps"] = res.steps;
    summary["dz_m"] = s.dz;
    summary["symplectic_defect"] = cc::symplectic_defect(js.J);
    const auto nus = cc::symplectic_eigenvalues(cov.sigma);
    summary["nu_min"] = nus.front();
    summary["nu_max"] = nus.back();
    std::ofstream(out_dir + "/qsa_summary.json") << summary.dump(2) << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"multi-frequency comb cascade toolkit"};
    app.require_subcommand(1);

    std::string config_path, out_dir_flag;
    std::uint64_t seed = 0;
    int threads = 0;
    double omega_flag = 0.0;
    bool have_seed = false, have_omega = false;
    app.add_option("--config", config_path, "configuration file")->required();
    app.add_option("--out", out_dir_flag, "output directory (overrides output.dir)");
    auto* seed_opt = app.add_option("--seed", seed, "optimizer seed override");
    app.add_option("--threads", threads, "internal thread count (0 = default)");
    auto* omega_opt = app.add_option("--omega", omega_flag, "analysis frequency override, Hz");

    for (const char* verb : {"steady", "noise", "entangle", "optimize", "pulse", "qsa"})
        app.add_subcommand(verb)->fallthrough();

    CLI11_PARSE(app, argc, argv);
    have_seed = seed_opt->count() > 0;
    have_omega = omega_opt->count() > 0;
    if (threads > 0) Eigen::setNbThreads(threads);
    const std::string verb = app.get_subcommands().front()->get_name();

    try {
        const cc::Config cfg = cc::Config::parse_file(config_path);
        cfg.require_known_keys(kKnownKeys);

        std::string out_dir = !out_dir_flag.empty() ? out_dir_flag
                                                    : cfg.get_string("output", "dir", ".");
        std::filesystem::create_directories(out_dir);
        const double omega =
            have_omega ? omega_flag : cfg.get_double("run", "analysis_omega_hz", 0.0);
        const double omega_rad = 2.0 * cc::kPi * omega;

        if (verb == "steady") return cmd_steady(cfg, out_dir);
        if (verb == "noise") return cmd_noise(cfg, out_dir, omega_rad);
        if (verb == "entangle") return cmd_entangle(cfg, out_dir, omega_rad);
        if (verb == "optimize") return cmd_optimize(cfg, out_dir, omega_rad, seed, have_seed);
        if (verb == "pulse") return cmd_pulse(cfg, out_dir);
        if (verb == "qsa") return cmd_qsa(cfg, out_dir);
        std::cerr << "unknown verb: " << verb << "\n";
        return kExitConfig;
    } catch (const cc::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const cc::SpecError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const cc::StabilityError& e) {
        std::cerr << "instability: " << e.what() << "\n";
        return kExitInstability;
    } catch (const cc::GridError& e) {
        std::cerr << "grid error: " << e.what() << "\n";
        return kExitGrid;
    } catch (const cc::QsaError& e) {
        std::cerr << "grid/memory error: " << e.what() << "\n";
        return kExitGrid;
    } catch (const cc::IntegrationError& e) {
        std::cerr << "non-convergence: " << e.what() << "\n";
        return kExitNoConvergence;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    }
}
