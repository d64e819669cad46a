// Command-line front end: configuration-driven runs of the pipeline pieces,
// each emitting a JSON report (with the config hash for reproducibility) and
// plot-ready CSV next to it.
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>

#include "CLI11.hpp"
#include <nlohmann/json.hpp>

#include "cwg/cgo.hpp"
#include "cwg/common.hpp"
#include "cwg/conductivity.hpp"
#include "cwg/config.hpp"
#include "cwg/fem.hpp"
#include "cwg/forward.hpp"
#include "cwg/geometry.hpp"
#include "cwg/oracle.hpp"
#include "cwg/recon.hpp"
#include "cwg/spectral.hpp"

using nlohmann::json;
using namespace cwg;
using cwg::spectral::FiberContext;

namespace {

constexpr const char* kVersion = "cwg 1.0.0";

std::string hex64(std::uint64_t v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

struct RunEnv {
    config::ConfigFile file;
    std::string outdir = "out";
    unsigned workers = 0;
    std::uint64_t seed = 1;
};

RunEnv load_env(const std::string& config_path, const std::string& out_flag) {
    RunEnv env;
    env.file = config::ConfigFile::parse_file(config_path);
    config::Reader r(env.file);
    env.outdir = r.text("run", "outdir", "out");
    env.workers = static_cast<unsigned>(r.integer("run", "workers", 0));
    env.seed = static_cast<std::uint64_t>(r.integer("run", "seed", 1));
    r.finish();
    if (const char* e = std::getenv("CWG_OUTDIR")) env.outdir = e;
    if (const char* e = std::getenv("CWG_WORKERS")) env.workers = static_cast<unsigned>(std::atoi(e));
    if (!out_flag.empty()) env.outdir = out_flag;
    std::filesystem::create_directories(env.outdir);
    return env;
}

json report_base(const RunEnv& env, const std::string& command) {
    return json{{"schema", "cwg/1"},
                {"generator", kVersion},
                {"command", command},
                {"config_hash", hex64(env.file.hash)}};
}

void write_json(const std::string& path, const json& j) {
    std::ofstream out(path);
    require(static_cast<bool>(out), "cannot open " + path);
    out << j.dump(2) << '\n';
}

void write_csv(const std::string& path, const std::string& header,
               const std::vector<std::vector<double>>& rows) {
    std::ofstream out(path);
    require(static_cast<bool>(out), "cannot open " + path);
    out << header << '\n';
    for (const auto& row : rows) {
        for (std::size_t i = 0; i < row.size(); ++i)
            out << format_g17(row[i]) << (i + 1 == row.size() ? "" : ",");
        out << '\n';
    }
}

geometry::CrossSectionSpec section_from(config::Reader& r) {
    geometry::CrossSectionSpec spec;
    std::string kind = r.text("section", "kind", "disk");
    if (kind == "disk") {
        spec.kind = geometry::SectionKind::disk;
        spec.radius = r.number("section", "radius", 1.0);
    } else if (kind == "ellipse") {
        spec.kind = geometry::SectionKind::ellipse;
        spec.semi_a = r.number("section", "semi_a", 1.0);
        spec.semi_b = r.number("section", "semi_b", 0.7);
    } else if (kind == "square") {
        spec.kind = geometry::SectionKind::polygon;
        double side = r.number("section", "side", 1.0);
        double s = side / 2.0;
        spec.polygon = {Vec2(-s, -s), Vec2(s, -s), Vec2(s, s), Vec2(-s, s)};
    } else if (kind == "polygon") {
        spec.kind = geometry::SectionKind::polygon;
        std::vector<double> xs = r.numbers("section", "polygon", {});
        if (xs.size() < 6 || xs.size() % 2 != 0)
            r.flag("section", "polygon", "need at least three x y pairs");
        for (std::size_t i = 0; i + 1 < xs.size(); i += 2) spec.polygon.emplace_back(xs[i], xs[i + 1]);
    } else {
        r.flag("section", "kind", "unknown section kind `" + kind + "`");
    }
    spec.h = r.number("section", "h", 0.1);
    if (spec.h <= 0.0) r.flag("section", "h", "must be positive");
    return spec;
}

geometry::BoundaryPartition partition_from(config::Reader& r, const geometry::Mesh& mesh) {
    Vec2 xi0 = r.vec2("faces", "xi0", Vec2(1.0, 0.0));
    double margin = r.number("faces", "margin", 0.35);
    if (xi0.norm() < 1e-12) {
        r.flag("faces", "xi0", "must be nonzero");
        xi0 = Vec2(1.0, 0.0);
    }
    return geometry::make_partition(mesh, xi0.normalized(), margin);
}

forward::PotentialField potential_from(config::Reader& r, const geometry::Mesh& mesh,
                                       const std::string& sec) {
    std::string preset = r.text(sec, "preset", "zero");
    if (preset == "zero") return forward::potential_zero(mesh);
    if (preset == "constant")
        return forward::potential_constant(mesh, r.number(sec, "c", 1.0),
                                           r.number(sec, "bound_minus_margin", 0.0));
    if (preset == "bump")
        return forward::potential_bump(mesh, r.number(sec, "c0", 0.0), r.number(sec, "amp", 1.0),
                                       r.vec2(sec, "center", Vec2(0.0, 0.0)),
                                       r.number(sec, "rho", 0.4));
    if (preset == "axial_cosine")
        return forward::potential_axial_cosine(mesh, r.number(sec, "c0", 0.0),
                                               r.number(sec, "amp", 1.0),
                                               r.vec2(sec, "center", Vec2(0.0, 0.0)),
                                               r.number(sec, "rho", 0.4));
    if (preset == "random")
        return forward::potential_random(
            mesh, static_cast<std::uint64_t>(r.integer(sec, "seed", 7)),
            static_cast<int>(r.integer(sec, "M", 1)), static_cast<int>(r.integer(sec, "n_bumps", 3)),
            r.number(sec, "sup", 1.0), r.number(sec, "bound_minus", 1.0));
    r.flag(sec, "preset", "unknown potential preset `" + preset + "`");
    return forward::potential_zero(mesh);
}

conductivity::ConductivityField conductivity_from(config::Reader& r, const geometry::Mesh& mesh,
                                                  const std::string& sec) {
    std::string preset = r.text(sec, "preset", "constant");
    if (preset == "constant") return conductivity::conductivity_constant(mesh, r.number(sec, "c", 1.0));
    if (preset == "exponential")
        return conductivity::conductivity_exponential(mesh, r.number(sec, "slope", 0.3));
    if (preset == "bump")
        return conductivity::conductivity_bump(mesh, r.number(sec, "c0", 1.0), r.number(sec, "amp", 0.2),
                                               r.vec2(sec, "center", Vec2(0.0, 0.0)),
                                               r.number(sec, "rho", 0.5), r.number(sec, "ax_amp", 0.0));
    r.flag(sec, "preset", "unknown conductivity preset `" + preset + "`");
    return conductivity::conductivity_constant(mesh, 1.0);
}

forward::PotentialField potential_plus(const forward::PotentialField& V,
                                       const forward::PotentialField& W, double s,
                                       const geometry::Mesh& mesh) {
    forward::PotentialField out;
    out.M = std::max(V.M, W.M);
    out.modes = MatXc::Zero(2 * out.M + 1, static_cast<Eigen::Index>(mesh.n_vertices()));
    for (int m = -V.M; m <= V.M; ++m) out.modes.row(out.M + m) += V.mode_row(m).transpose();
    for (int m = -W.M; m <= W.M; ++m) out.modes.row(out.M + m) += s * W.mode_row(m).transpose();
    out.bound_plus = V.bound_plus + std::abs(s) * W.bound_plus;
    out.bound_minus = V.bound_minus + std::abs(s) * W.bound_plus;
    if (V.analytic && W.analytic) {
        auto va = V.analytic, wa = W.analytic;
        out.analytic = [va, wa, s](double x1, const Vec2& p) { return va(x1, p) + s * wa(x1, p); };
    }
    return out;
}

// --- subcommands -------------------------------------------------------------

int cmd_mesh(const RunEnv& env) {
    config::Reader r(env.file);
    geometry::CrossSectionSpec spec = section_from(r);
    r.finish();
    geometry::Mesh mesh = geometry::generate_mesh(spec);
    geometry::write_mesh_text(mesh, env.outdir + "/mesh.txt");

    std::vector<std::vector<double>> rows;
    for (std::size_t v = 0; v < mesh.n_vertices(); ++v)
        rows.push_back({static_cast<double>(v), mesh.vertices[v].x(), mesh.vertices[v].y(),
                        static_cast<double>(mesh.boundary_mark[v])});
    write_csv(env.outdir + "/mesh.csv", "vertex,x,y,on_boundary", rows);

    json rep = report_base(env, "mesh");
    rep["n_vertices"] = mesh.n_vertices();
    rep["n_triangles"] = mesh.triangles.size();
    rep["n_boundary_edges"] = mesh.boundary.size();
    rep["area"] = mesh.area();
    rep["max_radius"] = mesh.max_radius();
    rep["mesh_hash"] = hex64(mesh.content_hash());
    write_json(env.outdir + "/mesh_report.json", rep);
    return 0;
}

int cmd_eig(const RunEnv& env) {
    config::Reader r(env.file);
    geometry::CrossSectionSpec spec = section_from(r);
    int nc = static_cast<int>(r.integer("eig", "oracle_coarse", 20));
    int nf = static_cast<int>(r.integer("eig", "oracle_fine", 28));
    r.finish();
    geometry::Mesh mesh = geometry::generate_mesh(spec);
    double fem = geometry::poincare_constant(mesh);
    double fd = oracle::poincare_fd(spec, nc, nf);

    write_csv(env.outdir + "/eig.csv", "poincare_fem,poincare_fd,gap", {{fem, fd, std::abs(fem - fd)}});
    json rep = report_base(env, "eig");
    rep["poincare_fem"] = fem;
    rep["poincare_fd"] = fd;
    rep["gap"] = std::abs(fem - fd);
    rep["mesh_hash"] = hex64(mesh.content_hash());
    write_json(env.outdir + "/eig_report.json", rep);
    return 0;
}

int cmd_forward(const RunEnv& env) {
    config::Reader r(env.file);
    geometry::CrossSectionSpec spec = section_from(r);
    double theta = r.number("fiber", "theta", 0.0);
    int K = static_cast<int>(r.integer("fiber", "K", 4));
    int n_axial = static_cast<int>(r.integer("fiber", "n_axial", 0));
    r.finish();
    geometry::Mesh mesh = geometry::generate_mesh(spec);
    FiberContext ctx(theta, K, 0, n_axial);
    forward::PotentialField V = potential_from(r, mesh, "potential");
    r.finish();

    geometry::FaceSet whole;
    whole.tag = "full";
    for (std::size_t e = 0; e < mesh.boundary.size(); ++e) whole.edges.push_back(static_cast<int>(e));
    forward::DirichletData g;
    g.basis = forward::face_interior_basis(mesh, whole, std::min(K, 2), 0);
    std::mt19937_64 rng(env.seed);
    std::normal_distribution<double> gauss;
    g.coeff = VecXc(g.basis.dim());
    for (Eigen::Index i = 0; i < g.coeff.size(); ++i) g.coeff[i] = cplx(gauss(rng), gauss(rng));

    forward::FiberSolution sol = forward::solve_fibered_bvp(mesh, ctx, V, g);

    SpMat M = fem::mass(mesh);
    std::vector<std::vector<double>> rows;
    for (int m = -K; m <= K; ++m) {
        VecXc x = sol.field.coeff.row(m + K).transpose();
        VecXc f = sol.flux.coeff.row(m + K).transpose();
        double nx = std::sqrt(std::abs((x.adjoint() * (M.cast<cplx>() * x))(0, 0)));
        rows.push_back({static_cast<double>(m), nx, f.norm()});
    }
    write_csv(env.outdir + "/forward.csv", "mode,field_l2,flux_nodal_norm", rows);

    json rep = report_base(env, "forward");
    rep["pde_residual"] = sol.pde_residual;
    rep["theta"] = theta;
    rep["window_K"] = K;
    rep["potential_hash"] = hex64(V.content_hash());
    rep["mesh_hash"] = hex64(mesh.content_hash());
    write_json(env.outdir + "/forward_report.json", rep);
    return 0;
}

int cmd_dnmap(const RunEnv& env) {
    config::Reader r(env.file);
    geometry::CrossSectionSpec spec = section_from(r);
    double theta = r.number("fiber", "theta", 0.0);
    int K = static_cast<int>(r.integer("fiber", "K", 4));
    geometry::Mesh mesh = geometry::generate_mesh(spec);
    geometry::BoundaryPartition part = partition_from(r, mesh);
    int in_K = static_cast<int>(r.integer("dnmap", "in_K", std::max(1L, K / 2L)));
    int in_center = static_cast<int>(r.integer("dnmap", "in_center", 0));
    r.finish();

    FiberContext ctx(theta, K);
    forward::PotentialField V = potential_from(r, mesh, "potential");
    r.finish();
    forward::PartialDNMap dn = forward::assemble_partial_dn(mesh, ctx, V, part, in_K, in_center);
    forward::write_partial_dn(dn, env.outdir + "/dnmap.bin");

    json rep = report_base(env, "dnmap");
    rep["rows"] = dn.matrix.rows();
    rep["cols"] = dn.matrix.cols();
    rep["in_K"] = dn.in_basis.K;
    rep["out_K"] = dn.out_K;
    rep["theta"] = dn.theta;
    rep["frobenius"] = dn.matrix.norm();
    rep["input_arc_length"] = part.input_face.arc_length(mesh);
    rep["output_arc_length"] = part.output_face.arc_length(mesh);
    rep["mesh_hash"] = hex64(mesh.content_hash());
    rep["potential_hash"] = hex64(V.content_hash());
    write_json(env.outdir + "/dnmap_report.json", rep);
    return 0;
}

int cmd_cgo(const RunEnv& env) {
    config::Reader r(env.file);
    geometry::CrossSectionSpec spec = section_from(r);
    int k = static_cast<int>(r.integer("cgo", "k", 0));
    Vec2 eta = r.vec2("cgo", "eta", Vec2(0.0, 2.0 * pi));
    double rr = r.number("cgo", "r", 0.5);
    double theta = r.number("cgo", "theta", 0.0);
    double eps = r.number("cgo", "eps", 0.25);
    std::vector<double> taus = r.numbers("cgo", "tau_ladder", {});
    if (eta.norm() < 1e-12) r.flag("cgo", "eta", "transverse frequency must be nonzero");
    r.finish();

    geometry::Mesh mesh = geometry::generate_mesh(spec);
    forward::PotentialField V = potential_from(r, mesh, "potential");
    r.finish();

    cgo::CGOParams p = cgo::make_cgo_params(k, eta, rr, theta);
    json rep = report_base(env, "cgo");
    rep["tau"] = p.tau;
    rep["mode1"] = p.mode1;
    rep["mode2"] = p.mode2;
    rep["zeta1"] = {p.zeta1[0].real(), p.zeta1[0].imag(), p.zeta1[1].real(),
                    p.zeta1[1].imag(), p.zeta1[2].real(), p.zeta1[2].imag()};
    rep["zeta2"] = {p.zeta2[0].real(), p.zeta2[0].imag(), p.zeta2[1].real(),
                    p.zeta2[1].imag(), p.zeta2[2].real(), p.zeta2[2].imag()};

    cgo::CGOSolution sm = cgo::solve_cgo_smooth(mesh, V, p);
    cgo::CGOSolution va = cgo::solve_cgo_vanishing(mesh, V, p, eps);
    rep["smooth"] = {{"remainder_l2", sm.remainder_l2},
                     {"residual", sm.residual},
                     {"iterations", sm.iterations}};
    rep["vanishing"] = {{"remainder_l2", va.remainder_l2},
                        {"weighted_l2", va.weighted_l2},
                        {"trace_defect", va.trace_defect},
                        {"residual", va.residual}};

    std::vector<std::vector<double>> rows;
    if (!taus.empty()) {
        cgo::DecayLadder ls = cgo::decay_ladder(mesh, V, k, eta, theta, taus, false, eps, env.workers);
        cgo::DecayLadder lv = cgo::decay_ladder(mesh, V, k, eta, theta, taus, true, eps, env.workers);
        rep["smooth_slope"] = ls.slope;
        rep["vanishing_slope"] = lv.slope;
        for (std::size_t i = 0; i < ls.tau.size(); ++i)
            rows.push_back({ls.tau[i], ls.norm[i], ls.residual[i], lv.norm[i], lv.weighted[i],
                            lv.residual[i]});
    }
    write_csv(env.outdir + "/cgo.csv",
              "tau,smooth_norm,smooth_residual,vanishing_norm,vanishing_weighted,vanishing_residual",
              rows);
    write_json(env.outdir + "/cgo_report.json", rep);
    return 0;
}

int cmd_recover(const RunEnv& env) {
    config::Reader r(env.file);
    geometry::CrossSectionSpec spec = section_from(r);
    geometry::Mesh mesh = geometry::generate_mesh(spec);
    geometry::BoundaryPartition part = partition_from(r, mesh);
    Vec2 xi0 = r.vec2("faces", "xi0", Vec2(1.0, 0.0)).normalized();
    double eps = r.number("faces", "eps", 0.25);

    recon::ReconstructionOptions opt;
    opt.theta = r.number("recover", "theta", 0.0);
    opt.tau_target = r.number("recover", "tau", 12.0);
    opt.gamma = r.number("recover", "gamma", 0.0);
    opt.dv_sup = r.number("recover", "dv_sup", 0.0);

    std::vector<double> triples = r.numbers("recover", "targets", {1.0, 0.0, 2.0 * pi});
    if (triples.size() % 3 != 0) r.flag("recover", "targets", "need k etax etay triples");
    r.finish();

    forward::PotentialField V1 = potential_from(r, mesh, "potential");
    forward::PotentialField V2 = potential_from(r, mesh, "potential2");
    r.finish();

    std::vector<recon::ReconTarget> targets;
    for (std::size_t i = 0; i + 2 < triples.size(); i += 3)
        targets.push_back({static_cast<int>(std::lround(triples[i])), Vec2(triples[i + 1], triples[i + 2])});
    std::vector<recon::ProbeSetup> probes = {{xi0, part, eps}};

    recon::Reconstruction rec = recon::reconstruct_difference(mesh, probes, V1, V2, targets, opt);

    std::vector<std::vector<double>> rows;
    for (const auto& s : rec.samples)
        rows.push_back({static_cast<double>(s.k), s.eta.x(), s.eta.y(), s.tau, s.estimate.real(),
                        s.estimate.imag(), s.budget_tau, s.budget_noise});
    write_csv(env.outdir + "/recover.csv",
              "k,eta_x,eta_y,tau,estimate_re,estimate_im,budget_tau,budget_noise", rows);

    json rep = report_base(env, "recover");
    rep["coverage"] = rec.coverage;
    rep["n_samples"] = rec.samples.size();
    rep["n_gaps"] = rec.gaps.size();
    rep["mesh_hash"] = hex64(mesh.content_hash());
    write_json(env.outdir + "/recover_report.json", rep);
    return 0;
}

int cmd_stability(const RunEnv& env) {
    config::Reader r(env.file);
    geometry::CrossSectionSpec spec = section_from(r);
    geometry::Mesh mesh = geometry::generate_mesh(spec);
    geometry::BoundaryPartition part = partition_from(r, mesh);

    recon::StabilityConfig cfg;
    cfg.scales = r.numbers("stability", "scales", {0.00390625, 0.015625, 0.0625, 0.25});
    cfg.gamma_star = r.number("stability", "gamma_star", 1e-8);
    cfg.theta = r.number("stability", "theta", 0.0);
    cfg.theta_grid = r.numbers("stability", "theta_grid", {});
    cfg.K = static_cast<int>(r.integer("stability", "K", 4));
    cfg.in_K = static_cast<int>(r.integer("stability", "in_K", 2));
    std::string dual = r.text("stability", "dual", "dirichlet");
    if (dual == "periodic")
        cfg.dual = recon::DualClass::periodic;
    else if (dual != "dirichlet")
        r.flag("stability", "dual", "expected dirichlet or periodic");
    cfg.workers = env.workers;
    r.finish();

    forward::PotentialField V1 = potential_from(r, mesh, "potential");
    forward::PotentialField W = potential_from(r, mesh, "potential2");
    r.finish();
    auto family = [&](double s) { return potential_plus(V1, W, s, mesh); };

    recon::StabilityReport rep = recon::run_stability_experiment(mesh, part, V1, family, cfg);

    std::vector<std::vector<double>> rows;
    for (const auto& row : rep.rows)
        rows.push_back({row.s, row.gamma, row.delta, row.phi, row.ratio,
                        row.skipped ? 1.0 : 0.0});
    write_csv(env.outdir + "/stability.csv", "s,gamma,delta,phi,ratio,skipped", rows);

    json j = report_base(env, "stability");
    j["fitted_C"] = rep.fitted_C;
    j["spread"] = rep.spread;
    j["gamma_star"] = rep.gamma_star;
    j["warning"] = rep.warning;
    j["mesh_hash"] = hex64(mesh.content_hash());
    write_json(env.outdir + "/stability_report.json", j);
    return 0;
}

int cmd_conductivity(const RunEnv& env) {
    config::Reader r(env.file);
    geometry::CrossSectionSpec spec = section_from(r);
    geometry::Mesh mesh = geometry::generate_mesh(spec);
    geometry::BoundaryPartition part = partition_from(r, mesh);

    conductivity::CondStabilityConfig cfg;
    cfg.scales = r.numbers("conductivity_run", "scales", {0.015625, 0.0625, 0.25});
    cfg.theta = r.number("conductivity_run", "theta", 0.0);
    cfg.gamma_star = r.number("conductivity_run", "gamma_star", 1e-8);
    cfg.K = static_cast<int>(r.integer("conductivity_run", "K", 6));
    cfg.in_K = static_cast<int>(r.integer("conductivity_run", "in_K", 3));
    cfg.pad = static_cast<int>(r.integer("conductivity_run", "pad", 2));
    cfg.n_axial = static_cast<int>(r.integer("conductivity_run", "n_axial", 32));

    double amp = r.number("conductivity2", "amp", 0.2);
    Vec2 center = r.vec2("conductivity2", "center", Vec2(0.0, 0.0));
    double rho = r.number("conductivity2", "rho", 0.5);
    double ax_amp = r.number("conductivity2", "ax_amp", 0.0);
    r.finish();

    conductivity::ConductivityField a1 = conductivity_from(r, mesh, "conductivity");
    r.finish();
    auto family = [&](double s) {
        return conductivity::conductivity_with_bump(mesh, a1, s * amp, center, rho, ax_amp);
    };

    conductivity::CondStabilityReport rep = conductivity::conductivity_stability(mesh, part, a1, family, cfg);

    std::vector<std::vector<double>> rows;
    for (const auto& row : rep.rows)
        rows.push_back({row.s, row.sigma_norm, row.lambda_norm, row.h1, row.alpha_h1, row.phi,
                        row.ratio, row.g4_ok ? 1.0 : 0.0, row.factor_ok ? 1.0 : 0.0,
                        row.skipped ? 1.0 : 0.0});
    write_csv(env.outdir + "/conductivity.csv",
              "s,sigma_norm,lambda_norm,h1,alpha_h1,phi,ratio,g4_ok,factor_ok,skipped", rows);

    json j = report_base(env, "conductivity");
    j["fitted_C"] = rep.fitted_C;
    j["spread"] = rep.spread;
    j["gamma_star"] = rep.gamma_star;
    j["warning"] = rep.warning;
    j["alpha_direct_h1"] = rep.alpha.direct_h1;
    j["alpha_solve_h1"] = rep.alpha.solve_h1;
    j["alpha_gap_rel"] = rep.alpha.gap_rel;
    j["mesh_hash"] = hex64(mesh.content_hash());
    write_json(env.outdir + "/conductivity_report.json", j);
    return 0;
}

// reference-value table minted by routines independent of the main modules;
// the CGO block re-derives the hand example from the declination formulas
// instead of calling the production parameter builder
int cmd_oracle(const std::string& out_path) {
    std::vector<std::pair<std::string, double>> table;

    table.emplace_back("disk_area", pi);

    geometry::CrossSectionSpec disk;
    disk.kind = geometry::SectionKind::disk;
    disk.radius = 1.0;
    geometry::CrossSectionSpec square;
    square.kind = geometry::SectionKind::polygon;
    square.polygon = {Vec2(-0.5, -0.5), Vec2(0.5, -0.5), Vec2(0.5, 0.5), Vec2(-0.5, 0.5)};
    table.emplace_back("poincare_disk_fd", oracle::poincare_fd(disk, 20, 28));
    table.emplace_back("poincare_square_fd", oracle::poincare_fd(square, 16, 24));

    // first positive root of J0 by bisection
    double lo = 2.0, hi = 3.0;
    for (int i = 0; i < 200; ++i) {
        double mid = 0.5 * (lo + hi);
        if (std::cyl_bessel_j(0.0, mid) > 0.0)
            lo = mid;
        else
            hi = mid;
    }
    table.emplace_back("poincare_disk_reference", 0.5 * (lo + hi));
    table.emplace_back("poincare_square_reference", pi * std::sqrt(2.0));

    table.emplace_back("illuminated_half_angle_eps_0.5", std::acos(0.5));
    table.emplace_back("illuminated_half_angle_eps_0.999", std::acos(0.999));

    // hand-evaluated phase parameters for k=0, eta=(0,2pi), r=0.3, theta=0:
    // axial shift s = 2 pi (floor(r)+1), ell = (s, 0, 0), tau^2 = |eta|^2/4 + s^2
    {
        double s = 2.0 * pi * 1.0;
        double tau = std::sqrt(pi * pi + s * s);
        table.emplace_back("cgo_hand_ell_axial", s);
        table.emplace_back("cgo_hand_tau", tau);
        table.emplace_back("cgo_hand_mode1", (s + 0.0) / (2.0 * pi));
        table.emplace_back("cgo_hand_mode2", (s - 0.0) / (2.0 * pi));
    }

    table.emplace_back("disk_dn_c0_m1", oracle::disk_dn_analytic(1.0, 0.0, 0.0, 1));
    table.emplace_back("disk_dn_c0_m3", oracle::disk_dn_analytic(1.0, 0.0, 0.0, 3));
    table.emplace_back("disk_dn_c1_m0", oracle::disk_dn_analytic(1.0, 0.0, 1.0, 0));

    table.emplace_back("liouville_exponential_va", 0.25);  // slope 1: s^2/4

    cplx psi = oracle::bump_ft(Vec2(0.0, 0.0), 0.5, Vec2(0.0, 2.0 * pi));
    table.emplace_back("bump_ft_eta_2pi", psi.real());
    table.emplace_back("recovery_target_k1", 0.5 * psi.real());
    table.emplace_back("volume_const_phase_integral",
                       oracle::disk_indicator_ft(1.0, Vec2(0.0, 2.0 * pi)).real());

    double j01 = 0.5 * (lo + hi);
    table.emplace_back("cell_riesz_denominator_disk", std::sqrt(j01 * j01 + pi * pi + 1.0));

    std::filesystem::create_directories(std::filesystem::path(out_path).parent_path());
    std::ofstream out(out_path);
    require(static_cast<bool>(out), "cannot open " + out_path);
    out << "name,value\n";
    for (const auto& [name, value] : table) out << name << ',' << format_g17(value) << '\n';
    std::cout << "wrote " << table.size() << " reference values to " << out_path << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"cylindrical waveguide stability toolkit"};
    app.require_subcommand(1);

    std::string config_path, out_flag;
    std::string oracle_out = "data/derived_examples.csv";

    auto add_cfg = [&](CLI::App* sub) {
        sub->add_option("-c,--config", config_path, "configuration file")->required();
        sub->add_option("-o,--out", out_flag, "output directory override");
    };
    add_cfg(app.add_subcommand("mesh", "generate the cross-section mesh"));
    add_cfg(app.add_subcommand("eig", "Poincare constant vs the dense oracle"));
    add_cfg(app.add_subcommand("forward", "one fibered boundary-value solve"));
    add_cfg(app.add_subcommand("dnmap", "assemble the partial DN map"));
    add_cfg(app.add_subcommand("cgo", "complex-geometric-optics remainders and ladders"));
    add_cfg(app.add_subcommand("recover", "Fourier coefficient recovery from DN data"));
    add_cfg(app.add_subcommand("stability", "log-log stability ladder"));
    add_cfg(app.add_subcommand("conductivity", "conductivity stability chain"));
    app.add_subcommand("oracle", "regenerate the reference-value table")
        ->add_option("-o,--out", oracle_out, "output CSV path");

    CLI11_PARSE(app, argc, argv);

    try {
        std::string cmd = app.get_subcommands().front()->get_name();
        if (cmd == "oracle") return cmd_oracle(oracle_out);
        RunEnv env = load_env(config_path, out_flag);
        if (cmd == "mesh") return cmd_mesh(env);
        if (cmd == "eig") return cmd_eig(env);
        if (cmd == "forward") return cmd_forward(env);
        if (cmd == "dnmap") return cmd_dnmap(env);
        if (cmd == "cgo") return cmd_cgo(env);
        if (cmd == "recover") return cmd_recover(env);
        if (cmd == "stability") return cmd_stability(env);
        if (cmd == "conductivity") return cmd_conductivity(env);
        std::cerr << "unknown command " << cmd << '\n';
        return 1;
    } catch (const ValidationError& e) {
        std::cerr << "validation error: " << e.what() << '\n';
        return 2;
    } catch (const InvariantError& e) {
        std::cerr << "invariant violation: " << e.what() << '\n';
        return 3;
    } catch (const SolverError& e) {
        std::cerr << "solver failure: " << e.what() << '\n';
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
