//! The six check suites. Every check produces one or more records; library
//! errors become failing records rather than aborting the run.

use std::sync::Arc;
use std::time::Instant;

use equifold::folding::{compare_formulations, fold_kernel, folded_threshold, two_step_tower, unfold_kernel};
use equifold::invariants::{
    boundary_exponential, boundary_idempotent, check_function_functoriality, check_index_functoriality,
    check_rho_functoriality, check_wave_functoriality, distance_to_identity, index_representative, normalizing_independence,
    IndexEntries, RhoPath, EVEN_DEFECT_CONSTANT, UNITARITY_TOL,
};
use equifold::operators::{equivariance_violation, phi_transform, random_kernel, rng_from_seed, EquivariantKernel, C64};
use equifold::spectral::{
    chi_default, chi_default_function, default_family, eigendecompose, fejer_normalizing, fourier_convergence_audit,
    fourier_inversion_apply, multiset_contained, observed_orders, wave_operator, wave_operator_rk4, FourierQuadrature,
    FunctionClass, ScalarFunction,
};
use equifold::Result;
use rand_chacha::ChaCha20Rng;

use crate::config::Suite;
use crate::report::{digest, ReportRecord};
use crate::towers::Tower;

const KERNEL_DENSITY: f64 = 0.5;
const UNITARY_BOUND: f64 = 1e-11;
const ORACLE_BOUND: f64 = 1e-8;
const RK4_TIME: f64 = 0.7;
const RK4_STEP_SCALE: f64 = 1e-3;
const FOURIER_BOUND: f64 = 1e-6;
const MIN_FOURIER_ORDER: f64 = 3.5;
const FOURIER_AUDIT_NODES: [usize; 4] = [16, 32, 64, 128];
const SIGN_LIMIT_T: f64 = 0.01;
const SIGN_LIMIT_EPS: f64 = 0.5;
const SIGN_LIMIT_BOUND: f64 = 0.05;
const EXACT_IDEMPOTENT_BOUND: f64 = 1e-12;

/// Everything a check needs.
struct Ctx<'a> {
    tower: &'a Tower,
    suite: Suite,
    seed: u64,
    tol: f64,
}

impl Ctx<'_> {
    fn rng(&self, check: &str) -> ChaCha20Rng {
        let d = digest(&[&self.seed.to_string(), self.suite.name(), check]);
        rng_from_seed(u64::from_str_radix(&d, 16).expect("hex digest"))
    }

    fn record(&self, check: impl Into<String>, residual: f64, bound: f64) -> ReportRecord {
        let check = check.into();
        let inputs = format!("seed={};samples={}", self.seed, self.tower.config.samples);
        ReportRecord::new(self.suite, check, self.tower.name(), &inputs, residual, bound)
    }

    fn failure(&self, check: &str, err: equifold::Error) -> ReportRecord {
        self.record(format!("{check}:error"), f64::INFINITY, 0.0).with_detail("error", err.to_string())
    }

    fn randoms(&self, check: &str, count: usize, on_m2: bool) -> Vec<EquivariantKernel> {
        let mut rng = self.rng(check);
        let cover = if on_m2 { self.tower.m2() } else { self.tower.m1() };
        (0..count).map(|_| random_kernel(cover, self.tower.rank(), KERNEL_DENSITY, &mut rng)).collect()
    }
}

type Check = fn(&Ctx) -> Result<Vec<ReportRecord>>;

fn checks(suite: Suite) -> Vec<(&'static str, Check)> {
    match suite {
        Suite::Algebra => vec![
            ("compose_vs_dense", algebra_compose),
            ("adjoint_vs_dense", algebra_adjoint),
            ("deck_equivariance", algebra_equivariance),
            ("lift_hermitian", algebra_lift),
            ("phi_round_trip", algebra_phi),
        ],
        Suite::Folding => vec![
            ("homomorphism", folding_homomorphism),
            ("adjoint", folding_adjoint),
            ("formulations", folding_formulations),
            ("propagation_monotone", folding_propagation),
            ("surjectivity", folding_surjectivity),
            ("tower_composition", folding_tower),
        ],
        Suite::Wave => vec![
            ("functoriality", wave_functoriality),
            ("unitarity_group_law", wave_unitarity),
            ("rk4_oracle", wave_oracle),
        ],
        Suite::Funcalc => vec![
            ("functoriality", funcalc_functoriality),
            ("spectral_containment", funcalc_containment),
            ("calculus", funcalc_calculus),
            ("fourier", funcalc_fourier),
            ("normalizing_family", funcalc_family),
        ],
        Suite::Index => vec![
            ("functoriality", index_functoriality),
            ("representative", index_defect),
            ("boundary", index_boundary),
            ("normalizing_independence", index_independence),
        ],
        Suite::Rho => vec![("rho", rho_checks)],
    }
}

/// Runs one suite. Wall times are attached only when `timings` is set so
/// that reports stay byte-identical otherwise.
pub fn run_suite(tower: &Tower, suite: Suite, seed: u64, timings: bool) -> Vec<ReportRecord> {
    let ctx = Ctx { tower, suite, seed, tol: tower.config.tolerance(suite) };
    let mut out = Vec::new();
    for (name, check) in checks(suite) {
        let start = Instant::now();
        let mut recs = match check(&ctx) {
            Ok(r) => r,
            Err(e) => vec![ctx.failure(name, e)],
        };
        if timings {
            let ms = start.elapsed().as_secs_f64() * 1e3;
            for r in &mut recs {
                r.wall_time_ms = Some(ms);
            }
        }
        out.extend(recs);
    }
    out
}

// ---- algebra

fn algebra_compose(c: &Ctx) -> Result<Vec<ReportRecord>> {
    let ks = c.randoms("compose_vs_dense", 20, false);
    let mut worst: f64 = 0.0;
    for p in ks.chunks(2) {
        let lhs = p[0].compose(&p[1])?.assemble();
        let rhs = p[0].assemble() * p[1].assemble();
        worst = worst.max((lhs - rhs).iter().map(|z| z.norm()).fold(0.0, f64::max));
    }
    Ok(vec![c.record("compose_vs_dense", worst, c.tol)])
}

fn algebra_adjoint(c: &Ctx) -> Result<Vec<ReportRecord>> {
    let worst = c
        .randoms("adjoint_vs_dense", 10, false)
        .iter()
        .map(|k| (k.adjoint().assemble() - k.assemble().adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max))
        .fold(0.0, f64::max);
    Ok(vec![c.record("adjoint_vs_dense", worst, 0.0)])
}

fn algebra_equivariance(c: &Ctx) -> Result<Vec<ReportRecord>> {
    let (d1, _) = c.tower.operators();
    let mut ks = c.randoms("deck_equivariance", 10, false);
    ks.push(d1);
    let worst = ks
        .iter()
        .map(|k| equivariance_violation(&k.assemble(), c.tower.m1(), c.tower.rank()))
        .fold(0.0, f64::max);
    Ok(vec![c.record("deck_equivariance", worst, 0.0)])
}

fn algebra_lift(c: &Ctx) -> Result<Vec<ReportRecord>> {
    let (d1, d2) = c.tower.operators();
    Ok(vec![
        c.record("lift_hermitian[M1]", d1.hermitian_residual(), 0.0),
        c.record("lift_hermitian[M2]", d2.hermitian_residual(), 0.0),
    ])
}

fn algebra_phi(c: &Ctx) -> Result<Vec<ReportRecord>> {
    let ks = c.randoms("phi_round_trip", 10, false);
    let mut round: f64 = 0.0;
    let mut mult: f64 = 0.0;
    for p in ks.chunks(2) {
        let (a, b) = (phi_transform(&p[0]), phi_transform(&p[1]));
        round = round.max(a.inverse().max_abs_diff(&p[0])?);
        mult = mult.max(a.mul(&b)?.inverse().max_abs_diff(&p[0].compose(&p[1])?)?);
    }
    Ok(vec![c.record("phi_round_trip", round, c.tol), c.record("phi_multiplicative", mult, c.tol)])
}

// ---- folding

fn folding_homomorphism(c: &Ctx) -> Result<Vec<ReportRecord>> {
    let ks = c.randoms("homomorphism", 2 * c.tower.config.samples, false);
    let ctx = &c.tower.ctx;
    let mut worst: f64 = 0.0;
    for p in ks.chunks(2) {
        let lhs = fold_kernel(&p[0].compose(&p[1])?, ctx)?;
        let rhs = fold_kernel(&p[0], ctx)?.compose(&fold_kernel(&p[1], ctx)?)?;
        worst = worst.max(lhs.sub(&rhs)?.operator_norm());
    }
    Ok(vec![c.record("homomorphism", worst, c.tol).with_detail("pairs", ks.len() / 2)])
}

fn folding_adjoint(c: &Ctx) -> Result<Vec<ReportRecord>> {
    let ctx = &c.tower.ctx;
    let mut worst: f64 = 0.0;
    for k in c.randoms("adjoint", c.tower.config.samples, false) {
        worst = worst.max(fold_kernel(&k.adjoint(), ctx)?.max_abs_diff(&fold_kernel(&k, ctx)?.adjoint())?);
    }
    Ok(vec![c.record("adjoint", worst, 0.0)])
}

fn folding_formulations(c: &Ctx) -> Result<Vec<ReportRecord>> {
    let (d1, _) = c.tower.operators();
    let mut ks = c.randoms("formulations", 3, false);
    ks.push(d1);
    let mut rng = c.rng("formulations:partitions");
    let seeds: [u64; 3] = rand::Rng::random(&mut rng);
    let mut worst: f64 = 0.0;
    let mut lift_dev: f64 = 0.0;
    for k in &ks {
        let cmp = compare_formulations(k, &c.tower.ctx, &seeds[..2], seeds[2])?;
        worst = worst.max(cmp.max_pairwise());
        lift_dev = lift_dev.max(cmp.lift_deviation);
    }
    Ok(vec![c.record("formulations", worst, c.tol).with_detail("lift_deviation", lift_dev)])
}

fn folding_propagation(c: &Ctx) -> Result<Vec<ReportRecord>> {
    let (d1, _) = c.tower.operators();
    let mut ks = c.randoms("propagation_monotone", c.tower.config.samples, false);
    ks.push(wave_operator(&d1, 1.0)?);
    ks.push(d1);
    let ctx = &c.tower.ctx;
    let mut out = Vec::new();
    for &tau in &c.tower.config.thresholds.propagation {
        let mut violations = 0usize;
        let (mut max_in, mut max_out) = (0.0f64, 0.0f64);
        for k in &ks {
            let p_in = k.propagation(tau);
            let p_out = fold_kernel(k, ctx)?.propagation(folded_threshold(tau, ctx));
            if p_out > p_in {
                violations += 1;
            }
            max_in = max_in.max(p_in);
            max_out = max_out.max(p_out);
        }
        out.push(
            c.record(format!("propagation_monotone[tau={tau:e}]"), violations as f64, 0.0)
                .with_detail("kernels", ks.len())
                .with_detail("prop_in", max_in)
                .with_detail("prop_out", max_out),
        );
    }
    Ok(out)
}

fn folding_surjectivity(c: &Ctx) -> Result<Vec<ReportRecord>> {
    let ctx = &c.tower.ctx;
    let mut worst: f64 = 0.0;
    for k2 in c.randoms("surjectivity", c.tower.config.samples, true) {
        worst = worst.max(fold_kernel(&unfold_kernel(&k2, ctx)?, ctx)?.max_abs_diff(&k2)?);
    }
    Ok(vec![c.record("surjectivity", worst, 0.0)])
}

fn folding_tower(c: &Ctx) -> Result<Vec<ReportRecord>> {
    let t = two_step_tower(Arc::clone(c.tower.m1()), &c.tower.h_generators, &c.tower.coarser_generators)?;
    let mut worst: f64 = 0.0;
    for k in c.randoms("tower_composition", 20, false) {
        worst = worst.max(t.residual(&k)?);
    }
    Ok(vec![c.record("tower_composition", worst, c.tol)])
}

// ---- wave

fn wave_functoriality(c: &Ctx) -> Result<Vec<ReportRecord>> {
    let recs = check_wave_functoriality(&c.tower.base_op, &c.tower.ctx, &c.tower.config.grids.wave)?;
    Ok(recs.into_iter().map(|(t, r)| c.record(format!("functoriality[t={t}]"), r.residual, c.tol)).collect())
}

fn wave_unitarity(c: &Ctx) -> Result<Vec<ReportRecord>> {
    let (d1, d2) = c.tower.operators();
    let grid = &c.tower.config.grids.wave;
    let mut unit: f64 = 0.0;
    let mut law: f64 = 0.0;
    for d in [&d1, &d2] {
        let id = EquivariantKernel::identity(Arc::clone(d.cover()), d.rank());
        for (i, &s) in grid.iter().enumerate() {
            let ws = wave_operator(d, s)?;
            unit = unit.max(ws.compose(&ws.adjoint())?.max_abs_diff(&id)?);
            unit = unit.max(ws.compose(&wave_operator(d, -s)?)?.max_abs_diff(&id)?);
            let t = grid[(i + 1) % grid.len()];
            let lhs = ws.compose(&wave_operator(d, t)?)?;
            law = law.max(lhs.max_abs_diff(&wave_operator(d, s + t)?)?);
        }
    }
    Ok(vec![c.record("unitarity", unit, UNITARY_BOUND), c.record("group_law", law, UNITARY_BOUND)])
}

fn wave_oracle(c: &Ctx) -> Result<Vec<ReportRecord>> {
    let (d1, _) = c.tower.operators();
    let eig = wave_operator(&d1, RK4_TIME)?.assemble();
    let rk = wave_operator_rk4(&d1, RK4_TIME, RK4_STEP_SCALE);
    let r = (eig - rk).iter().map(|z| z.norm()).fold(0.0, f64::max);
    Ok(vec![c.record(format!("rk4_oracle[t={RK4_TIME}]"), r, ORACLE_BOUND)])
}

// ---- funcalc

fn fejer_members(c: &Ctx) -> Result<Vec<ScalarFunction>> {
    let fam = default_family();
    c.tower.config.grids.fejer.iter().map(|&t| fam.member(t)).collect()
}

fn funcalc_functoriality(c: &Ctx) -> Result<Vec<ReportRecord>> {
    let mut fs = vec![ScalarFunction::gaussian(), chi_default_function()];
    fs.extend(fejer_members(c)?);
    fs.iter()
        .map(|f| {
            let r = check_function_functoriality(&c.tower.base_op, &c.tower.ctx, f)?;
            Ok(c.record(format!("functoriality[{}]", f.name()), r.residual, c.tol))
        })
        .collect()
}

fn funcalc_containment(c: &Ctx) -> Result<Vec<ReportRecord>> {
    let (d1, d2) = c.tower.operators();
    let (s1, s2) = (eigendecompose(&d1)?, eigendecompose(&d2)?);
    let r = multiset_contained(s2.eigenvalues(), s1.eigenvalues(), c.tol).unwrap_or(f64::INFINITY);
    Ok(vec![c.record("spectral_containment", r, c.tol)])
}

fn funcalc_calculus(c: &Ctx) -> Result<Vec<ReportRecord>> {
    let (d1, _) = c.tower.operators();
    let dec = eigendecompose(&d1)?;
    let fs = [
        ScalarFunction::polynomial(vec![0.3, -1.0, 0.5, 0.25, -0.125]),
        ScalarFunction::gaussian(),
        chi_default_function(),
    ];
    let mut hom: f64 = 0.0;
    let mut mapping: f64 = 0.0;
    for f in &fs {
        let fd = dec.apply(f)?;
        for g in &fs {
            let lhs = dec.apply(&f.product(g))?;
            hom = hom.max(lhs.sub(&fd.compose(&dec.apply(g)?)?)?.operator_norm());
        }
        let mapped: Vec<f64> = dec.eigenvalues().iter().map(|&x| f.eval(x).re).collect();
        let spec = eigendecompose(&fd)?;
        mapping = mapping.max(multiset_contained(&mapped, spec.eigenvalues(), UNITARY_BOUND).unwrap_or(f64::INFINITY));
    }
    Ok(vec![c.record("calculus_homomorphism", hom, UNITARY_BOUND), c.record("spectral_mapping", mapping, UNITARY_BOUND)])
}

fn funcalc_fourier(c: &Ctx) -> Result<Vec<ReportRecord>> {
    let (d1, _) = c.tower.operators();
    let f = ScalarFunction::gaussian();
    let q = c.tower.config.quadrature;
    let quad = FourierQuadrature { t_max: q.t_max, nodes: q.nodes, tolerance: FOURIER_BOUND };
    let exact = eigendecompose(&d1)?.apply(&f)?;
    let inv = fourier_inversion_apply(&d1, &f, quad)?;
    let residual = inv.kernel.max_abs_diff(&exact)?;
    let audit = fourier_convergence_audit(&d1, &f, q.t_max, &FOURIER_AUDIT_NODES)?;
    let orders = observed_orders(&audit);
    let min_order = orders.iter().copied().fold(f64::INFINITY, f64::min);
    let deficit = if orders.is_empty() { f64::INFINITY } else { (MIN_FOURIER_ORDER - min_order).max(0.0) };
    Ok(vec![
        c.record("fourier_inversion", residual, FOURIER_BOUND)
            .with_detail("quadrature_estimate", inv.quadrature_estimate)
            .with_detail("tail_bound", inv.tail_bound),
        c.record("fourier_order_deficit", deficit, 0.0).with_detail("orders", &orders).with_detail("audit", &audit),
    ])
}

fn funcalc_family(c: &Ctx) -> Result<Vec<ReportRecord>> {
    let fam = default_family();
    let xs: Vec<f64> = (-4000..=4000).map(|i| i as f64 * 0.005).collect();
    let mut over: f64 = 0.0;
    for &t in [SIGN_LIMIT_T, 0.25, 1.0, 64.0].iter().chain(&c.tower.config.grids.fejer) {
        let l = fam.lambda(t);
        over = over.max(xs.iter().map(|&x| fejer_normalizing(l, x).abs() - 1.0).fold(0.0, f64::max));
    }
    let l = fam.lambda(SIGN_LIMIT_T);
    let sign_gap = (0..=20000)
        .map(|i| SIGN_LIMIT_EPS + i as f64 * 0.005)
        .map(|x| (fejer_normalizing(l, x) - 1.0).abs().max((fejer_normalizing(l, -x) + 1.0).abs()))
        .fold(0.0, f64::max);
    let radii: Vec<f64> = c.tower.config.grids.rho.iter().filter(|&&t| t > 0.0).map(|&t| fam.lambda(t)).collect();
    let mut bad = radii.windows(2).filter(|w| w[1] >= w[0]).count();
    for &t in c.tower.config.grids.rho.iter().filter(|&&t| t > 0.0) {
        match fam.member(t)?.class() {
            FunctionClass::Bandlimited(r) if r == fam.lambda(t) => {}
            _ => bad += 1,
        }
    }
    Ok(vec![
        c.record("fejer_bounded", over, 0.0),
        c.record(format!("fejer_sign_limit[t={SIGN_LIMIT_T}]"), sign_gap, SIGN_LIMIT_BOUND),
        c.record("fejer_band_radius_decreasing", bad as f64, 0.0).with_detail("radii", &radii),
    ])
}

// ---- index

fn index_functoriality(c: &Ctx) -> Result<Vec<ReportRecord>> {
    let fam = default_family();
    let chis = [chi_default_function(), ScalarFunction::sign(), fam.member(1.0)?];
    chis.iter()
        .map(|chi| {
            let r = check_index_functoriality(&c.tower.base_op, &c.tower.ctx, chi)?;
            Ok(c.record(format!("functoriality[{}]", chi.name()), r.residual, c.tol))
        })
        .collect()
}

fn index_defect(c: &Ctx) -> Result<Vec<ReportRecord>> {
    let (d1, _) = c.tower.operators();
    let chi = chi_default_function();
    let a = index_representative(&d1, &chi)?;
    let defect = a.defect()?;
    match a.entries {
        IndexEntries::Odd(_) => Ok(vec![c.record("odd_unitarity", defect, UNITARITY_TOL)]),
        IndexEntries::Even { .. } => {
            let dec = eigendecompose(&d1)?;
            let s = ScalarFunction::real("1-chi^2", FunctionClass::C0, |x| 1.0 - chi_default(x).powi(2))?;
            let bound = EVEN_DEFECT_CONSTANT * dec.apply(&s)?.operator_norm();
            Ok(vec![c.record("even_defect_bound", (defect - bound).max(0.0), 0.0)
                .with_detail("defect", defect)
                .with_detail("bound", bound)])
        }
    }
}

fn index_boundary(c: &Ctx) -> Result<Vec<ReportRecord>> {
    let (d1, _) = c.tower.operators();
    let u = wave_operator(&d1, 0.8)?;
    let b = boundary_idempotent(&u, &u.adjoint())?;
    let n = d1.dimension() as f64;
    let trace = (b.p.trace() - C64::new(n, 0.0)).norm();
    let mut ks = c.randoms("boundary_idempotent", 2, false).into_iter();
    let (ru, rv) = (ks.next().expect("two kernels"), ks.next().expect("two kernels"));
    let br = boundary_idempotent(&ru.scale(C64::new(0.5, 0.0)), &rv.scale(C64::new(0.5, 0.0)))?;
    let idem = b.p.idempotency_residual()?.max(br.p.idempotency_residual()?);
    let sign = eigendecompose(&d1)?.apply(&ScalarFunction::real("projection", FunctionClass::Bounded, |x| {
        if x > 0.0 {
            1.0
        } else {
            0.0
        }
    })?)?;
    let e = distance_to_identity(&boundary_exponential(&sign)?)?;
    Ok(vec![
        c.record("boundary_idempotent", idem, UNITARY_BOUND),
        c.record("boundary_idempotent_trace", trace, UNITARY_BOUND),
        c.record("boundary_exponential_of_projection", e, EXACT_IDEMPOTENT_BOUND),
    ])
}

fn index_independence(c: &Ctx) -> Result<Vec<ReportRecord>> {
    let (d1, _) = c.tower.operators();
    let fam = default_family();
    let mut excess: f64 = 0.0;
    for t in [0.25, 1.0] {
        let (diff, bound) = normalizing_independence(&d1, &chi_default_function(), &fam.member(t)?)?;
        excess = excess.max(diff - bound);
    }
    Ok(vec![c.record("normalizing_independence", excess.max(0.0), 0.0)])
}

// ---- rho

fn path_records(c: &Ctx, label: &str, path: &RhoPath) -> Result<Vec<ReportRecord>> {
    let mut out = vec![c.record(format!("zero_trivial[{label}]"), path.zero_residual()?, UNITARY_BOUND)];
    for s in path.propagation_bounds() {
        out.push(
            c.record(format!("propagation_bound[{label},t={}]", s.t), (s.propagation - s.bound).max(0.0), 0.0)
                .with_detail("propagation", s.propagation)
                .with_detail("bound", s.bound),
        );
    }
    let increases = if path.tail_non_increasing() { 0.0 } else { 1.0 };
    out.push(c.record(format!("propagation_tail[{label}]"), increases, 0.0).with_detail("profile", &path.prop_profile));
    if path.samples[0].1.is_odd() {
        out.push(c.record(format!("sample_unitarity[{label}]"), path.max_defect()?, UNITARITY_TOL));
    }
    Ok(out)
}

fn rho_checks(c: &Ctx) -> Result<Vec<ReportRecord>> {
    let cfg = &c.tower.config;
    let rho = check_rho_functoriality(&c.tower.base_op, &c.tower.ctx, &default_family(), &cfg.grids.rho, cfg.gap_floor)?;
    let mut out: Vec<ReportRecord> = rho
        .samples
        .iter()
        .map(|(t, r)| c.record(format!("functoriality[t={t}]"), r.residual, c.tol))
        .collect();
    out.extend(path_records(c, "M1", &rho.path1)?);
    out.extend(path_records(c, "M2", &rho.path2)?);
    out.push(
        c.record("gap_containment", rho.containment.unwrap_or(f64::INFINITY), c.tol)
            .with_detail("gap_m1", rho.path1.gap)
            .with_detail("gap_m2", rho.path2.gap),
    );
    Ok(out)
}
