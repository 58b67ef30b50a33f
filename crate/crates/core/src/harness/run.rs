//! Experiment drivers. Every cell is independent: it draws its randomness
//! from its own ChaCha stream and records its own failure, so a report is
//! identical for a fixed `(config, seed)` whatever the thread count.

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, ExperimentKind, SCHEMA_VERSION};
use super::families::gen_family;
use crate::cxmat::{hs_norm, op_norm, CMatrix};
use crate::det::{cyclic_det_variant, cyclic_ratio, shift_triviality_dets, transmission_det, CyclicVariant};
use crate::error::Result;
use crate::lattice::{build_cyclic, Potential};
use crate::scattering::{
    a_routes, calibrate_normalization, density_mass, entropy_integral, extract_ab, jost_solve, m_boundary_value,
    m_function, simpson_grid, spectral_density, transmission_from_m, DensitySamples,
};
use crate::spectral::band_partition;
use crate::transfer::{
    alpha_decompose, asymptotic_split, block_at, block_eigen, modified_jost, run_s_recursion, w_step, BlockOrder,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: Option<f64>,
    pub threshold: f64,
    pub pass: bool,
}

impl Check {
    /// Passes when `value <= threshold`; a missing value fails.
    pub fn at_most(name: &str, value: Option<f64>, threshold: f64) -> Self {
        let pass = value.is_some_and(|v| v <= threshold);
        Self { name: name.into(), value, threshold, pass }
    }

    pub fn at_least(name: &str, value: Option<f64>, threshold: f64) -> Self {
        let pass = value.is_some_and(|v| v >= threshold);
        Self { name: name.into(), value, threshold, pass }
    }

    pub fn flag(name: &str, pass: bool) -> Self {
        Self { name: name.into(), value: Some(if pass { 1.0 } else { 0.0 }), threshold: 1.0, pass }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub cell: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityCell {
    pub index: usize,
    pub n: usize,
    pub z: C64,
    pub potential: Potential,
    /// relative deviation from `det K_n` for the left-right, rewritten,
    /// right-left and symmetric forms
    pub variant_rel: [f64; 4],
    pub shift_identity_residual: f64,
    pub ratio_rel: f64,
    pub triviality_err: f64,
    /// `||(L_n - Lambda_n)^{-1}|| Im z / (1 + Im z)`
    pub resolvent_c: f64,
    /// `||Omega_n||_HS / ||delta v||_2`
    pub hs_ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitCell {
    pub potential: usize,
    pub z: C64,
    pub whole_line: C64,
    pub half_widths: Vec<usize>,
    pub ratios: Vec<C64>,
    pub gaps: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteCell {
    pub potential: usize,
    pub z: C64,
    pub jost: C64,
    pub b_jost: C64,
    pub det: C64,
    pub formula: C64,
    pub max_rel: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealBandCell {
    pub potential: usize,
    pub min_abs_a: f64,
    pub max_wronskian_err: f64,
    /// `1/|a|^2` against the m-function side at the raw offset
    pub m_side_raw: f64,
    /// same with the extrapolated boundary value
    pub m_side_extrapolated: f64,
    /// change of the extrapolated m-function side when the offset is halved
    pub offset_sensitivity: f64,
    /// same for the raw value
    pub raw_offset_sensitivity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyCell {
    pub n: i64,
    pub interval: usize,
    pub a: f64,
    pub b: f64,
    pub panels: usize,
    pub entropy: Option<f64>,
    pub refinement_change: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalSummary {
    pub interval: usize,
    pub a: f64,
    pub b: f64,
    pub min_entropy: Option<f64>,
    pub final_decrement: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutCell {
    pub cut: i64,
    pub interval: usize,
    pub entropy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub m: usize,
    pub ln_abs_s: f64,
    pub ln_abs_p: f64,
    pub abs_phi: f64,
    pub abs_nu: f64,
    /// Frobenius norm of `W_m`
    pub w_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JostCell {
    pub n: i64,
    pub ln_abs_f: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferRun {
    pub z: C64,
    pub max_det_err: f64,
    pub max_eig_product_err: f64,
    pub max_diag_err: f64,
    pub max_w_route_err: f64,
    pub max_alpha_sum_err: f64,
    pub step_residual: f64,
    pub reconstruction_residual: f64,
    pub split_residual: f64,
    pub w_l2: f64,
    pub max_abs_phi: f64,
    pub min_abs_phi: f64,
    pub max_abs_nu: f64,
    /// largest `|ln prod_{k..l} |1 + alpha||/sqrt(l - k)` over windows of length >= 16
    pub upsilon_alpha: f64,
    pub upsilon_delta: f64,
    pub growth_rate_min: f64,
    pub growth_rate_max: f64,
    /// `max_m (ln|S_m| - ln|p_m|) Im z`
    pub growth_c: f64,
    pub jost: Vec<JostCell>,
    /// `max_N ln|f_N| Im z`
    pub jost_c: f64,
    pub trace: Vec<TraceRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityReport {
    pub samples: DensitySamples,
    pub calibrated_constant: f64,
    pub mass: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanReport {
    pub schema_version: u32,
    pub version: String,
    pub kind: ExperimentKind,
    pub seed: u64,
    pub config: ExperimentConfig,
    pub checks: Vec<Check>,
    pub failures: Vec<CellFailure>,
    pub pass: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub identities: Vec<IdentityCell>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub limits: Vec<LimitCell>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub routes: Vec<RouteCell>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub real_band: Vec<RealBandCell>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub entropy: Vec<EntropyCell>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub entropy_summary: Vec<IntervalSummary>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub cut_curve: Vec<CutCell>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub transfer: Vec<TransferRun>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub density: Option<DensityReport>,
}

impl ScanReport {
    pub fn empty(config: &ExperimentConfig) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            version: env!("CARGO_PKG_VERSION").to_string(),
            kind: config.kind,
            seed: config.seed,
            config: config.clone(),
            checks: vec![],
            failures: vec![],
            pass: true,
            identities: vec![],
            limits: vec![],
            routes: vec![],
            real_band: vec![],
            entropy: vec![],
            entropy_summary: vec![],
            cut_curve: vec![],
            transfer: vec![],
            density: None,
        }
    }

    fn finish(mut self) -> Self {
        self.pass = self.failures.is_empty() && self.checks.iter().all(|c| c.pass);
        self
    }
}

pub fn cell_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Random potential with support inside `[lo_min, hi_max]` of length at most
/// `max_len` and values uniform in `[-amplitude, amplitude]`.
pub fn random_potential(rng: &mut ChaCha8Rng, lo_min: i64, hi_max: i64, max_len: usize, amplitude: f64) -> Potential {
    let len = rng.gen_range(1..=max_len.max(1).min((hi_max - lo_min + 1) as usize));
    let lo = rng.gen_range(lo_min..=hi_max - len as i64 + 1);
    let values = (0..len).map(|_| rng.gen_range(-amplitude..=amplitude)).collect();
    Potential { support_lo: lo, values, family: None }
}

fn max_fold(it: impl IntoIterator<Item = f64>) -> Option<f64> {
    it.into_iter().fold(None, |acc, x| Some(acc.map_or(x, |a: f64| if x.is_nan() || x > a { x } else { a })))
}

fn rel(a: C64, b: C64) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<ScanReport> {
    config.validate()?;
    let report = ScanReport::empty(config);
    let report = match config.kind {
        ExperimentKind::IdentitySuite => run_identities(config, report),
        ExperimentKind::RouteAgreement => run_routes(config, report),
        ExperimentKind::EntropyScan => run_entropy(config, report),
        ExperimentKind::TransferDiag => run_transfer(config, report),
        ExperimentKind::Density => run_density(config, report),
    }?;
    Ok(report.finish())
}

fn identity_cell(cfg: &ExperimentConfig, index: usize) -> Result<IdentityCell> {
    let mut rng = cell_rng(cfg.seed, index as u64);
    let n = rng.gen_range(1..=10usize);
    let half = n as i64;
    let max_len = if cfg.max_support == 0 { 2 * n + 1 } else { cfg.max_support };
    let v = random_potential(&mut rng, -half, half, max_len, cfg.amplitude);
    let z = C64::new(rng.gen_range(-2.5..=2.5), rng.gen_range(0.2..=2.0));
    let sys = build_cyclic(&v, z, n)?;
    let direct = crate::cxmat::lu_det(&sys.k)?;
    let mut variant_rel = [0.0; 4];
    for (slot, var) in variant_rel.iter_mut().zip([
        CyclicVariant::LeftRight,
        CyclicVariant::LeftRightRewritten,
        CyclicVariant::RightLeft,
        CyclicVariant::Symmetric,
    ]) {
        *slot = rel(cyclic_det_variant(&sys, var)?, direct);
    }
    let ratio = cyclic_ratio(&sys)?;
    let (dl, dr) = shift_triviality_dets(&v, z)?;
    let l_inv = (&sys.l - &sys.lambda).inverse()?;
    let dv = v.diff_l2();
    Ok(IdentityCell {
        index,
        n,
        z,
        variant_rel,
        shift_identity_residual: sys.shift_identity_residuals().into_iter().fold(0.0, f64::max),
        ratio_rel: rel(ratio.formula, ratio.direct),
        triviality_err: (dl - 1.0).norm().max((dr - 1.0).norm()),
        resolvent_c: op_norm(&l_inv) * z.im / (1.0 + z.im),
        hs_ratio: (dv > 0.0).then(|| hs_norm(&sys.omega) / dv),
        potential: v,
    })
}

fn limit_cell(cfg: &ExperimentConfig, potential: usize, z: C64) -> Result<LimitCell> {
    let mut rng = cell_rng(cfg.seed ^ 0x5eed_0001, potential as u64);
    let v = random_potential(&mut rng, -6, 6, 12, cfg.amplitude);
    let whole_line = transmission_det(&v, z)?;
    let mut ratios = vec![];
    for &n in &cfg.limit_ladder {
        let sys = build_cyclic(&v, z, n)?;
        ratios.push(crate::cxmat::lu_det(&sys.k)? / crate::cxmat::lu_det(&sys.k0)?);
    }
    let gaps = ratios.iter().map(|&r| rel(r, whole_line)).collect();
    Ok(LimitCell { potential, z, whole_line, half_widths: cfg.limit_ladder.clone(), ratios, gaps })
}

fn run_identities(cfg: &ExperimentConfig, mut report: ScanReport) -> Result<ScanReport> {
    let tol = &cfg.tolerances;
    let cells: Vec<_> = (0..cfg.samples).into_par_iter().map(|i| (i, identity_cell(cfg, i))).collect();
    for (i, c) in cells {
        match c {
            Ok(c) => report.identities.push(c),
            Err(e) => report.failures.push(CellFailure { cell: format!("triple {i}"), error: e.to_string() }),
        }
    }
    let ids = &report.identities;
    let worst_variant = max_fold(ids.iter().flat_map(|c| c.variant_rel));
    report.checks.push(Check::at_most("cyclic variants vs det K_n (rel)", worst_variant, tol.identity));
    report.checks.push(Check::at_most(
        "shift identities (abs, entrywise)",
        max_fold(ids.iter().map(|c| c.shift_identity_residual)),
        tol.shift_identity,
    ));
    report.checks.push(Check::at_most("divided cyclic formula (rel)", max_fold(ids.iter().map(|c| c.ratio_rel)), tol.identity));
    report.checks.push(Check::at_most(
        "shift-resolvent determinants equal 1",
        max_fold(ids.iter().map(|c| c.triviality_err)),
        tol.identity,
    ));
    let c_res = max_fold(ids.iter().map(|c| c.resolvent_c));
    report.checks.push(Check::flag("resolvent norm constant finite", c_res.is_some_and(f64::is_finite)));
    let c_hs = max_fold(ids.iter().filter_map(|c| c.hs_ratio));
    report.checks.push(Check::flag("HS(Omega)/||dv|| finite", c_hs.map_or(true, f64::is_finite)));

    if !cfg.limit_ladder.is_empty() {
        let zs = [C64::new(-1.2, 0.2), C64::new(0.3, 0.2), C64::new(1.5, 0.2)];
        let jobs: Vec<(usize, C64)> = (0..5).flat_map(|p| zs.iter().map(move |&z| (p, z))).collect();
        let cells: Vec<_> = jobs.par_iter().map(|&(p, z)| (p, z, limit_cell(cfg, p, z))).collect();
        for (p, z, c) in cells {
            match c {
                Ok(c) => report.limits.push(c),
                Err(e) => report.failures.push(CellFailure { cell: format!("limit {p} at {z}"), error: e.to_string() }),
            }
        }
        let final_gap = max_fold(report.limits.iter().filter_map(|c| c.gaps.last().copied()));
        report.checks.push(Check::at_most("cyclic ratio -> whole line, final gap", final_gap, tol.limit_gap));
        let monotone = report.limits.iter().all(|c| c.gaps.windows(2).all(|w| w[1] <= w[0] || w[1] <= 1e-13));
        report.checks.push(Check::flag("limit gaps non-increasing", monotone));
    }
    Ok(report)
}

fn route_potential(cfg: &ExperimentConfig, p: usize) -> Potential {
    let mut rng = cell_rng(cfg.seed, p as u64);
    random_potential(&mut rng, -6, 6, cfg.max_support, cfg.amplitude)
}

fn route_cell(v: &Potential, potential: usize, z: C64) -> Result<RouteCell> {
    let [j, d, f] = a_routes(v, z)?;
    let max_rel = rel(j.a, d.a).max(rel(f.a, d.a)).max(rel(f.a, j.a));
    Ok(RouteCell { potential, z, jost: j.a, b_jost: j.b.unwrap_or_default(), det: d.a, formula: f.a, max_rel })
}

fn real_band_cell(cfg: &ExperimentConfig, v: &Potential, potential: usize) -> Result<RealBandCell> {
    let (lo, hi) = v.nonzero_range().unwrap_or((1, 0));
    let moved = v.shifted_to(v.support_lo - lo + 1);
    let n = (hi - lo + 1).max(0);
    let mut min_abs_a = f64::INFINITY;
    let mut max_w: f64 = 0.0;
    for i in 0..41 {
        let x = -1.9 + 3.8 * i as f64 / 40.0;
        let r = extract_ab(&jost_solve(&moved, C64::new(x, 0.0), n)?)?;
        min_abs_a = min_abs_a.min(r.a.norm());
        max_w = max_w.max((r.a.norm_sqr() - r.b.unwrap_or_default().norm_sqr() - 1.0).abs());
    }
    let eps = cfg.axis_offset;
    let (mut raw, mut extrap, mut sens, mut raw_sens) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for x in [-1.7, -1.1, -0.4, 0.0, 0.5, 1.2, 1.8] {
        let a = extract_ab(&jost_solve(&moved, C64::new(x, 0.0), n)?)?.a;
        let lhs = 1.0 / a.norm_sqr();
        let m_raw = m_function(&moved, C64::new(x, eps))?;
        let m_half = m_function(&moved, C64::new(x, 0.5 * eps))?;
        let t_raw = transmission_from_m(m_raw, x);
        let t_bv = transmission_from_m(m_boundary_value(&moved, x, eps)?, x);
        let t_bv_half = transmission_from_m(m_boundary_value(&moved, x, 0.5 * eps)?, x);
        raw = raw.max((t_raw - lhs).abs() / lhs);
        extrap = extrap.max((t_bv - lhs).abs() / lhs);
        sens = sens.max((t_bv_half - t_bv).abs() / t_bv.abs());
        raw_sens = raw_sens.max((transmission_from_m(m_half, x) - t_raw).abs() / t_raw.abs());
    }
    Ok(RealBandCell {
        potential,
        min_abs_a,
        max_wronskian_err: max_w,
        m_side_raw: raw,
        m_side_extrapolated: extrap,
        offset_sensitivity: sens,
        raw_offset_sensitivity: raw_sens,
    })
}

fn run_routes(cfg: &ExperimentConfig, mut report: ScanReport) -> Result<ScanReport> {
    let tol = &cfg.tolerances;
    let grid = cfg.grid.as_ref().map(|g| g.points()).unwrap_or_default();
    let potentials: Vec<Potential> = (0..cfg.samples).map(|p| route_potential(cfg, p)).collect();
    let jobs: Vec<(usize, C64)> = (0..cfg.samples).flat_map(|p| grid.iter().map(move |&z| (p, z))).collect();
    let cells: Vec<_> = jobs.par_iter().map(|&(p, z)| (p, z, route_cell(&potentials[p], p, z))).collect();
    for (p, z, c) in cells {
        match c {
            Ok(c) => report.routes.push(c),
            Err(e) => report.failures.push(CellFailure { cell: format!("potential {p} at {z}"), error: e.to_string() }),
        }
    }
    let band: Vec<_> = (0..cfg.samples).into_par_iter().map(|p| (p, real_band_cell(cfg, &potentials[p], p))).collect();
    for (p, c) in band {
        match c {
            Ok(c) => report.real_band.push(c),
            Err(e) => report.failures.push(CellFailure { cell: format!("real band {p}"), error: e.to_string() }),
        }
    }
    report.checks.push(Check::at_most(
        "three a(z) routes agree (rel)",
        max_fold(report.routes.iter().map(|c| c.max_rel)),
        tol.route,
    ));
    let rb = &report.real_band;
    report.checks.push(Check::at_least(
        "|a| on the real band",
        rb.iter().map(|c| c.min_abs_a).reduce(f64::min),
        1.0 - tol.abs_a_floor,
    ));
    report.checks.push(Check::at_most(
        "|a|^2 - |b|^2 - 1 on the real band",
        max_fold(rb.iter().map(|c| c.max_wronskian_err)),
        tol.wronskian,
    ));
    report.checks.push(Check::at_most(
        "1/|a|^2 vs m-function side (extrapolated)",
        max_fold(rb.iter().map(|c| c.m_side_extrapolated)),
        tol.m_side,
    ));
    report.checks.push(Check::at_most(
        "near-axis offset halving sensitivity",
        max_fold(rb.iter().map(|c| c.offset_sensitivity)),
        tol.offset_sensitivity,
    ));
    Ok(report)
}

/// Simpson panels used for one interval at truncation `n`.
pub fn entropy_panels(cfg: &ExperimentConfig, n: i64) -> usize {
    (cfg.panels_per_site * n as usize).max(512)
}

/// Entropy on `interval` with `2 panels` panels, and its change against the
/// every-other-node rule on `panels` panels.
pub fn entropy_with_refinement(v: &Potential, n: i64, interval: (f64, f64), panels: usize) -> Result<(f64, f64)> {
    let panels = panels + panels % 2;
    let fine = spectral_density(v, &simpson_grid(interval.0, interval.1, 2 * panels), n)?;
    let coarse = DensitySamples {
        grid: fine.grid.iter().step_by(2).copied().collect(),
        rho_prime: fine.rho_prime.iter().step_by(2).copied().collect(),
        ..fine.clone()
    };
    let e_coarse = entropy_integral(&coarse, interval)?;
    let e_fine = entropy_integral(&fine, interval)?;
    Ok((e_fine, (e_fine - e_coarse).abs()))
}

fn run_entropy(cfg: &ExperimentConfig, mut report: ScanReport) -> Result<ScanReport> {
    let tol = &cfg.tolerances;
    let intervals = band_partition(cfg.q, cfg.delta)?.intervals();
    let n_max = *cfg.n_ladder.last().unwrap_or(&0);
    let v_full = gen_family(&cfg.family, n_max, cfg.seed)?;
    let jobs: Vec<(i64, usize)> =
        cfg.n_ladder.iter().flat_map(|&n| (0..intervals.len()).map(move |j| (n, j))).collect();
    let cells: Vec<_> = jobs
        .par_iter()
        .map(|&(n, j)| {
            let v = v_full.truncated(n);
            let panels = entropy_panels(cfg, n);
            let (a, b) = intervals[j];
            let res = entropy_with_refinement(&v, n, (a, b), panels);
            (n, j, a, b, panels, res)
        })
        .collect();
    for (n, j, a, b, panels, res) in cells {
        let (entropy, refinement_change) = match res {
            Ok((e, d)) => (Some(e), Some(d)),
            Err(e) => {
                report.failures.push(CellFailure { cell: format!("N = {n}, interval {j}"), error: e.to_string() });
                (None, None)
            }
        };
        report.entropy.push(EntropyCell { n, interval: j, a, b, panels, entropy, refinement_change });
    }
    for (j, &(a, b)) in intervals.iter().enumerate() {
        let seq: Vec<Option<f64>> = report.entropy.iter().filter(|c| c.interval == j).map(|c| c.entropy).collect();
        let all: Option<Vec<f64>> = seq.iter().copied().collect();
        let min_entropy = all.as_ref().and_then(|s| s.iter().copied().reduce(f64::min));
        let final_decrement = all.as_ref().and_then(|s| (s.len() >= 2).then(|| s[s.len() - 2] - s[s.len() - 1]));
        report.entropy_summary.push(IntervalSummary { interval: j, a, b, min_entropy, final_decrement });
    }
    for s in &report.entropy_summary {
        report.checks.push(Check::flag(
            &format!("interval {} entropy floor finite", s.interval),
            s.min_entropy.is_some_and(f64::is_finite),
        ));
        if cfg.n_ladder.len() >= 2 {
            report.checks.push(Check::at_most(
                &format!("interval {} |final decrement|", s.interval),
                s.final_decrement.map(f64::abs),
                tol.decrement,
            ));
        }
    }
    report.checks.push(Check::at_most(
        "grid doubling change",
        max_fold(report.entropy.iter().filter_map(|c| c.refinement_change)),
        tol.quadrature,
    ));

    let cuts: Vec<(i64, usize)> =
        cfg.cut_ladder.iter().flat_map(|&l| (0..intervals.len()).map(move |j| (l, j))).collect();
    let curve: Vec<_> = cuts
        .par_iter()
        .map(|&(l, j)| {
            let v = v_full.tail_cut(l);
            let (a, b) = intervals[j];
            let grid = simpson_grid(a, b, entropy_panels(cfg, n_max));
            let e = spectral_density(&v, &grid, n_max).and_then(|s| entropy_integral(&s, (a, b)));
            (l, j, e)
        })
        .collect();
    for (cut, interval, e) in curve {
        match e {
            Ok(x) => report.cut_curve.push(CutCell { cut, interval, entropy: Some(x) }),
            Err(err) => {
                report.failures.push(CellFailure { cell: format!("cut {cut}, interval {interval}"), error: err.to_string() });
                report.cut_curve.push(CutCell { cut, interval, entropy: None });
            }
        }
    }
    if !cfg.cut_ladder.is_empty() {
        report.checks.push(Check::flag(
            "truncation-stability curve finite",
            report.cut_curve.iter().all(|c| c.entropy.is_some_and(f64::is_finite)),
        ));
    }
    Ok(report)
}

fn upsilon(logs: &[f64]) -> f64 {
    let mut prefix = vec![0.0];
    for x in logs {
        prefix.push(prefix.last().unwrap() + x);
    }
    let mut best: f64 = 0.0;
    for k in 0..logs.len() {
        for l in (k + 16)..logs.len() {
            best = best.max((prefix[l + 1] - prefix[k]).abs() / ((l - k) as f64).sqrt());
        }
    }
    best
}

pub fn transfer_run(cfg: &ExperimentConfig, v: &Potential, z: C64) -> Result<TransferRun> {
    let q = cfg.q;
    let m_max = cfg.m_max;
    let mut eigs = Vec::with_capacity(m_max + 2);
    let (mut det_err, mut prod_err, mut diag_err): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for m in 0..=m_max + 1 {
        let b = block_at(v, q, m, z, BlockOrder::Forward, 0)?;
        let e = block_eigen(&b)?;
        det_err = det_err.max((b.det() - 1.0).norm()).max((crate::cxmat::lu_det(&b.t)? - 1.0).norm());
        prod_err = prod_err.max((e.lambda1 * e.lambda2 - 1.0).norm());
        let rebuilt = &(&e.u * &CMatrix::from_diag(&[e.lambda1, e.lambda2])) * &e.u_inv;
        diag_err = diag_err.max(rebuilt.max_abs_diff(&b.t) / b.t.max_abs());
        eigs.push(e);
    }
    let (mut w_err, mut a_err): (f64, f64) = (0.0, 0.0);
    let mut w_sq = 0.0;
    for pair in eigs.windows(2) {
        let ws = w_step(&pair[0], &pair[1])?;
        w_err = w_err.max(ws.w.max_abs_diff(&ws.w_direct));
        let t = alpha_decompose(&pair[0], &pair[1])?;
        a_err = a_err.max((t.iter().sum::<C64>() - ws.alpha).norm());
        w_sq += hs_norm(&ws.w).powi(2);
    }
    let run = run_s_recursion(v, q, z, m_max)?;
    let split = asymptotic_split(&run.states)?;
    let log_a: Vec<f64> = run.states.iter().map(|s| (1.0 + s.alpha).norm().ln()).collect();
    let log_d: Vec<f64> = run.states.iter().map(|s| (1.0 + s.delta).norm().ln()).collect();
    let rates: Vec<f64> = eigs.iter().map(|e| e.lambda1.norm().ln() / z.im).collect();
    let growth_c = run
        .states
        .iter()
        .zip(&split.ln_p)
        .map(|(s, p)| (s.ln_abs_s() - p.re) * z.im)
        .fold(f64::NEG_INFINITY, f64::max);
    let trace = run
        .states
        .iter()
        .enumerate()
        .map(|(i, s)| TraceRow {
            m: s.m,
            ln_abs_s: s.ln_abs_s(),
            ln_abs_p: split.ln_p[i].re,
            abs_phi: split.phi[i].norm(),
            abs_nu: split.nu[i].norm(),
            w_norm: hs_norm(&s.w),
        })
        .collect::<Vec<_>>();
    let mut jost = vec![];
    for &n in &cfg.n_ladder {
        let f = modified_jost(&v.truncated(n), q, z, n)?;
        jost.push(JostCell { n, ln_abs_f: f.ln_abs_f() });
    }
    let jost_c = jost.iter().map(|j| j.ln_abs_f * z.im).fold(f64::NEG_INFINITY, f64::max);
    Ok(TransferRun {
        z,
        max_det_err: det_err,
        max_eig_product_err: prod_err,
        max_diag_err: diag_err,
        max_w_route_err: w_err,
        max_alpha_sum_err: a_err,
        step_residual: run.step_residual,
        reconstruction_residual: run.reconstruction_residual,
        split_residual: split.reconstruction_residual,
        w_l2: w_sq.sqrt(),
        max_abs_phi: split.phi.iter().map(|x| x.norm()).fold(0.0, f64::max),
        min_abs_phi: split.phi.iter().map(|x| x.norm()).fold(f64::INFINITY, f64::min),
        max_abs_nu: split.nu.iter().map(|x| x.norm()).fold(0.0, f64::max),
        upsilon_alpha: upsilon(&log_a),
        upsilon_delta: upsilon(&log_d),
        growth_rate_min: rates.iter().copied().fold(f64::INFINITY, f64::min),
        growth_rate_max: rates.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        growth_c,
        jost,
        jost_c,
        trace,
    })
}

fn run_transfer(cfg: &ExperimentConfig, mut report: ScanReport) -> Result<ScanReport> {
    let tol = &cfg.tolerances;
    let len = (cfg.q * (cfg.m_max + 2)) as i64;
    let v = gen_family(&cfg.family, len.max(*cfg.n_ladder.last().unwrap_or(&0)), cfg.seed)?;
    let grid = cfg.grid.as_ref().map(|g| g.points()).unwrap_or_default();
    let runs: Vec<_> = grid.par_iter().map(|&z| (z, transfer_run(cfg, &v, z))).collect();
    for (z, r) in runs {
        match r {
            Ok(r) => report.transfer.push(r),
            Err(e) => report.failures.push(CellFailure { cell: format!("z = {z}"), error: e.to_string() }),
        }
    }
    let t = &report.transfer;
    let mx = |f: fn(&TransferRun) -> f64| max_fold(t.iter().map(f));
    report.checks.push(Check::at_most("det T = 1", mx(|r| r.max_det_err), tol.transfer));
    report.checks.push(Check::at_most("l1 l2 = 1", mx(|r| r.max_eig_product_err), tol.transfer));
    report.checks.push(Check::at_most("U diag U^-1 = T (rel)", mx(|r| r.max_diag_err), tol.diagonalization));
    report.checks.push(Check::at_most("W formula vs direct", mx(|r| r.max_w_route_err), 10.0 * tol.diagonalization));
    report.checks.push(Check::at_most("alpha five-term sum", mx(|r| r.max_alpha_sum_err), tol.diagonalization));
    report.checks.push(Check::at_most("S step vs block transfer (rel)", mx(|r| r.step_residual), tol.reconstruction));
    report.checks.push(Check::at_most(
        "U S vs three-term recursion (rel)",
        mx(|r| r.reconstruction_residual),
        tol.reconstruction,
    ));
    report.checks.push(Check::at_most("p (phi, nu) vs S (rel)", mx(|r| r.split_residual), tol.reconstruction));
    report.checks.push(Check::flag("modified Jost finite", t.iter().all(|r| r.jost_c.is_finite())));
    report.checks.push(Check::flag("ln|l1| / Im z positive", t.iter().all(|r| r.growth_rate_min > 0.0)));
    Ok(report)
}

fn run_density(cfg: &ExperimentConfig, mut report: ScanReport) -> Result<ScanReport> {
    let tol = &cfg.tolerances;
    let n = *cfg.n_ladder.last().unwrap_or(&0);
    let v = gen_family(&cfg.family, n, cfg.seed)?;
    let lo = -2.0 + cfg.delta;
    let hi = 2.0 - cfg.delta;
    let pts = cfg.band_points.max(2);
    let grid: Vec<f64> = (0..pts).map(|i| lo + (hi - lo) * i as f64 / (pts - 1) as f64).collect();
    let samples = spectral_density(&v, &grid, n)?;
    let calibrated = calibrate_normalization(2000, 4000)?;
    let mass = if v.is_zero() { Some(density_mass(&v, n, 4000)?) } else { None };
    report.checks.push(Check::flag(
        "density nonnegative and finite",
        samples.rho_prime.iter().all(|r| r.is_finite() && *r >= 0.0),
    ));
    report.checks.push(Check::at_most(
        "calibrated constant vs stored",
        Some((calibrated - samples.normalization_constant).abs() / samples.normalization_constant),
        tol.mass,
    ));
    if let Some(m) = mass {
        report.checks.push(Check::at_most("free density mass - 1", Some((m - 1.0).abs()), tol.mass));
    }
    report.density = Some(DensityReport { samples, calibrated_constant: calibrated, mass });
    Ok(report)
}
