//! Acceptance suite. Each test prints one `PASS`/`FAIL` line with the
//! measured quantity, its threshold and the wall time, then asserts.
//! Run with `cargo test --release --test acceptance -- --nocapture`.

use std::time::{Duration, Instant};

use jacobi_det::cxmat::{lu_det, CMatrix};
use jacobi_det::det::{cyclic_det_variant, detformula_rhs, transmission_det, CyclicVariant};
use jacobi_det::harness::run::{cell_rng, random_potential};
use jacobi_det::harness::{gen_family, run_experiment, ExperimentConfig, ExperimentKind, FamilyDescriptor};
use jacobi_det::lattice::{build_cyclic, Potential};
use jacobi_det::scattering::{
    calibrate_normalization, density_mass, density_moments, extract_ab, jost_record, jost_solve, m_boundary_value,
    m_function, transmission_from_m, truncation_spectral_weights, DENSITY_NORMALIZATION,
};
use jacobi_det::spectral::lambda_site;
use jacobi_det::transfer::{
    alpha_decompose, block_at, block_eigen, build_block, gronwall_bound, modified_jost, run_s_recursion, w_step,
    BlockOrder,
};
use num_complex::Complex64 as C64;
use rand::Rng;

fn verdict(name: &str, pass: bool, detail: &str, elapsed: Duration) {
    println!("{} {name}: {detail} [{:.2} s]", if pass { "PASS" } else { "FAIL" }, elapsed.as_secs_f64());
    assert!(pass, "{name}: {detail}");
}

fn rel(a: C64, b: C64) -> f64 {
    (a - b).norm() / b.norm()
}

#[test]
fn cyclic_algebra() {
    let start = Instant::now();
    let (mut worst_var, mut worst_shift): (f64, f64) = (0.0, 0.0);
    for i in 0..500u64 {
        let mut rng = cell_rng(101, i);
        let n = rng.gen_range(1..=10usize);
        let v = random_potential(&mut rng, -(n as i64), n as i64, 2 * n + 1, 0.5);
        let z = C64::new(rng.gen_range(-2.5..=2.5), rng.gen_range(0.2..=2.0));
        let sys = build_cyclic(&v, z, n).unwrap();
        let direct = lu_det(&sys.k).unwrap();
        for var in [
            CyclicVariant::LeftRight,
            CyclicVariant::LeftRightRewritten,
            CyclicVariant::RightLeft,
            CyclicVariant::Symmetric,
        ] {
            worst_var = worst_var.max(rel(cyclic_det_variant(&sys, var).unwrap(), direct));
        }
        // shift identities, rebuilt here from the raw matrices
        let a = &(&sys.l - &sys.lambda) * &(&sys.r - &sys.lambda);
        let b = &(&sys.r - &sys.lambda) * &(&sys.l - &sys.lambda);
        let lk = &sys.lambda * &sys.k;
        let kl = &sys.k * &sys.lambda;
        let ol = &sys.omega * &sys.l;
        let ro = &sys.r * &sys.omega;
        let zero = CMatrix::zeros(sys.dim());
        worst_shift = worst_shift
            .max((&(&a + &lk) + &ol).max_abs_diff(&zero))
            .max((&(&a + &kl) + &ro).max_abs_diff(&zero))
            .max((&(&b + &kl) - &ol).max_abs_diff(&zero));
    }
    let t = start.elapsed();
    let pass = worst_var <= 1e-10 && worst_shift <= 1e-12 && t < Duration::from_secs(30);
    verdict(
        "cyclic algebra",
        pass,
        &format!("max rel variant error {worst_var:.2e} (<= 1e-10), shift identities {worst_shift:.2e} (<= 1e-12), 500 triples"),
        t,
    );
}

#[test]
fn central_identity() {
    let start = Instant::now();
    let grid: Vec<C64> = (0..10)
        .flat_map(|j| {
            (0..20).map(move |i| C64::new(-1.9 + 3.8 * i as f64 / 19.0, 0.05 + 0.95 * j as f64 / 9.0))
        })
        .collect();
    let mut worst: f64 = 0.0;
    for p in 0..20u64 {
        let mut rng = cell_rng(202, p);
        let v = random_potential(&mut rng, -6, 6, 12, 0.3);
        for &z in &grid {
            let formula = detformula_rhs(&v, z).unwrap().product;
            let det = transmission_det(&v, z).unwrap();
            let jost = jost_record(&v, z).unwrap().a;
            worst = worst.max(rel(formula, det)).max(rel(jost, det)).max(rel(formula, jost));
        }
    }
    let t = start.elapsed();
    verdict(
        "central identity",
        worst <= 1e-8 && t < Duration::from_secs(120),
        &format!("max pairwise rel error {worst:.2e} (<= 1e-8) over 20 potentials x 200 z"),
        t,
    );
}

#[test]
fn finite_to_infinite_limit() {
    let start = Instant::now();
    let mut finals = vec![];
    let mut monotone = true;
    for p in 0..5u64 {
        let mut rng = cell_rng(303, p);
        let v = random_potential(&mut rng, -6, 6, 12, 0.3);
        for re in [-1.2, 0.3, 1.5] {
            let z = C64::new(re, 0.2);
            let whole = transmission_det(&v, z).unwrap();
            let gaps: Vec<f64> = [40usize, 80, 160]
                .iter()
                .map(|&n| {
                    let sys = build_cyclic(&v, z, n).unwrap();
                    rel(lu_det(&sys.k).unwrap() / lu_det(&sys.k0).unwrap(), whole)
                })
                .collect();
            monotone &= gaps[1] <= gaps[0].max(1e-13) && gaps[2] <= gaps[1].max(1e-13);
            finals.push(gaps[2]);
        }
    }
    let worst = finals.iter().copied().fold(0.0, f64::max);
    verdict(
        "finite-to-infinite limit",
        worst <= 1e-6 && monotone,
        &format!("final gap at n = 160 {worst:.2e} (<= 1e-6), gaps non-increasing: {monotone}"),
        start.elapsed(),
    );
}

#[test]
fn scattering_facts() {
    let start = Instant::now();
    let mut min_a = f64::INFINITY;
    let mut wronskian: f64 = 0.0;
    let mut m_side_raw: f64 = 0.0;
    let mut m_side: f64 = 0.0;
    for p in 0..10u64 {
        let mut rng = cell_rng(404, p);
        let v = random_potential(&mut rng, 1, 12, 12, 0.3).shifted_to(1);
        let n = v.support_hi();
        for i in 0..=60 {
            let x = -1.95 + 3.9 * i as f64 / 60.0;
            let r = extract_ab(&jost_solve(&v, C64::new(x, 0.0), n).unwrap()).unwrap();
            min_a = min_a.min(r.a.norm());
            wronskian = wronskian.max((r.a.norm_sqr() - r.b.unwrap().norm_sqr() - 1.0).abs());
        }
        for i in 0..9 {
            let x = -1.8 + 3.6 * i as f64 / 8.0;
            let a = extract_ab(&jost_solve(&v, C64::new(x, 0.0), n).unwrap()).unwrap().a;
            let lhs = 1.0 / a.norm_sqr();
            let raw = transmission_from_m(m_function(&v, C64::new(x, 1e-4)).unwrap(), x);
            let bv = transmission_from_m(m_boundary_value(&v, x, 1e-4).unwrap(), x);
            m_side_raw = m_side_raw.max((raw - lhs).abs() / lhs);
            m_side = m_side.max((bv - lhs).abs() / lhs);
        }
    }
    let pass = min_a >= 1.0 - 1e-6 && wronskian <= 1e-8 && m_side <= 1e-4;
    verdict(
        "scattering facts",
        pass,
        &format!(
            "min |a| {min_a:.8} (>= 1 - 1e-6), max ||a|^2 - |b|^2 - 1| {wronskian:.2e} (<= 1e-8), \
             1/|a|^2 vs m-function side {m_side:.2e} (<= 1e-4; unextrapolated value at Im z = 1e-4: {m_side_raw:.2e})"
        ),
        start.elapsed(),
    );
}

#[test]
fn free_case_calibration() {
    let start = Instant::now();
    let constant = calibrate_normalization(2000, 4000).unwrap();
    let const_err = (constant - DENSITY_NORMALIZATION).abs() / DENSITY_NORMALIZATION;
    let free = Potential::zero();
    let mass = density_mass(&free, 0, 4000).unwrap();
    let moments = density_moments(&free, 0, 4000, 5).unwrap();
    // moments of the truncation's spectral measure, (J^p)_{11}
    let (nodes, weights) = truncation_spectral_weights(&free, 2000).unwrap();
    let oracle: Vec<f64> =
        (0..5).map(|p| nodes.iter().zip(&weights).map(|(x, w)| w * x.powi(p)).sum::<f64>()).collect();
    let moment_err = (1..5)
        .map(|p| (moments[p] - oracle[p]).abs() / oracle[p].abs().max(1.0))
        .fold(0.0, f64::max);
    let pass = const_err <= 1e-3 && (mass - 1.0).abs() <= 1e-3 && moment_err <= 0.01;
    verdict(
        "free-case calibration",
        pass,
        &format!(
            "constant {constant:.10} vs stored {DENSITY_NORMALIZATION:.10}, mass {mass:.10} (|m - 1| <= 1e-3), \
             moments 1..4 {:?} vs oracle {:?}, worst {moment_err:.2e} (<= 1%)",
            &moments[1..].iter().map(|m| format!("{m:.6}")).collect::<Vec<_>>(),
            &oracle[1..].iter().map(|m| format!("{m:.6}")).collect::<Vec<_>>()
        ),
        start.elapsed(),
    );
}

fn scalar_recursion(v: &Potential, z: C64, k: C64, sites: usize) -> Vec<(C64, C64, f64)> {
    // (x_{n+1}, x_n) normalized, with the accumulated log scale, at n = 0..=sites
    let (mut x1, mut x0) = (k.inv(), C64::new(1.0, 0.0));
    let mut ln_s = 0.0;
    let mut out = vec![(x1, x0, ln_s)];
    for n in 1..=sites as i64 {
        let x2 = (z - v.get(n)) * x1 - x0;
        x0 = x1;
        x1 = x2;
        let s = x1.norm().max(x0.norm());
        x1 /= s;
        x0 /= s;
        ln_s += s.ln();
        out.push((x1, x0, ln_s));
    }
    out
}

#[test]
fn transfer_machinery() {
    let start = Instant::now();
    let mut rng = cell_rng(505, 0);
    let (mut det_err, mut prod_err, mut diag_err, mut alpha_err): (f64, f64, f64, f64) = (0.0, 0.0, 0.0, 0.0);
    for _ in 0..10_000 {
        let q = rng.gen_range(1..=4usize);
        let z = C64::new(rng.gen_range(-2.5..2.5), rng.gen_range(0.05..2.0));
        let vb: Vec<f64> = (0..q).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let vb2: Vec<f64> = vb.iter().map(|x| x + rng.gen_range(-0.05..0.05)).collect();
        let b = build_block(&vb, z).unwrap();
        let t = &b.t;
        let scale = t.max_abs().powi(2).max(1.0);
        det_err = det_err.max((t[(0, 0)] * t[(1, 1)] - t[(0, 1)] * t[(1, 0)] - 1.0).norm() / scale);
        let e = block_eigen(&b).unwrap();
        prod_err = prod_err.max((e.lambda1 * e.lambda2 - 1.0).norm());
        let rebuilt = &(&e.u * &CMatrix::from_diag(&[e.lambda1, e.lambda2])) * &e.u_inv;
        diag_err = diag_err.max(rebuilt.max_abs_diff(t) / t.max_abs());
        let e2 = block_eigen(&build_block(&vb2, z).unwrap()).unwrap();
        let terms = alpha_decompose(&e, &e2).unwrap();
        let alpha = w_step(&e, &e2).unwrap().alpha;
        alpha_err = alpha_err.max((terms.iter().sum::<C64>() - alpha).norm() / (1.0 + alpha.norm()));
    }

    // X_{mq} = U_m S_m against an independent scalar three-term recursion
    let mut recursion: f64 = 0.0;
    let desc = FamilyDescriptor::RandomL2 { q: 2, amplitude: 0.05, beta: 0.8 };
    for (q, desc) in [(2usize, desc), (3, FamilyDescriptor::RandomL2 { q: 3, amplitude: 0.05, beta: 0.8 })] {
        let v = gen_family(&desc, (q * 2002) as i64, 17).unwrap();
        for z in [C64::new(0.5, 0.05), C64::new(1.3, 0.3), C64::new(-1.5, 0.8)] {
            let k = lambda_site(z, 0.0).unwrap();
            let run = run_s_recursion(&v, q, z, 2000).unwrap();
            let xs = scalar_recursion(&v, z, k, q * 2000);
            for st in &run.states {
                let u = block_eigen(&block_at(&v, q, st.m, z, BlockOrder::Forward, 0).unwrap()).unwrap().u;
                let us = [u[(0, 0)] * st.s[0] + u[(0, 1)] * st.s[1], u[(1, 0)] * st.s[0] + u[(1, 1)] * st.s[1]];
                let (x1, x0, ln_x) = xs[st.m * q];
                let shift = (st.ln_scale - ln_x).exp();
                let d = ((us[0] * shift - x1).norm_sqr() + (us[1] * shift - x0).norm_sqr()).sqrt();
                recursion = recursion.max(d / (x1.norm_sqr() + x0.norm_sqr()).sqrt());
            }
        }
    }
    let pass = det_err <= 1e-12 && prod_err <= 1e-12 && alpha_err <= 1e-10 && diag_err <= 1e-10 && recursion <= 1e-9;
    verdict(
        "transfer machinery",
        pass,
        &format!(
            "10^4 blocks: det T - 1 {det_err:.2e}, l1 l2 - 1 {prod_err:.2e} (<= 1e-12), alpha sum {alpha_err:.2e}, \
             U diag U^-1 {diag_err:.2e} (<= 1e-10); X = U S vs three-term recursion over m <= 2000 {recursion:.2e} (<= 1e-9)"
        ),
        start.elapsed(),
    );
}

#[test]
fn gronwall_lemma() {
    let start = Instant::now();
    let mut violations = 0usize;
    let mut rng = cell_rng(606, 0);
    for _ in 0..1000 {
        let len = rng.gen_range(1..=60usize);
        let scale: f64 = rng.gen_range(0.0..1.5);
        let v: Vec<f64> = (0..len).map(|_| if rng.gen_bool(0.1) { 0.0 } else { rng.gen_range(0.0..scale.max(1e-3)) }).collect();
        // equality dynamics x_0 = 1, x_{n+1} = sum_{j <= n} v_j x_j, computed directly
        let mut x = vec![1.0f64];
        for n in 0..len {
            x.push((0..=n).map(|j| v[j] * x[j]).sum());
        }
        let bound = gronwall_bound(&v).unwrap();
        violations += x.iter().zip(&bound).filter(|(x, b)| x > b).count();
    }
    verdict(
        "Gronwall lemma",
        violations == 0,
        &format!("{violations} violations of the exact bound over 10^3 sequences"),
        start.elapsed(),
    );
}

#[test]
fn entropy_harness() {
    let start = Instant::now();
    let families = [vec![0.1], vec![0.1, -0.1], vec![0.1, -0.1, 0.05]];
    let mut lines = vec![];
    let mut pass = true;
    for c in families {
        let q = c.len();
        let mut cfg = ExperimentConfig::default_for(ExperimentKind::EntropyScan);
        cfg.family = FamilyDescriptor::PeriodicModulated { c };
        cfg.q = q;
        cfg.cut_ladder = vec![];
        let report = run_experiment(&cfg).unwrap();
        pass &= report.pass;
        for s in &report.entropy_summary {
            lines.push(format!(
                "q = {q} [{:.3}, {:.3}]: floor {:.6}, final decrement {:.2e}",
                s.a,
                s.b,
                s.min_entropy.unwrap_or(f64::NAN),
                s.final_decrement.unwrap_or(f64::NAN)
            ));
        }
        let worst_refine = report.entropy.iter().filter_map(|c| c.refinement_change).fold(0.0, f64::max);
        lines.push(format!("q = {q}: grid doubling change {worst_refine:.2e} (<= 1e-4)"));
    }
    let t = start.elapsed();
    for l in &lines {
        println!("  {l}");
    }
    verdict(
        "entropy harness",
        pass && t < Duration::from_secs(600),
        "floors finite, |final decrement| < 1e-2 on every interval, N = 2^5..2^12",
        t,
    );
}

#[test]
fn modified_jost_boundedness() {
    let start = Instant::now();
    let desc = FamilyDescriptor::RandomL2 { q: 2, amplitude: 0.05, beta: 0.8 };
    let v = gen_family(&desc, 1 << 12, 23).unwrap();
    let mut c: f64 = f64::NEG_INFINITY;
    let mut finite = true;
    for j in 0..3 {
        for i in 0..4 {
            let z = C64::new(0.3 + 1.4 * i as f64 / 3.0, 0.05 + 0.75 * j as f64 / 2.0);
            let mut max_ln: f64 = f64::NEG_INFINITY;
            for p in 5..=12 {
                let n = 1i64 << p;
                let f = modified_jost(&v.truncated(n), 2, z, n).unwrap();
                finite &= f.ln_abs_f().is_finite();
                max_ln = max_ln.max(f.ln_abs_f());
            }
            c = c.max(max_ln * z.im);
        }
    }
    verdict(
        "modified Jost boundedness",
        finite && c.is_finite(),
        &format!("max_N |f_N| finite on the 4 x 3 grid, fitted C = max ln|f_N| Im z = {c:.4e}"),
        start.elapsed(),
    );
}
