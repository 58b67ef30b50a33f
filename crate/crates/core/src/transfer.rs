//! q-block transfer matrices and the diagonalized recursion.
//!
//! With `X_n = (x_{n+1}, x_n)` the Schrödinger recursion becomes
//! `X_n = (M + V_n) X_{n-1}`, where `M = [[z, -1], [1, 0]]` is the one-step
//! matrix and `V_n = diag(-v_n, 0)`. Grouping `q` steps gives the block
//! `T_m = (M + V_{mq+q}) ... (M + V_{mq+1}) = [[P~, Q~], [P, Q]]`.
//!
//! `T_m = U_m diag(lambda_1, lambda_2) U_m^{-1}` with `U_m` built from
//! `P_m, Q_m` and the eigenvalues, and `Z_m = X_{mq} = U_m S_m` turns the
//! recursion into `S_{m+1} = (I + W_m) diag(lambda_1, lambda_2) S_m`.
//!
//! `lambda_1` is the expanding eigenvalue: the larger modulus off the band,
//! and on the real band the boundary value of the expanding eigenvalue from
//! `Im z > 0`, selected by the sign of `d tr T / dz`.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::cxmat::{quadratic_roots_ordered, CMatrix, EIG_DEGENERACY_TOL};
use crate::error::{Error, Result};
use crate::lattice::Potential;
use crate::spectral::lambda_site;

const ONE: C64 = C64::new(1.0, 0.0);
const ZERO: C64 = C64::new(0.0, 0.0);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferBlock {
    pub q: usize,
    pub z: C64,
    pub t: CMatrix,
    pub p_tilde: C64,
    pub q_tilde: C64,
    pub p: C64,
    pub q_poly: C64,
    /// `d tr T / dz`
    pub dtrace: C64,
    pub block_potential: Vec<f64>,
}

impl TransferBlock {
    pub fn trace(&self) -> C64 {
        self.p_tilde + self.q_poly
    }

    pub fn det(&self) -> C64 {
        self.p_tilde * self.q_poly - self.p * self.q_tilde
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockOrder {
    /// Block `m` holds `v_{mq+1}, ..., v_{mq+q}`.
    Forward,
    /// Blocks of the reflected potential `u_j = v_{N+1-j}`, `N` the window end.
    Backward,
}

pub fn build_block(v_block: &[f64], z: C64) -> Result<TransferBlock> {
    if v_block.is_empty() {
        return Err(Error::InvalidInput("a block needs at least one site".into()));
    }
    if let Some(bad) = v_block.iter().find(|x| !x.is_finite()) {
        return Err(Error::InvalidInput(format!("block potential {bad} is not finite")));
    }
    // running product and its z-derivative; d(M + V)/dz = [[1, 0], [0, 0]]
    let mut t = [ONE, ZERO, ZERO, ONE];
    let mut dt = [ZERO; 4];
    for &v in v_block {
        let (a, b, c, d) = (z - v, -ONE, ONE, ZERO);
        let nt = [a * t[0] + b * t[2], a * t[1] + b * t[3], c * t[0] + d * t[2], c * t[1] + d * t[3]];
        let ndt = [
            t[0] + a * dt[0] + b * dt[2],
            t[1] + a * dt[1] + b * dt[3],
            c * dt[0] + d * dt[2],
            c * dt[1] + d * dt[3],
        ];
        t = nt;
        dt = ndt;
    }
    Ok(TransferBlock {
        q: v_block.len(),
        z,
        t: CMatrix::mat2(t[0], t[1], t[2], t[3]),
        p_tilde: t[0],
        q_tilde: t[1],
        p: t[2],
        q_poly: t[3],
        dtrace: dt[0] + dt[3],
        block_potential: v_block.to_vec(),
    })
}

/// Block `m` of `v` in the requested order; `window_end` is `N` for the
/// backward order and ignored otherwise.
pub fn block_values(v: &Potential, q: usize, m: usize, order: BlockOrder, window_end: i64) -> Vec<f64> {
    let start = (m * q) as i64;
    (1..=q as i64)
        .map(|i| match order {
            BlockOrder::Forward => v.get(start + i),
            BlockOrder::Backward => v.get(window_end + 1 - (start + i)),
        })
        .collect()
}

pub fn block_at(v: &Potential, q: usize, m: usize, z: C64, order: BlockOrder, window_end: i64) -> Result<TransferBlock> {
    build_block(&block_values(v, q, m, order, window_end), z)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockEigen {
    pub block: TransferBlock,
    pub lambda1: C64,
    pub lambda2: C64,
    /// `tr T - (k^q + k^{-q})`
    pub d_value: C64,
    pub u: CMatrix,
    pub u_inv: CMatrix,
}

impl BlockEigen {
    pub fn gap(&self) -> C64 {
        self.lambda1 - self.lambda2
    }
}

pub fn block_eigen(block: &TransferBlock) -> Result<BlockEigen> {
    block_eigen_with_tol(block, EIG_DEGENERACY_TOL)
}

pub fn block_eigen_with_tol(block: &TransferBlock, tol: f64) -> Result<BlockEigen> {
    let z = block.z;
    let tr = block.trace();
    let (big, small) = quadratic_roots_ordered(tr, ONE);
    let gap = (big - small).norm();
    if gap < tol {
        return Err(Error::DegenerateEigenpair { gap, tol });
    }
    let unimodular = (big.norm() - small.norm()).abs() <= 1e-13 * big.norm().max(1.0);
    let (l1, l2) = if z.im == 0.0 && unimodular {
        let dir = block.dtrace.re;
        if dir == 0.0 {
            return Err(Error::DegenerateEigenpair { gap: 0.0, tol });
        }
        if (big.im > 0.0) == (dir > 0.0) {
            (big, small)
        } else {
            (small, big)
        }
    } else {
        (big, small)
    };
    let k = lambda_site(z, 0.0)?;
    let qi = block.q as i32;
    let d_value = tr - (k.powi(qi) + k.powi(-qi));
    let (p, q) = (block.p, block.q_poly);
    if p.norm() <= 1e-300 {
        return Err(Error::Singular(format!("P vanishes for the block at z = {z}")));
    }
    let u = CMatrix::mat2(l1 - q, l2 - q, p, p);
    let s = (p * (l1 - l2)).inv();
    let u_inv = CMatrix::mat2(p * s, (q - l2) * s, -p * s, (l1 - q) * s);
    Ok(BlockEigen { block: block.clone(), lambda1: l1, lambda2: l2, d_value, u, u_inv })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WStep {
    /// `U_{m+1}^{-1}(U_m - U_{m+1})` from the explicit entry formulas
    pub w: CMatrix,
    /// the same product by LU inversion and matrix multiplication
    pub w_direct: CMatrix,
    pub alpha: C64,
    pub beta: C64,
    pub gamma: C64,
    pub delta: C64,
}

pub fn w_step(e_prev: &BlockEigen, e_next: &BlockEigen) -> Result<WStep> {
    let (p0, q0) = (e_prev.block.p, e_prev.block.q_poly);
    let (p1, q1) = (e_next.block.p, e_next.block.q_poly);
    let (a1, a2) = (e_prev.lambda1, e_prev.lambda2);
    let (b1, b2) = (e_next.lambda1, e_next.lambda2);
    let denom = p1 * (b1 - b2);
    if denom.norm() <= 1e-300 {
        return Err(Error::Singular(format!("P_(m+1) (l1 - l2) vanishes at z = {}", e_next.block.z)));
    }
    let s = denom.inv();
    let ratio = CMatrix::mat2(
        (p1 * (a1 - q0) - p0 * (b2 - q1)) * s,
        (p1 * (a2 - q0) - p0 * (b2 - q1)) * s,
        (-p1 * (a1 - q0) + p0 * (b1 - q1)) * s,
        (-p1 * (a2 - q0) + p0 * (b1 - q1)) * s,
    );
    let w = &ratio - &CMatrix::identity(2);
    let w_direct = &e_next.u.inverse()? * &(&e_prev.u - &e_next.u);
    Ok(WStep { alpha: w[(0, 0)], beta: w[(0, 1)], gamma: w[(1, 0)], delta: w[(1, 1)], w, w_direct })
}

/// The five terms with `1 + alpha_m = 1 + t^1 + ... + t^5`.
pub fn alpha_decompose(e_prev: &BlockEigen, e_next: &BlockEigen) -> Result<[C64; 5]> {
    let (p0, q0, pt0) = (e_prev.block.p, e_prev.block.q_poly, e_prev.block.p_tilde);
    let (p1, q1, pt1) = (e_next.block.p, e_next.block.q_poly, e_next.block.p_tilde);
    let g0 = e_prev.gap();
    let g1 = e_next.gap();
    if (p1 * g1).norm() <= 1e-300 {
        return Err(Error::Singular(format!("P_(m+1) (l1 - l2) vanishes at z = {}", e_next.block.z)));
    }
    let dp = p1 - p0;
    Ok([
        (p0 * q1 - p1 * q0) / (p1 * g1),
        -dp / (2.0 * p1),
        dp * (pt1 + q1) / (2.0 * p1 * g1),
        -(pt1 - pt0 + q1 - q0) / (2.0 * g1),
        -(g1 - g0) / (2.0 * g1),
    ])
}

/// One step of the diagonalized recursion. `s` is stored as a unit-size
/// direction with real log scale: `S_m = s * exp(ln_scale)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticState {
    pub m: usize,
    pub s: [C64; 2],
    pub ln_scale: f64,
    pub kappa: C64,
    pub w: CMatrix,
    pub alpha: C64,
    pub beta: C64,
    pub gamma: C64,
    pub delta: C64,
    /// `ln prod_{j<m} kappa_j (1 + alpha_j)`, a complex log
    pub ln_p: C64,
}

impl AsymptoticState {
    pub fn ln_abs_s(&self) -> f64 {
        (self.s[0].norm_sqr() + self.s[1].norm_sqr()).sqrt().ln() + self.ln_scale
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SRecursion {
    pub q: usize,
    pub z: C64,
    pub states: Vec<AsymptoticState>,
    /// largest `|T_m U_m S_m - U_{m+1} S_{m+1}| / |U_{m+1} S_{m+1}|`
    pub step_residual: f64,
    /// largest `|U_m S_m - X_{mq}| / |X_{mq}|`, `X` from the scalar three-term recursion
    pub reconstruction_residual: f64,
}

fn norm2(v: &[C64; 2]) -> f64 {
    (v[0].norm_sqr() + v[1].norm_sqr()).sqrt()
}

fn apply(m: &CMatrix, v: &[C64; 2]) -> [C64; 2] {
    [m[(0, 0)] * v[0] + m[(0, 1)] * v[1], m[(1, 0)] * v[0] + m[(1, 1)] * v[1]]
}

/// Runs `S_{m+1} = (I + W_m) diag(l_1, l_2) S_m` from `S_0 = U_0^{-1} X_0`,
/// `X_0 = (k^{-1}, 1)`, for `m = 0..=m_max`.
pub fn run_s_recursion(v: &Potential, q: usize, z: C64, m_max: usize) -> Result<SRecursion> {
    run_s_recursion_ordered(v, q, z, m_max, BlockOrder::Forward, 0)
}

pub fn run_s_recursion_ordered(
    v: &Potential,
    q: usize,
    z: C64,
    m_max: usize,
    order: BlockOrder,
    window_end: i64,
) -> Result<SRecursion> {
    if q == 0 {
        return Err(Error::InvalidInput("q must be positive".into()));
    }
    let k = lambda_site(z, 0.0)?;
    let mut eig = block_eigen(&block_at(v, q, 0, z, order, window_end)?)
        .map_err(|e| Error::NonConvergence(format!("block 0: {e}")))?;
    let x0 = [k.inv(), ONE];
    let mut s = apply(&eig.u_inv, &x0);
    let mut ln_scale: f64 = 0.0;
    let mut ln_p = ZERO;
    // scalar recursion state, same scaling scheme
    let mut xs = x0;
    let mut ln_x: f64 = 0.0;
    let mut states = Vec::with_capacity(m_max + 1);
    let mut step_residual: f64 = 0.0;
    let mut recon: f64 = 0.0;
    for m in 0..=m_max {
        let next = block_eigen(&block_at(v, q, m + 1, z, order, window_end)?)
            .map_err(|e| Error::NonConvergence(format!("block {}: {e}", m + 1)))?;
        let ws = w_step(&eig, &next)?;
        let kappa = eig.lambda1;

        let us = apply(&eig.u, &s);
        let rel = {
            let shift = (ln_scale - ln_x).exp();
            let d = [us[0] * shift - xs[0], us[1] * shift - xs[1]];
            norm2(&d) / norm2(&xs)
        };
        recon = recon.max(rel);

        states.push(AsymptoticState {
            m,
            s,
            ln_scale,
            kappa,
            w: ws.w.clone(),
            alpha: ws.alpha,
            beta: ws.beta,
            gamma: ws.gamma,
            delta: ws.delta,
            ln_p,
        });

        let lam = [eig.lambda1 * s[0], eig.lambda2 * s[1]];
        let mut s_next = [lam[0] + ws.w[(0, 0)] * lam[0] + ws.w[(0, 1)] * lam[1], lam[1] + ws.w[(1, 0)] * lam[0] + ws.w[(1, 1)] * lam[1]];
        let via_t = apply(&eig.block.t, &us);
        let via_u = apply(&next.u, &s_next);
        let d = [via_t[0] - via_u[0], via_t[1] - via_u[1]];
        step_residual = step_residual.max(norm2(&d) / norm2(&via_u).max(f64::MIN_POSITIVE));

        let factor = kappa * (ONE + ws.alpha);
        if factor.norm() == 0.0 {
            return Err(Error::VanishingNormalizer);
        }
        ln_p += factor.ln();
        let size = norm2(&s_next);
        if size == 0.0 || !size.is_finite() {
            return Err(Error::NonConvergence(format!("S recursion left the finite range at m = {m}")));
        }
        s_next = [s_next[0] / size, s_next[1] / size];
        ln_scale += size.ln();
        s = s_next;

        xs = apply(&eig.block.t, &xs);
        let xsize = norm2(&xs);
        xs = [xs[0] / xsize, xs[1] / xsize];
        ln_x += xsize.ln();

        eig = next;
    }
    Ok(SRecursion { q, z, states, step_residual, reconstruction_residual: recon })
}

/// `S_n = p_n (phi_n, nu_n)` with `p_n = prod_{j<n} kappa_j (1 + alpha_j)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticSplit {
    pub ln_p: Vec<C64>,
    pub phi: Vec<C64>,
    pub nu: Vec<C64>,
    /// largest `|p (phi, nu) - S| / |S|` against the recursion states
    pub reconstruction_residual: f64,
}

pub fn asymptotic_split(states: &[AsymptoticState]) -> Result<AsymptoticSplit> {
    let Some(first) = states.first() else {
        return Ok(AsymptoticSplit { ln_p: vec![], phi: vec![], nu: vec![], reconstruction_residual: 0.0 });
    };
    let scale0 = first.ln_scale.exp();
    let mut phi = vec![first.s[0] * scale0];
    let mut nu = vec![first.s[1] * scale0];
    let mut ln_p = vec![ZERO];
    for st in &states[..states.len() - 1] {
        let kn = st.kappa.norm();
        if kn <= 1.0 {
            return Err(Error::KappaModulus(kn));
        }
        let (f, n) = (*phi.last().unwrap(), *nu.last().unwrap());
        let a1 = ONE + st.alpha;
        let k2 = st.kappa * st.kappa;
        phi.push(f + st.beta * n / (k2 * a1));
        nu.push(st.gamma * f / a1 + (ONE + st.delta) * n / (k2 * a1));
        ln_p.push(*ln_p.last().unwrap() + (st.kappa * a1).ln());
    }
    let mut worst: f64 = 0.0;
    for (i, st) in states.iter().enumerate() {
        // compare directions after removing the common scale
        let shift = (ln_p[i] - st.ln_scale).exp();
        let d = [phi[i] * shift - st.s[0], nu[i] * shift - st.s[1]];
        worst = worst.max(norm2(&d) / norm2(&st.s));
    }
    Ok(AsymptoticSplit { ln_p, phi, nu, reconstruction_residual: worst })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModifiedJost {
    pub z: C64,
    pub n_trunc: i64,
    /// `ln x_0` of the Jost solution (complex log)
    pub ln_x0: C64,
    /// `ln (k^N prod_{j<m} (1 + alpha_j) kappa_j)` for the reflected potential
    pub ln_normalizer: C64,
    pub f: C64,
}

impl ModifiedJost {
    pub fn ln_abs_f(&self) -> f64 {
        (self.ln_x0 - self.ln_normalizer).re
    }
}

/// `f_N = x_0 / (k^N prod_{j<m} (1 + alpha_j) kappa_j)`, the block data taken
/// from the reflected potential (backward order) and `N = q m`.
pub fn modified_jost(v: &Potential, q: usize, z: C64, n_trunc: i64) -> Result<ModifiedJost> {
    if q == 0 || n_trunc <= 0 || n_trunc % q as i64 != 0 {
        return Err(Error::InvalidInput(format!("N = {n_trunc} must be a positive multiple of q = {q}")));
    }
    let m = (n_trunc / q as i64) as usize;
    let sol = crate::scattering::jost_solve(v, z, n_trunc)?;
    let x0s = sol.scaled(0);
    if x0s.norm() == 0.0 {
        return Err(Error::ZeroJost(z.re));
    }
    let ln_x0 = x0s.ln() + sol.log_scale;
    let k = sol.k;
    let mut ln_norm = k.ln() * n_trunc as f64;
    let mut eig = block_eigen(&block_at(v, q, 0, z, BlockOrder::Backward, n_trunc)?)?;
    for j in 0..m {
        let next = block_eigen(&block_at(v, q, j + 1, z, BlockOrder::Backward, n_trunc)?)?;
        let ws = w_step(&eig, &next)?;
        let factor = (ONE + ws.alpha) * eig.lambda1;
        if factor.norm() == 0.0 {
            return Err(Error::VanishingNormalizer);
        }
        ln_norm += factor.ln();
        eig = next;
    }
    if !ln_norm.re.is_finite() {
        return Err(Error::VanishingNormalizer);
    }
    Ok(ModifiedJost { z, n_trunc, ln_x0, ln_normalizer: ln_norm, f: (ln_x0 - ln_norm).exp() })
}

/// Bounds `b_0 = 1`, `b_1 = v_0`, `b_n = v_0 exp(sum_{j=1}^{n-1} v_j)` for
/// `x_n` under `x_0 = 1`, `x_{n+1} <= sum_{j<=n} v_j x_j`; `n = 0..=len`.
pub fn gronwall_bound(v_seq: &[f64]) -> Result<Vec<f64>> {
    if let Some((i, &x)) = v_seq.iter().enumerate().find(|(_, x)| !(**x >= 0.0)) {
        return Err(Error::Negative { index: i, value: x });
    }
    let mut out = vec![1.0];
    if v_seq.is_empty() {
        return Ok(out);
    }
    let v0 = v_seq[0];
    out.push(v0);
    let mut acc = 0.0;
    for &v in &v_seq[1..] {
        acc += v;
        out.push(v0 * acc.exp());
    }
    Ok(out)
}

/// The extremal sequence `x_0 = 1`, `x_{n+1} = sum_{j<=n} v_j x_j`.
pub fn gronwall_equality(v_seq: &[f64]) -> Vec<f64> {
    let mut x = vec![1.0];
    let mut acc = 0.0;
    for (j, &v) in v_seq.iter().enumerate() {
        acc += v * x[j];
        x.push(acc);
    }
    x
}

/// Partial sums `sum_{n=k}^{l} (e_{n+1} - e_n) f(e_n)` for `l = k..len-2`.
pub fn summation_by_parts(eps: &[C64], k: usize, f: impl Fn(C64) -> C64) -> Vec<C64> {
    let mut acc = ZERO;
    (k..eps.len().saturating_sub(1))
        .map(|n| {
            acc += (eps[n + 1] - eps[n]) * f(eps[n]);
            acc
        })
        .collect()
}
