//! Potentials on the whole line and the shift/diagonal operator algebra.
//!
//! Whole-line sequences are indexed by signed integers. `R` is the right
//! shift `(Rf)_n = f_{n-1}` and `L = R^{-1}`, so `L + R + V - z` is the
//! Schrödinger operator shifted by `z` and equals `L + R - Lambda - Lambda^{-1}`.
//! The half-line Jacobi matrix indexes its first row by site 1.

use std::collections::BTreeMap;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::cxmat::CMatrix;
use crate::error::{Error, Result};
use crate::spectral::lambda_site;

const ZERO: C64 = C64::new(0.0, 0.0);

/// Real potential with finite support `[support_lo, support_lo + len - 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Potential {
    pub support_lo: i64,
    pub values: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<String>,
}

impl Potential {
    pub fn new(support_lo: i64, values: Vec<f64>) -> Result<Self> {
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("potential value {bad} is not finite")));
        }
        Ok(Self { support_lo, values, family: None })
    }

    pub fn zero() -> Self {
        Self { support_lo: 1, values: Vec::new(), family: Some("zero".into()) }
    }

    pub fn with_family(mut self, family: impl Into<String>) -> Self {
        self.family = Some(family.into());
        self
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let p: Potential = serde_json::from_str(text)?;
        Potential::new(p.support_lo, p.values).map(|q| Self { family: p.family, ..q })
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    /// Last index of the stored window (`support_lo - 1` when empty).
    pub fn support_hi(&self) -> i64 {
        self.support_lo + self.values.len() as i64 - 1
    }

    /// Smallest window containing every nonzero value.
    pub fn nonzero_range(&self) -> Option<(i64, i64)> {
        let first = self.values.iter().position(|&v| v != 0.0)?;
        let last = self.values.iter().rposition(|&v| v != 0.0)?;
        Some((self.support_lo + first as i64, self.support_lo + last as i64))
    }

    pub fn get(&self, n: i64) -> f64 {
        let i = n - self.support_lo;
        if i < 0 || i >= self.values.len() as i64 {
            0.0
        } else {
            self.values[i as usize]
        }
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `||delta v||_2` with `(delta v)_n = v_{n+1} - v_n` over the whole line.
    pub fn diff_l2(&self) -> f64 {
        self.q_diff_l2(1)
    }

    /// `||v_{n+q} - v_n||_2` over the whole line.
    pub fn q_diff_l2(&self, q: usize) -> f64 {
        let q = q as i64;
        let lo = self.support_lo - q;
        let hi = self.support_hi();
        (lo..=hi).map(|n| (self.get(n + q) - self.get(n)).powi(2)).sum::<f64>().sqrt()
    }

    /// Same values moved so the support starts at `new_lo`.
    pub fn shifted_to(&self, new_lo: i64) -> Self {
        Self { support_lo: new_lo, values: self.values.clone(), family: self.family.clone() }
    }

    /// `v * chi_{j < n_max + 1}`: keeps sites `<= n_max`.
    pub fn truncated(&self, n_max: i64) -> Self {
        let keep = (n_max - self.support_lo + 1).clamp(0, self.values.len() as i64) as usize;
        Self { support_lo: self.support_lo, values: self.values[..keep].to_vec(), family: self.family.clone() }
    }

    /// `v * chi_{j > cut}`: zeroes sites `<= cut`.
    pub fn tail_cut(&self, cut: i64) -> Self {
        let values = self
            .values
            .iter()
            .enumerate()
            .map(|(i, &v)| if self.support_lo + i as i64 <= cut { 0.0 } else { v })
            .collect();
        Self { support_lo: self.support_lo, values, family: self.family.clone() }
    }

    /// Reflected potential `u_j = v_{n_total + 1 - j}`.
    pub fn reversed(&self, n_total: i64) -> Self {
        let values: Vec<f64> = (1..=n_total).map(|j| self.get(n_total + 1 - j)).collect();
        Self { support_lo: 1, values, family: self.family.clone() }
    }
}

/// `lambda_n(z)` for every site, with the difference field
/// `omega_j = lambda_{j+1} - lambda_j`.
#[derive(Debug, Clone)]
pub struct DiagonalField {
    pub z: C64,
    pub lambda_tilde: C64,
    lo: i64,
    lambda: Vec<C64>,
    pub omega_support: Vec<i64>,
    pub omega: BTreeMap<i64, C64>,
}

impl DiagonalField {
    pub fn lambda(&self, n: i64) -> C64 {
        let i = n - self.lo;
        if i < 0 || i >= self.lambda.len() as i64 {
            self.lambda_tilde
        } else {
            self.lambda[i as usize]
        }
    }

    pub fn omega_at(&self, n: i64) -> C64 {
        self.omega.get(&n).copied().unwrap_or(ZERO)
    }

    /// Window outside which `lambda_n = lambda~`, if the field is not free.
    pub fn window(&self) -> Option<(i64, i64)> {
        if self.lambda.is_empty() {
            None
        } else {
            Some((self.lo, self.lo + self.lambda.len() as i64 - 1))
        }
    }
}

pub fn build_field(v: &Potential, z: C64) -> Result<DiagonalField> {
    let lambda_tilde = lambda_site(z, 0.0)?;
    let lambda: Vec<C64> = v.values.iter().map(|&x| lambda_site(z, x)).collect::<Result<_>>()?;
    let lo = v.support_lo;
    let mut field = DiagonalField { z, lambda_tilde, lo, lambda, omega_support: Vec::new(), omega: BTreeMap::new() };
    if let Some((a, b)) = field.window() {
        for j in (a - 1)..=b {
            let w = field.lambda(j + 1) - field.lambda(j);
            if w != ZERO {
                field.omega_support.push(j);
                field.omega.insert(j, w);
            }
        }
    }
    Ok(field)
}

/// Whole-line sequence: explicit values on `[lo, hi]`, geometric tails with
/// ratio `r` (`|r| < 1`) outside: `f_n = left r^{lo-n}` for `n < lo` and
/// `f_n = right r^{n-hi}` for `n > hi`.
#[derive(Debug, Clone, PartialEq)]
pub struct TailedSeq {
    pub lo: i64,
    pub values: Vec<C64>,
    pub left: C64,
    pub right: C64,
    pub ratio: C64,
}

impl TailedSeq {
    pub fn compact(lo: i64, values: Vec<C64>) -> Self {
        Self { lo, values, left: ZERO, right: ZERO, ratio: ZERO }
    }

    pub fn basis(n: i64) -> Self {
        Self::compact(n, vec![C64::new(1.0, 0.0)])
    }

    pub fn hi(&self) -> i64 {
        self.lo + self.values.len() as i64 - 1
    }

    pub fn at(&self, n: i64) -> C64 {
        if self.values.is_empty() {
            return ZERO;
        }
        if n < self.lo {
            if self.left == ZERO {
                ZERO
            } else {
                self.left * self.ratio.powi((self.lo - n) as i32)
            }
        } else if n > self.hi() {
            if self.right == ZERO {
                ZERO
            } else {
                self.right * self.ratio.powi((n - self.hi()) as i32)
            }
        } else {
            self.values[(n - self.lo) as usize]
        }
    }

    /// Explicit window covering the compact part; empty sequences report
    /// the degenerate window at `lo`.
    fn span(&self) -> (i64, i64) {
        if self.values.is_empty() {
            (self.lo, self.lo)
        } else {
            (self.lo, self.hi())
        }
    }
}

fn resolvent_ratio(field: &DiagonalField) -> Result<C64> {
    let r = field.lambda_tilde;
    if r.norm() >= 1.0 {
        return Err(Error::Divergent(r.norm()));
    }
    Ok(r)
}

/// Bounded solution of `(L - Lambda) f = g`, i.e. `f_{n+1} - lambda_n f_n = g_n`,
/// decaying at `-infinity`. `g` may carry a left geometric tail; a right tail
/// would resonate with the homogeneous solution and is rejected.
pub fn solve_l(field: &DiagonalField, g: &TailedSeq) -> Result<TailedSeq> {
    let r = resolvent_ratio(field)?;
    if g.right != ZERO {
        return Err(Error::ResonantTail);
    }
    if g.left != ZERO && g.ratio != r {
        return Err(Error::InvalidInput("tail ratio differs from lambda~".into()));
    }
    let (glo, ghi) = g.span();
    let (plo, phi) = field.window().unwrap_or((glo, ghi));
    let wlo = glo.min(plo);
    let whi = ghi.max(phi) + 1;
    let len = (whi - wlo + 1) as usize;
    let mut f = vec![ZERO; len];
    // closed-form sum of the left tail: sum_{t>=0} r^t g_{wlo-1-t}
    f[0] = if g.left == ZERO {
        ZERO
    } else {
        g.left * r.powi((glo - wlo + 1) as i32) / (1.0 - r * r)
    };
    for i in 0..len - 1 {
        let n = wlo + i as i64;
        f[i + 1] = field.lambda(n) * f[i] + g.at(n);
    }
    let right = f[len - 1];
    let left = f[0];
    Ok(TailedSeq { lo: wlo, values: f, left, right, ratio: r })
}

/// Bounded solution of `(R - Lambda) h = g`, i.e. `h_{n-1} - lambda_n h_n = g_n`,
/// decaying at `+infinity`. Mirror image of [`solve_l`]: right tails are
/// summed in closed form, left tails are resonant.
pub fn solve_r(field: &DiagonalField, g: &TailedSeq) -> Result<TailedSeq> {
    let r = resolvent_ratio(field)?;
    if g.left != ZERO {
        return Err(Error::ResonantTail);
    }
    if g.right != ZERO && g.ratio != r {
        return Err(Error::InvalidInput("tail ratio differs from lambda~".into()));
    }
    let (glo, ghi) = g.span();
    let (plo, phi) = field.window().unwrap_or((glo, ghi));
    let wlo = glo.min(plo) - 1;
    let whi = ghi.max(phi);
    let len = (whi - wlo + 1) as usize;
    let mut h = vec![ZERO; len];
    h[len - 1] = if g.right == ZERO {
        ZERO
    } else {
        g.right * r.powi((whi + 1 - ghi) as i32) / (1.0 - r * r)
    };
    for i in (0..len - 1).rev() {
        let n = wlo + i as i64;
        h[i] = g.at(n + 1) + field.lambda(n + 1) * h[i + 1];
    }
    let left = h[0];
    let right = h[len - 1];
    Ok(TailedSeq { lo: wlo, values: h, left, right, ratio: r })
}

pub fn solve_l_at(field: &DiagonalField, g: &TailedSeq, eval_at: &[i64]) -> Result<Vec<C64>> {
    let f = solve_l(field, g)?;
    Ok(eval_at.iter().map(|&n| f.at(n)).collect())
}

pub fn solve_r_at(field: &DiagonalField, g: &TailedSeq, eval_at: &[i64]) -> Result<Vec<C64>> {
    let f = solve_r(field, g)?;
    Ok(eval_at.iter().map(|&n| f.at(n)).collect())
}

/// Applies `R Omega + Omega L`, which is finitely supported whatever the tails.
pub fn apply_r_omega_plus_omega_l(field: &DiagonalField, h: &TailedSeq) -> TailedSeq {
    let Some((&first, &last)) = field.omega_support.first().zip(field.omega_support.last()) else {
        return TailedSeq::compact(0, Vec::new());
    };
    let lo = first;
    let hi = last + 1;
    let values = (lo..=hi)
        .map(|n| field.omega_at(n - 1) * h.at(n - 1) + field.omega_at(n) * h.at(n + 1))
        .collect();
    TailedSeq::compact(lo, values)
}

/// The `(2n+1)`-dimensional cyclic model on `span{e_{-n}, ..., e_n}`.
#[derive(Debug, Clone)]
pub struct CyclicSystem {
    pub n: usize,
    pub z: C64,
    pub lambda_tilde: C64,
    pub r: CMatrix,
    pub l: CMatrix,
    pub lambda: CMatrix,
    pub lambda0: CMatrix,
    pub omega: CMatrix,
    pub k: CMatrix,
    pub k0: CMatrix,
}

impl CyclicSystem {
    pub fn dim(&self) -> usize {
        2 * self.n + 1
    }

    /// Largest entrywise deviations in
    /// `(L - Lambda)(R - Lambda) = -Lambda K - Omega L`,
    /// `(L - Lambda)(R - Lambda) = -K Lambda - R Omega` and
    /// `(R - Lambda)(L - Lambda) = -K Lambda + Omega L`.
    pub fn shift_identity_residuals(&self) -> [f64; 3] {
        let lr = &(&self.l - &self.lambda) * &(&self.r - &self.lambda);
        let rl = &(&self.r - &self.lambda) * &(&self.l - &self.lambda);
        let neg = C64::new(-1.0, 0.0);
        let lam_k = (&self.lambda * &self.k).scale(neg);
        let k_lam = (&self.k * &self.lambda).scale(neg);
        let omega_l = &self.omega * &self.l;
        let r_omega = &self.r * &self.omega;
        [
            lr.max_abs_diff(&(&lam_k - &omega_l)),
            lr.max_abs_diff(&(&k_lam - &r_omega)),
            rl.max_abs_diff(&(&k_lam + &omega_l)),
        ]
    }
}

pub fn build_cyclic(v: &Potential, z: C64, n: usize) -> Result<CyclicSystem> {
    if z.im <= 0.0 {
        return Err(Error::InvalidInput(format!("cyclic model needs Im z > 0, got {}", z.im)));
    }
    let half = n as i64;
    if let Some((lo, hi)) = v.nonzero_range() {
        if lo < -half || hi > half {
            return Err(Error::SupportOverflow { lo, hi, win_lo: -half, win_hi: half });
        }
    }
    let m = 2 * n + 1;
    let field = build_field(v, z)?;
    let lam: Vec<C64> = (-half..=half).map(|j| field.lambda(j)).collect();
    let omega: Vec<C64> = (0..m).map(|i| lam[(i + 1) % m] - lam[i]).collect();
    let mut r = CMatrix::zeros(m);
    let mut l = CMatrix::zeros(m);
    for i in 0..m {
        // (R f)_j = f_{j-1}, (L f)_j = f_{j+1}, cyclically
        r[(i, (i + m - 1) % m)] = C64::new(1.0, 0.0);
        l[(i, (i + 1) % m)] = C64::new(1.0, 0.0);
    }
    let lambda = CMatrix::from_diag(&lam);
    let lambda_inv = CMatrix::from_diag(&lam.iter().map(|x| x.inv()).collect::<Vec<_>>());
    let lt = field.lambda_tilde;
    let lambda0 = CMatrix::from_diag(&vec![lt; m]);
    let lambda0_inv = CMatrix::from_diag(&vec![lt.inv(); m]);
    let shifts = &l + &r;
    let k = &(&shifts - &lambda) - &lambda_inv;
    let k0 = &(&shifts - &lambda0) - &lambda0_inv;
    Ok(CyclicSystem {
        n,
        z,
        lambda_tilde: lt,
        r,
        l,
        lambda,
        lambda0,
        omega: CMatrix::from_diag(&omega),
        k,
        k0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn z0() -> C64 {
        C64::new(0.0, 2.0)
    }

    #[test]
    fn free_field_has_no_omega() {
        let f = build_field(&Potential::zero(), z0()).unwrap();
        assert!(f.omega_support.is_empty());
        assert_eq!(f.lambda(17), f.lambda_tilde);
    }

    #[test]
    fn constant_block_jumps_only_at_edges() {
        let v = Potential::new(3, vec![0.25; 5]).unwrap();
        let f = build_field(&v, C64::new(0.4, 0.7)).unwrap();
        assert_eq!(f.omega_support, vec![2, 7]);
    }

    #[test]
    fn single_site_field() {
        let v = Potential::new(0, vec![0.2]).unwrap();
        let f = build_field(&v, z0()).unwrap();
        assert_eq!(f.omega_support, vec![-1, 0]);
        let l0 = lambda_site(z0(), 0.2).unwrap();
        let lt = lambda_site(z0(), 0.0).unwrap();
        assert!((f.omega_at(-1) - (l0 - lt)).norm() < 1e-16);
        assert!((f.omega_at(0) - (lt - l0)).norm() < 1e-16);
        // omega telescopes to zero
        assert!((f.omega_at(-1) + f.omega_at(0)).norm() < 1e-16);
    }

    #[test]
    fn free_resolvents_match_closed_form() {
        let z = C64::new(0.3, 0.8);
        let f = build_field(&Potential::zero(), z).unwrap();
        let lt = f.lambda_tilde;
        let sl = solve_l(&f, &TailedSeq::basis(0)).unwrap();
        for n in -5..12 {
            let expect = if n >= 1 { lt.powi((n - 1) as i32) } else { ZERO };
            assert!((sl.at(n) - expect).norm() < 1e-15, "L at {n}");
        }
        // [(R - L0)^{-1} e_0]_n = lt^{-1-n} for n <= -1
        let sr = solve_r(&f, &TailedSeq::basis(0)).unwrap();
        for n in -12..5 {
            let expect = if n <= -1 { lt.powi((-1 - n) as i32) } else { ZERO };
            assert!((sr.at(n) - expect).norm() < 1e-15, "R at {n}");
        }
    }

    #[test]
    fn zero_input_zero_output() {
        let f = build_field(&Potential::new(-1, vec![0.1, -0.2]).unwrap(), C64::new(0.1, 0.4)).unwrap();
        let g = TailedSeq::compact(0, vec![ZERO; 3]);
        assert!(solve_l(&f, &g).unwrap().values.iter().all(|x| *x == ZERO));
        assert!(solve_r(&f, &g).unwrap().values.iter().all(|x| *x == ZERO));
    }

    #[test]
    fn resolvents_reject_real_axis_and_resonance() {
        let f = build_field(&Potential::zero(), C64::new(0.5, 0.0)).unwrap();
        assert!(matches!(solve_l(&f, &TailedSeq::basis(0)), Err(Error::Divergent(_))));
        let f = build_field(&Potential::zero(), C64::new(0.5, 0.5)).unwrap();
        let g = solve_l(&f, &TailedSeq::basis(0)).unwrap();
        assert!(matches!(solve_l(&f, &g), Err(Error::ResonantTail)));
        let h = solve_r(&f, &TailedSeq::basis(0)).unwrap();
        assert!(matches!(solve_r(&f, &h), Err(Error::ResonantTail)));
    }

    #[test]
    fn tailed_inputs_residuals() {
        let v = Potential::new(-2, vec![0.3, -0.1, 0.2, 0.05]).unwrap();
        let z = C64::new(-0.6, 0.15);
        let f = build_field(&v, z).unwrap();
        // right-tailed input through R, left-tailed input through L
        let rt = solve_l(&f, &TailedSeq::basis(1)).unwrap();
        let h = solve_r(&f, &rt).unwrap();
        for n in -30..30 {
            let res = h.at(n - 1) - f.lambda(n) * h.at(n) - rt.at(n);
            assert!(res.norm() < 1e-13, "R residual at {n}: {res}");
        }
        let lt = solve_r(&f, &TailedSeq::basis(-1)).unwrap();
        let g = solve_l(&f, &lt).unwrap();
        for n in -30..30 {
            let res = g.at(n + 1) - f.lambda(n) * g.at(n) - lt.at(n);
            assert!(res.norm() < 1e-13, "L residual at {n}: {res}");
        }
    }

    #[test]
    fn cyclic_small_system_by_hand() {
        let v = Potential::new(0, vec![0.2]).unwrap();
        let z = C64::new(0.0, 2.0);
        let sys = build_cyclic(&v, z, 1).unwrap();
        let lt = lambda_site(z, 0.0).unwrap();
        let l0 = lambda_site(z, 0.2).unwrap();
        let one = C64::new(1.0, 0.0);
        // basis order e_{-1}, e_0, e_1
        let r = CMatrix::from_rows(&[
            vec![ZERO, ZERO, one],
            vec![one, ZERO, ZERO],
            vec![ZERO, one, ZERO],
        ])
        .unwrap();
        assert_eq!(sys.r, r);
        assert_eq!(sys.l, r.transpose());
        assert_eq!(&sys.r * &sys.l, CMatrix::identity(3));
        assert_eq!(sys.lambda, CMatrix::from_diag(&[lt, l0, lt]));
        assert_eq!(sys.omega, CMatrix::from_diag(&[l0 - lt, lt - l0, ZERO]));
        let lin = [lt.inv(), l0.inv(), lt.inv()];
        let k = &(&(&sys.l + &sys.r) - &sys.lambda) - &CMatrix::from_diag(&lin);
        assert_eq!(sys.k, k);
        // K = H - z on the cycle
        assert!((sys.k[(1, 1)] - (C64::new(0.2, 0.0) - z)).norm() < 1e-14);
    }

    #[test]
    fn cyclic_free_and_overflow() {
        let sys = build_cyclic(&Potential::zero(), C64::new(0.1, 0.3), 4).unwrap();
        assert_eq!(sys.k, sys.k0);
        let v = Potential::new(3, vec![0.1, 0.1]).unwrap();
        assert!(matches!(build_cyclic(&v, C64::new(0.1, 0.3), 3), Err(Error::SupportOverflow { .. })));
    }

    #[test]
    fn potential_json_literal() {
        let p = Potential::from_json(r#"{"support_lo": -1, "values": [0.1, 0.2], "family": "custom"}"#).unwrap();
        assert_eq!(p.get(0), 0.2);
        assert_eq!(p.get(1), 0.0);
        assert_eq!(p.family.as_deref(), Some("custom"));
        let p = Potential::from_json(r#"{"support_lo": 1, "values": []}"#).unwrap();
        assert!(p.is_zero());
        assert!(Potential::from_json(r#"{"values": [1]}"#).is_err());
    }

    #[test]
    fn potential_transforms() {
        let p = Potential::new(1, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(p.truncated(2).values, vec![1.0, 2.0]);
        assert_eq!(p.tail_cut(2).values, vec![0.0, 0.0, 3.0, 4.0]);
        assert_eq!(p.reversed(5).values, vec![0.0, 4.0, 3.0, 2.0, 1.0]);
        assert!((p.diff_l2() - (1.0f64 + 1.0 + 1.0 + 1.0 + 16.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn cyclic_shift_identities() {
        let v = Potential::new(-2, vec![0.3, -0.1, 0.2, 0.15]).unwrap();
        let sys = build_cyclic(&v, C64::new(0.6, 0.4), 4).unwrap();
        for r in sys.shift_identity_residuals() {
            assert!(r < 1e-12, "{r}");
        }
    }
}
