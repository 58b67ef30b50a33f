//! Determinantal representation of the inverse transmission coefficient.
//!
//! Two families of evaluations live here:
//!
//! * the finite cyclic model, where `det K_n` is rewritten through the
//!   factorizations of `(L_n - Lambda_n)(R_n - Lambda_n)` and
//!   `(R_n - Lambda_n)(L_n - Lambda_n)`;
//! * the whole-line formula `det[(H - z)/(H_0 - z)] = WKB(z) a_m(z)`, where
//!   every operator that appears is left-multiplied by `Omega`, so all
//!   determinants and traces reduce exactly to the finite set
//!   `S = supp(Omega)`.
//!
//! The left side `det[(H - z)/(H_0 - z)] = det(I + G_0 V)` is evaluated
//! independently from the free lattice Green's function.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::cxmat::{det2, lu_det, CMatrix};
use crate::error::{Error, Result};
use crate::lattice::{
    apply_r_omega_plus_omega_l, build_field, solve_l, solve_r, CyclicSystem, DiagonalField, Potential, TailedSeq,
};
use crate::spectral::lambda_site;

const ONE: C64 = C64::new(1.0, 0.0);

/// Rewritings of `det K_n` for the cyclic model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CyclicVariant {
    /// Inverse of `(L - Lambda)(R - Lambda)`, trace and det2 of `I + Omega L (...)^{-1}`.
    LeftRight,
    /// Same, but the trace uses the inverse of `(R - Lambda)(L - Lambda) - R Omega - Omega L`.
    LeftRightRewritten,
    /// Inverse of `(R - Lambda)(L - Lambda)`, det2 of `I - Omega L (...)^{-1}`.
    RightLeft,
    /// Geometric mean of the two with the symmetric trace term.
    Symmetric,
}

struct CyclicPieces {
    prefix: C64,
    a_inv: CMatrix,
    b_inv: CMatrix,
    omega_l: CMatrix,
    l_minus: CMatrix,
    r_minus: CMatrix,
}

fn cyclic_pieces(sys: &CyclicSystem) -> Result<CyclicPieces> {
    let l_minus = &sys.l - &sys.lambda;
    let r_minus = &sys.r - &sys.lambda;
    let det_l = lu_det(&l_minus)?;
    let det_r = lu_det(&r_minus)?;
    let det_lambda = lu_det(&sys.lambda)?;
    let a = &l_minus * &r_minus;
    let b = &r_minus * &l_minus;
    let a_inv = a.inverse()?;
    let b_inv = b.inverse()?;
    Ok(CyclicPieces {
        prefix: -det_l * det_r / det_lambda,
        a_inv,
        b_inv,
        omega_l: &sys.omega * &sys.l,
        l_minus,
        r_minus,
    })
}

/// Symmetric trace argument
/// `tr[Omega L (L-Lambda)^{-1}(R-Lambda)^{-1}(R Omega + Omega L)(R-Lambda)^{-1}(L-Lambda)^{-1}]`.
fn cyclic_symmetric_trace(sys: &CyclicSystem, p: &CyclicPieces) -> Result<C64> {
    let l_inv = p.l_minus.inverse()?;
    let r_inv = p.r_minus.inverse()?;
    let mix = &(&sys.r * &sys.omega) + &p.omega_l;
    let chain = &(&(&(&(&p.omega_l * &l_inv) * &r_inv) * &mix) * &r_inv) * &l_inv;
    Ok(chain.trace())
}

pub fn cyclic_det_variant(sys: &CyclicSystem, variant: CyclicVariant) -> Result<C64> {
    let p = cyclic_pieces(sys)?;
    let x = &p.omega_l * &p.a_inv;
    let lr = p.prefix * x.trace().exp() * det2(&x)?;
    match variant {
        CyclicVariant::LeftRight => Ok(lr),
        CyclicVariant::LeftRightRewritten => {
            let shifted = &(&(&p.r_minus * &p.l_minus) - &(&sys.r * &sys.omega)) - &p.omega_l;
            let x_alt = &p.omega_l * &shifted.inverse()?;
            Ok(p.prefix * x_alt.trace().exp() * det2(&x)?)
        }
        CyclicVariant::RightLeft => {
            let y = (&p.omega_l * &p.b_inv).scale(-ONE);
            Ok(p.prefix * y.trace().exp() * det2(&y)?)
        }
        CyclicVariant::Symmetric => {
            let y = (&p.omega_l * &p.b_inv).scale(-ONE);
            let t = cyclic_symmetric_trace(sys, &p)?;
            let root = (det2(&x)? * det2(&y)?).sqrt();
            let base = p.prefix * (0.5 * t).exp();
            // the square root branch is the one reproducing the LeftRight value
            let (plus, minus) = (base * root, -base * root);
            Ok(if (plus - lr).norm() <= (minus - lr).norm() { plus } else { minus })
        }
    }
}

/// `det K_n / det K_n^0` computed directly, and through the divided formula
/// with the shift-resolvent determinants of the free operators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CyclicRatio {
    pub direct: C64,
    pub formula: C64,
}

pub fn cyclic_ratio(sys: &CyclicSystem) -> Result<CyclicRatio> {
    let direct = lu_det(&sys.k)? / lu_det(&sys.k0)?;
    let p = cyclic_pieces(sys)?;
    let m = sys.dim();
    let dl = &sys.lambda - &sys.lambda0;
    let eye = CMatrix::identity(m);
    let l0_inv = (&sys.l - &sys.lambda0).inverse()?;
    let r0_inv = (&sys.r - &sys.lambda0).inverse()?;
    let det_l = lu_det(&(&eye - &(&l0_inv * &dl)))?;
    let det_r = lu_det(&(&eye - &(&r0_inv * &dl)))?;
    let ratio_lambda: C64 = (0..m).map(|i| sys.lambda[(i, i)] / sys.lambda0[(i, i)]).product();
    let x = &p.omega_l * &p.a_inv;
    let y = (&p.omega_l * &p.b_inv).scale(-ONE);
    let t = cyclic_symmetric_trace(sys, &p)?;
    let base = det_l * det_r / ratio_lambda * (0.5 * t).exp();
    let root = (det2(&x)? * det2(&y)?).sqrt();
    let (plus, minus) = (base * root, -base * root);
    let formula = if (plus - direct).norm() <= (minus - direct).norm() { plus } else { minus };
    Ok(CyclicRatio { direct, formula })
}

/// `prod_j lambda~(z) / lambda_j(z)`; factors off the support are one.
pub fn wkb_product(v: &Potential, z: C64) -> Result<C64> {
    let lt = lambda_site(z, 0.0)?;
    v.values.iter().try_fold(ONE, |acc, &x| Ok(acc * lt / lambda_site(z, x)?))
}

/// Free whole-line kernel `(H_0 - z)^{-1}(n, m) = k^{|n-m|} / (k - 1/k)`.
pub fn free_kernel(n: i64, m: i64, z: C64) -> Result<C64> {
    let k = lambda_site(z, 0.0)?;
    if k.norm() >= 1.0 {
        return Err(Error::Divergent(k.norm()));
    }
    Ok(k.powi((n - m).unsigned_abs() as i32) / (k - k.inv()))
}

/// `det[(H - z)/(H_0 - z)] = det(I + G_0 V)` as a determinant over `supp v`.
pub fn transmission_det(v: &Potential, z: C64) -> Result<C64> {
    if z.im <= 0.0 {
        return Err(Error::InvalidInput(format!("transmission_det needs Im z > 0, got {}", z.im)));
    }
    let Some((lo, hi)) = v.nonzero_range() else {
        return Ok(ONE);
    };
    let sites: Vec<i64> = (lo..=hi).collect();
    let d = sites.len();
    let mut m = CMatrix::identity(d);
    for (i, &a) in sites.iter().enumerate() {
        for (j, &b) in sites.iter().enumerate() {
            m[(i, j)] += free_kernel(a, b, z)? * v.get(b);
        }
    }
    lu_det(&m)
}

/// `det[I - (L - Lambda^0)^{-1} delta Lambda]` and the `R` analogue,
/// restricted to the support of `delta Lambda`.
pub fn shift_triviality_dets(v: &Potential, z: C64) -> Result<(C64, C64)> {
    let field = build_field(v, z)?;
    let free = build_field(&Potential::zero(), z)?;
    let Some((lo, hi)) = v.nonzero_range() else {
        return Ok((ONE, ONE));
    };
    let sites: Vec<i64> = (lo..=hi).collect();
    let d = sites.len();
    let mut ml = CMatrix::identity(d);
    let mut mr = CMatrix::identity(d);
    for (c, &k) in sites.iter().enumerate() {
        let dlam = field.lambda(k) - field.lambda_tilde;
        let fl = solve_l(&free, &TailedSeq::basis(k))?;
        let fr = solve_r(&free, &TailedSeq::basis(k))?;
        for (r, &j) in sites.iter().enumerate() {
            ml[(r, c)] -= fl.at(j) * dlam;
            mr[(r, c)] -= fr.at(j) * dlam;
        }
    }
    Ok((lu_det(&ml)?, lu_det(&mr)?))
}

/// Finite-rank pieces of the whole-line formula on `S = supp(Omega)`.
#[derive(Debug, Clone)]
pub struct WholeLineParts {
    pub support: Vec<i64>,
    /// `[Omega L (R - Lambda)^{-1}(L - Lambda)^{-1}]_{SS}`
    pub plus: CMatrix,
    /// `[Omega L (L - Lambda)^{-1}(R - Lambda)^{-1}]_{SS}`
    pub minus: CMatrix,
    /// the symmetric trace argument, evaluated along its own resolvent chain
    pub trace_term: C64,
}

impl WholeLineParts {
    pub fn det2_plus(&self) -> Result<C64> {
        det2(&self.plus)
    }

    pub fn det2_minus(&self) -> Result<C64> {
        det2(&self.minus.scale(-ONE))
    }

    /// `det(I + plus)`: the unregularized determinant, equal to `a_m` itself.
    pub fn det_plus(&self) -> Result<C64> {
        lu_det(&(&CMatrix::identity(self.plus.dim()) + &self.plus))
    }

    pub fn det_minus(&self) -> Result<C64> {
        lu_det(&(&CMatrix::identity(self.minus.dim()) - &self.minus))
    }
}

pub fn whole_line_parts(field: &DiagonalField) -> Result<WholeLineParts> {
    let s = field.omega_support.clone();
    let d = s.len();
    let mut plus = CMatrix::zeros(d);
    let mut minus = CMatrix::zeros(d);
    let mut trace_term = C64::new(0.0, 0.0);
    for (c, &k) in s.iter().enumerate() {
        let e = TailedSeq::basis(k);
        let lk = solve_l(field, &e)?;
        let rlk = solve_r(field, &lk)?;
        let rk = solve_r(field, &e)?;
        let lrk = solve_l(field, &rk)?;
        for (r, &j) in s.iter().enumerate() {
            let w = field.omega_at(j);
            plus[(r, c)] = w * rlk.at(j + 1);
            minus[(r, c)] = w * lrk.at(j + 1);
        }
        let mixed = apply_r_omega_plus_omega_l(field, &rlk);
        let back = solve_l(field, &solve_r(field, &mixed)?)?;
        trace_term += field.omega_at(k) * back.at(k + 1);
    }
    Ok(WholeLineParts { support: s, plus, minus, trace_term })
}

/// All factors of the whole-line formula at one point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetFactors {
    pub z: C64,
    pub wkb: C64,
    pub trace_term: C64,
    pub det2_plus: C64,
    pub det2_minus: C64,
    pub sqrt_branch_sign: i8,
    pub branch_flips: usize,
    pub a_m: C64,
    pub product: C64,
}

/// Vertical continuation path used to fix the square-root branch.
#[derive(Debug, Clone, Copy)]
pub struct BranchPath {
    /// `Im z` where the principal branch is taken.
    pub top: f64,
    pub initial_step: f64,
    pub min_step: f64,
}

impl Default for BranchPath {
    fn default() -> Self {
        Self { top: 2.0, initial_step: 0.25, min_step: 1e-7 }
    }
}

fn sqrt_argument(v: &Potential, z: C64) -> Result<(C64, C64, C64)> {
    let parts = whole_line_parts(&build_field(v, z)?)?;
    Ok((parts.det2_plus()?, parts.det2_minus()?, parts.trace_term))
}

/// Tracks `sqrt(det2_plus * det2_minus)` continuously from `Im z = top`
/// (principal branch) down to `z`. Returns the sign relative to the
/// principal root at `z` and the number of sign changes along the way.
fn track_branch(v: &Potential, z: C64, path: &BranchPath) -> Result<(i8, usize)> {
    if z.im >= path.top {
        return Ok((1, 0));
    }
    let product_at = |im: f64| -> Result<C64> {
        let (p, m, _) = sqrt_argument(v, C64::new(z.re, im))?;
        Ok(p * m)
    };
    let mut im = path.top;
    let mut prev_p = product_at(im)?;
    let mut prev_root = prev_p.sqrt();
    let mut sign: i8 = 1;
    let mut flips = 0;
    let mut step = path.initial_step;
    while im > z.im {
        let next_im = (im - step).max(z.im);
        let p = product_at(next_im)?;
        if p.norm() < 1e-300 || prev_p.norm() < 1e-300 {
            return Err(Error::BranchTracking(format!("det2 product vanishes near Im z = {next_im}")));
        }
        if (p / prev_p).arg().abs() >= std::f64::consts::FRAC_PI_2 {
            step *= 0.5;
            if step < path.min_step {
                return Err(Error::BranchTracking(format!("step underflow at Im z = {im}")));
            }
            continue;
        }
        let root = p.sqrt();
        let candidate = if sign > 0 { root } else { -root };
        if (candidate - prev_root).norm() > (-candidate - prev_root).norm() {
            sign = -sign;
            flips += 1;
        }
        prev_root = if sign > 0 { root } else { -root };
        prev_p = p;
        im = next_im;
        step = (step * 1.5).min(path.initial_step);
    }
    Ok((sign, flips))
}

pub fn am_factor_with_path(v: &Potential, z: C64, path: &BranchPath) -> Result<DetFactors> {
    if z.im <= 0.0 {
        return Err(Error::InvalidInput(format!("a_m needs Im z > 0, got {}", z.im)));
    }
    let (d2p, d2m, trace_term) = sqrt_argument(v, z)?;
    let (sign, flips) = track_branch(v, z, path)?;
    let root = (d2p * d2m).sqrt();
    let a_m = (0.5 * trace_term).exp() * if sign > 0 { root } else { -root };
    let wkb = wkb_product(v, z)?;
    let out = DetFactors {
        z,
        wkb,
        trace_term,
        det2_plus: d2p,
        det2_minus: d2m,
        sqrt_branch_sign: sign,
        branch_flips: flips,
        a_m,
        product: wkb * a_m,
    };
    if !(out.product.re.is_finite() && out.product.im.is_finite()) {
        return Err(Error::InvalidInput(format!("non-finite determinant factors at z = {z}")));
    }
    Ok(out)
}

pub fn am_factor(v: &Potential, z: C64) -> Result<DetFactors> {
    am_factor_with_path(v, z, &BranchPath::default())
}

/// Right-hand side of the whole-line identity, `WKB(z) a_m(z)`.
pub fn detformula_rhs(v: &Potential, z: C64) -> Result<DetFactors> {
    am_factor(v, z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::build_cyclic;

    fn sample_potential() -> Potential {
        Potential::new(-2, vec![0.21, -0.13, 0.29, 0.05, -0.22]).unwrap()
    }

    #[test]
    fn free_case_is_trivial() {
        let z = C64::new(0.3, 0.4);
        let v = Potential::zero();
        assert_eq!(wkb_product(&v, z).unwrap(), ONE);
        assert_eq!(transmission_det(&v, z).unwrap(), ONE);
        let f = detformula_rhs(&v, z).unwrap();
        assert_eq!(f.a_m, ONE);
        assert_eq!(f.product, ONE);
        let sys = build_cyclic(&v, z, 5).unwrap();
        let direct = lu_det(&sys.k0).unwrap();
        for var in [
            CyclicVariant::LeftRight,
            CyclicVariant::LeftRightRewritten,
            CyclicVariant::RightLeft,
            CyclicVariant::Symmetric,
        ] {
            let got = cyclic_det_variant(&sys, var).unwrap();
            assert!((got - direct).norm() <= 1e-12 * direct.norm(), "{var:?}");
        }
    }

    #[test]
    fn cyclic_variants_agree_with_direct_det() {
        let v = Potential::new(-3, vec![0.2, -0.4, 0.1, 0.35, -0.05, 0.3]).unwrap();
        let z = C64::new(1.0, 1.0);
        let sys = build_cyclic(&v, z, 6).unwrap();
        let direct = lu_det(&sys.k).unwrap();
        for var in [
            CyclicVariant::LeftRight,
            CyclicVariant::LeftRightRewritten,
            CyclicVariant::RightLeft,
            CyclicVariant::Symmetric,
        ] {
            let got = cyclic_det_variant(&sys, var).unwrap();
            assert!((got - direct).norm() <= 1e-10 * direct.norm(), "{var:?}: {got} vs {direct}");
        }
    }

    #[test]
    fn single_site_wkb() {
        let z = C64::new(-0.4, 0.6);
        let v = Potential::new(0, vec![0.17]).unwrap();
        let w = wkb_product(&v, z).unwrap();
        let expect = lambda_site(z, 0.0).unwrap() / lambda_site(z, 0.17).unwrap();
        assert!((w - expect).norm() < 1e-15);
    }

    #[test]
    fn free_kernel_inverts_free_operator() {
        let z = C64::new(0.7, 0.05);
        for m in [-2i64, 0, 3] {
            for n in -40..40 {
                let lhs = free_kernel(n + 1, m, z).unwrap() + free_kernel(n - 1, m, z).unwrap()
                    - z * free_kernel(n, m, z).unwrap();
                let expect = if n == m { ONE } else { C64::new(0.0, 0.0) };
                assert!((lhs - expect).norm() <= 1e-12, "residual at ({n},{m})");
            }
        }
    }

    #[test]
    fn single_site_transmission() {
        let z = C64::new(0.2, 0.3);
        let g = 0.25;
        let v = Potential::new(4, vec![g]).unwrap();
        let k = lambda_site(z, 0.0).unwrap();
        let t = transmission_det(&v, z).unwrap();
        assert!((t - (1.0 + g / (k - k.inv()))).norm() < 1e-15);
    }

    #[test]
    fn shift_resolvent_determinants_are_one() {
        let (dl, dr) = shift_triviality_dets(&sample_potential(), C64::new(0.5, 0.2)).unwrap();
        assert!((dl - 1.0).norm() < 1e-10);
        assert!((dr - 1.0).norm() < 1e-10);
    }

    #[test]
    fn whole_line_identity_sample() {
        let v = sample_potential();
        for z in [C64::new(0.5, 0.2), C64::new(-1.7, 0.05), C64::new(1.2, 1.0)] {
            let f = detformula_rhs(&v, z).unwrap();
            let t = transmission_det(&v, z).unwrap();
            assert!((f.product - t).norm() <= 1e-8 * t.norm(), "{z}: {} vs {t}", f.product);
            assert_eq!(f.branch_flips, 0);
        }
    }

    #[test]
    fn unregularized_pair_matches_a_m() {
        let v = sample_potential();
        let z = C64::new(0.9, 0.1);
        let parts = whole_line_parts(&build_field(&v, z).unwrap()).unwrap();
        let f = am_factor(&v, z).unwrap();
        let dp = parts.det_plus().unwrap();
        let dm = parts.det_minus().unwrap();
        assert!((dp - dm).norm() < 1e-10 * dp.norm());
        assert!((dp - f.a_m).norm() < 1e-10 * dp.norm());
        // the symmetric trace equals tr(plus) - tr(minus)
        let diff = parts.plus.trace() - parts.minus.trace();
        assert!((diff - parts.trace_term).norm() < 1e-11 * (1.0 + diff.norm()));
    }

    #[test]
    fn rejects_real_axis() {
        assert!(am_factor(&sample_potential(), C64::new(0.5, 0.0)).is_err());
        assert!(transmission_det(&sample_potential(), C64::new(0.5, 0.0)).is_err());
    }
}
