//! Jost solutions, scattering coefficients, the Weyl m-function and the
//! spectral density of the half-line Jacobi matrix.
//!
//! The half-line matrix `J` has diagonal `v_1, v_2, ...` and unit
//! off-diagonal. For `v` supported in `[1, N]` the Jost solution `psi`
//! equals `k^n` for `n >= N` and solves `psi_{n+1} + v_n psi_n + psi_{n-1} = z psi_n`
//! everywhere. To the left of the support `psi_n = a k^n + b k^{-n}`.
//!
//! The absolutely continuous density of the spectral measure of `e_1` is
//! `rho'(x) = sqrt(4 - x^2) / (c |psi_0(x)|^2)` on `(-2, 2)`. The constant `c`
//! is fixed by the free calibration in [`calibrate_normalization`].

use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::det::{detformula_rhs, transmission_det};
use crate::error::{Error, Result};
use crate::lattice::Potential;
use crate::spectral::lambda_site;

/// Density normalization `c` in `c rho' = sqrt(4 - x^2)/|psi_0|^2`.
pub const DENSITY_NORMALIZATION: f64 = 2.0 * PI;

const RESCALE_AT: f64 = 1e200;

/// Backward Jost solution on `[-2, N + 1]`, stored with a common complex
/// log scale: `psi_n = psi[n + 2] * exp(log_scale)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JostSolution {
    pub z: C64,
    pub k: C64,
    pub n_trunc: i64,
    pub psi: Vec<C64>,
    pub log_scale: C64,
}

impl JostSolution {
    pub const LO: i64 = -2;

    /// Scaled value; multiply by `exp(log_scale)` for the true one.
    pub fn scaled(&self, n: i64) -> C64 {
        self.psi[(n - Self::LO) as usize]
    }

    pub fn value(&self, n: i64) -> C64 {
        self.scaled(n) * self.log_scale.exp()
    }

    /// `psi_0`, the Jost function.
    pub fn x0(&self) -> C64 {
        self.value(0)
    }

    /// `ln |psi_0|`, usable when `psi_0` itself would overflow.
    pub fn ln_abs_x0(&self) -> f64 {
        self.scaled(0).norm().ln() + self.log_scale.re
    }

    /// Largest relative three-term residual on `[-1, N]`.
    pub fn residual(&self, v: &Potential) -> f64 {
        let mut worst: f64 = 0.0;
        for n in (Self::LO + 1)..=self.n_trunc {
            let (a, b, c) = (self.scaled(n - 1), self.scaled(n), self.scaled(n + 1));
            let r = c + a + (v.get(n) - self.z) * b;
            let size = a.norm().max(b.norm()).max(c.norm()).max(f64::MIN_POSITIVE);
            worst = worst.max(r.norm() / size);
        }
        worst
    }
}

pub fn jost_solve(v: &Potential, z: C64, n_trunc: i64) -> Result<JostSolution> {
    if let Some((lo, hi)) = v.nonzero_range() {
        if lo < 1 || hi > n_trunc {
            return Err(Error::SupportOverflow { lo, hi, win_lo: 1, win_hi: n_trunc });
        }
    }
    if n_trunc < 0 {
        return Err(Error::InvalidInput(format!("truncation index {n_trunc} < 0")));
    }
    let k = lambda_site(z, 0.0)?;
    let len = (n_trunc + 2 - JostSolution::LO) as usize;
    let mut psi = vec![C64::new(0.0, 0.0); len];
    let at = |n: i64| (n - JostSolution::LO) as usize;
    psi[at(n_trunc + 1)] = k;
    psi[at(n_trunc)] = C64::new(1.0, 0.0);
    let mut log_scale = k.ln() * n_trunc as f64;
    for n in ((JostSolution::LO + 1)..=n_trunc).rev() {
        let next = (z - v.get(n)) * psi[at(n)] - psi[at(n + 1)];
        psi[at(n - 1)] = next;
        if next.norm() > RESCALE_AT {
            for p in psi.iter_mut() {
                *p /= RESCALE_AT;
            }
            log_scale += RESCALE_AT.ln();
        }
    }
    Ok(JostSolution { z, k, n_trunc, psi, log_scale })
}

/// `ln psi_0` (complex log) without storing the solution.
pub fn jost_ln_x0(v: &Potential, z: C64, n_trunc: i64) -> Result<C64> {
    if let Some((lo, hi)) = v.nonzero_range() {
        if lo < 1 || hi > n_trunc {
            return Err(Error::SupportOverflow { lo, hi, win_lo: 1, win_hi: n_trunc });
        }
    }
    let k = lambda_site(z, 0.0)?;
    let (mut cur, mut up) = (C64::new(1.0, 0.0), k);
    let mut log_scale = k.ln() * n_trunc.max(0) as f64;
    for n in (1..=n_trunc).rev() {
        let down = (z - v.get(n)) * cur - up;
        up = cur;
        cur = down;
        if cur.norm_sqr() > RESCALE_AT {
            cur /= RESCALE_AT;
            up /= RESCALE_AT;
            log_scale += RESCALE_AT.ln();
        }
    }
    if cur.norm() == 0.0 {
        return Err(Error::ZeroJost(z.re));
    }
    Ok(cur.ln() + log_scale)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Route {
    Jost,
    Det,
    Formula,
}

impl Route {
    pub fn as_str(self) -> &'static str {
        match self {
            Route::Jost => "JOST",
            Route::Det => "DET",
            Route::Formula => "FORMULA",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScatteringRecord {
    pub z: C64,
    pub a: C64,
    pub b: Option<C64>,
    pub route: Route,
}

/// `(a, b)` from `psi_{-1}` and `psi_{-2}`.
pub fn extract_ab(psi: &JostSolution) -> Result<ScatteringRecord> {
    let k = psi.k;
    let gap = k - k.inv();
    if gap.norm() < 1e-12 {
        return Err(Error::BandEdge { re: psi.z.re, im: psi.z.im });
    }
    let (m1, m2) = (psi.scaled(-1), psi.scaled(-2));
    let s = psi.log_scale.exp();
    let a = (m1 * k * k - m2 * k) / gap * s;
    let b = (m2 / k - m1 / (k * k)) / gap * s;
    Ok(ScatteringRecord { z: psi.z, a, b: Some(b), route: Route::Jost })
}

/// Jost route for an arbitrary compactly supported potential; the support is
/// moved to start at site 1, which leaves `a` unchanged.
pub fn jost_record(v: &Potential, z: C64) -> Result<ScatteringRecord> {
    let (lo, hi) = v.nonzero_range().unwrap_or((1, 0));
    let moved = v.shifted_to(v.support_lo - lo + 1);
    let sol = jost_solve(&moved, z, (hi - lo + 1).max(0))?;
    extract_ab(&sol)
}

/// `a(z)` by the three independent routes.
pub fn a_routes(v: &Potential, z: C64) -> Result<[ScatteringRecord; 3]> {
    let jost = jost_record(v, z)?;
    let det = ScatteringRecord { z, a: transmission_det(v, z)?, b: None, route: Route::Det };
    let formula = ScatteringRecord { z, a: detformula_rhs(v, z)?.product, b: None, route: Route::Formula };
    Ok([jost, det, formula])
}

/// `<e_1, (J - z)^{-1} e_1>` by backward continued fraction on a truncation of
/// dimension at least `N + ceil(40 / Im z)`, doubled until the value settles
/// to `1e-9` relative.
pub fn m_function(v: &Potential, z: C64) -> Result<C64> {
    if z.im <= 0.0 {
        return Err(Error::InvalidInput(format!("m-function needs Im z > 0, got {}", z.im)));
    }
    if let Some((lo, _)) = v.nonzero_range() {
        if lo < 1 {
            return Err(Error::SupportOverflow { lo, hi: v.support_hi(), win_lo: 1, win_hi: i64::MAX });
        }
    }
    let n = v.support_hi().max(0) as usize;
    let mut dim = n + (40.0 / z.im).ceil() as usize;
    let mut prev = truncated_m(v, z, dim);
    for _ in 0..24 {
        dim *= 2;
        let next = truncated_m(v, z, dim);
        if (next - prev).norm() <= 1e-9 * next.norm() {
            return Ok(next);
        }
        prev = next;
    }
    Err(Error::NonConvergence(format!("m-function at z = {z} did not settle by dimension {dim}")))
}

fn truncated_m(v: &Potential, z: C64, dim: usize) -> C64 {
    // Schur complement from the bottom: g_n = 1 / (v_n - z - g_{n+1})
    let mut g = C64::new(0.0, 0.0);
    for n in (1..=dim as i64).rev() {
        g = (v.get(n) - z - g).inv();
    }
    g
}

/// Boundary value `m(x + i0)` from `2 m(x + i eps) - m(x + 2 i eps)`, which
/// cancels the first-order offset error.
pub fn m_boundary_value(v: &Potential, x: f64, eps: f64) -> Result<C64> {
    let near = m_function(v, C64::new(x, eps))?;
    let far = m_function(v, C64::new(x, 2.0 * eps))?;
    Ok(2.0 * near - far)
}

/// Right side of `1/|a|^2 = 4 |sin t| Im m / |m + e^{it}|^2`, `x = 2 cos t`.
pub fn transmission_from_m(m: C64, x: f64) -> f64 {
    let t = (0.5 * x).acos();
    4.0 * t.sin().abs() * m.im / (m + C64::from_polar(1.0, t)).norm_sqr()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensitySamples {
    pub grid: Vec<f64>,
    pub rho_prime: Vec<f64>,
    pub n_trunc: i64,
    pub normalization_constant: f64,
}

/// `rho'` from the Jost function on the real band.
pub fn density_at(v: &Potential, x: f64, n_trunc: i64) -> Result<f64> {
    if x.abs() >= 2.0 {
        return Err(Error::BandEdge { re: x, im: 0.0 });
    }
    let ln_x0 = jost_ln_x0(v, C64::new(x, 0.0), n_trunc)?.re;
    if !ln_x0.is_finite() {
        return Err(Error::ZeroJost(x));
    }
    Ok((4.0 - x * x).sqrt() / DENSITY_NORMALIZATION * (-2.0 * ln_x0).exp())
}

pub fn spectral_density(v: &Potential, band_grid: &[f64], n_trunc: i64) -> Result<DensitySamples> {
    let rho_prime = band_grid.par_iter().map(|&x| density_at(v, x, n_trunc)).collect::<Result<Vec<_>>>()?;
    Ok(DensitySamples {
        grid: band_grid.to_vec(),
        rho_prime,
        n_trunc,
        normalization_constant: DENSITY_NORMALIZATION,
    })
}

/// `int_{-2}^{2} rho'` with `x = 2 cos t` and the midpoint rule in `t`,
/// which removes the endpoint square-root singularity.
pub fn density_mass(v: &Potential, n_trunc: i64, nodes: usize) -> Result<f64> {
    let h = PI / nodes as f64;
    let vals = (0..nodes)
        .into_par_iter()
        .map(|i| {
            let t = (i as f64 + 0.5) * h;
            Ok(density_at(v, 2.0 * t.cos(), n_trunc)? * 2.0 * t.sin() * h)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(vals.iter().sum())
}

/// `int x^p rho'(x) dx` for `p = 0..count`, same quadrature as [`density_mass`].
pub fn density_moments(v: &Potential, n_trunc: i64, nodes: usize, count: usize) -> Result<Vec<f64>> {
    let h = PI / nodes as f64;
    let rows = (0..nodes)
        .into_par_iter()
        .map(|i| {
            let t = (i as f64 + 0.5) * h;
            let x = 2.0 * t.cos();
            let w = density_at(v, x, n_trunc)? * 2.0 * t.sin() * h;
            Ok((0..count).map(|p| w * x.powi(p as i32)).collect::<Vec<f64>>())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((0..count).map(|p| rows.iter().map(|r| r[p]).sum()).collect())
}

/// Eigenvalues and squared first eigenvector components of the symmetric
/// tridiagonal matrix (`diag`, `off`), by implicit QL with Wilkinson shifts,
/// carrying only the first row of the eigenvector matrix.
pub fn tridiagonal_spectral_weights(diag: &[f64], off: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = diag.len();
    if off.len() + 1 != n.max(1) {
        return Err(Error::InvalidInput(format!("{} diagonal vs {} off-diagonal entries", n, off.len())));
    }
    let mut d = diag.to_vec();
    let mut e = off.to_vec();
    e.push(0.0);
    let mut row = vec![0.0; n];
    if n > 0 {
        row[0] = 1.0;
    }
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 60 {
                return Err(Error::NonConvergence(format!("tridiagonal QL stalled at row {l}")));
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut i = m;
            let mut deflated = false;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                let fz = row[i + 1];
                row[i + 1] = s * row[i] + c * fz;
                row[i] = c * row[i] - s * fz;
            }
            if deflated {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    let mut pairs: Vec<(f64, f64)> = d.into_iter().zip(row.into_iter().map(|x| x * x)).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(pairs.into_iter().unzip())
}

/// Spectral weights of the `dim x dim` truncation of `J`.
pub fn truncation_spectral_weights(v: &Potential, dim: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let diag: Vec<f64> = (1..=dim as i64).map(|n| v.get(n)).collect();
    let off = vec![1.0; dim.saturating_sub(1)];
    tridiagonal_spectral_weights(&diag, &off)
}

/// Calibration of the density constant: the free Jost quadrature
/// `int sqrt(4 - x^2) dx / |psi_0|^2` divided by the total weight of the free
/// truncation's spectral measure.
pub fn calibrate_normalization(dim: usize, nodes: usize) -> Result<f64> {
    let (_, w) = truncation_spectral_weights(&Potential::zero(), dim)?;
    let h = PI / nodes as f64;
    let raw: f64 = (0..nodes)
        .map(|i| {
            let t = (i as f64 + 0.5) * h;
            let x = 2.0 * t.cos();
            let sol = jost_solve(&Potential::zero(), C64::new(x, 0.0), 0)?;
            Ok((4.0 - x * x).sqrt() * (-2.0 * sol.ln_abs_x0()).exp() * 2.0 * t.sin() * h)
        })
        .sum::<Result<f64>>()?;
    Ok(raw / w.iter().sum::<f64>())
}

/// Uniform Simpson grid with `panels` (even) subintervals on `[a, b]`.
pub fn simpson_grid(a: f64, b: f64, panels: usize) -> Vec<f64> {
    let panels = panels + panels % 2;
    let h = (b - a) / panels as f64;
    (0..=panels).map(|i| if i == panels { b } else { a + h * i as f64 }).collect()
}

/// Composite Simpson integral of `ln rho'` over the samples lying in
/// `[a, b]`. The samples there must form a uniform grid with an even number
/// of panels whose endpoints are `a` and `b`.
pub fn entropy_integral(samples: &DensitySamples, interval: (f64, f64)) -> Result<f64> {
    let (a, b) = interval;
    let tol = 1e-12 * (1.0 + a.abs().max(b.abs()));
    let idx: Vec<usize> =
        (0..samples.grid.len()).filter(|&i| samples.grid[i] >= a - tol && samples.grid[i] <= b + tol).collect();
    if idx.len() < 3 || idx.len() % 2 == 0 {
        return Err(Error::InvalidInput(format!("Simpson needs an odd number >= 3 of samples, got {}", idx.len())));
    }
    let xs: Vec<f64> = idx.iter().map(|&i| samples.grid[i]).collect();
    if (xs[0] - a).abs() > tol || (xs[xs.len() - 1] - b).abs() > tol {
        return Err(Error::InvalidInput("samples do not reach the interval endpoints".into()));
    }
    let h = (b - a) / (xs.len() - 1) as f64;
    for (j, x) in xs.iter().enumerate() {
        if (x - (a + h * j as f64)).abs() > 1e-9 * h.max(1e-300) && j != xs.len() - 1 {
            return Err(Error::InvalidInput("samples are not uniformly spaced".into()));
        }
    }
    let mut acc = 0.0;
    for (j, &i) in idx.iter().enumerate() {
        let r = samples.rho_prime[i];
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::NonPositiveSample { z: samples.grid[i], value: r });
        }
        let w = if j == 0 || j == idx.len() - 1 {
            1.0
        } else if j % 2 == 1 {
            4.0
        } else {
            2.0
        };
        acc += w * r.ln();
    }
    Ok(acc * h / 3.0)
}

/// Samples `rho'` on a Simpson grid over `interval` and integrates `ln rho'`.
pub fn entropy_on_interval(v: &Potential, n_trunc: i64, interval: (f64, f64), panels: usize) -> Result<f64> {
    let grid = simpson_grid(interval.0, interval.1, panels);
    let samples = spectral_density(v, &grid, n_trunc)?;
    entropy_integral(&samples, interval)
}
