//! Spectral parameter maps and band geometry.
//!
//! `lambda_site(z, v)` is the root of `w^2 - (z - v) w + 1 = 0` that maps the
//! upper half-plane into the lower half of the unit disc. On the real band it
//! is the boundary value from `Im z = +0`, i.e. the unimodular root with
//! `Im w <= 0`.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-site symbol value; see the module docs for the branch.
pub fn lambda_site(z: C64, v: f64) -> Result<C64> {
    if !(z.re.is_finite() && z.im.is_finite() && v.is_finite()) {
        return Err(Error::InvalidInput("non-finite spectral parameter or potential".into()));
    }
    if z.im < 0.0 {
        return Err(Error::InvalidInput(format!("Im z = {} < 0 is outside the domain", z.im)));
    }
    let u = z - v;
    if z.im == 0.0 {
        let x = u.re;
        if (x.abs() - 2.0).abs() == 0.0 {
            return Err(Error::BandEdge { re: z.re, im: z.im });
        }
        if x.abs() < 2.0 {
            // unimodular pair exp(+-i theta); the limit from above has Im w <= 0
            let s = (4.0 - x * x).sqrt();
            return Ok(C64::new(0.5 * x, -0.5 * s));
        }
        // real pair, the smaller one in modulus; computed as 1/big to avoid cancellation
        let big = 0.5 * (x + x.signum() * (x * x - 4.0).sqrt());
        return Ok(C64::new(1.0 / big, 0.0));
    }
    let s = (u * u - 4.0).sqrt();
    let plus = (u + s) * 0.5;
    let minus = (u - s) * 0.5;
    let big = if plus.norm() >= minus.norm() { plus } else { minus };
    Ok(big.inv())
}

/// `z` with its Joukowski preimage `k` (`k + 1/k = z`, `|k| <= 1`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralPoint {
    pub z: C64,
    pub k: C64,
    pub lambda_tilde: C64,
}

impl SpectralPoint {
    pub fn new(z: C64) -> Result<Self> {
        let k = lambda_site(z, 0.0)?;
        Ok(Self { z, k, lambda_tilde: k })
    }

    pub fn on_band(&self) -> bool {
        self.z.im == 0.0 && self.z.re.abs() < 2.0
    }
}

pub fn make_spectral_point(z: C64) -> Result<SpectralPoint> {
    SpectralPoint::new(z)
}

/// Upper bound on `|lambda~(z)|` in the upper half-plane.
pub fn lambda_tilde_bound(im_z: f64) -> f64 {
    0.5 * ((4.0 + im_z * im_z).sqrt() - im_z)
}

/// The nodes `z_j = 2 cos(pi - pi j / q)` splitting `[-2, 2]` into `q`
/// subintervals, together with an exclusion margin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandPartition {
    pub q: usize,
    pub nodes: Vec<f64>,
    pub delta: f64,
}

impl BandPartition {
    pub fn new(q: usize, delta: f64) -> Result<Self> {
        if q == 0 {
            return Err(Error::InvalidInput("q must be positive".into()));
        }
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::InvalidInput(format!("margin must be positive, got {delta}")));
        }
        let nodes: Vec<f64> = (0..=q)
            .map(|j| {
                // exact endpoints; cos(pi) and cos(0) round cleanly but cos(pi/2) does not
                if 2 * j == q {
                    0.0
                } else {
                    2.0 * (PI - PI * j as f64 / q as f64).cos()
                }
            })
            .collect();
        let half_width = nodes.windows(2).map(|w| 0.5 * (w[1] - w[0])).fold(f64::INFINITY, f64::min);
        if delta >= half_width {
            return Err(Error::DeltaTooLarge { q, delta, half_width });
        }
        Ok(Self { q, nodes, delta })
    }

    /// `[z_j + delta, z_{j+1} - delta]` for `j = 0..q`.
    pub fn intervals(&self) -> Vec<(f64, f64)> {
        self.nodes.windows(2).map(|w| (w[0] + self.delta, w[1] - self.delta)).collect()
    }

    /// Index of the interior interval containing `x`, if any.
    pub fn interval_of(&self, x: f64) -> Option<usize> {
        self.intervals().iter().position(|&(a, b)| a <= x && x <= b)
    }
}

pub fn band_partition(q: usize, delta: f64) -> Result<BandPartition> {
    BandPartition::new(q, delta)
}
