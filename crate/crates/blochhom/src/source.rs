//! Band-gap driving frequencies and the Gaussian source family.

use std::f64::consts::PI;

use faer::c64;
use gauss_quad::legendre::GaussLegendre;
use serde::{Deserialize, Serialize};

use crate::bloch::{DispersionDiagram, GammaPair, Operator};
use crate::error::{invalid, Error, Result};
use crate::grid::{separable_sum, FieldKind, FieldMeta, FieldOnGrid, Frame, Grid, PeriodicSampler};
use crate::linalg::{dot, matvec};
use crate::medium::{Coefficient, Medium};
use crate::quadrature::WavenumberQuadrature;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencySpec {
    pub p: usize,
    pub sigma: f64,
    pub omega_hat: f64,
    pub eps: f64,
    /// omega_p^2(0).
    pub omega0_sq: f64,
}

impl FrequencySpec {
    /// omega^2 = omega_p^2(0) + eps^2 sigma Omega_hat^2.
    pub fn omega_sq(&self) -> f64 {
        self.omega0_sq + self.eps * self.eps * self.sigma * self.omega_hat * self.omega_hat
    }

    /// Omega_eps^2 = omega_p^2(0) / eps^2 + sigma Omega_hat^2.
    pub fn big_omega_sq(&self) -> f64 {
        self.omega0_sq / (self.eps * self.eps) + self.sigma * self.omega_hat * self.omega_hat
    }

    pub fn meta(&self, kind: FieldKind) -> FieldMeta {
        FieldMeta { kind, eps: self.eps, p: self.p, sigma: self.sigma, omega_hat: self.omega_hat }
    }
}

/// Build the driving frequency and check that it falls in a gap of `diagram`:
/// below branch 0, or strictly between two consecutive sampled branches.
pub fn make_frequency(
    pair: &GammaPair,
    diagram: &DispersionDiagram,
    sigma: f64,
    omega_hat: f64,
    eps: f64,
) -> Result<FrequencySpec> {
    if sigma != 1.0 && sigma != -1.0 {
        return Err(invalid("sigma", "must be +1 or -1"));
    }
    if !(omega_hat.is_finite() && omega_hat > 0.0) {
        return Err(invalid("omega_hat", "must be positive"));
    }
    if !(eps.is_finite() && eps > 0.0) {
        return Err(invalid("eps", "must be positive"));
    }
    if !pair.simple {
        return Err(Error::NotSimple { p: pair.p, separation: pair.separation });
    }
    let freq = FrequencySpec { p: pair.p, sigma, omega_hat, eps, omega0_sq: pair.omega_sq };
    let w = freq.omega_sq();
    for m in 0..diagram.count {
        let (lo, hi) = diagram.branch_range(m);
        if w >= lo && w <= hi {
            return Err(Error::NotInGap { omega_sq: w, branch: m, lo, hi });
        }
    }
    let last = diagram.count - 1;
    let (lo, hi) = diagram.branch_range(last);
    if w > hi {
        // Above every computed branch: no gap is known there.
        return Err(Error::NotInGap { omega_sq: w, branch: last, lo, hi });
    }
    Ok(freq)
}

fn default_amplitude() -> f64 {
    1.0
}

/// Envelope F(khat) in wavenumber space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "envelope", rename_all = "lowercase", deny_unknown_fields)]
pub enum Envelope {
    /// F(khat) = A (2 sqrt(pi))^-1 exp(-|khat|^2 / 4).
    Gaussian {
        #[serde(default = "default_amplitude")]
        amplitude: f64,
    },
}

/// Gaussian mass outside the box is below 1e-14 of the total.
pub const DEFAULT_K_MAX: f64 = 11.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceSpec {
    pub envelope: Envelope,
    pub k_max: f64,
}

impl SourceSpec {
    pub fn gaussian(amplitude: f64) -> Result<Self> {
        let s = SourceSpec { envelope: Envelope::Gaussian { amplitude }, k_max: DEFAULT_K_MAX };
        s.validate()?;
        Ok(s)
    }

    pub fn with_k_max(mut self, k_max: f64) -> Result<Self> {
        self.k_max = k_max;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let Envelope::Gaussian { amplitude } = self.envelope;
        if !(amplitude.is_finite() && amplitude > 0.0) {
            return Err(invalid("amplitude", "must be positive"));
        }
        if !(self.k_max.is_finite() && self.k_max > 0.0) {
            return Err(invalid("k_max", "must be positive"));
        }
        Ok(())
    }

    /// F(khat), without truncation.
    pub fn envelope(&self, khat: &[f64]) -> f64 {
        let Envelope::Gaussian { amplitude } = self.envelope;
        let q: f64 = khat.iter().map(|k| k * k).sum();
        amplitude / (2.0 * PI.sqrt()) * (-q / 4.0).exp()
    }

    /// F(khat) restricted to the box |khat|_inf <= K_max.
    pub fn envelope_truncated(&self, khat: &[f64]) -> f64 {
        if khat.iter().any(|k| k.abs() > self.k_max) {
            0.0
        } else {
            self.envelope(khat)
        }
    }

    /// g(r) = (2 pi)^{-d/2} int F(khat) e^{i khat.r} dkhat, in closed form.
    pub fn inverse_transform(&self, r: &[f64]) -> f64 {
        let Envelope::Gaussian { amplitude } = self.envelope;
        let d = r.len() as i32;
        let q: f64 = r.iter().map(|x| x * x).sum();
        amplitude * 2f64.powf(d as f64 / 2.0 - 1.0) / PI.sqrt() * (-q).exp()
    }
}

/// g(eps x) on a fast grid by wavenumber quadrature instead of the closed form.
pub fn inverse_transform_by_quadrature(source: &SourceSpec, quad: &WavenumberQuadrature, eps: f64, grid: &Grid) -> Vec<c64> {
    let d = grid.d;
    let k = &quad.axis_nodes;
    let w = &quad.axis_weights;
    let coeffs: Vec<c64> = if d == 1 {
        k.iter().zip(w).map(|(&k1, &w1)| c64::new(w1 * source.envelope(&[k1]), 0.0)).collect()
    } else {
        let mut c = Vec::with_capacity(k.len() * k.len());
        for (&k1, &w1) in k.iter().zip(w) {
            for (&k2, &w2) in k.iter().zip(w) {
                c.push(c64::new(w1 * w2 * source.envelope(&[k1, k2]), 0.0));
            }
        }
        c
    };
    let freqs: Vec<f64> = k.iter().map(|x| x * eps).collect();
    let norm = (2.0 * PI).powf(-(d as f64) / 2.0);
    separable_sum(grid, &freqs, &freqs, &coeffs).into_iter().map(|v| v * norm).collect()
}

/// f_eps(eps x) = g(eps x) rho(x) phi_p(0; x) on a fast grid.
pub fn sample_source(
    medium: &Medium,
    op: &Operator,
    pair: &GammaPair,
    source: &SourceSpec,
    freq: &FrequencySpec,
    grid: &Grid,
) -> Result<FieldOnGrid> {
    if grid.frame != Frame::Fast || grid.d != medium.dim() {
        return Err(Error::GridMismatch);
    }
    let phi = PeriodicSampler::new(grid, &op.basis)?.synthesize(&op.basis, &pair.phi);
    let d = grid.d;
    let values = (0..grid.len())
        .map(|i| {
            let x = grid.point(i);
            let r = [freq.eps * x[0], freq.eps * x[1]];
            phi[i] * (source.inverse_transform(&r[..d]) * medium.evaluate(Coefficient::Rho, &x[..d]))
        })
        .collect();
    Ok(FieldOnGrid { grid: grid.clone(), values, meta: freq.meta(FieldKind::Source) })
}

#[derive(Debug, Clone, Copy)]
pub struct ProjectionCheck {
    /// eps^-d (2 pi)^{d/2} <rho phi_p conj(phi)> F(k / eps).
    pub closed: c64,
    /// Whole-space integral of f_eps(eps x) conj(e^{ik.x} phi(x)) over the truncated domain.
    pub numeric: c64,
    pub difference: f64,
}

/// Compare the closed-form projection of the source onto e^{ik.x} phi with a
/// direct integral over [-(L + 1/2), L + 1/2]^d, using composite
/// Gauss-Legendre on `n_sub` equal pieces per cell and axis.
#[allow(clippy::too_many_arguments)]
pub fn projection_check(
    medium: &Medium,
    op: &Operator,
    pair: &GammaPair,
    source: &SourceSpec,
    eps: f64,
    phi: &[c64],
    k: [f64; 2],
    half_width: usize,
    n_sub: usize,
    order: usize,
) -> Result<ProjectionCheck> {
    let d = medium.dim();
    if phi.len() != op.len() {
        return Err(invalid("phi", "length differs from the basis"));
    }
    if n_sub == 0 || order == 0 {
        return Err(invalid("n_sub", "quadrature needs at least one piece and one node"));
    }
    let kk = &k[..d];
    let scaled: Vec<f64> = kk.iter().map(|x| x / eps).collect();
    let overlap = dot(phi, &matvec(&op.mass, &pair.phi));
    let closed = overlap * (eps.powi(-(d as i32)) * (2.0 * PI).powf(d as f64 / 2.0) * source.envelope_truncated(&scaled));

    let gl = GaussLegendre::new(std::num::NonZeroUsize::new(order).unwrap());
    let h = 1.0 / n_sub as f64;
    let start = -(half_width as f64 + 0.5);
    let pieces = (2 * half_width + 1) * n_sub;
    let mut nodes = Vec::with_capacity(pieces * order);
    for piece in 0..pieces {
        let a = start + piece as f64 * h;
        for &(x, w) in gl.as_node_weight_pairs() {
            nodes.push((a + 0.5 * h * (x + 1.0), 0.5 * h * w));
        }
    }
    let ones = [(0.0, 1.0)];
    let second: &[(f64, f64)] = if d == 2 { &nodes } else { &ones };
    let mut numeric = c64::new(0.0, 0.0);
    for &(y, wy) in second {
        for &(x, wx) in &nodes {
            let p = [x, y];
            let r = [eps * x, eps * y];
            let f = op.basis.synthesize(&pair.phi, &p[..d])
                * (source.inverse_transform(&r[..d]) * medium.evaluate(Coefficient::Rho, &p[..d]));
            let kx: f64 = kk.iter().zip(&p).map(|(a, b)| a * b).sum();
            let test = c64::from_polar(1.0, kx) * op.basis.synthesize(phi, &p[..d]);
            numeric += f * test.conj() * (wx * wy);
        }
    }
    Ok(ProjectionCheck { closed, numeric, difference: (closed - numeric).norm() })
}
