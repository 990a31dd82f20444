//! Independent oracles shared by the integration and acceptance tests.
#![allow(dead_code)]

use std::f64::consts::PI;

/// Layer (G, rho, length) of a 1D periodic stack.
#[derive(Clone, Copy)]
pub struct Layer {
    pub g: f64,
    pub rho: f64,
    pub len: f64,
}

/// Half-trace of the transfer matrix of a two-layer cell at frequency omega;
/// Bloch waves exist where it equals cos k.
pub fn half_trace(a: Layer, b: Layer, omega: f64) -> f64 {
    let pa = omega * (a.rho / a.g).sqrt() * a.len;
    let pb = omega * (b.rho / b.g).sqrt() * b.len;
    let za = (a.rho * a.g).sqrt();
    let zb = (b.rho * b.g).sqrt();
    pa.cos() * pb.cos() - 0.5 * (za / zb + zb / za) * pa.sin() * pb.sin()
}

fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let mut flo = f(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if (fm < 0.0) == (flo < 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 * hi.max(1.0) {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// The first `count` frequencies omega >= 0 at Bloch wavenumber k (0 or pi)
/// from sign changes of half_trace - cos k, squared.
pub fn transfer_matrix_omega_sq(a: Layer, b: Layer, k: f64, count: usize) -> Vec<f64> {
    let target = k.cos();
    let f = |w: f64| half_trace(a, b, w) - target;
    let mut out = Vec::new();
    if target == 1.0 {
        out.push(0.0);
    }
    let step = 1e-3;
    let mut w = 1e-6;
    // Touching roots (closed gaps) would be missed, so a contrast is required.
    while out.len() < count {
        let next = w + step;
        if (f(w) < 0.0) != (f(next) < 0.0) {
            let r = bisect(f, w, next);
            out.push(r * r);
        }
        w = next;
        assert!(w < 1e4, "transfer-matrix root search ran away");
    }
    out
}

/// The acceptance two-phase stack: (G, rho) = (1, 1) on half the cell and
/// (6, 20) on the other half.
pub fn two_phase_layers() -> (Layer, Layer) {
    (Layer { g: 1.0, rho: 1.0, len: 0.5 }, Layer { g: 6.0, rho: 20.0, len: 0.5 })
}

/// int exp(-s^2) exp(-kappa |r - s|) ds over the real line.
pub fn gaussian_exponential_convolution(r: f64, kappa: f64) -> f64 {
    let e = |x: f64| libm::erfc(x);
    0.5 * PI.sqrt()
        * (kappa * kappa / 4.0).exp()
        * ((-kappa * r).exp() * e(kappa / 2.0 - r) + (kappa * r).exp() * e(kappa / 2.0 + r))
}

/// Slow-coordinate solution of -G U'' + rho Omega^2 U = sqrt(rho) A g(r) with
/// g(r) = (2 pi)^{-1/2} e^{-r^2}: the response of a homogeneous medium to
/// the unit-amplitude Gaussian source below the acoustic branch.
pub fn homogeneous_response_1d(r: f64, g: f64, rho: f64, omega_hat: f64, amplitude: f64) -> f64 {
    let kappa = omega_hat * (rho / g).sqrt();
    let kernel_scale = 1.0 / (2.0 * kappa * g);
    amplitude * rho.sqrt() / (2.0 * PI).sqrt() * kernel_scale * gaussian_exponential_convolution(r, kappa)
}
