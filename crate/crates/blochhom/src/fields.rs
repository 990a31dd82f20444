//! Exact Bloch-expansion solution, single-branch solution, effective envelopes
//! and homogenized fields, all synthesized by wavenumber quadrature.

use std::f64::consts::PI;

use faer::c64;
use rayon::prelude::*;

use crate::bloch::{GammaPair, Operator};
use crate::cell::{DispersionExpansion, Homogenization};
use crate::error::{Error, Result};
use crate::grid::{phase_table, separable_sum_tables, FieldKind, FieldOnGrid, Frame, Grid, PeriodicSampler};
use crate::linalg::{axpy, dot, matvec, zero};
use crate::quadrature::WavenumberQuadrature;
use crate::source::{FrequencySpec, SourceSpec};

pub const GAP_TOL: f64 = 1e-8;
pub const ENVELOPE_TOL: f64 = 1e-10;
pub const DEFAULT_MODE_COUNT: usize = 30;

/// Quadrature nodes are summed in fixed chunks so the result does not depend
/// on how rayon schedules them.
const CHUNK: usize = 8;

#[derive(Debug, Clone)]
pub struct Synthesis {
    pub field: FieldOnGrid,
    /// Largest magnitude of the last retained modal term over all nodes.
    pub tail: f64,
    pub max_imag: f64,
}

enum Modes {
    All(usize),
    Only(usize),
}

fn check_inputs(op: &Operator, quad: &WavenumberQuadrature, grid: &Grid, frame: Frame) -> Result<()> {
    if quad.d != op.dim() || grid.d != op.dim() || grid.frame != frame {
        return Err(Error::GridMismatch);
    }
    Ok(())
}

fn modal_synthesis(
    op: &Operator,
    pair: &GammaPair,
    freq: &FrequencySpec,
    source: &SourceSpec,
    quad: &WavenumberQuadrature,
    modes: Modes,
    grid: &Grid,
    kind: FieldKind,
) -> Result<Synthesis> {
    check_inputs(op, quad, grid, Frame::Fast)?;
    let d = op.dim();
    let count = match modes {
        Modes::All(m) => m,
        Modes::Only(p) => p + 1,
    };
    if count == 0 || count > op.len() {
        return Err(crate::error::invalid("mode_count", format!("must lie in 1..={}", op.len())));
    }
    let w2 = freq.omega_sq();
    let mf = matvec(&op.mass, &pair.phi);
    let sampler = PeriodicSampler::new(grid, &op.basis)?;
    let axes: Vec<Vec<f64>> = (0..d).map(|a| grid.axis(a)).collect();
    let nodes = quad.nodes();
    let norm = freq.eps * freq.eps * (2.0 * PI).powf(-(d as f64) / 2.0);

    let chunks: Vec<Result<(Vec<c64>, f64)>> = nodes
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut acc = vec![zero(); grid.len()];
            let mut tail: f64 = 0.0;
            for &(khat, w) in chunk {
                let k = [freq.eps * khat[0], freq.eps * khat[1]];
                let f = source.envelope_truncated(&khat[..d]);
                if f == 0.0 {
                    continue;
                }
                // A single branch is followed through the reduced wavenumber
                // k - 2 pi n; its modes are then re-expressed at k itself.
                let shift = match modes {
                    Modes::All(_) => [0i64; 2],
                    Modes::Only(_) => [(k[0] / (2.0 * PI)).round() as i64, (k[1] / (2.0 * PI)).round() as i64],
                };
                let reduced = [k[0] - 2.0 * PI * shift[0] as f64, k[1] - 2.0 * PI * shift[1] as f64];
                let sol = op.solve(reduced, count)?;
                let scale = norm * w * f;
                let mut coeffs = vec![zero(); op.len()];
                let range = match modes {
                    Modes::All(m) => 0..m,
                    Modes::Only(p) => p..p + 1,
                };
                for m in range.clone() {
                    let den = sol.omega_sq[m] - w2;
                    if den.abs() < GAP_TOL {
                        return Err(Error::GapViolation { k, m, value: den });
                    }
                    let v = shifted(op, &sol.vector(m), shift);
                    let amp = dot(&v, &mf) * (scale / den);
                    if m + 1 == range.end {
                        tail = tail.max(amp.norm());
                    }
                    axpy(&mut coeffs, amp, &v);
                }
                let periodic = sampler.synthesize(&op.basis, &coeffs);
                let ph: Vec<Vec<c64>> = (0..d).map(|a| phase_table(&axes[a], &[k[a]]).into_iter().map(|r| r[0]).collect()).collect();
                let n1 = grid.counts[0];
                for (i, (a, p)) in acc.iter_mut().zip(&periodic).enumerate() {
                    let mut e = ph[0][i % n1];
                    if d == 2 {
                        e *= ph[1][i / n1];
                    }
                    *a += p * e;
                }
            }
            Ok((acc, tail))
        })
        .collect();

    let mut values = vec![zero(); grid.len()];
    let mut tail: f64 = 0.0;
    for c in chunks {
        let (part, t) = c?;
        for (v, p) in values.iter_mut().zip(&part) {
            *v += p;
        }
        tail = tail.max(t);
    }
    let field = FieldOnGrid { grid: grid.clone(), values, meta: freq.meta(kind) };
    let max_imag = field.max_imag();
    Ok(Synthesis { field, tail, max_imag })
}

/// Coefficients of e^{-i 2 pi n.x} v(x): entry j takes v_{j + n}.
fn shifted(op: &Operator, v: &[c64], n: [i64; 2]) -> Vec<c64> {
    if n == [0, 0] {
        return v.to_vec();
    }
    let b = &op.basis;
    b.indices
        .iter()
        .map(|j| b.position([j[0] + n[0], j[1] + n[1]]).map_or(zero(), |pos| v[pos]))
        .collect()
}

/// u(x) on a fast grid from the first `mode_count` Bloch modes at k = eps khat_q.
pub fn exact_bloch_solution(
    op: &Operator,
    pair: &GammaPair,
    freq: &FrequencySpec,
    source: &SourceSpec,
    quad: &WavenumberQuadrature,
    mode_count: usize,
    grid: &Grid,
) -> Result<Synthesis> {
    modal_synthesis(op, pair, freq, source, quad, Modes::All(mode_count), grid, FieldKind::Exact)
}

/// The same synthesis keeping only branch p.
pub fn branch_solution(
    op: &Operator,
    pair: &GammaPair,
    freq: &FrequencySpec,
    source: &SourceSpec,
    quad: &WavenumberQuadrature,
    grid: &Grid,
) -> Result<Synthesis> {
    modal_synthesis(op, pair, freq, source, quad, Modes::Only(pair.p), grid, FieldKind::Branch)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnvelopeOrder {
    Zero,
    Two,
}

/// Denominator of the envelope integrand at khat.
pub fn envelope_denominator(expansion: &DispersionExpansion, freq: &FrequencySpec, order: EnvelopeOrder, khat: &[f64]) -> f64 {
    let mut den = expansion.omega2_sq(khat) - freq.sigma * freq.omega_hat * freq.omega_hat;
    if order == EnvelopeOrder::Two {
        den += freq.eps * freq.eps * expansion.omega4_sq(khat);
    }
    den
}

/// Derivative `deriv` (a list of axes) of W0 or W2 on a slow grid, by
/// multiplying the integrand with the matching powers of i khat.
pub fn effective_envelope(
    expansion: &DispersionExpansion,
    freq: &FrequencySpec,
    source: &SourceSpec,
    quad: &WavenumberQuadrature,
    order: EnvelopeOrder,
    deriv: &[usize],
    grid: &Grid,
) -> Result<FieldOnGrid> {
    let d = grid.d;
    if quad.d != d || grid.frame != Frame::Slow || expansion.mu0_over_rho0.d != d {
        return Err(Error::GridMismatch);
    }
    let k = &quad.axis_nodes;
    let w = &quad.axis_weights;
    let second: Vec<(f64, f64)> = if d == 2 { k.iter().copied().zip(w.iter().copied()).collect() } else { vec![(0.0, 1.0)] };
    let mut coeffs = Vec::with_capacity(k.len() * second.len());
    for (&k1, &w1) in k.iter().zip(w) {
        for &(k2, w2) in &second {
            let kh = [k1, k2];
            let den = envelope_denominator(expansion, freq, order, &kh[..d]);
            if den.abs() < ENVELOPE_TOL {
                return Err(Error::EnvelopeSingularity { khat: kh, value: den });
            }
            let mut c = c64::new(w1 * w2 * source.envelope_truncated(&kh[..d]) / den, 0.0);
            for &a in deriv {
                c *= c64::new(0.0, kh[a]);
            }
            coeffs.push(c);
        }
    }
    let e1 = phase_table(&grid.axis(0), k);
    let e2 = if d == 2 { phase_table(&grid.axis(1), k) } else { vec![vec![c64::new(1.0, 0.0)]] };
    let norm = (2.0 * PI).powf(-(d as f64) / 2.0);
    let values = separable_sum_tables(&e1, &e2, &coeffs).into_iter().map(|v| v * norm).collect();
    let kind = if order == EnvelopeOrder::Zero { FieldKind::W0 } else { FieldKind::W2 };
    Ok(FieldOnGrid { grid: grid.clone(), values, meta: freq.meta(kind) })
}

/// U0, U1 or U2 on a slow grid.
pub fn homogenized_field(
    hom: &Homogenization,
    op: &Operator,
    freq: &FrequencySpec,
    source: &SourceSpec,
    quad: &WavenumberQuadrature,
    order: usize,
    grid: &Grid,
) -> Result<FieldOnGrid> {
    if order > 2 {
        return Err(crate::error::invalid("order", "must be 0, 1 or 2"));
    }
    if grid.frame != Frame::Slow || grid.d != op.dim() || hom.pair.phi.len() != op.len() {
        return Err(Error::GridMismatch);
    }
    let d = grid.d;
    let eps = freq.eps;
    let expansion = hom.coefficients.expansion();
    let env_order = if order == 2 { EnvelopeOrder::Two } else { EnvelopeOrder::Zero };
    let env = |deriv: &[usize]| effective_envelope(&expansion, freq, source, quad, env_order, deriv, grid).map(|f| f.values);
    let fast = grid.relabel(1.0 / eps, Frame::Fast);
    let sampler = PeriodicSampler::new(&fast, &op.basis)?;
    let synth = |c: &[c64]| sampler.synthesize(&op.basis, c);

    let phi = synth(&hom.pair.phi);
    let w = env(&[])?;
    let mut values: Vec<c64> = phi.iter().zip(&w).map(|(a, b)| a * b).collect();
    if order >= 1 {
        for a in 0..d {
            let chi = synth(hom.chi1.get(&[a]));
            let dw = env(&[a])?;
            for ((v, c), g) in values.iter_mut().zip(&chi).zip(&dw) {
                *v += c * g * eps;
            }
        }
    }
    if order == 2 {
        let c1 = &hom.coefficients.c1;
        for a in 0..d {
            for b in 0..d {
                let mut coef = hom.chi2.get(&[a, b]).to_vec();
                axpy(&mut coef, c1.get(&[a, b]), &hom.pair.phi);
                let micro = synth(&coef);
                let ddw = env(&[a, b])?;
                for ((v, c), g) in values.iter_mut().zip(&micro).zip(&ddw) {
                    *v += c * g * (eps * eps);
                }
            }
        }
    }
    let kind = [FieldKind::U0, FieldKind::U1, FieldKind::U2][order];
    Ok(FieldOnGrid { grid: grid.clone(), values, meta: freq.meta(kind) })
}
