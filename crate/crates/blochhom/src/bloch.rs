//! Plane-wave discretization of the Bloch operator A(k) = -(div + ik).G(grad + ik)
//! relative to rho, and the generalized Hermitian eigensolver built on it.
//!
//! In the basis e^{i 2 pi j.x}, |j|_inf <= N, the Galerkin matrices are
//!
//! ```text
//! S(k)[r,s] = Gm[r,s] (2 pi j_r + k).(2 pi j_s + k),   M[r,s] = rho^(j_r - j_s)
//! ```
//!
//! where `Gm` is either the Toeplitz matrix of G (Laurent rule) or the inverse
//! of the Toeplitz matrix of 1/G (inverse rule). The inverse rule converges
//! much faster for sharp layered media, where G u' is continuous but u' is not.

use std::f64::consts::PI;

use faer::linalg::triangular_solve::{solve_lower_triangular_in_place, solve_upper_triangular_in_place};
use faer::{c64, Mat, Par, Side};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{
    dot, hermitian_form_dd, hermitize, inverse, lu_solve, matvec, max_abs_diff_identity, norm, DoubleDouble,
};
use crate::medium::{Coefficient, CoefficientTable, Medium};

#[derive(Debug, Clone)]
pub struct PlaneWaveBasis {
    pub d: usize,
    pub cutoff: usize,
    /// j = 0 first, then the rest in lexicographic order.
    pub indices: Vec<[i64; 2]>,
    /// Basis position of each multi-index in the dense (2N+1)^d layout.
    dense_to_basis: Vec<usize>,
}

impl PlaneWaveBasis {
    pub fn new(d: usize, cutoff: usize) -> Result<Self> {
        if d != 1 && d != 2 {
            return Err(invalid("d", "must be 1 or 2"));
        }
        if cutoff < 1 {
            return Err(invalid("cutoff", "must be at least 1"));
        }
        let n = cutoff as i64;
        let mut lex: Vec<[i64; 2]> = if d == 1 {
            (-n..=n).map(|a| [a, 0]).collect()
        } else {
            (-n..=n).flat_map(|a| (-n..=n).map(move |b| [a, b])).collect()
        };
        let zero_at = lex.iter().position(|j| *j == [0, 0]).unwrap();
        let zero = lex.remove(zero_at);
        let mut indices = vec![zero];
        indices.extend(lex);
        let mut basis = PlaneWaveBasis { d, cutoff, indices, dense_to_basis: vec![] };
        let mut map = vec![0; basis.len()];
        for (pos, j) in basis.indices.iter().enumerate() {
            map[basis.dense_index(*j)] = pos;
        }
        basis.dense_to_basis = map;
        Ok(basis)
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn width(&self) -> usize {
        2 * self.cutoff + 1
    }

    /// Row-major position of j in the dense (2N+1)^d array.
    pub fn dense_index(&self, j: [i64; 2]) -> usize {
        let n = self.cutoff as i64;
        if self.d == 1 {
            (j[0] + n) as usize
        } else {
            ((j[0] + n) * (2 * n + 1) + j[1] + n) as usize
        }
    }

    pub fn position(&self, j: [i64; 2]) -> Option<usize> {
        let n = self.cutoff as i64;
        if j[0].abs() > n || j[1].abs() > n || (self.d == 1 && j[1] != 0) {
            return None;
        }
        Some(self.dense_to_basis[self.dense_index(j)])
    }

    /// Scatter basis-ordered coefficients into the dense layout.
    pub fn to_dense(&self, c: &[c64]) -> Vec<c64> {
        let mut out = vec![c64::new(0.0, 0.0); self.len()];
        for (pos, j) in self.indices.iter().enumerate() {
            out[self.dense_index(*j)] = c[pos];
        }
        out
    }

    /// Evaluate sum_j c_j e^{i 2 pi j.x}.
    pub fn synthesize(&self, c: &[c64], x: &[f64]) -> c64 {
        self.indices
            .iter()
            .zip(c)
            .map(|(j, cj)| {
                let ph: f64 = (0..self.d).map(|a| j[a] as f64 * x[a]).sum();
                cj * c64::from_polar(1.0, 2.0 * PI * ph)
            })
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StiffnessRule {
    /// Inverse rule for sharp 1D media, Laurent rule otherwise.
    Auto,
    Laurent,
    Inverse,
}

impl StiffnessRule {
    pub fn resolve(self, medium: &Medium) -> StiffnessRule {
        match self {
            StiffnessRule::Auto if medium.dim() == 1 && medium.smoothing() == 0.0 => StiffnessRule::Inverse,
            StiffnessRule::Auto => StiffnessRule::Laurent,
            r => r,
        }
    }
}

/// Coefficient matrices of the discrete operator; k enters only through the
/// diagonal factors, so these are assembled once per medium and cutoff.
#[derive(Debug, Clone)]
pub struct Operator {
    pub basis: PlaneWaveBasis,
    pub rule: StiffnessRule,
    pub gm: Mat<c64>,
    pub mass: Mat<c64>,
    /// 2 pi j for each basis function.
    pub wave: Vec<[f64; 2]>,
}

fn toeplitz(table: &CoefficientTable, which: Coefficient, basis: &PlaneWaveBasis) -> Result<Mat<c64>> {
    let m = basis.len();
    let mut out = Mat::<c64>::zeros(m, m);
    for (r, jr) in basis.indices.iter().enumerate() {
        for (s, js) in basis.indices.iter().enumerate() {
            let n = [jr[0] - js[0], jr[1] - js[1]];
            out[(r, s)] = table.get(which, n).ok_or(Error::TableTooSmall {
                table: table.cutoff,
                required: 2 * basis.cutoff,
            })?;
        }
    }
    Ok(out)
}

impl Operator {
    pub fn new(medium: &Medium, cutoff: usize, rule: StiffnessRule) -> Result<Self> {
        let basis = PlaneWaveBasis::new(medium.dim(), cutoff)?;
        let table = medium.fourier_table(2 * cutoff)?;
        Self::from_table(&table, basis, rule.resolve(medium))
    }

    pub fn from_table(table: &CoefficientTable, basis: PlaneWaveBasis, rule: StiffnessRule) -> Result<Self> {
        if table.cutoff < 2 * basis.cutoff {
            return Err(Error::TableTooSmall { table: table.cutoff, required: 2 * basis.cutoff });
        }
        if table.d != basis.d {
            return Err(invalid("basis", "dimension differs from the coefficient table"));
        }
        let gm = match rule {
            StiffnessRule::Inverse => {
                if table.inv_g.is_none() {
                    return Err(invalid("stiffness_rule", "inverse rule needs an unsmoothed medium"));
                }
                let mut g = inverse(&toeplitz(table, Coefficient::InvG, &basis)?);
                hermitize(&mut g);
                g
            }
            _ => toeplitz(table, Coefficient::G, &basis)?,
        };
        let mass = toeplitz(table, Coefficient::Rho, &basis)?;
        let wave = basis.indices.iter().map(|j| [2.0 * PI * j[0] as f64, 2.0 * PI * j[1] as f64]).collect();
        Ok(Operator { basis, rule, gm, mass, wave })
    }

    pub fn dim(&self) -> usize {
        self.basis.d
    }

    pub fn len(&self) -> usize {
        self.basis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.basis.is_empty()
    }

    pub fn stiffness(&self, k: [f64; 2]) -> Mat<c64> {
        let d = self.dim();
        let m = self.len();
        let kw: Vec<[f64; 2]> = self.wave.iter().map(|w| [w[0] + k[0], w[1] + k[1]]).collect();
        Mat::from_fn(m, m, |r, s| {
            let f: f64 = (0..d).map(|a| kw[r][a] * kw[s][a]).sum();
            self.gm[(r, s)] * f
        })
    }

    /// First-order coefficient T_a of S(k) = S(0) + sum_a k_a T_a + |k|^2 Gm.
    pub fn t_matrix(&self, a: usize) -> Mat<c64> {
        let m = self.len();
        Mat::from_fn(m, m, |r, s| self.gm[(r, s)] * (self.wave[r][a] + self.wave[s][a]))
    }

    pub fn assemble(&self, k: [f64; 2]) -> (Mat<c64>, Mat<c64>) {
        (self.stiffness(k), self.mass.clone())
    }
}

/// Galerkin stiffness and mass at wavenumber k from a precomputed table.
pub fn assemble_operator(
    table: &CoefficientTable,
    basis: &PlaneWaveBasis,
    k: [f64; 2],
    rule: StiffnessRule,
) -> Result<(Mat<c64>, Mat<c64>)> {
    let rule = if rule == StiffnessRule::Auto {
        if table.d == 1 && table.inv_g.is_some() {
            StiffnessRule::Inverse
        } else {
            StiffnessRule::Laurent
        }
    } else {
        rule
    };
    Ok(Operator::from_table(table, basis.clone(), rule)?.assemble(k))
}

#[derive(Debug, Clone)]
pub struct BandSolution {
    pub k: [f64; 2],
    /// Ascending omega_m^2.
    pub omega_sq: Vec<f64>,
    /// Columns are M-orthonormal eigenvectors.
    pub vectors: Mat<c64>,
    /// max |V^H M V - I|.
    pub orthonormality: f64,
}

impl BandSolution {
    pub fn vector(&self, m: usize) -> Vec<c64> {
        (0..self.vectors.nrows()).map(|i| self.vectors[(i, m)]).collect()
    }
}

/// Generalized eigenproblem S v = lambda M v by Cholesky reduction of M.
pub fn solve_bands(stiffness: &Mat<c64>, mass: &Mat<c64>, count: usize) -> Result<BandSolution> {
    solve_bands_at(stiffness, mass, count, [0.0, 0.0])
}

fn solve_bands_at(stiffness: &Mat<c64>, mass: &Mat<c64>, count: usize, k: [f64; 2]) -> Result<BandSolution> {
    let n = mass.nrows();
    if count == 0 || count > n {
        return Err(invalid("count", format!("must be in 1..={n}")));
    }
    let llt = mass.llt(Side::Lower).map_err(|_| Error::MassNotPositiveDefinite)?;
    let l = llt.L();
    let mut y = stiffness.clone();
    solve_lower_triangular_in_place(l, y.as_mut(), Par::Seq);
    let mut a = y.adjoint().to_owned();
    solve_lower_triangular_in_place(l, a.as_mut(), Par::Seq);
    hermitize(&mut a);
    let evd = a.self_adjoint_eigen(Side::Lower).map_err(|_| Error::EigenFailure { k })?;
    let s = evd.S();
    let omega_sq: Vec<f64> = (0..count).map(|i| s[i].re).collect();
    let mut vectors = evd.U().subcols(0, count).to_owned();
    solve_upper_triangular_in_place(l.adjoint(), vectors.as_mut(), Par::Seq);
    let gram = vectors.adjoint() * (mass * &vectors);
    let orthonormality = max_abs_diff_identity(&gram);
    Ok(BandSolution { k, omega_sq, vectors, orthonormality })
}

impl Operator {
    pub fn solve(&self, k: [f64; 2], count: usize) -> Result<BandSolution> {
        let (s, m) = self.assemble(k);
        solve_bands_at(&s, &m, count, k)
    }

    /// Rayleigh quotient of v at k.
    pub fn rayleigh(&self, k: [f64; 2], v: &[c64]) -> f64 {
        let s = self.stiffness(k);
        dot(v, &matvec(&s, v)).re / dot(v, &matvec(&self.mass, v)).re
    }

    /// Eigenvalue m at k, sharpened by shifted inverse iteration and a final
    /// Rayleigh quotient. Used where remainders approach eigensolver roundoff.
    pub fn refined_eigenvalue(&self, k: [f64; 2], m: usize, steps: usize) -> Result<f64> {
        Ok(self.refined_pair(k, m, steps)?.0)
    }

    /// As `refined_eigenvalue`, also returning the unit-norm eigenvector.
    pub fn refined_pair(&self, k: [f64; 2], m: usize, steps: usize) -> Result<(f64, Vec<c64>)> {
        let sol = self.solve(k, (m + 2).min(self.len()))?;
        let s = self.stiffness(k);
        let mut v = sol.vector(m);
        let mut lambda = sol.omega_sq[m];
        for _ in 0..steps {
            let shifted = Mat::from_fn(s.nrows(), s.ncols(), |i, j| s[(i, j)] - self.mass[(i, j)] * lambda);
            let lu = shifted.partial_piv_lu();
            let w = lu_solve(&lu, &matvec(&self.mass, &v));
            let nw = norm(&w);
            if !nw.is_finite() || nw == 0.0 {
                break;
            }
            v = w.iter().map(|x| x / nw).collect();
            lambda = dot(&v, &matvec(&s, &v)).re / dot(&v, &matvec(&self.mass, &v)).re;
        }
        Ok((lambda, v))
    }

    /// Rayleigh quotient of v for S(0) + sum_a k_a T_a + |k|^2 Gm in
    /// double-double arithmetic, with the stored S(0), T_a, Gm and M taken as
    /// exact. Differences of these quotients at nearby k keep their digits
    /// where plain eigenvalues would cancel to roundoff.
    pub fn rayleigh_dd(&self, k: [f64; 2], v: &[c64]) -> DoubleDouble {
        let d = self.dim();
        let n = self.len();
        let s0 = self.stiffness([0.0, 0.0]);
        let t: Vec<Mat<c64>> = (0..d).map(|a| self.t_matrix(a)).collect();
        let kk = (0..d).fold(DoubleDouble::default(), |acc, a| acc.add(DoubleDouble::product(k[a], k[a])));
        let num = hermitian_form_dd(n, v, |i, j| {
            let mut re = DoubleDouble::new(s0[(i, j)].re).add(kk.mul_f64(self.gm[(i, j)].re));
            let mut im = DoubleDouble::new(s0[(i, j)].im).add(kk.mul_f64(self.gm[(i, j)].im));
            for (a, ta) in t.iter().enumerate() {
                re = re.add(DoubleDouble::product(k[a], ta[(i, j)].re));
                im = im.add(DoubleDouble::product(k[a], ta[(i, j)].im));
            }
            (re, im)
        });
        let den = hermitian_form_dd(n, v, |i, j| {
            (DoubleDouble::new(self.mass[(i, j)].re), DoubleDouble::new(self.mass[(i, j)].im))
        });
        num.div(den)
    }
}

#[derive(Debug, Clone)]
pub struct DispersionDiagram {
    pub ks: Vec<[f64; 2]>,
    /// omega_sq[i][m] at ks[i].
    pub omega_sq: Vec<Vec<f64>>,
    pub count: usize,
}

impl DispersionDiagram {
    /// (min, max) of branch m over the samples.
    pub fn branch_range(&self, m: usize) -> (f64, f64) {
        self.omega_sq.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), w| (lo.min(w[m]), hi.max(w[m])))
    }
}

pub fn dispersion_diagram(op: &Operator, ks: &[[f64; 2]], count: usize) -> Result<DispersionDiagram> {
    if count == 0 || count > op.len() {
        return Err(invalid("count", format!("must be in 1..={}", op.len())));
    }
    for k in ks {
        if k.iter().any(|c| !c.is_finite() || c.abs() > PI + 1e-12) {
            return Err(invalid("k_samples", format!("{k:?} is outside the Brillouin zone")));
        }
    }
    let omega_sq = ks
        .par_iter()
        .map(|&k| op.solve(k, count).map(|s| s.omega_sq))
        .collect::<Result<Vec<_>>>()?;
    Ok(DispersionDiagram { ks: ks.to_vec(), omega_sq, count })
}

/// Gamma -> X -> M -> Gamma with `per_segment` steps per leg.
pub fn gamma_x_m_gamma(per_segment: usize) -> Vec<[f64; 2]> {
    let corners = [[0.0, 0.0], [PI, 0.0], [PI, PI], [0.0, 0.0]];
    let mut ks = Vec::with_capacity(3 * per_segment + 1);
    for w in corners.windows(2) {
        for i in 0..per_segment {
            let t = i as f64 / per_segment as f64;
            ks.push([w[0][0] + t * (w[1][0] - w[0][0]), w[0][1] + t * (w[1][1] - w[0][1])]);
        }
    }
    ks.push([0.0, 0.0]);
    ks
}

/// n + 1 equispaced samples covering [-pi, pi].
pub fn uniform_1d(n: usize) -> Vec<[f64; 2]> {
    (0..=n).map(|i| [-PI + 2.0 * PI * i as f64 / n as f64, 0.0]).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandGap {
    /// Gap lies between branches `lower_branch` and `lower_branch + 1`.
    pub lower_branch: usize,
    pub lo: f64,
    pub hi: f64,
}

/// Gaps narrower than this, relative to the edge value, are touching
/// branches seen through eigensolver roundoff.
pub const GAP_WIDTH_TOL: f64 = 1e-9;

pub fn find_band_gaps(diagram: &DispersionDiagram) -> Vec<BandGap> {
    (0..diagram.count.saturating_sub(1))
        .filter_map(|m| {
            let lo = diagram.branch_range(m).1;
            let hi = diagram.branch_range(m + 1).0;
            (hi - lo > GAP_WIDTH_TOL * hi.abs().max(1.0)).then_some(BandGap { lower_branch: m, lo, hi })
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct GammaPair {
    pub p: usize,
    pub omega_sq: f64,
    /// M-normalized, phase fixed.
    pub phi: Vec<c64>,
    pub simple: bool,
    /// Distance to the nearest neighbouring eigenvalue relative to their magnitude.
    pub separation: f64,
    pub orthonormality: f64,
}

pub const SIMPLICITY_THRESHOLD: f64 = 1e-6;

/// Accepted max |V^H M V - I| for a band solve.
pub const ORTHONORMALITY_TOL: f64 = 1e-10;

/// Rotate so that the j = 0 coefficient is real positive, falling back to
/// the largest coefficient when the mean is negligible.
pub fn fix_phase(v: &mut [c64]) {
    let pivot = if v[0].norm() >= 1e-8 {
        v[0]
    } else {
        *v.iter().max_by(|a, b| a.norm().total_cmp(&b.norm())).unwrap()
    };
    if pivot.norm() == 0.0 {
        return;
    }
    let rot = pivot.conj() / pivot.norm();
    for x in v.iter_mut() {
        *x *= rot;
    }
}

pub fn eigenpair_at_gamma(op: &Operator, p: usize, threshold: f64) -> Result<GammaPair> {
    if p + 1 >= op.len() {
        return Err(invalid("p", format!("must be below {}", op.len() - 1)));
    }
    let sol = op.solve([0.0, 0.0], p + 2)?;
    let w = &sol.omega_sq;
    let mut sep = w[p + 1] - w[p];
    let mut scale = w[p].abs().max(w[p + 1].abs());
    if p > 0 {
        sep = sep.min(w[p] - w[p - 1]);
        scale = scale.max(w[p - 1].abs());
    }
    let separation = if scale > 0.0 { sep / scale } else { 0.0 };
    let mut phi = sol.vector(p);
    fix_phase(&mut phi);
    Ok(GammaPair {
        p,
        omega_sq: w[p],
        phi,
        simple: separation > threshold,
        separation,
        orthonormality: sol.orthonormality,
    })
}
