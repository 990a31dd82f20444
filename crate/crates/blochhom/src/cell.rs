//! Constrained cell problems at Gamma and the effective tensors built from them.
//!
//! With `f` the coefficients of phi_p(0), `L = S(0) - omega_p^2(0) M` and the
//! expansion `S(k) = S(0) + sum_a k_a T_a + |k|^2 Gm`, the correctors solve
//!
//! ```text
//! L x_a      = i T_a f
//! L X_ab     = sym[ i T_a x_b + d_ab Gm f - (mu0_ab/rho0) M f ]
//! L X_abc    = sym[ i T_a X_bc + d_ab Gm x_c - (mu0_ab/rho0) M x_c ]
//! ```
//!
//! each subject to f^H M x = 0, so that the Gamma eigenfunction expands as
//! phi(k) = f + i k.x + (ik)^2 : X + (ik)^3 : X3 + ...

use faer::linalg::solvers::PartialPivLu;
use faer::{c64, Mat};

use crate::bloch::{GammaPair, Operator};
use crate::convergence::{slope_fit, SlopeFit};
use crate::error::{invalid, Error, Result};
use crate::linalg::{axpy, dot, lu_solve, matvec, norm, scale, zero};
use crate::tensor::Tensor;

pub const COMPATIBILITY_TOL: f64 = 1e-9;
pub const CONSTRAINT_TOL: f64 = 1e-10;
pub const RESIDUAL_TOL: f64 = 1e-10;
pub const DIAGNOSTIC_TOL: f64 = 1e-7;

const I: c64 = c64 { re: 0.0, im: 1.0 };

/// Worst residuals seen over a batch of constrained solves.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SolveStats {
    /// |f^H b| / (|b| |f|) before solving.
    pub compatibility: f64,
    /// |f^H M x| / (|M f| |x|).
    pub constraint: f64,
    /// Relative residual of the bordered system.
    pub residual: f64,
}

impl SolveStats {
    fn merge(&mut self, o: SolveStats) {
        self.compatibility = self.compatibility.max(o.compatibility);
        self.constraint = self.constraint.max(o.constraint);
        self.residual = self.residual.max(o.residual);
    }

    pub fn within_tolerance(&self) -> bool {
        self.compatibility <= COMPATIBILITY_TOL && self.constraint <= CONSTRAINT_TOL && self.residual <= RESIDUAL_TOL
    }
}

/// One factorization of the bordered matrix [[L, Mf], [(Mf)^H, 0]] shared by
/// every corrector solve.
pub struct CellProblem<'a> {
    pub op: &'a Operator,
    pub pair: GammaPair,
    pub f: Vec<c64>,
    mf: Vec<c64>,
    l: Mat<c64>,
    lu: PartialPivLu<c64>,
    t: Vec<Mat<c64>>,
}

impl<'a> CellProblem<'a> {
    pub fn new(op: &'a Operator, pair: &GammaPair) -> Result<Self> {
        if !pair.simple {
            return Err(Error::NotSimple { p: pair.p, separation: pair.separation });
        }
        Self::with_nullvector(op, pair, pair.phi.clone())
    }

    /// Same as `new` with an explicitly supplied (possibly rescaled) nullvector.
    pub fn with_nullvector(op: &'a Operator, pair: &GammaPair, f: Vec<c64>) -> Result<Self> {
        if f.len() != op.len() {
            return Err(invalid("nullvector", "length differs from the basis"));
        }
        let n = op.len();
        let s0 = op.stiffness([0.0, 0.0]);
        let l = Mat::from_fn(n, n, |i, j| s0[(i, j)] - op.mass[(i, j)] * pair.omega_sq);
        let mf = matvec(&op.mass, &f);
        let bordered = Mat::from_fn(n + 1, n + 1, |i, j| match (i < n, j < n) {
            (true, true) => l[(i, j)],
            (true, false) => mf[i],
            (false, true) => mf[j].conj(),
            (false, false) => zero(),
        });
        let lu = bordered.partial_piv_lu();
        let t = (0..op.dim()).map(|a| op.t_matrix(a)).collect();
        Ok(CellProblem { op, pair: pair.clone(), f, mf, l, lu, t })
    }

    pub fn dim(&self) -> usize {
        self.op.dim()
    }

    fn residual(&self, x: &[c64], mu: c64, b: &[c64]) -> (Vec<c64>, c64) {
        let mut r = matvec(&self.l, x);
        axpy(&mut r, mu, &self.mf);
        for (ri, bi) in r.iter_mut().zip(b) {
            *ri -= bi;
        }
        (r, dot(&self.mf, x))
    }

    /// Solve L x = b with f^H M x = 0, after checking f^H b = 0.
    pub fn solve_constrained(&self, b: &[c64]) -> Result<(Vec<c64>, SolveStats)> {
        self.solve_constrained_scaled(b, norm(b))
    }

    /// As `solve_constrained`, with tolerances measured against `scale`, the
    /// size of the terms that were summed into `b`. A right-hand side that
    /// cancels down to roundoff is then not mistaken for an incompatible one.
    pub fn solve_constrained_scaled(&self, b: &[c64], scale: f64) -> Result<(Vec<c64>, SolveStats)> {
        let nb = norm(b).max(scale);
        let n = self.op.len();
        if nb == 0.0 {
            return Ok((vec![zero(); n], SolveStats::default()));
        }
        let compatibility = dot(&self.f, b).norm() / (nb * norm(&self.f));
        if compatibility > COMPATIBILITY_TOL {
            return Err(Error::CompatibilityViolation {
                inner: dot(&self.f, b).norm(),
                bound: COMPATIBILITY_TOL * nb * norm(&self.f),
            });
        }
        let mut rhs = b.to_vec();
        rhs.push(zero());
        let mut sol = lu_solve(&self.lu, &rhs);
        // One step of iterative refinement.
        let (r, c) = self.residual(&sol[..n], sol[n], b);
        let mut corr_rhs = r;
        corr_rhs.push(c);
        let corr = lu_solve(&self.lu, &corr_rhs);
        for (s, e) in sol.iter_mut().zip(&corr) {
            *s -= e;
        }
        let mu = sol[n];
        sol.truncate(n);
        let (r, c) = self.residual(&sol, mu, b);
        let residual = (norm(&r).powi(2) + c.norm_sqr()).sqrt() / nb;
        if !residual.is_finite() || residual > 1e3 * RESIDUAL_TOL {
            return Err(Error::SingularSystem { residual });
        }
        let constraint = dot(&self.mf, &sol).norm() / (norm(&self.mf) * norm(&sol)).max(f64::MIN_POSITIVE);
        Ok((sol, SolveStats { compatibility, constraint, residual }))
    }

    fn i_t(&self, a: usize, v: &[c64]) -> Vec<c64> {
        scale(&matvec(&self.t[a], v), I)
    }
}

/// Corrector of rank 1..=3; `components` is indexed like a row-major tensor.
#[derive(Debug, Clone)]
pub struct Chi {
    pub rank: usize,
    pub d: usize,
    pub components: Vec<Vec<c64>>,
    pub stats: SolveStats,
}

impl Chi {
    pub fn get(&self, idx: &[usize]) -> &[c64] {
        let flat = idx.iter().fold(0, |acc, &i| acc * self.d + i);
        &self.components[flat]
    }
}

fn multi_indices(d: usize, rank: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 0..rank {
        out = out.into_iter().flat_map(|p| (0..d).map(move |a| [p.clone(), vec![a]].concat())).collect();
    }
    out
}

fn permutations_of(idx: &[usize]) -> Vec<Vec<usize>> {
    if idx.len() <= 1 {
        return vec![idx.to_vec()];
    }
    let mut out = vec![];
    for i in 0..idx.len() {
        let mut rest = idx.to_vec();
        let head = rest.remove(i);
        for mut p in permutations_of(&rest) {
            p.insert(0, head);
            out.push(p);
        }
    }
    out
}

/// Solve for every sorted multi-index with a fully symmetrized right-hand
/// side, and fill the remaining components by symmetry.
fn solve_symmetric(
    cp: &CellProblem,
    rank: usize,
    raw_rhs: impl Fn(&[usize]) -> (Vec<c64>, f64),
) -> Result<Chi> {
    let d = cp.dim();
    let all = multi_indices(d, rank);
    let flat = |idx: &[usize]| idx.iter().fold(0, |acc, &i| acc * d + i);
    let mut components = vec![vec![]; all.len()];
    let mut stats = SolveStats::default();
    for idx in &all {
        if idx.windows(2).any(|w| w[0] > w[1]) {
            continue;
        }
        let perms = permutations_of(idx);
        let mut b = vec![zero(); cp.op.len()];
        let mut scale: f64 = 0.0;
        for p in &perms {
            let (r, s) = raw_rhs(p);
            axpy(&mut b, c64::new(1.0 / perms.len() as f64, 0.0), &r);
            scale = scale.max(s);
        }
        let (x, s) = cp.solve_constrained_scaled(&b, scale)?;
        stats.merge(s);
        for p in &perms {
            components[flat(p)] = x.clone();
        }
    }
    Ok(Chi { rank, d, components, stats })
}

pub fn solve_chi1(cp: &CellProblem) -> Result<Chi> {
    solve_symmetric(cp, 1, |i| {
        let r = cp.i_t(i[0], &cp.f);
        let s = norm(&r);
        (r, s)
    })
}

/// Zeroth-order coefficients (alpha, rho0, mu0), needed before chi2.
pub fn zeroth_order(cp: &CellProblem, chi1: &Chi) -> Result<(f64, f64, Tensor)> {
    let d = cp.dim();
    let alpha = 1.0 / dot(&cp.f, &cp.f).re;
    let rho0 = alpha * dot(&cp.f, &cp.mf).re;
    let gf = matvec(&cp.op.gm, &cp.f);
    let fgf = dot(&cp.f, &gf);
    let tf: Vec<Vec<c64>> = (0..d).map(|a| matvec(&cp.t[a], &cp.f)).collect();
    let raw = Tensor::from_fn(d, 2, |i| {
        let mut v = I * dot(&tf[i[0]], chi1.get(&[i[1]]));
        if i[0] == i[1] {
            v += fgf;
        }
        v * alpha
    })?;
    Ok((alpha, rho0, raw.symmetrize_full()))
}

pub fn solve_chi2(cp: &CellProblem, chi1: &Chi, rho0: f64, mu0: &Tensor) -> Result<Chi> {
    let gf = matvec(&cp.op.gm, &cp.f);
    solve_symmetric(cp, 2, |i| {
        let (a, b) = (i[0], i[1]);
        let mut r = cp.i_t(a, chi1.get(&[b]));
        let mut s = norm(&r);
        if a == b {
            axpy(&mut r, c64::new(1.0, 0.0), &gf);
            s += norm(&gf);
        }
        let c = -mu0.get(&[a, b]) / rho0;
        axpy(&mut r, c, &cp.mf);
        (r, s + c.norm() * norm(&cp.mf))
    })
}

pub fn solve_chi3(cp: &CellProblem, chi1: &Chi, chi2: &Chi, rho0: f64, mu0: &Tensor) -> Result<Chi> {
    let d = cp.dim();
    let gx: Vec<Vec<c64>> = (0..d).map(|c| matvec(&cp.op.gm, chi1.get(&[c]))).collect();
    let mx: Vec<Vec<c64>> = (0..d).map(|c| matvec(&cp.op.mass, chi1.get(&[c]))).collect();
    solve_symmetric(cp, 3, |i| {
        let (a, b, c) = (i[0], i[1], i[2]);
        let mut r = cp.i_t(a, chi2.get(&[b, c]));
        let mut s = norm(&r);
        if a == b {
            axpy(&mut r, c64::new(1.0, 0.0), &gx[c]);
            s += norm(&gx[c]);
        }
        let m = -mu0.get(&[a, b]) / rho0;
        axpy(&mut r, m, &mx[c]);
        (r, s + m.norm() * norm(&mx[c]))
    })
}

#[derive(Debug, Clone)]
pub struct EffectiveCoefficients {
    pub p: usize,
    pub omega0_sq: f64,
    pub alpha: f64,
    pub rho0: f64,
    pub mu0: Tensor,
    /// Fully symmetrized.
    pub mu2: Tensor,
    /// |mu2_raw - sym(mu2_raw)|.
    pub mu2_asymmetry: f64,
    pub rho1: Tensor,
    pub mu1: Tensor,
    pub rho2: Tensor,
    /// C1_ab = <rho chi1_a conj(chi1_b)>.
    pub c1: Tensor,
    pub tolerances_met: bool,
}

impl EffectiveCoefficients {
    pub fn expansion(&self) -> DispersionExpansion {
        DispersionExpansion {
            omega0_sq: self.omega0_sq,
            mu0_over_rho0: self.mu0.scaled(1.0 / self.rho0),
            mu2_over_rho0: self.mu2.scaled(1.0 / self.rho0),
        }
    }

    pub fn diagnostic_norms(&self) -> (f64, f64, f64) {
        (self.rho1.norm(), self.mu1.norm(), self.rho2.norm())
    }
}

pub fn effective_coefficients(cp: &CellProblem, chi1: &Chi, chi2: &Chi, chi3: &Chi) -> Result<EffectiveCoefficients> {
    let d = cp.dim();
    let (alpha, rho0, mu0) = zeroth_order(cp, chi1)?;
    let tf: Vec<Vec<c64>> = (0..d).map(|a| matvec(&cp.t[a], &cp.f)).collect();
    let gf = matvec(&cp.op.gm, &cp.f);
    let mu1 = Tensor::from_fn(d, 3, |i| {
        let mut v = I * dot(&tf[i[0]], chi2.get(&[i[1], i[2]]));
        if i[0] == i[1] {
            v += dot(&gf, chi1.get(&[i[2]]));
        }
        v * alpha
    })?
    .symmetrize_full();
    let mu2_raw = Tensor::from_fn(d, 4, |i| {
        let mut v = I * dot(&tf[i[0]], chi3.get(&[i[1], i[2], i[3]]));
        if i[0] == i[1] {
            v += dot(&gf, chi2.get(&[i[2], i[3]]));
        }
        v * alpha
    })?;
    let mu2 = mu2_raw.symmetrize_full();
    let mu2_asymmetry = mu2_raw.sub(&mu2).norm();
    let rho1 = Tensor::from_fn(d, 1, |i| dot(&cp.mf, chi1.get(i)) * alpha)?;
    let rho2 = Tensor::from_fn(d, 2, |i| dot(&cp.mf, chi2.get(i)) * alpha)?;
    let mx: Vec<Vec<c64>> = (0..d).map(|a| matvec(&cp.op.mass, chi1.get(&[a]))).collect();
    let c1 = Tensor::from_fn(d, 2, |i| dot(chi1.get(&[i[1]]), &mx[i[0]]))?;
    let tolerances_met = rho1.norm() <= DIAGNOSTIC_TOL * rho0
        && mu1.norm() <= DIAGNOSTIC_TOL * mu0.norm().max(f64::MIN_POSITIVE)
        && rho2.norm() <= DIAGNOSTIC_TOL * rho0;
    Ok(EffectiveCoefficients {
        p: cp.pair.p,
        omega0_sq: cp.pair.omega_sq,
        alpha,
        rho0,
        mu0,
        mu2,
        mu2_asymmetry,
        rho1,
        mu1,
        rho2,
        c1,
        tolerances_met,
    })
}

/// Correctors and effective coefficients for one branch.
#[derive(Debug, Clone)]
pub struct Homogenization {
    pub pair: GammaPair,
    pub chi1: Chi,
    pub chi2: Chi,
    pub chi3: Chi,
    pub coefficients: EffectiveCoefficients,
}

impl Homogenization {
    pub fn stats(&self) -> SolveStats {
        let mut s = self.chi1.stats;
        s.merge(self.chi2.stats);
        s.merge(self.chi3.stats);
        s
    }
}

pub fn homogenize(op: &Operator, pair: &GammaPair) -> Result<Homogenization> {
    let cp = CellProblem::new(op, pair)?;
    homogenize_with(&cp)
}

pub fn homogenize_with(cp: &CellProblem) -> Result<Homogenization> {
    let chi1 = solve_chi1(cp)?;
    let (_, rho0, mu0) = zeroth_order(cp, &chi1)?;
    let chi2 = solve_chi2(cp, &chi1, rho0, &mu0)?;
    let chi3 = solve_chi3(cp, &chi1, &chi2, rho0, &mu0)?;
    let coefficients = effective_coefficients(cp, &chi1, &chi2, &chi3)?;
    Ok(Homogenization { pair: cp.pair.clone(), chi1, chi2, chi3, coefficients })
}

#[derive(Debug, Clone)]
pub struct DispersionExpansion {
    pub omega0_sq: f64,
    pub mu0_over_rho0: Tensor,
    pub mu2_over_rho0: Tensor,
}

impl DispersionExpansion {
    /// -(mu0/rho0) : (i khat)^2.
    pub fn omega2_sq(&self, khat: &[f64]) -> f64 {
        self.mu0_over_rho0.contract(khat).re
    }

    /// -(mu2/rho0) : (i khat)^4.
    pub fn omega4_sq(&self, khat: &[f64]) -> f64 {
        -self.mu2_over_rho0.contract(khat).re
    }

    pub fn evaluate(&self, khat: &[f64], eps: f64) -> f64 {
        self.omega0_sq + eps * eps * self.omega2_sq(khat) + eps.powi(4) * self.omega4_sq(khat)
    }
}

#[derive(Debug, Clone)]
pub struct DispersionCheck {
    pub eps: Vec<f64>,
    pub remainder: Vec<f64>,
    pub fit: SlopeFit,
}

/// Remainder of the quartic dispersion expansion along eps * khat.
pub fn dispersion_expansion_check(
    expansion: &DispersionExpansion,
    op: &Operator,
    p: usize,
    khat: [f64; 2],
    eps_list: &[f64],
) -> Result<DispersionCheck> {
    let d = op.dim();
    // lambda(eps khat) - lambda(0) is formed from compensated Rayleigh
    // quotients; subtracting two rounded eigenvalues would bury the eps^6
    // remainder under roundoff of omega0^2 itself.
    let (_, f) = op.refined_pair([0.0, 0.0], p, 2)?;
    let base = op.rayleigh_dd([0.0, 0.0], &f);
    let w2 = expansion.omega2_sq(&khat[..d]);
    let w4 = expansion.omega4_sq(&khat[..d]);
    let mut remainder = Vec::with_capacity(eps_list.len());
    for &e in eps_list {
        let k = [e * khat[0], e * khat[1]];
        let (_, v) = op.refined_pair(k, p, 2)?;
        let shift = op.rayleigh_dd(k, &v).sub(base).to_f64();
        remainder.push((shift - e * e * w2 - e.powi(4) * w4).abs());
    }
    let fit = slope_fit(eps_list, &remainder)?;
    Ok(DispersionCheck { eps: eps_list.to_vec(), remainder, fit })
}
