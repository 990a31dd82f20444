//! Finite-difference reference solver, relative errors and slope fits.

use faer::sparse::{SparseColMat, Triplet};
use faer::prelude::Solve;
use faer::Mat;
use faer::c64;
use serde::{Deserialize, Serialize};

use crate::bloch::{GammaPair, Operator};
use crate::cell::Homogenization;
use crate::error::{invalid, Error, Result};
use crate::fields::{exact_bloch_solution, homogenized_field};
use crate::grid::{FieldKind, FieldOnGrid, Frame, Grid};
use crate::medium::{Coefficient, Medium};
use crate::quadrature::WavenumberQuadrature;
use crate::source::{sample_source, FrequencySpec, SourceSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual of the fit in log space.
    pub residual: f64,
}

/// Least-squares line through (log eps, log err).
pub fn slope_fit(eps: &[f64], err: &[f64]) -> Result<SlopeFit> {
    if eps.len() != err.len() || eps.len() < 3 {
        return Err(Error::DegenerateFit);
    }
    if eps.iter().chain(err).any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::DegenerateFit);
    }
    let mut distinct = eps.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(Error::DegenerateFit);
    }
    let x: Vec<f64> = eps.iter().map(|v| v.ln()).collect();
    let y: Vec<f64> = err.iter().map(|v| v.ln()).collect();
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss: f64 = x.iter().zip(&y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    Ok(SlopeFit { slope, intercept, residual: (ss / n).sqrt() })
}

pub const MIN_CELL_SAMPLES: usize = 16;
pub const DEFAULT_DECAY_THRESHOLD: f64 = 1e-6;
/// Default half-width is ceil(DOMAIN_FACTOR / eps) cells.
pub const DOMAIN_FACTOR: f64 = 12.0;

fn default_n_cell() -> usize {
    64
}

fn default_decay() -> f64 {
    DEFAULT_DECAY_THRESHOLD
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceConfig {
    /// Half-width of D = [-(n_dom + 1/2), n_dom + 1/2]^d in cells; chosen from
    /// eps when absent.
    #[serde(default)]
    pub n_dom: Option<usize>,
    #[serde(default = "default_n_cell")]
    pub n_cell: usize,
    #[serde(default = "default_decay")]
    pub decay_threshold: f64,
}

impl Default for ReferenceConfig {
    fn default() -> Self {
        ReferenceConfig { n_dom: None, n_cell: default_n_cell(), decay_threshold: default_decay() }
    }
}

impl ReferenceConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_cell < MIN_CELL_SAMPLES {
            return Err(invalid("n_cell", format!("at least {MIN_CELL_SAMPLES} samples per cell are needed")));
        }
        if self.n_dom == Some(0) {
            return Err(invalid("n_dom", "must be positive"));
        }
        if !(self.decay_threshold > 0.0 && self.decay_threshold < 1.0) {
            return Err(invalid("decay_threshold", "must lie in (0, 1)"));
        }
        Ok(())
    }

    pub fn half_width(&self, eps: f64) -> usize {
        self.n_dom.unwrap_or_else(|| (DOMAIN_FACTOR / eps).ceil() as usize)
    }

    pub fn grid(&self, d: usize, eps: f64) -> Result<Grid> {
        self.validate()?;
        Grid::cell_centered(d, self.half_width(eps), self.n_cell)
    }
}

#[derive(Debug, Clone)]
pub struct ReferenceSolution {
    pub field: FieldOnGrid,
    /// max |u| on the boundary cells over max |u|.
    pub decay_ratio: f64,
    /// |A u - b| / |b|.
    pub residual: f64,
}

/// The conservative five-point (three-point in 1D) operator
/// -div(G grad u) - omega^2 rho u with face-harmonic G and Dirichlet walls.
pub fn fd_operator(medium: &Medium, omega_sq: f64, grid: &Grid) -> Result<Vec<Triplet<usize, usize, f64>>> {
    let d = grid.d;
    if grid.frame != Frame::Fast || d != medium.dim() {
        return Err(Error::GridMismatch);
    }
    let h = grid.spacing[0];
    let per = (1.0 / h).round() as usize;
    if ((per as f64) * h - 1.0).abs() > 1e-12 || (d == 2 && (grid.spacing[1] - h).abs() > 1e-15) {
        return Err(invalid("grid", "spacing must be 1 / n_cell on every axis"));
    }
    // Coefficients repeat with period `per` samples along each axis.
    let cell_len = if d == 2 { per * per } else { per };
    let mut g_tab = Vec::with_capacity(cell_len);
    let mut r_tab = Vec::with_capacity(cell_len);
    for c in 0..cell_len {
        let x = [grid.origin[0] + (c % per) as f64 * h, grid.origin[1] + (c / per) as f64 * h];
        g_tab.push(medium.evaluate(Coefficient::G, &x[..d]));
        r_tab.push(medium.evaluate(Coefficient::Rho, &x[..d]));
    }
    let (n1, n2) = (grid.counts[0], grid.counts[1]);
    let cell_of = |i1: usize, i2: usize| if d == 2 { (i2 % per) * per + i1 % per } else { i1 % per };
    let ih2 = 1.0 / (h * h);
    let mut trip = Vec::with_capacity(grid.len() * (2 * d + 1));
    for i2 in 0..n2 {
        for i1 in 0..n1 {
            let row = i2 * n1 + i1;
            let gc = g_tab[cell_of(i1, i2)];
            let mut diag = -omega_sq * r_tab[cell_of(i1, i2)];
            let mut neighbours = vec![(i1 > 0, i1.wrapping_sub(1), i2), (i1 + 1 < n1, i1 + 1, i2)];
            if d == 2 {
                neighbours.push((i2 > 0, i1, i2.wrapping_sub(1)));
                neighbours.push((i2 + 1 < n2, i1, i2 + 1));
            }
            for (inside, j1, j2) in neighbours {
                if inside {
                    let gn = g_tab[cell_of(j1, j2)];
                    let gf = 2.0 * gc * gn / (gc + gn);
                    diag += gf * ih2;
                    trip.push(Triplet::new(row, j2 * n1 + j1, -gf * ih2));
                } else {
                    diag += 2.0 * gc * ih2;
                }
            }
            trip.push(Triplet::new(row, row, diag));
        }
    }
    Ok(trip)
}

/// Solve -div(G grad u) - omega^2 rho u = eps^2 f on the grid of `source`.
pub fn reference_solution(
    medium: &Medium,
    freq: &FrequencySpec,
    source: &FieldOnGrid,
    cfg: &ReferenceConfig,
) -> Result<ReferenceSolution> {
    cfg.validate()?;
    let grid = &source.grid;
    let trip = fd_operator(medium, freq.omega_sq(), grid)?;
    let n = grid.len();
    let a = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &trip).map_err(|_| Error::ReferenceSolve)?;
    let lu = a.sp_lu().map_err(|_| Error::ReferenceSolve)?;
    let e2 = freq.eps * freq.eps;
    let b = Mat::from_fn(n, 2, |i, j| if j == 0 { source.values[i].re * e2 } else { source.values[i].im * e2 });
    let x = lu.solve(&b);
    let values: Vec<c64> = (0..n).map(|i| c64::new(x[(i, 0)], x[(i, 1)])).collect();
    if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(Error::ReferenceSolve);
    }

    let mut r = vec![c64::new(0.0, 0.0); n];
    for t in &trip {
        r[t.row] += values[t.col] * t.val;
    }
    let num: f64 = r.iter().zip(&source.values).map(|(ri, f)| (ri - f * e2).norm_sqr()).sum();
    let den: f64 = source.values.iter().map(|f| (f * e2).norm_sqr()).sum();
    let residual = (num / den).sqrt();

    let (n1, n2) = (grid.counts[0], grid.counts[1]);
    let peak = values.iter().fold(0.0f64, |m, v| m.max(v.norm()));
    let mut edge = 0.0f64;
    for i2 in 0..n2 {
        for i1 in 0..n1 {
            let on_edge = i1 == 0 || i1 + 1 == n1 || (grid.d == 2 && (i2 == 0 || i2 + 1 == n2));
            if on_edge {
                edge = edge.max(values[i2 * n1 + i1].norm());
            }
        }
    }
    let decay_ratio = if peak > 0.0 { edge / peak } else { 0.0 };
    if decay_ratio > cfg.decay_threshold {
        return Err(Error::DecayCheckFailed { ratio: decay_ratio, threshold: cfg.decay_threshold });
    }
    let field = FieldOnGrid { grid: grid.clone(), values, meta: freq.meta(FieldKind::Reference) };
    Ok(ReferenceSolution { field, decay_ratio, residual })
}

/// Relative L2 error over D_{M - 1/2} = {|x|_inf <= M - 1/2} in fast
/// coordinates, with trapezoid weights on the retained samples.
pub fn relative_error(reference: &FieldOnGrid, approx: &FieldOnGrid, m: usize) -> Result<f64> {
    if !reference.grid.same_samples(&approx.grid) || reference.values.len() != approx.values.len() {
        return Err(Error::GridMismatch);
    }
    let grid = &reference.grid;
    let to_fast = if grid.frame == Frame::Slow { 1.0 / reference.meta.eps } else { 1.0 };
    let bound = m as f64 - 0.5 + 1e-9;
    let axis_weights = |a: usize| -> Vec<f64> {
        if a >= grid.d {
            return vec![1.0];
        }
        let xs = grid.axis(a);
        let keep: Vec<bool> = xs.iter().map(|x| (x * to_fast).abs() <= bound).collect();
        let first = keep.iter().position(|&k| k);
        let last = keep.iter().rposition(|&k| k);
        let mut w = vec![0.0; xs.len()];
        if let (Some(f), Some(l)) = (first, last) {
            for wi in &mut w[f..=l] {
                *wi = 1.0;
            }
            if l > f {
                w[f] = 0.5;
                w[l] = 0.5;
            }
        }
        w
    };
    let (w1, w2) = (axis_weights(0), axis_weights(1));
    let n1 = grid.counts[0];
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, (u, v)) in reference.values.iter().zip(&approx.values).enumerate() {
        let w = w1[i % n1] * w2[i / n1];
        num += w * (v - u).norm_sqr();
        den += w * u.norm_sqr();
    }
    if den == 0.0 {
        return Err(invalid("m", "the evaluation region holds no signal"));
    }
    Ok((num / den).sqrt())
}

/// Everything the error harness needs besides the eps list.
pub struct ConvergenceInputs<'a> {
    pub medium: &'a Medium,
    /// Operator and Gamma pair used for the source and the exact solution.
    pub op: &'a Operator,
    pub pair: &'a GammaPair,
    /// Correctors, possibly from a cheaper operator `hom_op`.
    pub hom: &'a Homogenization,
    pub hom_op: &'a Operator,
    pub source: &'a SourceSpec,
    pub quad: &'a WavenumberQuadrature,
    pub sigma: f64,
    pub omega_hat: f64,
    pub reference: ReferenceConfig,
    /// Evaluation half-width; n_dom - 2 when absent.
    pub m_eval: Option<usize>,
    /// Also synthesize the exact Bloch solution with this many modes and
    /// measure errors against it.
    pub exact_modes: Option<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ErrorRow {
    pub eps: f64,
    pub n_dom: usize,
    pub m_eval: usize,
    /// Errors of U0, U1, U2 against the finite-difference reference.
    pub errors: [f64; 3],
    pub errors_vs_exact: Option<[f64; 3]>,
    pub exact_vs_reference: Option<f64>,
    pub decay_ratio: f64,
    pub fd_residual: f64,
    pub max_imag: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ErrorReport {
    pub rows: Vec<ErrorRow>,
    pub slopes: Vec<SlopeFit>,
    pub slopes_vs_exact: Option<Vec<SlopeFit>>,
}

impl ErrorReport {
    pub fn eps(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.eps).collect()
    }

    pub fn errors(&self, order: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r.errors[order]).collect()
    }
}

/// Errors of one eps value; `freq` must already be validated.
pub fn error_row(inputs: &ConvergenceInputs, freq: &FrequencySpec) -> Result<ErrorRow> {
    let d = inputs.medium.dim();
    let grid = inputs.reference.grid(d, freq.eps)?;
    let n_dom = inputs.reference.half_width(freq.eps);
    let m_eval = inputs.m_eval.unwrap_or(n_dom.saturating_sub(2)).max(1);
    if m_eval > n_dom {
        return Err(invalid("m_eval", "exceeds the reference half-width"));
    }
    let f = sample_source(inputs.medium, inputs.op, inputs.pair, inputs.source, freq, &grid)?;
    let reference = reference_solution(inputs.medium, freq, &f, &inputs.reference)?;
    let slow = grid.relabel(freq.eps, Frame::Slow);
    let mut errors = [0.0; 3];
    let mut fields = Vec::with_capacity(3);
    let mut max_imag: f64 = 0.0;
    for (order, e) in errors.iter_mut().enumerate() {
        let u = homogenized_field(inputs.hom, inputs.hom_op, freq, inputs.source, inputs.quad, order, &slow)?.to_frame(Frame::Fast);
        max_imag = max_imag.max(u.max_imag());
        *e = relative_error(&reference.field, &u, m_eval)?;
        fields.push(u);
    }
    let (errors_vs_exact, exact_vs_reference) = match inputs.exact_modes {
        Some(modes) => {
            let ex = exact_bloch_solution(inputs.op, inputs.pair, freq, inputs.source, inputs.quad, modes, &grid)?;
            let mut e = [0.0; 3];
            for (ei, u) in e.iter_mut().zip(&fields) {
                *ei = relative_error(&ex.field, u, m_eval)?;
            }
            (Some(e), Some(relative_error(&reference.field, &ex.field, m_eval)?))
        }
        None => (None, None),
    };
    Ok(ErrorRow {
        eps: freq.eps,
        n_dom,
        m_eval,
        errors,
        errors_vs_exact,
        exact_vs_reference,
        decay_ratio: reference.decay_ratio,
        fd_residual: reference.residual,
        max_imag,
    })
}

/// Run the harness over `freqs` (one per eps) and fit slopes per order.
pub fn convergence_report(inputs: &ConvergenceInputs, freqs: &[FrequencySpec]) -> Result<ErrorReport> {
    let rows = freqs.iter().map(|f| error_row(inputs, f)).collect::<Result<Vec<_>>>()?;
    let eps: Vec<f64> = rows.iter().map(|r| r.eps).collect();
    let slopes = (0..3)
        .map(|m| slope_fit(&eps, &rows.iter().map(|r| r.errors[m]).collect::<Vec<_>>()))
        .collect::<Result<Vec<_>>>()?;
    let slopes_vs_exact = if rows.iter().all(|r| r.errors_vs_exact.is_some()) && !rows.is_empty() {
        Some(
            (0..3)
                .map(|m| slope_fit(&eps, &rows.iter().map(|r| r.errors_vs_exact.unwrap()[m]).collect::<Vec<_>>()))
                .collect::<Result<Vec<_>>>()?,
        )
    } else {
        None
    };
    Ok(ErrorReport { rows, slopes, slopes_vs_exact })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::FieldMeta;
    use crate::medium::{build_medium, MediumSpec};

    #[test]
    fn exact_power_law() {
        let eps = [0.5, 0.25, 0.125];
        let err: Vec<f64> = eps.iter().map(|e| 3.0 * e).collect();
        let fit = slope_fit(&eps, &err).unwrap();
        assert!((fit.slope - 1.0).abs() < 1e-14);
        assert!((fit.intercept - 3f64.ln()).abs() < 1e-14);
        assert!(fit.residual < 1e-14);
    }

    #[test]
    fn degenerate_fits() {
        assert!(matches!(slope_fit(&[0.5, 0.25], &[1.0, 2.0]), Err(Error::DegenerateFit)));
        assert!(matches!(slope_fit(&[0.5, 0.5, 0.25], &[1.0, 1.0, 2.0]), Err(Error::DegenerateFit)));
        assert!(matches!(slope_fit(&[0.5, 0.3, 0.25], &[1.0, 0.0, 2.0]), Err(Error::DegenerateFit)));
    }

    fn field(grid: &Grid, f: impl Fn([f64; 2]) -> f64) -> FieldOnGrid {
        let meta = FieldMeta { kind: FieldKind::Reference, eps: 0.5, p: 0, sigma: -1.0, omega_hat: 1.0 };
        FieldOnGrid { grid: grid.clone(), values: (0..grid.len()).map(|i| c64::new(f(grid.point(i)), 0.0)).collect(), meta }
    }

    #[test]
    fn relative_error_trivial_cases() {
        let grid = Grid::cell_centered(2, 3, 4).unwrap();
        let u = field(&grid, |x| (-(x[0] * x[0] + x[1] * x[1])).exp());
        let two = field(&grid, |x| 2.0 * (-(x[0] * x[0] + x[1] * x[1])).exp());
        assert_eq!(relative_error(&u, &u, 2).unwrap(), 0.0);
        assert!((relative_error(&u, &two, 2).unwrap() - 1.0).abs() < 1e-14);
        let other = Grid::cell_centered(2, 3, 8).unwrap();
        assert!(matches!(relative_error(&u, &field(&other, |_| 1.0), 2), Err(Error::GridMismatch)));
    }

    #[test]
    fn config_validation() {
        let mut c = ReferenceConfig::default();
        assert!(c.validate().is_ok());
        c.n_cell = 8;
        assert!(c.validate().is_err());
        assert_eq!(ReferenceConfig::default().half_width(0.25), 48);
    }

    #[test]
    fn fd_operator_is_symmetric_with_positive_rows_for_zero_frequency() {
        let m = build_medium(MediumSpec::disk_2d()).unwrap();
        let grid = Grid::cell_centered(2, 1, 16).unwrap();
        let trip = fd_operator(&m, 0.0, &grid).unwrap();
        let mut map = std::collections::HashMap::new();
        for t in &trip {
            *map.entry((t.row, t.col)).or_insert(0.0) += t.val;
        }
        for (&(r, c), &v) in &map {
            assert_eq!(map.get(&(c, r)).copied(), Some(v));
        }
        let mut rowsum = vec![0.0; grid.len()];
        for t in &trip {
            rowsum[t.row] += t.val;
        }
        assert!(rowsum.iter().all(|s| *s >= -1e-9));
    }
}
