//! Regular sampling grids, complex fields on them, and separable synthesis of
//! trigonometric sums on tensor grids.

use faer::c64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Frame {
    /// Microscopic coordinate x = r / eps.
    Fast,
    /// Macroscopic coordinate r.
    Slow,
}

/// Tensor grid; sample (i1, i2) sits at origin + (i1, i2) * spacing and is
/// stored at flat index i2 * n1 + i1.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub d: usize,
    pub origin: [f64; 2],
    pub spacing: [f64; 2],
    pub counts: [usize; 2],
    pub frame: Frame,
}

impl Grid {
    /// Cell-centred fast grid on [-(n_dom + 1/2), n_dom + 1/2]^d.
    pub fn cell_centered(d: usize, n_dom: usize, n_cell: usize) -> Result<Grid> {
        if d != 1 && d != 2 {
            return Err(invalid("d", "must be 1 or 2"));
        }
        if n_cell == 0 {
            return Err(invalid("n_cell", "must be positive"));
        }
        let h = 1.0 / n_cell as f64;
        let n = (2 * n_dom + 1) * n_cell;
        let o = -(n_dom as f64 + 0.5) + 0.5 * h;
        Ok(Grid {
            d,
            origin: [o, if d == 2 { o } else { 0.0 }],
            spacing: [h, if d == 2 { h } else { 0.0 }],
            counts: [n, if d == 2 { n } else { 1 }],
            frame: Frame::Fast,
        })
    }

    /// Uniform line of `n` samples from `a` to `b` inclusive.
    pub fn line(a: f64, b: f64, n: usize, frame: Frame) -> Result<Grid> {
        if n < 2 || !(b > a) {
            return Err(invalid("grid", "a line needs n >= 2 and b > a"));
        }
        Ok(Grid { d: 1, origin: [a, 0.0], spacing: [(b - a) / (n - 1) as f64, 0.0], counts: [n, 1], frame })
    }

    pub fn len(&self) -> usize {
        self.counts[0] * self.counts[1]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn axis(&self, a: usize) -> Vec<f64> {
        (0..self.counts[a]).map(|i| self.origin[a] + i as f64 * self.spacing[a]).collect()
    }

    pub fn point(&self, flat: usize) -> [f64; 2] {
        let (i1, i2) = (flat % self.counts[0], flat / self.counts[0]);
        [self.origin[0] + i1 as f64 * self.spacing[0], self.origin[1] + i2 as f64 * self.spacing[1]]
    }

    /// Same samples with coordinates multiplied by `factor`, tagged `frame`.
    pub fn relabel(&self, factor: f64, frame: Frame) -> Grid {
        Grid {
            d: self.d,
            origin: [self.origin[0] * factor, self.origin[1] * factor],
            spacing: [self.spacing[0] * factor, self.spacing[1] * factor],
            counts: self.counts,
            frame,
        }
    }

    pub fn same_samples(&self, other: &Grid) -> bool {
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * (1.0 + a.abs().max(b.abs()));
        self.d == other.d
            && self.counts == other.counts
            && self.frame == other.frame
            && (0..2).all(|a| close(self.origin[a], other.origin[a]) && close(self.spacing[a], other.spacing[a]))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    Source,
    Exact,
    Branch,
    Reference,
    W0,
    W2,
    U0,
    U1,
    U2,
}

impl FieldKind {
    pub fn name(self) -> &'static str {
        match self {
            FieldKind::Source => "source",
            FieldKind::Exact => "u_exact",
            FieldKind::Branch => "u_branch",
            FieldKind::Reference => "u_reference",
            FieldKind::W0 => "W0",
            FieldKind::W2 => "W2",
            FieldKind::U0 => "U0",
            FieldKind::U1 => "U1",
            FieldKind::U2 => "U2",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldMeta {
    pub kind: FieldKind,
    pub eps: f64,
    pub p: usize,
    pub sigma: f64,
    pub omega_hat: f64,
}

#[derive(Debug, Clone)]
pub struct FieldOnGrid {
    pub grid: Grid,
    pub values: Vec<c64>,
    pub meta: FieldMeta,
}

impl FieldOnGrid {
    /// U_eps(r) = u(r / eps): relabel fast samples as slow ones, or back.
    pub fn to_frame(&self, frame: Frame) -> FieldOnGrid {
        let factor = match (self.grid.frame, frame) {
            (Frame::Fast, Frame::Slow) => self.meta.eps,
            (Frame::Slow, Frame::Fast) => 1.0 / self.meta.eps,
            _ => 1.0,
        };
        FieldOnGrid { grid: self.grid.relabel(factor, frame), values: self.values.clone(), meta: self.meta }
    }

    pub fn max_imag(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.im.abs()))
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.norm()))
    }

    /// Row of a 2D field closest to x2 = y0, as a 1D field.
    pub fn transect(&self, y0: f64) -> Result<FieldOnGrid> {
        if self.grid.d != 2 {
            return Err(invalid("line", "transects need a 2D field"));
        }
        let n1 = self.grid.counts[0];
        let i2 = ((y0 - self.grid.origin[1]) / self.grid.spacing[1]).round();
        if !(0.0..self.grid.counts[1] as f64).contains(&i2) {
            return Err(invalid("line", format!("y0 = {y0} lies outside the grid")));
        }
        let i2 = i2 as usize;
        let grid = Grid {
            d: 1,
            origin: [self.grid.origin[0], 0.0],
            spacing: [self.grid.spacing[0], 0.0],
            counts: [n1, 1],
            frame: self.grid.frame,
        };
        Ok(FieldOnGrid { grid, values: self.values[i2 * n1..(i2 + 1) * n1].to_vec(), meta: self.meta })
    }
}

/// Phase table e^{i f_b x_a} for every grid coordinate x_a and frequency f_b.
pub fn phase_table(xs: &[f64], freqs: &[f64]) -> Vec<Vec<c64>> {
    xs.iter().map(|&x| freqs.iter().map(|&f| c64::from_polar(1.0, f * x)).collect()).collect()
}

/// Evaluate sum_{a,b} c[a][b] e^{i (f1_a x1 + f2_b x2)} on a tensor grid, where
/// `coeffs` is row-major over (a, b). In 1D, `f2` must have length 1.
pub fn separable_sum(grid: &Grid, f1: &[f64], f2: &[f64], coeffs: &[c64]) -> Vec<c64> {
    let e1 = phase_table(&grid.axis(0), f1);
    let e2 = if grid.d == 2 { phase_table(&grid.axis(1), f2) } else { vec![vec![c64::new(1.0, 0.0)]] };
    separable_sum_tables(&e1, &e2, coeffs)
}

pub fn separable_sum_tables(e1: &[Vec<c64>], e2: &[Vec<c64>], coeffs: &[c64]) -> Vec<c64> {
    let (n1, n2) = (e1.len(), e2.len());
    let (m1, m2) = (e1.first().map_or(0, |r| r.len()), e2.first().map_or(0, |r| r.len()));
    debug_assert_eq!(coeffs.len(), m1 * m2);
    let mut out = vec![c64::new(0.0, 0.0); n1 * n2];
    let mut tmp = vec![c64::new(0.0, 0.0); m1];
    for (i2, row2) in e2.iter().enumerate() {
        for (a, t) in tmp.iter_mut().enumerate() {
            *t = coeffs[a * m2..(a + 1) * m2].iter().zip(row2).map(|(c, e)| c * e).sum();
        }
        for (i1, row1) in e1.iter().enumerate() {
            out[i2 * n1 + i1] = tmp.iter().zip(row1).map(|(t, e)| t * e).sum();
        }
    }
    out
}

/// Periodic synthesis of plane-wave coefficients on a fast-coordinate grid,
/// with the axis phase tables cached for repeated use.
pub struct PeriodicSampler {
    e1: Vec<Vec<c64>>,
    e2: Vec<Vec<c64>>,
    pub grid: Grid,
}

impl PeriodicSampler {
    pub fn new(grid: &Grid, basis: &crate::bloch::PlaneWaveBasis) -> Result<Self> {
        if grid.d != basis.d {
            return Err(Error::GridMismatch);
        }
        let n = basis.cutoff as i64;
        let freqs: Vec<f64> = (-n..=n).map(|j| 2.0 * std::f64::consts::PI * j as f64).collect();
        let e1 = phase_table(&grid.axis(0), &freqs);
        let e2 = if grid.d == 2 { phase_table(&grid.axis(1), &freqs) } else { vec![vec![c64::new(1.0, 0.0)]] };
        Ok(PeriodicSampler { e1, e2, grid: grid.clone() })
    }

    /// `dense` is in the basis' dense layout (see `PlaneWaveBasis::to_dense`).
    pub fn synthesize_dense(&self, dense: &[c64]) -> Vec<c64> {
        separable_sum_tables(&self.e1, &self.e2, dense)
    }

    pub fn synthesize(&self, basis: &crate::bloch::PlaneWaveBasis, c: &[c64]) -> Vec<c64> {
        self.synthesize_dense(&basis.to_dense(c))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bloch::PlaneWaveBasis;

    #[test]
    fn cell_centered_layout() {
        let g = Grid::cell_centered(1, 2, 4).unwrap();
        assert_eq!(g.len(), 20);
        assert!((g.point(0)[0] + 2.375).abs() < 1e-15);
        assert!((g.point(19)[0] - 2.375).abs() < 1e-15);
    }

    #[test]
    fn separable_matches_direct_2d() {
        let g = Grid::cell_centered(2, 1, 3).unwrap();
        let basis = PlaneWaveBasis::new(2, 2).unwrap();
        let c: Vec<c64> = (0..basis.len()).map(|i| c64::new(i as f64 * 0.1, 1.0 / (1.0 + i as f64))).collect();
        let sampler = PeriodicSampler::new(&g, &basis).unwrap();
        let fast = sampler.synthesize(&basis, &c);
        for flat in [0, 5, 17, g.len() - 1] {
            let x = g.point(flat);
            assert!((fast[flat] - basis.synthesize(&c, &x)).norm() < 1e-12);
        }
    }

    #[test]
    fn relabel_round_trip() {
        let g = Grid::cell_centered(2, 3, 8).unwrap();
        let meta = FieldMeta { kind: FieldKind::U0, eps: 0.25, p: 0, sigma: -1.0, omega_hat: 1.0 };
        let f = FieldOnGrid { grid: g.clone(), values: vec![c64::new(1.0, 0.0); g.len()], meta };
        let back = f.to_frame(Frame::Slow).to_frame(Frame::Fast);
        assert!(back.grid.same_samples(&g));
    }
}
