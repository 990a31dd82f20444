//! Periodic coefficient fields G and rho on the unit cell [-1/2, 1/2]^d.
//!
//! Fields are a background phase plus non-overlapping inclusions. Fourier
//! coefficients are analytic (sinc for intervals, Bessel J1 for disks), with
//! an optional Gaussian mollifier of width `smoothing` applied in Fourier space.

use std::f64::consts::PI;

use faer::c64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Phase {
    #[serde(rename = "G")]
    pub g: f64,
    pub rho: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Interval,
    Disk,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InclusionSpec {
    pub shape: Shape,
    pub center: Vec<f64>,
    /// Disk radius, or interval half-length.
    pub radius: f64,
    #[serde(rename = "G")]
    pub g: f64,
    pub rho: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MediumSpec {
    pub d: usize,
    pub background: Phase,
    #[serde(default)]
    pub inclusions: Vec<InclusionSpec>,
    #[serde(default)]
    pub smoothing: f64,
}

impl MediumSpec {
    pub fn homogeneous(d: usize, g: f64, rho: f64) -> Self {
        MediumSpec { d, background: Phase { g, rho }, inclusions: vec![], smoothing: 0.0 }
    }

    /// Centered interval of half-length `half` in a 1D cell.
    pub fn layered(background: Phase, half: f64, inclusion: Phase) -> Self {
        MediumSpec {
            d: 1,
            background,
            inclusions: vec![InclusionSpec {
                shape: Shape::Interval,
                center: vec![0.0],
                radius: half,
                g: inclusion.g,
                rho: inclusion.rho,
            }],
            smoothing: 0.0,
        }
    }

    /// Centered disk of the given radius in a 2D cell.
    pub fn disk(background: Phase, radius: f64, inclusion: Phase) -> Self {
        MediumSpec {
            d: 2,
            background,
            inclusions: vec![InclusionSpec {
                shape: Shape::Disk,
                center: vec![0.0, 0.0],
                radius,
                g: inclusion.g,
                rho: inclusion.rho,
            }],
            smoothing: 0.0,
        }
    }

    /// Half-half layered medium with G = (1, 6), rho = (1, 20).
    pub fn two_phase_1d() -> Self {
        Self::layered(Phase { g: 1.0, rho: 1.0 }, 0.25, Phase { g: 6.0, rho: 20.0 })
    }

    /// Disk of radius 0.3 with G = 6, rho = 20 in a unit background.
    pub fn disk_2d() -> Self {
        Self::disk(Phase { g: 1.0, rho: 1.0 }, 0.3, Phase { g: 6.0, rho: 20.0 })
    }

    pub fn with_smoothing(mut self, s: f64) -> Self {
        self.smoothing = s;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coefficient {
    G,
    Rho,
    /// 1/G, used by the inverse factorization rule.
    InvG,
}

#[derive(Debug, Clone)]
struct Inclusion {
    shape: Shape,
    center: [f64; 2],
    radius: f64,
    g: f64,
    rho: f64,
}

/// Validated, immutable medium.
#[derive(Debug, Clone)]
pub struct Medium {
    spec: MediumSpec,
    inclusions: Vec<Inclusion>,
}

fn positive(x: f64) -> bool {
    x.is_finite() && x > 0.0
}

pub fn build_medium(spec: MediumSpec) -> Result<Medium> {
    let bad = |m: String| Err(Error::InvalidMedium(m));
    if spec.d != 1 && spec.d != 2 {
        return bad(format!("dimension must be 1 or 2, got {}", spec.d));
    }
    if !positive(spec.background.g) || !positive(spec.background.rho) {
        return bad("background G and rho must be positive".into());
    }
    if !(spec.smoothing.is_finite() && spec.smoothing >= 0.0) {
        return bad(format!("smoothing must be >= 0, got {}", spec.smoothing));
    }
    let mut inclusions = Vec::with_capacity(spec.inclusions.len());
    for (i, inc) in spec.inclusions.iter().enumerate() {
        let want = if spec.d == 1 { Shape::Interval } else { Shape::Disk };
        if inc.shape != want {
            return bad(format!("inclusion {i}: shape {:?} not available in {}D", inc.shape, spec.d));
        }
        if inc.center.len() != spec.d {
            return bad(format!("inclusion {i}: center must have {} components", spec.d));
        }
        if !positive(inc.g) || !positive(inc.rho) {
            return bad(format!("inclusion {i}: G and rho must be positive"));
        }
        if !positive(inc.radius) {
            return bad(format!("inclusion {i}: radius must be positive"));
        }
        if inc.center.iter().any(|c| !c.is_finite() || c.abs() + inc.radius >= 0.5) {
            return bad(format!("inclusion {i} overflows the unit cell"));
        }
        let mut center = [0.0; 2];
        center[..spec.d].copy_from_slice(&inc.center);
        inclusions.push(Inclusion { shape: inc.shape, center, radius: inc.radius, g: inc.g, rho: inc.rho });
    }
    for i in 0..inclusions.len() {
        for j in 0..i {
            let (a, b) = (&inclusions[i], &inclusions[j]);
            let dist = ((a.center[0] - b.center[0]).powi(2) + (a.center[1] - b.center[1]).powi(2)).sqrt();
            if dist <= a.radius + b.radius {
                return bad(format!("inclusions {j} and {i} overlap"));
            }
        }
    }
    Ok(Medium { spec, inclusions })
}

/// Fourier coefficients on |n|_inf <= cutoff, stored densely in row-major
/// order over (n_1, n_2).
#[derive(Debug, Clone)]
pub struct CoefficientTable {
    pub d: usize,
    pub cutoff: usize,
    pub g: Vec<c64>,
    pub rho: Vec<c64>,
    /// Coefficients of 1/G; only available for unsmoothed media.
    pub inv_g: Option<Vec<c64>>,
}

impl CoefficientTable {
    pub fn index(&self, n: [i64; 2]) -> Option<usize> {
        let l = self.cutoff as i64;
        let w = 2 * l + 1;
        if n[0].abs() > l || n[1].abs() > l || (self.d == 1 && n[1] != 0) {
            return None;
        }
        Some(if self.d == 1 { (n[0] + l) as usize } else { ((n[0] + l) * w + n[1] + l) as usize })
    }

    pub fn get(&self, which: Coefficient, n: [i64; 2]) -> Option<c64> {
        let i = self.index(n)?;
        match which {
            Coefficient::G => Some(self.g[i]),
            Coefficient::Rho => Some(self.rho[i]),
            Coefficient::InvG => self.inv_g.as_ref().map(|v| v[i]),
        }
    }

    pub fn indices(&self) -> Vec<[i64; 2]> {
        let l = self.cutoff as i64;
        if self.d == 1 {
            (-l..=l).map(|a| [a, 0]).collect()
        } else {
            (-l..=l).flat_map(|a| (-l..=l).map(move |b| [a, b])).collect()
        }
    }
}

impl Medium {
    pub fn spec(&self) -> &MediumSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.spec.d
    }

    pub fn smoothing(&self) -> f64 {
        self.spec.smoothing
    }

    pub fn background(&self) -> Phase {
        self.spec.background
    }

    /// Largest G and rho values present; used for scaling heuristics.
    pub fn extremes(&self) -> (Phase, Phase) {
        let bg = self.spec.background;
        let mut lo = bg;
        let mut hi = bg;
        for inc in &self.inclusions {
            lo.g = lo.g.min(inc.g);
            lo.rho = lo.rho.min(inc.rho);
            hi.g = hi.g.max(inc.g);
            hi.rho = hi.rho.max(inc.rho);
        }
        (lo, hi)
    }

    fn values(&self, which: Coefficient, inc: Option<&Inclusion>) -> f64 {
        let (g, rho) = match inc {
            Some(i) => (i.g, i.rho),
            None => (self.spec.background.g, self.spec.background.rho),
        };
        match which {
            Coefficient::G => g,
            Coefficient::Rho => rho,
            Coefficient::InvG => 1.0 / g,
        }
    }

    /// Unsmoothed Fourier coefficient at multi-index n.
    fn sharp_coefficient(&self, which: Coefficient, n: [i64; 2]) -> c64 {
        let d = self.spec.d;
        let bg = self.values(which, None);
        let mut c = if n == [0, 0] { c64::new(bg, 0.0) } else { c64::new(0.0, 0.0) };
        for inc in &self.inclusions {
            let jump = self.values(which, Some(inc)) - bg;
            let nf = [n[0] as f64, n[1] as f64];
            let transform = match inc.shape {
                Shape::Interval => {
                    if n[0] == 0 {
                        2.0 * inc.radius
                    } else {
                        (2.0 * PI * nf[0] * inc.radius).sin() / (PI * nf[0])
                    }
                }
                Shape::Disk => {
                    let norm = (nf[0] * nf[0] + nf[1] * nf[1]).sqrt();
                    if norm == 0.0 {
                        PI * inc.radius * inc.radius
                    } else {
                        inc.radius * libm::j1(2.0 * PI * norm * inc.radius) / norm
                    }
                }
            };
            let dot: f64 = (0..d).map(|a| nf[a] * inc.center[a]).sum();
            c += jump * transform * c64::from_polar(1.0, -2.0 * PI * dot);
        }
        c
    }

    fn mollifier(&self, n: [i64; 2]) -> f64 {
        let s = self.spec.smoothing;
        if s == 0.0 {
            return 1.0;
        }
        let q = 4.0 * PI * PI * ((n[0] * n[0] + n[1] * n[1]) as f64);
        (-0.5 * s * s * q).exp()
    }

    /// Fourier coefficient with respect to e^{i 2 pi n.x}, smoothing included.
    pub fn fourier_coefficient(&self, which: Coefficient, n: [i64; 2]) -> c64 {
        self.sharp_coefficient(which, n) * self.mollifier(n)
    }

    pub fn fourier_table(&self, cutoff: usize) -> Result<CoefficientTable> {
        if cutoff < 1 {
            return Err(crate::error::invalid("cutoff", "must be at least 1"));
        }
        let mut table = CoefficientTable { d: self.spec.d, cutoff, g: vec![], rho: vec![], inv_g: None };
        let idx = table.indices();
        table.g = idx.iter().map(|&n| self.fourier_coefficient(Coefficient::G, n)).collect();
        table.rho = idx.iter().map(|&n| self.fourier_coefficient(Coefficient::Rho, n)).collect();
        if self.spec.smoothing == 0.0 {
            table.inv_g = Some(idx.iter().map(|&n| self.sharp_coefficient(Coefficient::InvG, n)).collect());
        }
        Ok(table)
    }

    /// Cell average of the (smoothed) field.
    pub fn mean(&self, which: Coefficient) -> f64 {
        self.fourier_coefficient(which, [0, 0]).re
    }

    fn inside(&self, inc: &Inclusion, x: [f64; 2]) -> bool {
        match inc.shape {
            Shape::Interval => (x[0] - inc.center[0]).abs() < inc.radius,
            Shape::Disk => {
                let (a, b) = (x[0] - inc.center[0], x[1] - inc.center[1]);
                a * a + b * b < inc.radius * inc.radius
            }
        }
    }

    /// Pointwise value at x (any point; wrapped into the cell). For smoothed
    /// media this is the mollified field, matching the Fourier tables.
    pub fn evaluate(&self, which: Coefficient, x: &[f64]) -> f64 {
        let mut w = [0.0; 2];
        for (a, xa) in x.iter().take(self.spec.d).enumerate() {
            w[a] = xa - xa.round();
        }
        let s = self.spec.smoothing;
        if s == 0.0 {
            let inc = self.inclusions.iter().find(|inc| self.inside(inc, w));
            return self.values(which, inc);
        }
        if self.spec.d == 1 {
            let bg = self.values(which, None);
            let scale = s * std::f64::consts::SQRT_2;
            let images = 2 + (8.0 * s).ceil() as i64;
            let mut v = bg;
            for inc in &self.inclusions {
                let jump = self.values(which, Some(inc)) - bg;
                for m in -images..=images {
                    let y = w[0] - inc.center[0] - m as f64;
                    v += 0.5 * jump * (libm::erf((y + inc.radius) / scale) - libm::erf((y - inc.radius) / scale));
                }
            }
            return v;
        }
        // 2D smoothed: truncated synthesis where the mollifier drops below e^-40.
        let nmax = ((80.0f64).sqrt() / (2.0 * PI * s)).ceil() as i64;
        let mut v = c64::new(0.0, 0.0);
        for a in -nmax..=nmax {
            for b in -nmax..=nmax {
                let c = self.fourier_coefficient(which, [a, b]);
                if c.norm() == 0.0 {
                    continue;
                }
                v += c * c64::from_polar(1.0, 2.0 * PI * (a as f64 * w[0] + b as f64 * w[1]));
            }
        }
        v.re
    }
}
