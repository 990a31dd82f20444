//! Small dense helpers on top of faer.

use faer::linalg::solvers::{PartialPivLu, Solve};
use faer::{c64, Mat};

pub fn zero() -> c64 {
    c64::new(0.0, 0.0)
}

pub fn matvec(a: &Mat<c64>, x: &[c64]) -> Vec<c64> {
    let mut y = vec![zero(); a.nrows()];
    for (j, &xj) in x.iter().enumerate() {
        if xj == zero() {
            continue;
        }
        let col = a.col(j);
        for (i, yi) in y.iter_mut().enumerate() {
            *yi += col[i] * xj;
        }
    }
    y
}

/// Sesquilinear product a^H b.
pub fn dot(a: &[c64], b: &[c64]) -> c64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub fn norm(a: &[c64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

pub fn axpy(y: &mut [c64], alpha: c64, x: &[c64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn scale(x: &[c64], alpha: c64) -> Vec<c64> {
    x.iter().map(|v| v * alpha).collect()
}

/// (A + A^H)/2 in place.
pub fn hermitize(a: &mut Mat<c64>) {
    let n = a.nrows();
    for j in 0..n {
        a[(j, j)] = c64::new(a[(j, j)].re, 0.0);
        for i in 0..j {
            let v = (a[(i, j)] + a[(j, i)].conj()) * 0.5;
            a[(i, j)] = v;
            a[(j, i)] = v.conj();
        }
    }
}

pub fn max_abs_diff_identity(a: &Mat<c64>) -> f64 {
    let mut m: f64 = 0.0;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            let target = if i == j { 1.0 } else { 0.0 };
            m = m.max((a[(i, j)] - target).norm());
        }
    }
    m
}

pub fn lu_solve(lu: &PartialPivLu<c64>, b: &[c64]) -> Vec<c64> {
    let rhs = Mat::from_fn(b.len(), 1, |i, _| b[i]);
    let x = lu.solve(&rhs);
    (0..b.len()).map(|i| x[(i, 0)]).collect()
}

pub fn inverse(a: &Mat<c64>) -> Mat<c64> {
    let lu = a.partial_piv_lu();
    lu.solve(Mat::<c64>::identity(a.nrows(), a.ncols()))
}

/// Unevaluated sum hi + lo, good to roughly 32 significant digits.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct DoubleDouble {
    pub hi: f64,
    pub lo: f64,
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

impl DoubleDouble {
    pub fn new(x: f64) -> Self {
        DoubleDouble { hi: x, lo: 0.0 }
    }

    pub fn product(a: f64, b: f64) -> Self {
        let (hi, lo) = two_prod(a, b);
        DoubleDouble { hi, lo }
    }

    pub fn add(self, o: Self) -> Self {
        let (s, e) = two_sum(self.hi, o.hi);
        let (t, f) = two_sum(self.lo, o.lo);
        let (s, e) = quick_two_sum(s, e + t);
        let (hi, lo) = quick_two_sum(s, e + f);
        DoubleDouble { hi, lo }
    }

    pub fn neg(self) -> Self {
        DoubleDouble { hi: -self.hi, lo: -self.lo }
    }

    pub fn sub(self, o: Self) -> Self {
        self.add(o.neg())
    }

    pub fn mul(self, o: Self) -> Self {
        let (p, e) = two_prod(self.hi, o.hi);
        let (hi, lo) = quick_two_sum(p, e + (self.hi * o.lo + self.lo * o.hi));
        DoubleDouble { hi, lo }
    }

    pub fn mul_f64(self, x: f64) -> Self {
        self.mul(DoubleDouble::new(x))
    }

    pub fn div(self, o: Self) -> Self {
        let q1 = self.hi / o.hi;
        let r = self.sub(o.mul_f64(q1));
        let q2 = r.hi / o.hi;
        let r = r.sub(o.mul_f64(q2));
        let q3 = r.hi / o.hi;
        let (hi, lo) = quick_two_sum(q1, q2);
        DoubleDouble { hi, lo }.add(DoubleDouble::new(q3))
    }

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }
}

/// Re(v^H A v) in double-double, taking the stored entries of A and v as exact.
/// `entry(i, j)` returns A[i, j] as (re, im) double-doubles.
pub fn hermitian_form_dd(n: usize, v: &[c64], entry: impl Fn(usize, usize) -> (DoubleDouble, DoubleDouble)) -> DoubleDouble {
    let mut acc = DoubleDouble::default();
    for i in 0..n {
        for j in 0..n {
            // conj(v_i) v_j, exactly as two double-doubles
            let wr = DoubleDouble::product(v[i].re, v[j].re).add(DoubleDouble::product(v[i].im, v[j].im));
            let wi = DoubleDouble::product(v[i].re, v[j].im).sub(DoubleDouble::product(v[i].im, v[j].re));
            let (ar, ai) = entry(i, j);
            acc = acc.add(wr.mul(ar)).sub(wi.mul(ai));
        }
    }
    acc
}
