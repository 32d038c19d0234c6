//! Small dense helpers shared by the kernel builders.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

pub(crate) const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
pub(crate) const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };

/// `exp(-(d/2 I + c/2 v v†) h)` stored as `decay · (I + coeff · v v†)`.
///
/// `v v†` has the single non-zero eigenvalue `‖v‖²` along `v`, so the
/// exponential reduces to a scalar decay plus a rank-one correction.
#[derive(Debug, Clone)]
pub struct RankOneStep {
    pub decay: f64,
    pub coeff: f64,
    pub dir: Vec<Complex64>,
}

impl RankOneStep {
    /// Factor for `exp(-M h)` with `M = (rate/2) I + (strength/2) v v†`.
    pub fn new(rate: f64, strength: f64, dir: Vec<Complex64>, h: f64) -> Self {
        let norm_sqr: f64 = dir.iter().map(|z| z.norm_sqr()).sum();
        let x = 0.5 * strength * h;
        // expm1(-x n)/n → -x as n → 0
        let coeff = if norm_sqr * x > 1e-300 {
            (-x * norm_sqr).exp_m1() / norm_sqr
        } else {
            -x
        };
        Self {
            decay: (-0.5 * rate * h).exp(),
            coeff,
            dir,
        }
    }

    pub fn dim(&self) -> usize {
        self.dir.len()
    }

    /// `x ← E x`
    pub fn apply(&self, x: &mut [Complex64]) {
        let proj: Complex64 = self.dir.iter().zip(x.iter()).map(|(v, xi)| v.conj() * xi).sum();
        let s = proj * self.coeff;
        for (xi, v) in x.iter_mut().zip(&self.dir) {
            *xi = (*xi + s * v) * self.decay;
        }
    }

    /// `X ← X E`
    pub fn apply_right(&self, x: &mut CMatrix) {
        let m = self.dim();
        let xv: Vec<Complex64> = (0..x.nrows())
            .map(|r| (0..m).map(|c| x[(r, c)] * self.dir[c]).sum())
            .collect();
        for c in 0..m {
            let vc = self.dir[c].conj() * self.coeff;
            for r in 0..x.nrows() {
                x[(r, c)] = (x[(r, c)] + xv[r] * vc) * self.decay;
            }
        }
    }

    /// `X ← E X`
    pub fn apply_left(&self, x: &mut CMatrix) {
        let mut col = vec![ZERO; x.nrows()];
        for c in 0..x.ncols() {
            for r in 0..x.nrows() {
                col[r] = x[(r, c)];
            }
            self.apply(&mut col);
            for r in 0..x.nrows() {
                x[(r, c)] = col[r];
            }
        }
    }

    pub fn matrix(&self) -> CMatrix {
        let m = self.dim();
        CMatrix::from_fn(m, m, |r, c| {
            let id = if r == c { ONE } else { ZERO };
            (id + self.dir[r] * self.dir[c].conj() * self.coeff) * self.decay
        })
    }
}

/// Induced 1-norm (max column sum).
pub fn norm1(a: &CMatrix) -> f64 {
    (0..a.ncols())
        .map(|c| a.column(c).iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn max_abs_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

/// Largest entry of `|A A† - I|` for the rows of `A`.
pub fn row_orthonormality(a: &CMatrix) -> (usize, usize, f64) {
    let gram = a * a.adjoint();
    let mut worst = (0, 0, 0.0);
    for r in 0..gram.nrows() {
        for c in 0..gram.ncols() {
            let target = if r == c { ONE } else { ZERO };
            let d = (gram[(r, c)] - target).norm();
            if d > worst.2 {
                worst = (r, c, d);
            }
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dir() -> Vec<Complex64> {
        vec![
            Complex64::new(0.3, -0.2),
            Complex64::new(-1.1, 0.4),
            Complex64::new(0.05, 0.9),
        ]
    }

    #[test]
    fn apply_matches_matrix() {
        let step = RankOneStep::new(0.7, 1.9, dir(), 0.13);
        let e = step.matrix();
        let x0 = CVector::from_vec(vec![
            Complex64::new(1.0, 0.5),
            Complex64::new(-0.2, 0.0),
            Complex64::new(0.0, 2.0),
        ]);
        let expect = &e * &x0;
        let mut x = x0.as_slice().to_vec();
        step.apply(&mut x);
        for (a, b) in x.iter().zip(expect.iter()) {
            assert!((a - b).norm() < 1e-14);
        }

        let mut xm = CMatrix::from_fn(2, 3, |r, c| Complex64::new(r as f64 + 0.5, c as f64 - 1.0));
        let expect = &xm * &e;
        step.apply_right(&mut xm);
        assert!(max_abs_diff(&xm, &expect) < 1e-14);

        let mut ym = CMatrix::from_fn(3, 2, |r, c| Complex64::new(c as f64, r as f64 * 0.3));
        let expect = &e * &ym;
        step.apply_left(&mut ym);
        assert!(max_abs_diff(&ym, &expect) < 1e-14);
    }

    #[test]
    fn zero_direction_is_pure_decay() {
        let step = RankOneStep::new(2.0, 5.0, vec![ZERO; 2], 0.5);
        let e = step.matrix();
        let d = (-0.5f64).exp();
        assert!((e[(0, 0)].re - d).abs() < 1e-15);
        assert!(e[(0, 1)].norm() < 1e-15);
    }
}
