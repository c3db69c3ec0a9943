//! Adaptive 15-point Gauss–Kronrod quadrature for complex integrands.

use crate::error::{DcsError, Result};
use crate::scalar::{modulus, re, C, Real};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];

// Gauss weights for the odd-indexed Kronrod nodes (XGK[1], XGK[3], XGK[5], XGK[7]).
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Clone, Copy, Debug)]
pub struct Quadrature<T: Real> {
    /// Stop once the error estimate is below `rel_tol·|I|`...
    pub rel_tol: T,
    /// ...or below `abs_tol`.
    pub abs_tol: T,
    pub max_intervals: usize,
}

impl<T: Real> Default for Quadrature<T> {
    fn default() -> Self {
        Self {
            rel_tol: T::quadrature_tol(),
            abs_tol: T::zero(),
            max_intervals: 4096,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadResult<T: Real> {
    pub value: C<T>,
    pub error: T,
}

struct Interval<T: Real> {
    a: T,
    b: T,
    value: C<T>,
    error: T,
}

fn kronrod<T: Real, F: Fn(T) -> C<T>>(f: &F, a: T, b: T) -> Interval<T> {
    let half = (b - a) * T::lit(0.5);
    let mid = (a + b) * T::lit(0.5);
    let fc = f(mid);
    let mut k = fc * re(T::lit(WGK[7]));
    let mut g = fc * re(T::lit(WG[3]));
    for i in 0..7 {
        let dx = half * T::lit(XGK[i]);
        let s = f(mid - dx) + f(mid + dx);
        k += s * re(T::lit(WGK[i]));
        if i % 2 == 1 {
            g += s * re(T::lit(WG[i / 2]));
        }
    }
    let value = k * re(half);
    let error = modulus((k - g) * re(half));
    Interval { a, b, value, error }
}

impl<T: Real> Quadrature<T> {
    pub fn with_rel_tol(rel_tol: T) -> Self {
        Self {
            rel_tol,
            ..Self::default()
        }
    }

    /// `∫_a^b f(t) dt`, bisecting the interval with the largest error estimate.
    pub fn integrate<F: Fn(T) -> C<T>>(&self, f: F, a: T, b: T) -> Result<QuadResult<T>> {
        if a == b {
            return Ok(QuadResult {
                value: re(T::zero()),
                error: T::zero(),
            });
        }
        let mut intervals = vec![kronrod(&f, a, b)];
        loop {
            let (value, error) = intervals
                .iter()
                .fold((re(T::zero()), T::zero()), |(v, e), i| (v + i.value, e + i.error));
            let target = self.abs_tol.max(self.rel_tol * modulus(value));
            if error <= target {
                return Ok(QuadResult { value, error });
            }
            if intervals.len() >= self.max_intervals {
                return Err(DcsError::QuadratureNonConvergence {
                    achieved: error.to_f64_lossy(),
                    requested: target.to_f64_lossy(),
                });
            }
            let worst = intervals
                .iter()
                .enumerate()
                .max_by(|x, y| x.1.error.partial_cmp(&y.1.error).unwrap_or(std::cmp::Ordering::Equal))
                .map(|(i, _)| i)
                .expect("non-empty");
            let iv = intervals.swap_remove(worst);
            let mid = (iv.a + iv.b) * T::lit(0.5);
            intervals.push(kronrod(&f, iv.a, mid));
            intervals.push(kronrod(&f, mid, iv.b));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::cis;

    #[test]
    fn polynomial_exact() {
        let q = Quadrature::<f64>::default();
        let r = q.integrate(|x| re(x.powi(5) - 2.0 * x), -1.0, 2.0).unwrap();
        let exact = (64.0 - 1.0) / 6.0 - (4.0 - 1.0);
        assert!((r.value.re - exact).abs() < 1e-13);
    }

    #[test]
    fn oscillatory_phase() {
        // ∫_0^L e^{iωt} dt = (e^{iωL} − 1)/(iω)
        let (w, l) = (173.0, 1.3);
        let q = Quadrature::<f64>::with_rel_tol(1e-12);
        let r = q.integrate(|t| cis(w * t), 0.0, l).unwrap();
        let exact = (cis(w * l) - re(1.0)) / C::new(0.0, w);
        assert!((r.value - exact).norm() < 1e-12);
    }

    #[test]
    fn chirp_against_fine_midpoint() {
        let f = |t: f64| cis(3.0 * t + 40.0 * t * t);
        let q = Quadrature::<f64>::with_rel_tol(1e-12);
        let r = q.integrate(f, 0.0, 1.0).unwrap();
        let n = 400_000;
        let h = 1.0 / n as f64;
        let mid: C<f64> = (0..n).map(|i| f((i as f64 + 0.5) * h)).sum::<C<f64>>() * h;
        assert!((r.value - mid).norm() < 1e-9);
    }

    #[test]
    fn reports_non_convergence() {
        let q = Quadrature::<f64> {
            rel_tol: 1e-14,
            abs_tol: 0.0,
            max_intervals: 2,
        };
        let err = q.integrate(|t| cis(5000.0 * t * t), 0.0, 1.0).unwrap_err();
        assert!(matches!(err, DcsError::QuadratureNonConvergence { .. }));
    }
}
