//! Special functions and adaptive quadrature.

use std::f64::consts::PI;

pub fn erfc(x: f64) -> f64 {
    libm::erfc(x)
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

const GK_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];

const GK_WEIGHTS: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728_8,
];

const GAUSS_WEIGHTS: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// One 15-point Kronrod rule on [a, b]; returns (estimate, error estimate).
fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(mid);
    let mut kronrod = fc * GK_WEIGHTS[7];
    let mut gauss = fc * GAUSS_WEIGHTS[3];
    for j in 0..7 {
        let dx = half * GK_NODES[j];
        let pair = f(mid - dx) + f(mid + dx);
        kronrod += GK_WEIGHTS[j] * pair;
        if j % 2 == 1 {
            gauss += GAUSS_WEIGHTS[j / 2] * pair;
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

#[derive(Debug, Clone, Copy)]
pub struct Quadrature {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
}

impl Default for Quadrature {
    fn default() -> Self {
        Quadrature {
            abs_tol: 1e-13,
            rel_tol: 1e-11,
            max_intervals: 4000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult {
    pub value: f64,
    pub error: f64,
    pub converged: bool,
}

impl Quadrature {
    /// Globally adaptive Gauss–Kronrod integration over [a, b].
    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut f: F, a: f64, b: f64) -> QuadResult {
        let (v, e) = gk15(&mut f, a, b);
        let mut intervals = vec![(a, b, v, e)];
        let mut total = v;
        let mut err = e;
        while err > self.abs_tol.max(self.rel_tol * total.abs()) {
            if intervals.len() >= self.max_intervals {
                return QuadResult {
                    value: total,
                    error: err,
                    converged: false,
                };
            }
            let (idx, _) = intervals
                .iter()
                .enumerate()
                .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
                .expect("non-empty");
            let (lo, hi, v0, e0) = intervals.swap_remove(idx);
            let mid = 0.5 * (lo + hi);
            let (v1, e1) = gk15(&mut f, lo, mid);
            let (v2, e2) = gk15(&mut f, mid, hi);
            total += v1 + v2 - v0;
            err += e1 + e2 - e0;
            intervals.push((lo, mid, v1, e1));
            intervals.push((mid, hi, v2, e2));
        }
        // Re-sum to shed the drift of the running updates.
        let value = intervals.iter().map(|x| x.2).sum();
        let error = intervals.iter().map(|x| x.3).sum();
        QuadResult {
            value,
            error,
            converged: true,
        }
    }

    /// Integral over [0, ∞) through the map x = s·u/(1 − u); `scale` should
    /// be the width over which the integrand lives.
    pub fn integrate_half_line<F: FnMut(f64) -> f64>(&self, mut f: F, scale: f64) -> QuadResult {
        self.integrate(
            |u| {
                if u >= 1.0 {
                    return 0.0;
                }
                let w = 1.0 - u;
                let x = scale * u / w;
                let v = f(x);
                if v == 0.0 {
                    0.0
                } else {
                    v * scale / (w * w)
                }
            },
            0.0,
            1.0,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn erfc_reference_values() {
        assert_eq!(erfc(0.0), 1.0);
        assert!((erfc(1.0) - 0.157_299_207_050_285_1).abs() < 1e-16);
        assert!((erfc(10.0) / 2.088_487_583_762_545e-45 - 1.0).abs() < 1e-13);
    }

    #[test]
    fn quadrature_polynomial_and_gaussian() {
        let q = Quadrature::default();
        let r = q.integrate(|x| x * x * x, 0.0, 2.0);
        assert!((r.value - 4.0).abs() < 1e-13);
        let r = q.integrate_half_line(|x| (-x * x).exp(), 1.0);
        assert!((r.value - PI.sqrt() / 2.0).abs() < 1e-12);
        assert!(r.converged);
    }

    #[test]
    fn quadrature_of_erfc_on_half_line() {
        // ∫₀^∞ erfc(kx) dx = 1/(k√π).
        let k = 0.37;
        let r = Quadrature::default().integrate_half_line(|x| erfc(k * x), 1.0 / k);
        assert!((r.value * k * PI.sqrt() - 1.0).abs() < 1e-11);
    }

    #[test]
    fn normal_cdf_symmetry() {
        assert_eq!(normal_cdf(0.0), 0.5);
        assert!((normal_cdf(1.96) - 0.975_002_104_851_780).abs() < 1e-12);
        assert!((normal_cdf(-3.0) + normal_cdf(3.0) - 1.0).abs() < 1e-15);
    }
}
