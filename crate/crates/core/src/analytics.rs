//! Closed-form and Laplace-domain loss statistics of a single link, their
//! inversion to a finite window, averaging over the imbalance spread, and
//! regime classification.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::laplace::{invert_parabolic, ParabolicContour};
use crate::model::{CriticalitySpread, LinkParams, SpreadShape, WindowSpec};
use crate::special::Quadrature;

/// Probability density of the queue sitting in its top packet slot,
/// η/(1 − e^(−ηc)), continuous at η = 0.
pub fn stationary_boundary_density(eta: f64, c: f64) -> f64 {
    let x = eta * c;
    if x.abs() < 1e-9 {
        return (1.0 + 0.5 * x) / c;
    }
    if eta > 0.0 {
        eta / -(-x).exp_m1()
    } else {
        -eta / (-x).exp_m1()
    }
}

/// Laplace image of the return probability to the top wall.
pub fn resolvent(eta: f64, tau: f64, eps: f64) -> f64 {
    1.0 / inverse_resolvent(eta, tau, eps)
}

/// 1/R_ε = (√(η² + 4τε) − η)/2, evaluated without cancellation.
fn inverse_resolvent(eta: f64, tau: f64, eps: f64) -> f64 {
    let root = (eta * eta + 4.0 * tau * eps).sqrt();
    if eta > 0.0 {
        2.0 * tau * eps / (root + eta)
    } else {
        0.5 * (root - eta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaplacePdfParams {
    pub eta: f64,
    pub tau: f64,
    pub c: f64,
    pub eps: f64,
}

impl LaplacePdfParams {
    pub fn for_link(link: &LinkParams, eps: f64) -> Self {
        LaplacePdfParams {
            eta: link.eta,
            tau: link.tau,
            c: link.c,
            eps,
        }
    }
}

/// F_ε(Λ) = p e^(−Λ/R_ε)/(τ ε² R_ε²).
pub fn laplace_loss_density(lambda: f64, params: &LaplacePdfParams) -> f64 {
    let LaplacePdfParams { eta, tau, c, eps } = *params;
    let p = stationary_boundary_density(eta, c);
    let q = inverse_resolvent(eta, tau, eps);
    p * (-lambda * q).exp() * q * q / (tau * eps * eps)
}

/// ∫_Λ^∞ F_ε(Λ') dΛ' = p e^(−Λ/R_ε)/(τ ε² R_ε).
pub fn laplace_loss_survival(lambda: f64, params: &LaplacePdfParams) -> f64 {
    let LaplacePdfParams { eta, tau, c, eps } = *params;
    let p = stationary_boundary_density(eta, c);
    let q = inverse_resolvent(eta, tau, eps);
    p * (-lambda * q).exp() * q / (tau * eps * eps)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InversionOptions {
    /// Trapezoid nodes on the half contour; the result is checked against a
    /// refinement with twice as many.
    pub nodes: usize,
    pub rel_tol: f64,
}

impl Default for InversionOptions {
    fn default() -> Self {
        InversionOptions {
            nodes: 32,
            rel_tol: 1e-8,
        }
    }
}

/// Which Λ-domain function to recover: the density (`power = 2`) or its
/// survival function (`power = 1`), both of the form p q^power e^(−Λq)/(τε²).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Target {
    Density,
    Survival,
}

impl Target {
    fn power(self) -> i32 {
        match self {
            Target::Density => 2,
            Target::Survival => 1,
        }
    }
}

fn check_window(t: f64, link: &LinkParams) -> Result<()> {
    link.validate()?;
    if !(t >= 10.0 * link.tau && t.is_finite()) {
        return Err(Error::param(
            "T",
            format!(
                "window {t} must be at least 10 inter-arrival times ({})",
                10.0 * link.tau
            ),
        ));
    }
    Ok(())
}

/// Inverts p q^m e^(−Λq)/(τε²) at time `t`.
///
/// On the contour ε = w² − β with β = η²/4τ the inverse resolvent is linear,
/// q = √τ w − η/2, and the exponent εt − Λq is a parabola in w with its
/// minimum at w* = Λ√τ/2t. The contour crosses the real axis at w*, moved
/// away from the branch point at w = 0 and from the pole at ε = 0 (w = √β)
/// by at least 1.5/√t. When the contour passes left of the pole its residue
/// is added in closed form.
fn invert(target: Target, lambda: f64, t: f64, link: &LinkParams, opts: &InversionOptions) -> Result<f64> {
    check_window(t, link)?;
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::param(
            "lambda",
            format!("must be finite and non-negative, got {lambda}"),
        ));
    }
    let LinkParams { eta, tau, c, .. } = *link;
    let m = target.power();
    let p = stationary_boundary_density(eta, c);
    if p == 0.0 {
        return Ok(0.0);
    }
    let sqrt_tau = tau.sqrt();
    let beta = eta * eta / (4.0 * tau);
    let pole = beta.sqrt();
    let gap = 1.5 / t.sqrt();
    let saddle = lambda * sqrt_tau / (2.0 * t);
    let has_pole = eta < 0.0 || (eta > 0.0 && target == Target::Survival);

    let (mu, left_of_pole) = if !has_pole {
        (saddle.max(gap), false)
    } else if pole < 2.0 * gap || saddle >= pole + gap {
        (saddle.max(pole + gap), false)
    } else if saddle <= pole - gap {
        (saddle.max(gap), true)
    } else {
        (pole + gap, false)
    };

    let residue = if !left_of_pole {
        0.0
    } else if eta > 0.0 {
        p / eta
    } else {
        let a = -eta;
        let am = a.powi(m);
        p / tau * (-lambda * a).exp() * (t * am + (m as f64 * am / a - lambda * am) * tau / a)
    };

    let log_scale = (p / tau).ln();
    // The integrand never exceeds its value at the crossing by more than the
    // algebraic factor q^m/ε²; skip sums that would underflow anyway.
    let crossing = (mu * mu - beta) * t - lambda * (sqrt_tau * mu - 0.5 * eta) + log_scale;
    let algebraic = 4.0 * (t / tau + 1.0).ln() + 10.0;
    if !(crossing + algebraic > -745.0) {
        return Ok(residue);
    }
    let contour = ParabolicContour::new(mu, beta, t);
    let log_transform = |s: Complex64| {
        let w = (s + beta).sqrt();
        let q = w * sqrt_tau - 0.5 * eta;
        let algebraic = if eta >= 0.0 {
            // q = √τ(w − √β) shares its zero with ε; cancel it analytically.
            let cancelled = match target {
                Target::Density => Complex64::new(0.0, 0.0),
                Target::Survival => -(w - pole).ln(),
            };
            0.5 * m as f64 * tau.ln() + cancelled - 2.0 * (w + pole).ln()
        } else {
            q.ln() * m as f64 - 2.0 * ((w - pole) * (w + pole)).ln()
        };
        log_scale + algebraic - lambda * q
    };
    let sum = invert_parabolic(log_transform, t, &contour, opts.nodes);
    sum.accept(residue, opts.rel_tol)
}

/// Density F_T(Λ) of the cumulative loss Λ over a window of length `t`.
pub fn invert_laplace_pdf(lambda: f64, t: f64, link: &LinkParams) -> Result<f64> {
    invert_laplace_pdf_with(lambda, t, link, &InversionOptions::default())
}

pub fn invert_laplace_pdf_with(lambda: f64, t: f64, link: &LinkParams, opts: &InversionOptions) -> Result<f64> {
    invert(Target::Density, lambda, t, link, opts)
}

/// P(Λ > λ) obtained by inverting the survival image directly.
pub fn loss_survival(lambda: f64, t: f64, link: &LinkParams) -> Result<f64> {
    invert(Target::Survival, lambda, t, link, &InversionOptions::default())
}

/// P(Λ ≤ λ), including the atom of lossless windows at Λ = 0.
pub fn loss_cdf(lambda: f64, t: f64, link: &LinkParams) -> Result<f64> {
    Ok(1.0 - loss_survival(lambda, t, link)?)
}

/// Width of Λ over which F_T lives: the diffusive spread plus any drift.
fn lambda_scale(t: f64, link: &LinkParams) -> f64 {
    let steps = t / link.tau;
    2.0 * steps.sqrt() + link.eta.max(0.0) * steps
}

/// Probability A of a lossless window, 1 − ∫₀^∞ F_T(Λ) dΛ, by adaptive
/// quadrature over the inverted density.
pub fn no_loss_weight(t: f64, link: &LinkParams) -> Result<f64> {
    check_window(t, link)?;
    let mut failure = None;
    let quad = Quadrature {
        abs_tol: 1e-11,
        rel_tol: 1e-10,
        max_intervals: 2000,
    };
    let integral = quad.integrate_half_line(
        |lambda| match invert_laplace_pdf(lambda, t, link) {
            Ok(v) => v,
            Err(e) => {
                failure.get_or_insert(e);
                0.0
            }
        },
        lambda_scale(t, link),
    );
    if let Some(e) = failure {
        return Err(e);
    }
    if !integral.converged {
        return Err(Error::Numerical(format!(
            "loss-density quadrature did not converge (error estimate {:e})",
            integral.error
        )));
    }
    let a = 1.0 - integral.value;
    if !(-1e-6..=1.0 + 1e-6).contains(&a) {
        return Err(Error::Numerical(format!(
            "no-loss weight {a} lies outside [0, 1]: the window is outside the small-loss regime"
        )));
    }
    Ok(a.clamp(0.0, 1.0))
}

/// Density of the link loss fraction Φ, (T/τ_i) F_T((T/τ_i) Φ).
pub fn link_loss_pdf(phi: f64, t: f64, link: &LinkParams) -> Result<f64> {
    if !(0.0..=1.0).contains(&phi) {
        return Err(Error::param("phi", format!("must lie in [0, 1], got {phi}")));
    }
    let steps = t / link.tau;
    Ok(steps * invert_laplace_pdf(steps * phi, t, link)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RegimeClass {
    Microscopic,
    Mesoscopic,
    Crossover,
    Macroscopic,
}

impl RegimeClass {
    pub fn name(&self) -> &'static str {
        match self {
            RegimeClass::Microscopic => "microscopic",
            RegimeClass::Mesoscopic => "mesoscopic",
            RegimeClass::Crossover => "crossover",
            RegimeClass::Macroscopic => "macroscopic",
        }
    }

    /// Position along increasing window length.
    pub fn order(&self) -> u8 {
        match self {
            RegimeClass::Microscopic => 0,
            RegimeClass::Mesoscopic => 1,
            RegimeClass::Crossover => 2,
            RegimeClass::Macroscopic => 3,
        }
    }
}

impl std::fmt::Display for RegimeClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Regime of a window of length `t` for base inter-arrival time `tau`,
/// spread width `gamma` and path length `a`.
///
/// Microscopic below the parabola T/τ = γ⁻¹, mesoscopic while aγ < φ₀,
/// macroscopic once φ₀ < γ, crossover in between. Points exactly on a
/// boundary are classed as crossover.
pub fn classify(t: f64, tau: f64, gamma: f64, a: f64) -> RegimeClass {
    let steps = t / tau;
    let inv_gamma = 1.0 / gamma;
    let root = steps.sqrt();
    if steps < inv_gamma {
        RegimeClass::Microscopic
    } else if steps == inv_gamma {
        RegimeClass::Crossover
    } else if inv_gamma > a * root {
        RegimeClass::Mesoscopic
    } else if inv_gamma < root {
        RegimeClass::Macroscopic
    } else {
        RegimeClass::Crossover
    }
}

/// Density and zero-loss atom of the link loss fraction after averaging
/// over the imbalance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AveragedPdf {
    pub density: f64,
    pub atom: f64,
}

/// η-averaged loss density of one link. In the mesoscopic regime the
/// average is dominated by η ≈ γ; in the macroscopic regime every lossy
/// link loses exactly its imbalance, so the density copies the positive
/// half of the spread and the negative half forms the atom at zero.
pub fn eta_averaged_pdf(
    phi: f64,
    t: f64,
    link: &LinkParams,
    spread: &CriticalitySpread,
    regime: RegimeClass,
) -> Result<AveragedPdf> {
    spread.validate()?;
    match regime {
        RegimeClass::Mesoscopic => {
            let at_gamma = link.with_eta(spread.gamma)?;
            Ok(AveragedPdf {
                density: link_loss_pdf(phi, t, &at_gamma)?,
                atom: no_loss_weight(t, &at_gamma)?,
            })
        }
        RegimeClass::Macroscopic => {
            let density = if phi > 0.0 { spread.density(phi) } else { 0.0 };
            let atom = match spread.shape {
                SpreadShape::Uniform | SpreadShape::Gaussian => 0.5,
            };
            Ok(AveragedPdf { density, atom })
        }
        other => Err(Error::UnsupportedRegime(other.name())),
    }
}

/// Asymptotic power-law tail (aγ/φ₀²)(Φ/φ₀)^(−2(1+δ)) of the path loss
/// density, valid for φ₀ ≤ Φ ≤ φ₀²/γ in the mesoscopic regime.
pub fn tail_pdf(phi: f64, window: &WindowSpec, a: f64, gamma: f64, delta: f64) -> Result<f64> {
    let phi0 = window.phi0();
    let regime = classify(window.t, window.tau, gamma, a);
    if regime != RegimeClass::Mesoscopic {
        return Err(Error::UnsupportedRegime(regime.name()));
    }
    let upper = window.phi0_sq() / gamma;
    if !(phi >= phi0 * (1.0 - 1e-12) && phi <= upper * (1.0 + 1e-12)) {
        return Err(Error::param(
            "phi",
            format!("{phi} lies outside the tail window [{phi0}, {upper}]"),
        ));
    }
    Ok(a * gamma / window.phi0_sq() * (phi / phi0).powf(-2.0 * (1.0 + delta)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::erfc;

    fn link(eta: f64, c: f64) -> LinkParams {
        LinkParams::new(1.0, eta, 1.0, c).unwrap()
    }

    #[test]
    fn boundary_density_examples() {
        assert!((stationary_boundary_density(0.0, 100.0) - 0.01).abs() < 1e-15);
        let p = stationary_boundary_density(0.01, 1000.0);
        assert!((p - 0.01 / (1.0 - (-10f64).exp())).abs() < 1e-15);
        assert!((p - 0.01000045).abs() < 1e-8);
        let p = stationary_boundary_density(-0.01, 1000.0);
        assert!((p / (-0.01 / (1.0 - 10f64.exp())) - 1.0).abs() < 1e-12);
        assert!((p - 4.54e-7).abs() < 1e-9);
        // Continuity across η = 0.
        for &eta in &[-1e-10, -1e-12, 1e-12, 1e-10] {
            let p = stationary_boundary_density(eta, 100.0);
            assert!((p - 0.01 * (1.0 + 50.0 * eta)).abs() < 1e-16, "{eta}: {p}");
        }
    }

    #[test]
    fn resolvent_examples() {
        assert!((resolvent(0.0, 1.0, 1.0) - 1.0).abs() < 1e-15);
        assert!((resolvent(0.0, 1.0, 4.0) - 0.5).abs() < 1e-15);
        assert!((resolvent(3.0, 1.0, 1.0) - (13f64.sqrt() + 3.0) / 2.0).abs() < 1e-12);
        let r = resolvent(-0.3, 2.0, 1e-9);
        let direct = ((0.09f64 + 8e-9).sqrt() - 0.3) / (4e-9);
        assert!((r / direct - 1.0).abs() < 1e-6);
    }

    #[test]
    fn laplace_density_examples() {
        let params = LaplacePdfParams {
            eta: 0.0,
            tau: 1.0,
            c: 100.0,
            eps: 1.0,
        };
        assert!((laplace_loss_density(0.0, &params) - 0.01).abs() < 1e-15);
        assert!((laplace_loss_density(1.0, &params) - 0.01 * (-1f64).exp()).abs() < 1e-15);
        assert!((laplace_loss_density(1.0, &params) - 0.003679).abs() < 1e-6);
    }

    #[test]
    fn inversion_matches_erfc_closed_form() {
        for &c in &[100.0, 1e4] {
            for &steps in &[1e3f64, 1e6] {
                let l = link(0.0, c);
                let phi0 = (1.0 / steps).sqrt();
                for k in 0..=40 {
                    let x = 0.5 * k as f64;
                    let lambda = x / phi0;
                    let exact = 0.01 * 100.0 / c * erfc(x / 2.0);
                    let got = invert_laplace_pdf(lambda, steps, &l).unwrap();
                    assert!(
                        (got / exact - 1.0).abs() < 1e-9,
                        "c={c} T={steps} x={x}: {got} vs {exact}"
                    );
                }
            }
        }
    }

    #[test]
    fn erfc_closed_form_is_the_transform_pair() {
        // Forward-transform p·erfc(Λ/(2√T)) in T by quadrature and compare
        // with F_ε; this certifies the closed form independently of the
        // inverter.
        let q = Quadrature::default();
        for &(lambda, eps) in &[(0.0, 0.3), (2.0, 0.05), (15.0, 0.01), (40.0, 0.2)] {
            let params = LaplacePdfParams {
                eta: 0.0,
                tau: 1.0,
                c: 100.0,
                eps,
            };
            let forward = q
                .integrate_half_line(|t| (-eps * t).exp() * 0.01 * erfc(lambda / (2.0 * t.sqrt())), 1.0 / eps)
                .value;
            let exact = laplace_loss_density(lambda, &params);
            assert!(
                (forward / exact - 1.0).abs() < 1e-9,
                "{lambda} {eps}: {forward} vs {exact}"
            );
        }
    }

    /// Density of Λ from the running maximum of the free walk: a window
    /// starting y below the top wall loses (M − y)⁺, with the start drawn
    /// from the stationary weight p e^(−ηy) and M the maximum of a walk with
    /// drift η and variance 2 per unit time, whose density is
    /// e^(−(m−ηt)²/4t)/√(πt) − (η/2) e^(ηm) erfc((m+ηt)/2√t).
    fn max_oracle(lambda: f64, t: f64, eta: f64, c: f64) -> f64 {
        let p = stationary_boundary_density(eta, c);
        let sqrt_t = t.sqrt();
        let scaled_erfc = |log_weight: f64, x: f64| {
            let e = erfc(x);
            if e == 0.0 {
                0.0
            } else {
                (log_weight + e.ln()).exp()
            }
        };
        let weighted_density = |y: f64| {
            let m = y + lambda;
            let gauss = (-eta * y - (m - eta * t).powi(2) / (4.0 * t)).exp() / (std::f64::consts::PI * t).sqrt();
            gauss - 0.5 * eta * scaled_erfc(eta * lambda, (m + eta * t) / (2.0 * sqrt_t))
        };
        let quad = Quadrature {
            abs_tol: 0.0,
            rel_tol: 1e-12,
            max_intervals: 4000,
        };
        let scale = 2.0 * sqrt_t + eta.abs() * t;
        p * quad.integrate_half_line(weighted_density, scale).value
    }

    #[test]
    fn inversion_matches_running_maximum_oracle() {
        let t = 1e4;
        for &eta in &[-0.02, -1e-3, 1e-3, 0.02] {
            let l = link(eta, 1000.0);
            for &lambda in &[0.0, 10.0, 50.0, 150.0, 300.0, 500.0] {
                let got = invert_laplace_pdf(lambda, t, &l).unwrap();
                let want = max_oracle(lambda, t, eta, 1000.0);
                assert!(
                    (got - want).abs() <= 1e-8 * want.abs() + 1e-15,
                    "eta={eta} lambda={lambda}: {got} vs {want}"
                );
            }
        }
    }

    #[test]
    fn strong_drift_uses_pole_residue() {
        // |η|√(T/τ) = 10: the contour passes left of the pole for small Λ.
        let t = 1e4;
        for &eta in &[-0.1, 0.1] {
            let l = link(eta, 1000.0);
            for &lambda in &[0.0, 20.0, 200.0, 900.0, 1100.0] {
                let got = invert_laplace_pdf(lambda, t, &l).unwrap();
                let want = max_oracle(lambda, t, eta, 1000.0);
                assert!(
                    (got - want).abs() <= 1e-8 * want.abs() + 1e-300,
                    "eta={eta} lambda={lambda}: {got} vs {want}"
                );
            }
        }
    }

    #[test]
    fn survival_is_integral_of_density() {
        let t = 1e4;
        for &eta in &[-0.05, -2e-3, 0.0, 2e-3, 0.05] {
            let l = link(eta, 1000.0);
            for &lambda in &[0.0, 30.0, 400.0] {
                let s = loss_survival(lambda, t, &l).unwrap();
                let q = Quadrature::default()
                    .integrate_half_line(
                        |x| invert_laplace_pdf(lambda + x, t, &l).unwrap(),
                        200.0 + eta.max(0.0) * t,
                    )
                    .value;
                assert!(
                    (s - q).abs() < 1e-9 * s.max(1e-12),
                    "eta={eta} lambda={lambda}: {s} vs {q}"
                );
            }
        }
    }

    #[test]
    fn no_loss_weight_examples() {
        // ∫ p erfc(Λ/(2√T)) dΛ = 2p√T/√π.
        let a = no_loss_weight(1e4, &link(0.0, 1e4)).unwrap();
        let want = 1.0 - 2.0 * 1e-4 * 100.0 / std::f64::consts::PI.sqrt();
        assert!((a - want).abs() < 1e-9, "{a} vs {want}");
        assert!((a - 0.9887).abs() < 1e-4);
        assert!(matches!(
            no_loss_weight(1e4, &link(0.0, 100.0)),
            Err(Error::Numerical(_))
        ));
        let a = no_loss_weight(1e4, &link(-0.5, 100.0)).unwrap();
        assert!((a - 1.0).abs() < 1e-12);
    }

    #[test]
    fn no_loss_weight_requires_long_window() {
        assert!(matches!(
            no_loss_weight(5.0, &link(0.0, 100.0)),
            Err(Error::InvalidParameter { .. })
        ));
    }

    #[test]
    fn lossy_mass_is_linear_in_gamma_over_phi0() {
        // 1 − A for η = γ over a γ sweep at fixed T: log-log slope 1.
        let t = 1e6;
        let gammas: [f64; 5] = [1e-5, 2e-5, 4e-5, 8e-5, 1.6e-4];
        let xs: Vec<f64> = gammas.iter().map(|g| g.ln()).collect();
        let ys: Vec<f64> = gammas
            .iter()
            .map(|&g| (1.0 - no_loss_weight(t, &link(g, 1e6)).unwrap()).ln())
            .collect();
        let n = xs.len() as f64;
        let mx = xs.iter().sum::<f64>() / n;
        let my = ys.iter().sum::<f64>() / n;
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
        let slope = sxy / sxx;
        assert!((slope - 1.0).abs() < 0.05, "slope {slope}");
    }

    #[test]
    fn link_pdf_rescaling_and_normalization() {
        let t = 1e4;
        let l = LinkParams::new(2.0, 0.0, 0.5, 2e4).unwrap();
        let steps = t / l.tau;
        let direct = invert_laplace_pdf(30.0, t, &l).unwrap();
        assert!((link_loss_pdf(30.0 / steps, t, &l).unwrap() - steps * direct).abs() < 1e-12 * steps * direct);
        let a = no_loss_weight(t, &l).unwrap();
        let mass = Quadrature::default()
            .integrate(|phi| link_loss_pdf(phi, t, &l).unwrap(), 0.0, 0.1)
            .value;
        assert!((a + mass - 1.0).abs() < 1e-6, "{}", a + mass);
        assert!(link_loss_pdf(1.5, t, &l).is_err());
    }

    #[test]
    fn doubling_load_compresses_phi_scale() {
        // Φ = (φ₀²/ℓ)·Λ, and at η = 0 the Λ-law depends on ℓ only through
        // T/τ_i = ℓT/τ, so Φ-quantiles shrink like 1/√ℓ.
        let t = 1e4;
        let median = |ell: f64| {
            let l = LinkParams::new(ell, 0.0, 1.0 / ell, 1e5 * ell).unwrap();
            let lossy = loss_survival(0.0, t, &l).unwrap();
            let (mut lo, mut hi) = (0.0, 1e4);
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                if loss_survival(mid, t, &l).unwrap() > 0.5 * lossy {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            (lo, lo * (1.0 / t) / ell)
        };
        let (lambda1, phi1) = median(1.0);
        let (lambda2, phi2) = median(2.0);
        assert!((lambda2 / lambda1 - 2f64.sqrt()).abs() < 1e-8);
        assert!((phi2 / phi1 - 0.5f64.sqrt()).abs() < 1e-8);
    }

    #[test]
    fn classify_examples() {
        let g = 1e-4;
        let t = |phi0: f64| 1.0 / (phi0 * phi0);
        assert_eq!(classify(t(3e-3), 1.0, g, 10.0), RegimeClass::Mesoscopic);
        assert_eq!(classify(t(1e-5), 1.0, g, 10.0), RegimeClass::Macroscopic);
        assert_eq!(classify(t(0.1), 1.0, g, 10.0), RegimeClass::Microscopic);
        assert_eq!(classify(t(5e-4), 1.0, g, 10.0), RegimeClass::Crossover);
        // On the upper bold line itself.
        assert_eq!(classify(1e6, 1.0, g, 10.0), RegimeClass::Crossover);
    }

    #[test]
    fn averaged_pdf_macroscopic_and_refusals() {
        let spread = CriticalitySpread::uniform(1e-4).unwrap();
        let l = link(0.0, 1e6);
        let r = eta_averaged_pdf(5e-5, 1e10, &l, &spread, RegimeClass::Macroscopic).unwrap();
        assert_eq!(r.density, 5e3);
        assert_eq!(r.atom, 0.5);
        assert_eq!(
            eta_averaged_pdf(2e-4, 1e10, &l, &spread, RegimeClass::Macroscopic)
                .unwrap()
                .density,
            0.0
        );
        assert!(matches!(
            eta_averaged_pdf(1e-5, 1e10, &l, &spread, RegimeClass::Crossover),
            Err(Error::UnsupportedRegime(_))
        ));
        assert!(eta_averaged_pdf(1e-5, 1e10, &l, &spread, RegimeClass::Microscopic).is_err());
    }

    #[test]
    fn averaged_pdf_mesoscopic_plateau_and_decay() {
        let gamma = 1e-4;
        let spread = CriticalitySpread::uniform(gamma).unwrap();
        let phi0: f64 = 3e-3;
        let t = 1.0 / (phi0 * phi0);
        for &ell in &[1.0, 4.0] {
            let l = LinkParams::new(ell, 0.0, 1.0 / ell, 1e6 * ell).unwrap();
            let height = ell * gamma / (phi0 * phi0);
            let edge = phi0 / ell.sqrt();
            // The plateau ends where erfc(Φ√ℓ/2φ₀) has fallen to one half.
            for k in 1..=9 {
                let phi = edge * k as f64 / 10.0;
                let d = eta_averaged_pdf(phi, t, &l, &spread, RegimeClass::Mesoscopic)
                    .unwrap()
                    .density;
                assert!(
                    d > 0.5 * height && d < 2.0 * height,
                    "ell={ell} phi={phi}: {d} vs {height}"
                );
            }
            // Beyond the plateau ln P falls like −Φ²ℓ/φ₀² (up to the erfc
            // prefactor): ln P·φ₀²/(Φ²ℓ) approaches −¼ from below.
            let ratio = |x: f64| {
                let phi = x * edge;
                let d = eta_averaged_pdf(phi, t, &l, &spread, RegimeClass::Mesoscopic)
                    .unwrap()
                    .density;
                (d / height).ln() / (x * x)
            };
            let (r4, r8) = (ratio(4.0), ratio(8.0));
            assert!(r4 < -0.25 && r8 < -0.25 && r8 > r4 && r8 > -0.4, "{r4} {r8}");
        }
    }

    #[test]
    fn tail_pdf_examples() {
        let w = WindowSpec::from_phi0(3e-3, 1.0).unwrap();
        let (a, g, d) = (10.0, 1e-4, 0.25);
        let at_phi0 = tail_pdf(3e-3, &w, a, g, d).unwrap();
        assert!((at_phi0 - a * g / 9e-6).abs() < 1e-9 * at_phi0);
        let slope = (tail_pdf(0.06, &w, a, g, d).unwrap() / tail_pdf(0.03, &w, a, g, d).unwrap()).ln() / 2f64.ln();
        assert!((slope + 2.5).abs() < 1e-12);
        let w2 = WindowSpec::from_phi0(5e-3, 1.0).unwrap();
        let ratio = tail_pdf(0.05, &w2, 20.0, g, d).unwrap() / tail_pdf(0.05, &w2, 10.0, g, d).unwrap();
        assert!((ratio - 2.0).abs() < 1e-12);
        assert!(tail_pdf(1e-3, &w, a, g, d).is_err());
        assert!(tail_pdf(0.1, &w, a, g, d).is_err());
    }
}
