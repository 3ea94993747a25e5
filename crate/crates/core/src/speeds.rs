//! Dispersion curves k(λ) and minimal front speeds
//!
//! For a planar pulsating front moving with speed c in a medium with
//! diffusion matrix M, shear q(x) entering through a direction angle γ, and
//! KPP nonlinearity f, the exponential tail ansatz φ = e^{λY} ψ(X) reduces
//! the linearized travelling-front equation to the periodic eigenproblem
//!
//! ```text
//!     m₁₁ ψ″ + 2λ m₁₂ ψ′ + (λ² m₂₂ + λ q(x) sin γ + f′(0)) ψ = k(λ) ψ,
//! ```
//!
//! and the minimal speed is the KPP value c* = min_{λ>0} k(λ)/λ. The curve
//! λ ↦ k(λ) is convex with k(0⁺) = f′(0) > 0, so k(λ)/λ is unimodal on
//! (0, ∞): the minimum is found by a coarse walk on an integer log₂-grid of
//! λ followed by golden-section refinement in log λ.
//!
//! The conical ("V-shaped") minimal speed for a front whose level lines are
//! asymptotic to a tent with interior angles α (left) and β (right) is the
//! larger of two planar branch speeds:
//!
//! ```text
//!     c* = max( c*_{ρA, q sin α, f} / sin α ,  c*_{ρB, q sin β, f} / sin β ),
//!     A = [[1, −cos α], [−cos α, 1]],   B = [[1, cos β], [cos β, 1]].
//! ```
//!
//! Existence of conical fronts is established for α + β ≤ π; the formula can
//! still be evaluated outside that regime through
//! [`conical_min_speed_unchecked`], which labels its output accordingly.

use crate::eigen::{principal_eigen, EigenError, PeriodicCoefficient, PeriodicOperator};
use crate::periodicfield::{ConeError, ConeSpec, DiffusionMatrix, KppNonlinearity, PeriodicField};
use serde::Serialize;
use thiserror::Error;

/// Internal eigenvalue ladder tolerance for speed computations.
const K_RTOL: f64 = 1e-9;
/// log₂ search window for the decay rate λ.
const LOG2_LAMBDA_MAX: i32 = 20;
/// Relative width of the golden-section bracket at termination.
const GOLDEN_TOL: f64 = 1e-8;
/// |c_left − c_right| ≤ TIE_RTOL·c_star declares a tie.
const TIE_RTOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum SpeedError {
    #[error(transparent)]
    Eigen(#[from] EigenError),
    #[error(transparent)]
    Cone(#[from] ConeError),
    #[error("decay rate must be positive and finite, got {0}")]
    InvalidLambda(f64),
    #[error("direction angle must lie in (0, π), got {0}")]
    InvalidAngle(f64),
    #[error(
        "k(λ)/λ is monotone out to λ = {lambda_boundary:.3e}; no interior minimum in 2^±{LOG2_LAMBDA_MAX} (pathological input)"
    )]
    BracketError { lambda_boundary: f64 },
    #[error("cone angles α = {alpha}, β = {beta} violate α + β ≤ π; use the unchecked variant to evaluate the formula anyway")]
    OutsideExistenceRegime { alpha: f64, beta: f64 },
}

/// One point of the dispersion curve.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct DispersionPoint {
    /// Exponential decay rate of the front tail.
    pub lambda: f64,
    /// Principal periodic eigenvalue at this λ.
    pub k: f64,
    /// k/λ, the front speed that this decay rate would sustain.
    pub speed: f64,
}

/// Planar pulsating-front minimal speed and its optimal decay rate.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct PlanarSpeed {
    pub c: f64,
    pub lambda_star: f64,
}

/// Which conical branch attains the maximum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Attaining {
    Left,
    Right,
    Tie,
}

/// Conical minimal speed (vertical propagation direction) and its branches.
#[derive(Debug, Clone, Serialize)]
pub struct SpeedResult {
    /// max(c_left, c_right).
    pub c_star: f64,
    /// c*_{ρA, q sin α, f} / sin α.
    pub c_left: f64,
    /// c*_{ρB, q sin β, f} / sin β.
    pub c_right: f64,
    pub lambda_left: f64,
    pub lambda_right: f64,
    pub attaining: Attaining,
    /// Whether α + β ≤ π, the regime in which conical fronts are known to
    /// exist. Always true for results of [`conical_min_speed`]; may be false
    /// for [`conical_min_speed_unchecked`], whose output is then a formula
    /// evaluation without an existence guarantee.
    pub existence_regime: bool,
}

fn check_angle(gamma: f64) -> Result<(), SpeedError> {
    if !(gamma.is_finite() && gamma > 0.0 && gamma < std::f64::consts::PI) {
        return Err(SpeedError::InvalidAngle(gamma));
    }
    Ok(())
}

/// The eigenvalue family member at decay rate λ:
/// m₁₁ ψ″ + 2λ m₁₂ ψ′ + (λ² m₂₂ + λ sin γ · q + f′(0)) ψ.
fn dispersion_operator(
    m: &DiffusionMatrix,
    q: &PeriodicField,
    gamma: f64,
    fprime0: f64,
    lambda: f64,
) -> Result<PeriodicOperator, EigenError> {
    PeriodicOperator::new(
        m.m11,
        PeriodicCoefficient::constant(2.0 * lambda * m.m12),
        PeriodicCoefficient::new(
            lambda * lambda * m.m22 + fprime0,
            q.scale(lambda * gamma.sin()),
        ),
        q.period(),
    )
}

/// Evaluate the dispersion curve at one decay rate.
pub fn k_curve(
    m: &DiffusionMatrix,
    q: &PeriodicField,
    gamma: f64,
    fprime0: f64,
    lambda: f64,
) -> Result<DispersionPoint, SpeedError> {
    check_angle(gamma)?;
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(SpeedError::InvalidLambda(lambda));
    }
    let op = dispersion_operator(m, q, gamma, fprime0, lambda)?;
    let k = principal_eigen(&op, 16, K_RTOL)?.k;
    Ok(DispersionPoint { lambda, k, speed: k / lambda })
}

/// Minimal planar front speed c = min_{λ>0} k(λ)/λ.
///
/// The ratio is bracketed by a downhill walk with doubling steps on the
/// integer grid λ = 2^j starting from λ = 1, confined to j ∈ [−20, 20]; the
/// bracket is then refined by golden-section search on log λ down to relative
/// width 1e-8 (k convex and k(0⁺) = f′(0) > 0 make the ratio unimodal).
/// Descending into the window boundary signals pathological input and raises
/// [`SpeedError::BracketError`]. Octaves whose mesh Péclet requirement
/// exceeds the grid cap are treated as +∞ — they can only occur far on the
/// uphill side of the minimum.
pub fn planar_min_speed(
    m: &DiffusionMatrix,
    q: &PeriodicField,
    gamma: f64,
    f: &KppNonlinearity,
) -> Result<PlanarSpeed, SpeedError> {
    check_angle(gamma)?;
    let fprime0 = f.fprime0();
    let ratio = |t: f64| -> Result<f64, SpeedError> {
        let lambda = t.exp();
        let op = dispersion_operator(m, q, gamma, fprime0, lambda)?;
        match principal_eigen(&op, 16, K_RTOL) {
            Ok(r) => Ok(r.k / lambda),
            Err(EigenError::PecletViolated { .. }) => Ok(f64::INFINITY),
            Err(e) => Err(e.into()),
        }
    };
    let ln2 = std::f64::consts::LN_2;
    let jmax = LOG2_LAMBDA_MAX as i64;
    let g_at = |j: i64| ratio(j as f64 * ln2);
    // downhill walk with doubling steps until the ratio turns uphill
    let expand = |mut j_prev: i64, mut j_cur: i64, mut g_cur: f64| -> Result<(f64, f64), SpeedError> {
        let dir = (j_cur - j_prev).signum();
        let mut step = dir;
        loop {
            if j_cur == dir * jmax {
                return Err(SpeedError::BracketError {
                    lambda_boundary: (j_cur as f64 * ln2).exp(),
                });
            }
            step *= 2;
            let j_next = (j_cur + step).clamp(-jmax, jmax);
            let g_next = g_at(j_next)?;
            if g_next >= g_cur {
                return Ok((j_prev.min(j_next) as f64 * ln2, j_prev.max(j_next) as f64 * ln2));
            }
            j_prev = j_cur;
            j_cur = j_next;
            g_cur = g_next;
        }
    };
    // pick the downhill direction from λ = 1
    let g0 = g_at(0)?;
    let g_up = g_at(1)?;
    let (mut a, mut b) = if g_up < g0 {
        expand(0, 1, g_up)?
    } else {
        let g_dn = g_at(-1)?;
        if g_dn < g0 {
            expand(0, -1, g_dn)?
        } else {
            // λ = 1 already sits between two no-smaller neighbors
            (-ln2, ln2)
        }
    };
    // golden-section refinement on [a, b]
    let inv_phi = 0.5 * (5.0_f64.sqrt() - 1.0);
    let mut t1 = b - inv_phi * (b - a);
    let mut t2 = a + inv_phi * (b - a);
    let mut g1 = ratio(t1)?;
    let mut g2 = ratio(t2)?;
    while b - a > GOLDEN_TOL {
        if g1 <= g2 {
            b = t2;
            t2 = t1;
            g2 = g1;
            t1 = b - inv_phi * (b - a);
            g1 = ratio(t1)?;
        } else {
            a = t1;
            t1 = t2;
            g1 = g2;
            t2 = a + inv_phi * (b - a);
            g2 = ratio(t2)?;
        }
    }
    let (t_star, c) = if g1 <= g2 { (t1, g1) } else { (t2, g2) };
    if !c.is_finite() {
        return Err(SpeedError::BracketError { lambda_boundary: t_star.exp() });
    }
    Ok(PlanarSpeed { c, lambda_star: t_star.exp() })
}

fn branch(
    rho: f64,
    q: &PeriodicField,
    f: &KppNonlinearity,
    m: DiffusionMatrix,
    angle: f64,
) -> Result<(f64, f64), SpeedError> {
    let p = planar_min_speed(&m.scaled(rho)?, q, angle, f)?;
    Ok((p.c / angle.sin(), p.lambda_star))
}

/// Conical minimal speed, restricted to the existence regime α + β ≤ π.
pub fn conical_min_speed(
    rho: f64,
    q: &PeriodicField,
    f: &KppNonlinearity,
    cone: &ConeSpec,
) -> Result<SpeedResult, SpeedError> {
    if !cone.existence_regime() {
        return Err(SpeedError::OutsideExistenceRegime { alpha: cone.alpha, beta: cone.beta });
    }
    conical_min_speed_unchecked(rho, q, f, cone)
}

/// Evaluate the two-branch conical speed formula without the α + β ≤ π
/// existence check; `existence_regime` in the result records whether the
/// inputs were inside the proven regime.
pub fn conical_min_speed_unchecked(
    rho: f64,
    q: &PeriodicField,
    f: &KppNonlinearity,
    cone: &ConeSpec,
) -> Result<SpeedResult, SpeedError> {
    let (c_left, lambda_left) =
        branch(rho, q, f, DiffusionMatrix::cone_left(cone.alpha)?, cone.alpha)?;
    let (c_right, lambda_right) =
        branch(rho, q, f, DiffusionMatrix::cone_right(cone.beta)?, cone.beta)?;
    let c_star = c_left.max(c_right);
    let attaining = if (c_left - c_right).abs() <= TIE_RTOL * c_star {
        Attaining::Tie
    } else if c_left > c_right {
        Attaining::Left
    } else {
        Attaining::Right
    };
    Ok(SpeedResult {
        c_star,
        c_left,
        c_right,
        lambda_left,
        lambda_right,
        attaining,
        existence_regime: cone.existence_regime(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::periodicfield::{ConeSpec, DiffusionMatrix, KppNonlinearity, PeriodicField, TrigMode};
    use std::f64::consts::PI;

    #[test]
    fn zero_advection_dispersion_exact() {
        // q ≡ 0, M = coneA(α): constant eigenfunction kills the drift,
        // k = λ² m22 + f′(0) with m22 = 1
        let q = PeriodicField::zero(1.0).unwrap();
        let m = DiffusionMatrix::cone_left(PI / 4.0).unwrap();
        for lambda in [0.3, 1.0, 2.5] {
            let p = k_curve(&m, &q, PI / 4.0, 1.0, lambda).unwrap();
            assert!((p.k - (lambda * lambda + 1.0)).abs() < 1e-12, "λ={lambda}: k={}", p.k);
            assert!((p.speed - p.k / lambda).abs() < 1e-15);
        }
    }

    #[test]
    fn dispersion_slope_vanishes_at_zero_for_mean_zero_shear() {
        // k′(0) = (sin γ/L)∫q = 0: finite-difference slope from λ = 1e-4
        let q = PeriodicField::sine(2.0, 1.0).unwrap();
        let m = DiffusionMatrix::identity();
        let h = 1e-4;
        let k_h = k_curve(&m, &q, PI / 2.0, 1.0, h).unwrap().k;
        let slope = (k_h - 1.0) / h;
        assert!(slope.abs() <= 1e-3, "slope = {slope:.3e}");
    }

    #[test]
    fn planar_zero_advection_closed_form() {
        // min (λ² + 1)/λ = 2 at λ* = 1
        let q = PeriodicField::zero(1.0).unwrap();
        let f = KppNonlinearity::logistic();
        let p = planar_min_speed(&DiffusionMatrix::cone_left(PI / 3.0).unwrap(), &q, PI / 3.0, &f)
            .unwrap();
        assert!((p.c - 2.0).abs() < 1e-8, "c = {}", p.c);
        assert!((p.lambda_star - 1.0).abs() < 1e-6, "λ* = {}", p.lambda_star);
        // scaled by ρ = 4: min (4λ² + 1)/λ = 4 at λ* = 1/2
        let p4 = planar_min_speed(
            &DiffusionMatrix::identity().scaled(4.0).unwrap(),
            &q,
            PI / 2.0,
            &f,
        )
        .unwrap();
        assert!((p4.c - 4.0).abs() < 1e-8, "c = {}", p4.c);
        assert!((p4.lambda_star - 0.5).abs() < 1e-6, "λ* = {}", p4.lambda_star);
    }

    #[test]
    fn advection_enhances_speed() {
        // m12 = 0: Rayleigh bound with constant test function gives
        // c ≥ 2√(m22 f′(0))
        let q = PeriodicField::sine(2.0, 1.0).unwrap();
        let f = KppNonlinearity::logistic();
        let p = planar_min_speed(&DiffusionMatrix::identity(), &q, PI / 2.0, &f).unwrap();
        assert!(p.c >= 2.0 - 1e-10, "c = {}", p.c);
        assert!(p.c > 2.0 + 1e-3, "sine shear should strictly enhance, c = {}", p.c);
    }

    #[test]
    fn minimizer_optimality() {
        let q = PeriodicField::sine(1.0, 1.0).unwrap();
        let f = KppNonlinearity::logistic();
        let m = DiffusionMatrix::identity();
        let p = planar_min_speed(&m, &q, PI / 2.0, &f).unwrap();
        for lambda in [0.5 * p.lambda_star, 2.0 * p.lambda_star] {
            let other = k_curve(&m, &q, PI / 2.0, 1.0, lambda).unwrap();
            assert!(p.c <= other.speed + 1e-8, "c = {} beats {} at λ = {lambda}", p.c, other.speed);
        }
    }

    #[test]
    fn tiny_m22_is_flagged_pathological() {
        // λ* = √(f′(0)/m22) ≈ 3e7 lies beyond the 2^20 window: the ratio is
        // monotone out to the boundary and the bracket fails loudly
        let q = PeriodicField::zero(1.0).unwrap();
        let f = KppNonlinearity::logistic();
        let m = DiffusionMatrix::new(1.0, 0.0, 1e-15).unwrap();
        match planar_min_speed(&m, &q, PI / 2.0, &f) {
            Err(SpeedError::BracketError { lambda_boundary }) => {
                assert!(lambda_boundary > 1e5, "boundary λ = {lambda_boundary}");
            }
            other => panic!("expected BracketError, got {other:?}"),
        }
    }

    #[test]
    fn conical_zero_advection_closed_form() {
        // c* = 2√(ρ f′(0))/min(sin α, sin β) = 2/sin(π/6) = 4
        let q = PeriodicField::zero(1.0).unwrap();
        let f = KppNonlinearity::logistic();
        let cone = ConeSpec::new(PI / 3.0, PI / 6.0).unwrap();
        let r = conical_min_speed(1.0, &q, &f, &cone).unwrap();
        assert!((r.c_star - 4.0).abs() < 1e-7, "c* = {}", r.c_star);
        assert_eq!(r.attaining, Attaining::Right);
        assert!(r.existence_regime);
        assert_eq!(r.c_star, r.c_left.max(r.c_right));
        assert!((r.c_left - 2.0 / (PI / 3.0).sin()).abs() < 1e-7);
    }

    #[test]
    fn right_angles_reduce_to_planar() {
        // α = β = π/2: A = B = identity, sines = 1, so c* is the plain
        // planar speed with the full shear
        let q = PeriodicField::sine(1.0, 1.0).unwrap();
        let f = KppNonlinearity::logistic();
        let cone = ConeSpec::new(PI / 2.0, PI / 2.0).unwrap();
        let r = conical_min_speed(1.0, &q, &f, &cone).unwrap();
        let p = planar_min_speed(&DiffusionMatrix::identity(), &q, PI / 2.0, &f).unwrap();
        assert!((r.c_star - p.c).abs() <= 1e-10 * p.c, "{} vs {}", r.c_star, p.c);
        assert_eq!(r.attaining, Attaining::Tie);
    }

    #[test]
    fn even_shear_symmetric_cone_branches_agree() {
        // q(x) = cos(2πx) is even: x ↦ −x maps the left-branch operator to
        // the right-branch one, so the branch speeds coincide
        let q = PeriodicField::trig(
            vec![TrigMode { k: 1, sin_amp: 0.0, cos_amp: 1.5 }],
            1.0,
        )
        .unwrap();
        let f = KppNonlinearity::logistic();
        let cone = ConeSpec::new(PI / 3.0, PI / 3.0).unwrap();
        let r = conical_min_speed(1.0, &q, &f, &cone).unwrap();
        assert!(
            (r.c_left - r.c_right).abs() <= 1e-8 * r.c_star,
            "left {} right {}",
            r.c_left,
            r.c_right
        );
        assert_eq!(r.attaining, Attaining::Tie);
    }

    #[test]
    fn outside_existence_regime_rejected_but_unchecked_runs() {
        let q = PeriodicField::zero(1.0).unwrap();
        let f = KppNonlinearity::logistic();
        let cone = ConeSpec::new(2.0 * PI / 3.0, 2.0 * PI / 3.0).unwrap();
        assert!(matches!(
            conical_min_speed(1.0, &q, &f, &cone),
            Err(SpeedError::OutsideExistenceRegime { .. })
        ));
        let r = conical_min_speed_unchecked(1.0, &q, &f, &cone).unwrap();
        assert!(!r.existence_regime);
        // formula value: 2/sin(2π/3)
        assert!((r.c_star - 2.0 / (2.0 * PI / 3.0).sin()).abs() < 1e-7);
    }

    #[test]
    fn invalid_inputs_rejected() {
        let q = PeriodicField::zero(1.0).unwrap();
        let m = DiffusionMatrix::identity();
        assert!(matches!(
            k_curve(&m, &q, PI / 2.0, 1.0, -0.5),
            Err(SpeedError::InvalidLambda(_))
        ));
        assert!(matches!(
            k_curve(&m, &q, 3.5, 1.0, 1.0),
            Err(SpeedError::InvalidAngle(_))
        ));
        let f = KppNonlinearity::logistic();
        assert!(matches!(
            planar_min_speed(&m, &q, 0.0, &f),
            Err(SpeedError::InvalidAngle(_))
        ));
    }
}

#[cfg(test)]
mod prop_tests {
    use super::*;
    use crate::periodicfield::{DiffusionMatrix, KppNonlinearity, PeriodicField};
    use proptest::prelude::*;
    use std::f64::consts::PI;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(8))]

        /// With m12 = 0, c ≥ 2√(m22 f′(0)) (constant-test-function bound).
        #[test]
        fn enhancement_bound(amp in 0.0f64..2.0, m22 in 0.5f64..2.0) {
            let q = PeriodicField::sine(amp.max(1e-3), 1.0).unwrap();
            let f = KppNonlinearity::logistic();
            let m = DiffusionMatrix::new(1.0, 0.0, m22).unwrap();
            let p = planar_min_speed(&m, &q, PI / 2.0, &f).unwrap();
            prop_assert!(p.c >= 2.0 * (m22).sqrt() - 1e-9);
        }

        /// The two-branch formula always reports c_star = max of branches.
        #[test]
        fn max_consistency(alpha in 0.6f64..1.5, beta in 0.6f64..1.5, rho in 0.5f64..2.0) {
            let q = PeriodicField::sine(1.0, 1.0).unwrap();
            let f = KppNonlinearity::logistic();
            let cone = crate::periodicfield::ConeSpec::new(alpha, beta).unwrap();
            let r = conical_min_speed(rho, &q, &f, &cone).unwrap();
            prop_assert_eq!(r.c_star, r.c_left.max(r.c_right));
            prop_assert!(r.c_star > 0.0);
        }
    }
}
