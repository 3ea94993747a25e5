//! Computational core for KPP front propagation in periodic shear flows.
//!
//! The equation of interest is
//!
//! ```text
//!     ∂u/∂t = div(M ∇u) + q(x) ∂u/∂y + f(u)
//! ```
//!
//! on ℝ², with a constant positive-definite diffusion matrix `M`, a mean-zero
//! L-periodic shear `q`, and a KPP nonlinearity `f` (f(0) = f(1) = 0,
//! 0 < f(s) ≤ f′(0)·s on (0,1)). Fronts that are conical in the far field —
//! level lines asymptotic to a tent with interior angles α (left) and
//! β (right) — travel in the −y direction with a minimal speed
//!
//! ```text
//!     c* = max( c*_A / sin α ,  c*_B / sin β )
//! ```
//!
//! where `c*_A`, `c*_B` are minimal speeds of planar periodic fronts for the
//! sheared diffusion matrices A = [[1, −cos α], [−cos α, 1]] and
//! B = [[1, cos β], [cos β, 1]] with advection q·sin α (resp. q·sin β). Each
//! planar speed comes from the dispersion relation c* = min_{λ>0} k(λ)/λ with
//! `k(λ)` the principal periodic eigenvalue of a 1-D operator in the shear
//! variable. See `docs/math-notes.md` at the repository root for derivations.
//!
//! Modules, bottom-up:
//!
//! * [`periodicfield`] — mean-zero periodic coefficient fields, KPP
//!   nonlinearities, diffusion matrices, cone geometry.
//! * [`eigen`] — principal periodic eigenvalues of a ψ″ + b ψ′ + c₀(x) ψ via
//!   Perron iteration on the discretized operator.
//! * [`speeds`] — dispersion curves k(λ), planar minimal speeds, and the
//!   two-branch conical speed formula.
//! * [`asymptotics`] — large-advection variational limit, closed-form
//!   small-reaction/large-advection limit, and parameter-scan drivers for the
//!   various asymptotic regimes.
//! * [`frontprofile`] — planar front profiles on periodic strips and the
//!   conical sub/supersolution ansatz assembled from two oblique profiles.
//! * [`sim2d`] — monotone finite-difference evolution of the full 2-D
//!   equation with front-tracking diagnostics.

pub mod asymptotics;
pub mod eigen;
pub mod frontprofile;
pub mod periodicfield;
pub mod sim2d;
pub mod speeds;
