//! Monotone finite-difference evolution of the 2-D front equation
//!
//! ```text
//!   u_t = ρ Δu + (q(x) − c_frame) ∂_y u + f(u)
//! ```
//!
//! on an x-periodic rectangle covering an integer number of shear periods,
//! with the top and bottom rows held at their initial (Dirichlet) values.
//! The advection term is discretized by first-order upwinding, so each
//! explicit step is a monotone (order-preserving) update under its CFL
//! bound; this is what makes sandwich and comparison arguments transfer to
//! the discrete evolution. An IMEX variant treats diffusion implicitly
//! (line solves in x and y) and keeps only advection and reaction explicit,
//! trading the parabolic dt ∝ h² restriction for dt ∝ h.
//!
//! Diagnostics locate the u = 1/2 level set per column by linear
//! interpolation, fit its drift to measure propagation speed, fit the
//! far-flank slopes against the cone angles, and probe the exponential
//! lower-cone tail through the ratio ∂_y u / u. All reductions run in a
//! fixed deterministic order; runs with identical inputs are bitwise
//! reproducible.

use crate::frontprofile::{CyclicFactor, LineFactor};
use crate::periodicfield::{ConeSpec, KppNonlinearity, PeriodicField};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("time step {dt} exceeds the stability bound {dt_max}")]
    StepRejected { dt: f64, dt_max: f64 },
    #[error(
        "front left the measurement window at t = {t}: column span \
         [{y_low}, {y_high}] outside safe band [{band_low}, {band_high}]"
    )]
    DomainEscape { t: f64, y_low: f64, y_high: f64, band_low: f64, band_high: f64 },
    #[error("no probe points with u above the tail floor")]
    ProbeEmpty,
    #[error("grid invalid: {0}")]
    InvalidGrid(String),
    #[error("front level set not found in some column")]
    FrontNotFound,
}

/// Grid request: the x extent is `x_periods` shear periods (hx derived),
/// the y extent is [y_min, y_min + (ny−1)·hy].
#[derive(Debug, Clone, Copy, Serialize)]
pub struct GridSpec2D {
    pub nx: usize,
    pub ny: usize,
    pub hy: f64,
    pub y_min: f64,
    pub x_periods: usize,
}

/// Scalar field on the x-periodic rectangle, stored x-major:
/// `values[i*ny + j]`, with `frame_speed` the downward speed of the
/// co-moving frame the field is expressed in.
#[derive(Debug, Clone)]
pub struct Field2D {
    pub nx: usize,
    pub ny: usize,
    pub hx: f64,
    pub hy: f64,
    pub x_periods: usize,
    pub y_min: f64,
    pub frame_speed: f64,
    pub values: Vec<f64>,
}

impl Field2D {
    /// Zero-filled field on `grid`; `period` is the shear period L, so
    /// nx·hx spans exactly `x_periods` periods. nx must be a multiple of
    /// x_periods so the sampled shear tiles exactly (this makes translation
    /// by one period an exact symmetry of the discrete evolution).
    pub fn zeros(grid: &GridSpec2D, period: f64) -> Result<Self, SimError> {
        if grid.nx < 4 || grid.ny < 8 {
            return Err(SimError::InvalidGrid(format!(
                "need nx >= 4 and ny >= 8, got {} x {}",
                grid.nx, grid.ny
            )));
        }
        if grid.x_periods == 0 || grid.nx % grid.x_periods != 0 {
            return Err(SimError::InvalidGrid(format!(
                "nx = {} must be a positive multiple of x_periods = {}",
                grid.nx, grid.x_periods
            )));
        }
        if !(grid.hy.is_finite() && grid.hy > 0.0 && period.is_finite() && period > 0.0) {
            return Err(SimError::InvalidGrid(
                "hy and period must be positive and finite".into(),
            ));
        }
        let cells_per_period = grid.nx / grid.x_periods;
        Ok(Self {
            nx: grid.nx,
            ny: grid.ny,
            hx: period / cells_per_period as f64,
            hy: grid.hy,
            x_periods: grid.x_periods,
            y_min: grid.y_min,
            frame_speed: 0.0,
            values: vec![0.0; grid.nx * grid.ny],
        })
    }

    /// Smoothed tent indicator: u ≈ 1 above the downward-opening wedge with
    /// apex (x_c, apex_y) and flank slopes cot α (left) / −cot β (right),
    /// interface width 1 in y.
    pub fn conical_indicator(
        grid: &GridSpec2D,
        period: f64,
        cone: &ConeSpec,
        apex_y: f64,
    ) -> Result<Self, SimError> {
        let mut field = Self::zeros(grid, period)?;
        let xc = 0.5 * field.nx as f64 * field.hx;
        let cot_a = cone.alpha.cos() / cone.alpha.sin();
        let cot_b = cone.beta.cos() / cone.beta.sin();
        for i in 0..field.nx {
            let dx = i as f64 * field.hx - xc;
            let tent = apex_y + (cot_a * dx).min(-cot_b * dx);
            for j in 0..field.ny {
                let y = field.y_min + j as f64 * field.hy;
                field.values[i * field.ny + j] = 0.5 * (1.0 + (y - tent).tanh());
            }
        }
        Ok(field)
    }

    #[inline]
    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.ny + j]
    }

    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        i as f64 * self.hx
    }

    #[inline]
    pub fn y(&self, j: usize) -> f64 {
        self.y_min + j as f64 * self.hy
    }

    pub fn y_max(&self) -> f64 {
        self.y_min + (self.ny - 1) as f64 * self.hy
    }

    /// Shear samples tiled from a single period, so that
    /// `q[i] == q[i + nx/x_periods]` holds bitwise.
    fn tiled_shear(&self, q: &PeriodicField) -> Vec<f64> {
        let cells = self.nx / self.x_periods;
        let one = q.sample(cells);
        (0..self.nx).map(|i| one[i % cells]).collect()
    }

    /// u = 1/2 crossing of column i via linear interpolation, scanning
    /// upward; None if the column does not cross.
    pub fn column_crossing(&self, i: usize) -> Option<f64> {
        let col = &self.values[i * self.ny..(i + 1) * self.ny];
        for j in 0..self.ny - 1 {
            if col[j] <= 0.5 && col[j + 1] > 0.5 {
                let t = (0.5 - col[j]) / (col[j + 1] - col[j]);
                return Some(self.y_min + (j as f64 + t) * self.hy);
            }
        }
        None
    }
}

/// Per-step bookkeeping: how many interior cells were clipped back into
/// [0, 1].
#[derive(Debug, Clone, Copy, Default)]
pub struct StepStats {
    pub clipped: usize,
}

/// Explicit monotone step: 5-point diffusion, first-order upwind advection
/// in the frame (q(x) − frame_speed) ∂_y, explicit reaction. Top and bottom
/// rows are left untouched (Dirichlet data). Rejects dt beyond
/// 0.9·min(h²/(4ρ), h/sup|q − frame|).
pub fn step(
    state: &mut Field2D,
    rho: f64,
    q: &PeriodicField,
    f: &KppNonlinearity,
    dt: f64,
) -> Result<StepStats, SimError> {
    let qv = state.tiled_shear(q);
    step_explicit_sampled(state, rho, &qv, f, dt)
}

fn advection_bound(qv: &[f64], frame: f64) -> f64 {
    qv.iter().fold(0.0_f64, |a, &v| a.max((v - frame).abs()))
}

fn step_explicit_sampled(
    state: &mut Field2D,
    rho: f64,
    qv: &[f64],
    f: &KppNonlinearity,
    dt: f64,
) -> Result<StepStats, SimError> {
    let h = state.hx.min(state.hy);
    let amax = advection_bound(qv, state.frame_speed);
    let mut dt_max = 0.9 * h * h / (4.0 * rho);
    if amax > 0.0 {
        dt_max = dt_max.min(0.9 * h / amax);
    }
    if !(dt > 0.0 && dt <= dt_max) {
        return Err(SimError::StepRejected { dt, dt_max });
    }
    let (nx, ny) = (state.nx, state.ny);
    let ix2 = rho / (state.hx * state.hx);
    let iy2 = rho / (state.hy * state.hy);
    let ihy = 1.0 / state.hy;
    let mut out = vec![0.0; nx * ny];
    let mut clipped = 0usize;
    for i in 0..nx {
        let ip = (i + 1) % nx;
        let im = (i + nx - 1) % nx;
        let (bi, bp, bm) = (i * ny, ip * ny, im * ny);
        let a = qv[i] - state.frame_speed;
        out[bi] = state.values[bi];
        out[bi + ny - 1] = state.values[bi + ny - 1];
        for j in 1..ny - 1 {
            let c = state.values[bi + j];
            let lap = (state.values[bp + j] - 2.0 * c + state.values[bm + j]) * ix2
                + (state.values[bi + j + 1] - 2.0 * c + state.values[bi + j - 1]) * iy2;
            let adv = if a >= 0.0 {
                a * (state.values[bi + j + 1] - c) * ihy
            } else {
                a * (c - state.values[bi + j - 1]) * ihy
            };
            let mut v = c + dt * (lap + adv + f.eval(c));
            if !(0.0..=1.0).contains(&v) {
                v = v.clamp(0.0, 1.0);
                clipped += 1;
            }
            out[bi + j] = v;
        }
    }
    state.values = out;
    Ok(StepStats { clipped })
}

/// IMEX step: upwind advection and reaction explicit, diffusion implicit by
/// sequential x / y line solves. Stable for dt up to 0.9·min(hy/sup|q −
/// frame|, 1/(2·Lip f)) independent of the parabolic h² bound.
pub fn step_imex(
    state: &mut Field2D,
    rho: f64,
    q: &PeriodicField,
    f: &KppNonlinearity,
    dt: f64,
) -> Result<StepStats, SimError> {
    let qv = state.tiled_shear(q);
    let xfac = CyclicFactor::new(
        state.nx,
        1.0 + 2.0 * dt * rho / (state.hx * state.hx),
        -dt * rho / (state.hx * state.hx),
    );
    let yfac = LineFactor::new(
        state.ny - 2,
        1.0 + 2.0 * dt * rho / (state.hy * state.hy),
        -dt * rho / (state.hy * state.hy),
        0.0,
        0.0,
    );
    step_imex_sampled(state, rho, &qv, f, dt, &xfac, &yfac)
}

fn step_imex_sampled(
    state: &mut Field2D,
    rho: f64,
    qv: &[f64],
    f: &KppNonlinearity,
    dt: f64,
    xfac: &CyclicFactor,
    yfac: &LineFactor,
) -> Result<StepStats, SimError> {
    let amax = advection_bound(qv, state.frame_speed);
    let mut dt_max = 0.5 * 0.9 / f.lipschitz().max(1e-300);
    if amax > 0.0 {
        dt_max = dt_max.min(0.9 * state.hy / amax);
    }
    if !(dt > 0.0 && dt <= dt_max) {
        return Err(SimError::StepRejected { dt, dt_max });
    }
    let (nx, ny) = (state.nx, state.ny);
    let ihy = 1.0 / state.hy;
    let ry = dt * rho / (state.hy * state.hy);
    let mut out = vec![0.0; nx * ny];
    // explicit advection + reaction
    for i in 0..nx {
        let bi = i * ny;
        let a = qv[i] - state.frame_speed;
        out[bi] = state.values[bi];
        out[bi + ny - 1] = state.values[bi + ny - 1];
        for j in 1..ny - 1 {
            let c = state.values[bi + j];
            let adv = if a >= 0.0 {
                a * (state.values[bi + j + 1] - c) * ihy
            } else {
                a * (c - state.values[bi + j - 1]) * ihy
            };
            out[bi + j] = c + dt * (adv + f.eval(c));
        }
    }
    // implicit x diffusion on interior rows
    let mut row = vec![0.0; nx];
    for j in 1..ny - 1 {
        for i in 0..nx {
            row[i] = out[i * ny + j];
        }
        xfac.solve(&mut row);
        for i in 0..nx {
            out[i * ny + j] = row[i];
        }
    }
    // implicit y diffusion per column with the boundary rows as Dirichlet data
    let mut clipped = 0usize;
    for i in 0..nx {
        let col = &mut out[i * ny..(i + 1) * ny];
        let (bottom, top) = (col[0], col[ny - 1]);
        col[1] += ry * bottom;
        col[ny - 2] += ry * top;
        yfac.solve(&mut col[1..ny - 1]);
        for v in col[1..ny - 1].iter_mut() {
            if !(0.0..=1.0).contains(v) {
                *v = v.clamp(0.0, 1.0);
                clipped += 1;
            }
        }
    }
    state.values = out;
    Ok(StepStats { clipped })
}

/// Which stepper a run uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Explicit,
    Imex,
}

/// Outcome of a speed-measurement run.
#[derive(Debug, Clone, Serialize)]
pub struct FrontDiagnostics {
    /// Downward propagation speed in the lab frame: frame_speed − dy/dt.
    pub measured_speed: f64,
    pub frame_speed: f64,
    /// Fitted drift of the mean front position in the co-moving frame.
    pub fit_slope: f64,
    /// RMS residual of the linear fit.
    pub fit_rms: f64,
    /// (t, mean front y) samples used for the fit (post-burn-in half).
    pub samples: Vec<(f64, f64)>,
    /// Fraction of interior cell updates that were clipped into [0, 1].
    pub clip_fraction: f64,
    pub t_end: f64,
    pub scheme: Scheme,
}

fn column_span(state: &Field2D) -> Result<(f64, f64, f64), SimError> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut sum = 0.0;
    for i in 0..state.nx {
        match state.column_crossing(i) {
            Some(y) => {
                lo = lo.min(y);
                hi = hi.max(y);
                sum += y;
            }
            None => return Err(SimError::FrontNotFound),
        }
    }
    Ok((lo, hi, sum / state.nx as f64))
}

/// Evolve `initial` to t_end, tracking the u = 1/2 level set, and fit its
/// drift over the trailing half of the samples after a 25 % burn-in.
/// Errors with DomainEscape if any column's crossing leaves the central
/// 60 % band (20 % margins top and bottom).
pub fn run_speed_measurement(
    initial: &Field2D,
    rho: f64,
    q: &PeriodicField,
    f: &KppNonlinearity,
    dt: f64,
    t_end: f64,
    scheme: Scheme,
) -> Result<FrontDiagnostics, SimError> {
    if !(t_end > 0.0 && t_end.is_finite()) {
        return Err(SimError::InvalidGrid("t_end must be positive".into()));
    }
    let mut state = initial.clone();
    let qv = state.tiled_shear(q);
    let (xfac, yfac) = imex_factors(&state, rho, dt);
    let nsteps = (t_end / dt).ceil() as usize;
    let burn = nsteps / 4;
    let every = (nsteps / 256).max(1);
    let height = state.y_max() - state.y_min;
    let band_low = state.y_min + 0.2 * height;
    let band_high = state.y_max() - 0.2 * height;
    let mut samples: Vec<(f64, f64)> = Vec::new();
    let mut clipped = 0usize;
    for step_idx in 0..nsteps {
        let stats = match scheme {
            Scheme::Explicit => step_explicit_sampled(&mut state, rho, &qv, f, dt)?,
            Scheme::Imex => {
                step_imex_sampled(&mut state, rho, &qv, f, dt, &xfac, &yfac)?
            }
        };
        clipped += stats.clipped;
        if step_idx % every == 0 || step_idx + 1 == nsteps {
            let t = (step_idx + 1) as f64 * dt;
            let (lo, hi, mean) = column_span(&state)?;
            if lo < band_low || hi > band_high {
                return Err(SimError::DomainEscape {
                    t,
                    y_low: lo,
                    y_high: hi,
                    band_low,
                    band_high,
                });
            }
            if step_idx >= burn {
                samples.push((t, mean));
            }
        }
    }
    let fit_from = samples.len() / 2;
    let tail = &samples[fit_from..];
    let (slope, rms) = least_squares_line(tail);
    let total_updates = nsteps * state.nx * (state.ny - 2);
    Ok(FrontDiagnostics {
        measured_speed: initial.frame_speed - slope,
        frame_speed: initial.frame_speed,
        fit_slope: slope,
        fit_rms: rms,
        samples: tail.to_vec(),
        clip_fraction: clipped as f64 / total_updates as f64,
        t_end,
        scheme,
    })
}

fn imex_factors(state: &Field2D, rho: f64, dt: f64) -> (CyclicFactor, LineFactor) {
    (
        CyclicFactor::new(
            state.nx,
            1.0 + 2.0 * dt * rho / (state.hx * state.hx),
            -dt * rho / (state.hx * state.hx),
        ),
        LineFactor::new(
            state.ny - 2,
            1.0 + 2.0 * dt * rho / (state.hy * state.hy),
            -dt * rho / (state.hy * state.hy),
            0.0,
            0.0,
        ),
    )
}

fn least_squares_line(pts: &[(f64, f64)]) -> (f64, f64) {
    let n = pts.len() as f64;
    if pts.len() < 2 {
        return (0.0, 0.0);
    }
    let (mut st, mut sy) = (0.0, 0.0);
    for &(t, y) in pts {
        st += t;
        sy += y;
    }
    let (tbar, ybar) = (st / n, sy / n);
    let (mut num, mut den) = (0.0, 0.0);
    for &(t, y) in pts {
        num += (t - tbar) * (y - ybar);
        den += (t - tbar) * (t - tbar);
    }
    let slope = if den > 0.0 { num / den } else { 0.0 };
    let intercept = ybar - slope * tbar;
    let mut ss = 0.0;
    for &(t, y) in pts {
        let r = y - slope * t - intercept;
        ss += r * r;
    }
    (slope, (ss / n).sqrt())
}

/// Minimum forward y-difference of u over the front region u ∈ [0.01, 0.99],
/// at least `margin` cells from the top/bottom rows.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct MonotonicityReport {
    pub min_dy_u: f64,
    pub arg_i: usize,
    pub arg_j: usize,
}

pub fn monotonicity_check(state: &Field2D, margin: usize) -> MonotonicityReport {
    let margin = margin.max(2);
    let mut report = MonotonicityReport { min_dy_u: f64::INFINITY, arg_i: 0, arg_j: 0 };
    for i in 0..state.nx {
        for j in margin..state.ny - 1 - margin {
            let u = state.value(i, j);
            if !(0.01..=0.99).contains(&u) {
                continue;
            }
            let dy = (state.value(i, j + 1) - u) / state.hy;
            if dy < report.min_dy_u {
                report = MonotonicityReport { min_dy_u: dy, arg_i: i, arg_j: j };
            }
        }
    }
    if report.min_dy_u == f64::INFINITY {
        report.min_dy_u = 0.0;
    }
    report
}

/// Infimum of (∂_y u)/u along a probe line `depth` below the cone tent
/// anchored at the measured apex, restricted to u ≥ 1e-6. In the lower cone
/// the KPP tail decays exponentially in depth, so this ratio stays bounded
/// away from 0 for a true conical front.
pub fn ratio_bound(state: &Field2D, cone: &ConeSpec, depth: f64) -> Result<f64, SimError> {
    let (_, _, _) = column_span(state)?; // front must exist in every column
    // apex: highest column crossing
    let mut apex_y = f64::NEG_INFINITY;
    let mut apex_i = 0usize;
    for i in 0..state.nx {
        if let Some(y) = state.column_crossing(i) {
            if y > apex_y {
                apex_y = y;
                apex_i = i;
            }
        }
    }
    let cot_a = cone.alpha.cos() / cone.alpha.sin();
    let cot_b = cone.beta.cos() / cone.beta.sin();
    let xc = state.x(apex_i);
    let mut inf_ratio = f64::INFINITY;
    let mut seen = false;
    for i in 0..state.nx {
        // signed offset to the apex column through the periodic wrap
        let mut dx = state.x(i) - xc;
        let span = state.nx as f64 * state.hx;
        if dx > 0.5 * span {
            dx -= span;
        } else if dx < -0.5 * span {
            dx += span;
        }
        let tent = apex_y + (cot_a * dx).min(-cot_b * dx);
        let y_probe = tent - depth;
        let jf = (y_probe - state.y_min) / state.hy;
        let j = jf.floor() as isize;
        if j < 1 || j + 2 >= state.ny as isize {
            continue;
        }
        let j = j as usize;
        let t = jf - j as f64;
        let interp = |jj: usize| -> f64 {
            state.value(i, jj) * (1.0 - t) + state.value(i, jj + 1) * t
        };
        let u = interp(j);
        if u < 1e-6 {
            continue;
        }
        let uy = (interp(j + 1) - interp(j - 1)) / (2.0 * state.hy);
        inf_ratio = inf_ratio.min(uy / u);
        seen = true;
    }
    if !seen {
        return Err(SimError::ProbeEmpty);
    }
    Ok(inf_ratio)
}

/// Least-squares slopes of the u = 1/2 line over the outer 25 % of columns
/// on each side (the far flanks of a centred tent). For a conical front
/// these approach cot α on the left and −cot β on the right.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct AngleFit {
    pub slope_left: f64,
    pub slope_right: f64,
}

pub fn angle_fit(state: &Field2D) -> Result<AngleFit, SimError> {
    let nx = state.nx;
    let quarter = (nx / 4).max(2);
    let mut left = Vec::with_capacity(quarter);
    for i in 0..quarter {
        match state.column_crossing(i) {
            Some(y) => left.push((state.x(i), y)),
            None => return Err(SimError::FrontNotFound),
        }
    }
    let mut right = Vec::with_capacity(quarter);
    for i in nx - quarter..nx {
        match state.column_crossing(i) {
            Some(y) => right.push((state.x(i), y)),
            None => return Err(SimError::FrontNotFound),
        }
    }
    let (slope_left, _) = least_squares_line(&left);
    let (slope_right, _) = least_squares_line(&right);
    Ok(AngleFit { slope_left, slope_right })
}

/// Result of evolving an ordered sub/supersolution pair together.
#[derive(Debug, Clone, Serialize)]
pub struct SandwichReport {
    /// under ≤ over + 1e-8 held at every checkpoint.
    pub ordered: bool,
    /// under was pointwise nondecreasing in t (within 1e-8) between
    /// checkpoints.
    pub under_monotone_up: bool,
    /// over was pointwise nonincreasing in t (within 1e-8).
    pub over_monotone_down: bool,
    /// Minimum of over − under across all checkpoints.
    pub min_gap: f64,
    /// Most negative per-checkpoint increment of under (≥ 0 is ideal).
    pub worst_under_increment: f64,
    /// Most positive per-checkpoint increment of over (≤ 0 is ideal).
    pub worst_over_increment: f64,
    pub steps: usize,
}

const SANDWICH_TOL: f64 = 1e-8;

/// Evolve `under` and `over` side by side for `steps` steps of size dt,
/// checking pointwise ordering and the monotone-in-time structure that
/// sub/supersolutions must exhibit, every `check_every` steps.
#[allow(clippy::too_many_arguments)]
pub fn sandwich_evolution(
    under: &Field2D,
    over: &Field2D,
    rho: f64,
    q: &PeriodicField,
    f: &KppNonlinearity,
    dt: f64,
    steps: usize,
    check_every: usize,
    scheme: Scheme,
) -> Result<SandwichReport, SimError> {
    if under.nx != over.nx
        || under.ny != over.ny
        || under.hx != over.hx
        || under.hy != over.hy
        || under.y_min != over.y_min
        || under.frame_speed != over.frame_speed
    {
        return Err(SimError::InvalidGrid(
            "under and over must share grid and frame".into(),
        ));
    }
    let check_every = check_every.max(1);
    let mut lo = under.clone();
    let mut hi = over.clone();
    let qv = lo.tiled_shear(q);
    let (xfac, yfac) = imex_factors(&lo, rho, dt);
    let mut prev_lo = lo.values.clone();
    let mut prev_hi = hi.values.clone();
    let mut min_gap = f64::INFINITY;
    let mut worst_under = f64::INFINITY;
    let mut worst_over = f64::NEG_INFINITY;
    for (u, o) in lo.values.iter().zip(&hi.values) {
        min_gap = min_gap.min(o - u);
    }
    for s in 0..steps {
        match scheme {
            Scheme::Explicit => {
                step_explicit_sampled(&mut lo, rho, &qv, f, dt)?;
                step_explicit_sampled(&mut hi, rho, &qv, f, dt)?;
            }
            Scheme::Imex => {
                step_imex_sampled(&mut lo, rho, &qv, f, dt, &xfac, &yfac)?;
                step_imex_sampled(&mut hi, rho, &qv, f, dt, &xfac, &yfac)?;
            }
        }
        if s % check_every == check_every - 1 || s + 1 == steps {
            for idx in 0..lo.values.len() {
                let gap = hi.values[idx] - lo.values[idx];
                min_gap = min_gap.min(gap);
                worst_under = worst_under.min(lo.values[idx] - prev_lo[idx]);
                worst_over = worst_over.max(hi.values[idx] - prev_hi[idx]);
            }
            prev_lo.copy_from_slice(&lo.values);
            prev_hi.copy_from_slice(&hi.values);
        }
    }
    Ok(SandwichReport {
        ordered: min_gap >= -SANDWICH_TOL,
        under_monotone_up: worst_under >= -SANDWICH_TOL,
        over_monotone_down: worst_over <= SANDWICH_TOL,
        min_gap,
        worst_under_increment: worst_under,
        worst_over_increment: worst_over,
        steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::periodicfield::{ConeSpec, KppNonlinearity, PeriodicField};
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn sine_shear(amp: f64) -> PeriodicField {
        PeriodicField::sine(amp, 1.0).unwrap()
    }

    fn small_grid() -> GridSpec2D {
        GridSpec2D { nx: 16, ny: 32, hy: 0.25, y_min: -4.0, x_periods: 2 }
    }

    #[test]
    fn equilibria_are_fixed_points() {
        let q = sine_shear(1.0);
        let f = KppNonlinearity::logistic();
        let grid = small_grid();
        let mut zero = Field2D::zeros(&grid, 1.0).unwrap();
        let before = zero.values.clone();
        step(&mut zero, 1.0, &q, &f, 1e-3).unwrap();
        assert_eq!(zero.values, before, "u ≡ 0 must be invariant bitwise");
        let mut one = Field2D::zeros(&grid, 1.0).unwrap();
        one.values.iter_mut().for_each(|v| *v = 1.0);
        let before = one.values.clone();
        step(&mut one, 1.0, &q, &f, 1e-3).unwrap();
        assert_eq!(one.values, before, "u ≡ 1 must be invariant bitwise");
    }

    #[test]
    fn oversized_steps_are_rejected_with_a_usable_bound() {
        let q = sine_shear(2.0);
        let f = KppNonlinearity::logistic();
        let mut state = Field2D::zeros(&small_grid(), 1.0).unwrap();
        let err = step(&mut state, 1.0, &q, &f, 0.5).unwrap_err();
        match err {
            SimError::StepRejected { dt, dt_max } => {
                assert_eq!(dt, 0.5);
                assert!(dt_max < 0.5);
                // the suggested bound itself must be accepted
                step(&mut state, 1.0, &q, &f, dt_max).unwrap();
            }
            other => panic!("expected StepRejected, got {other:?}"),
        }
        let err = step_imex(&mut state, 1.0, &q, &f, 10.0).unwrap_err();
        assert!(matches!(err, SimError::StepRejected { .. }));
    }

    #[test]
    fn diffusion_contracts_a_bump_toward_the_boundary_data() {
        // no shear, no reaction: maximum of an interior bump must decay
        let q = PeriodicField::zero(1.0).unwrap();
        let f = KppNonlinearity::logistic().scaled(0.0);
        let grid = GridSpec2D { nx: 16, ny: 64, hy: 0.125, y_min: -4.0, x_periods: 2 };
        let mut state = Field2D::zeros(&grid, 1.0).unwrap();
        for i in 0..state.nx {
            for j in 1..state.ny - 1 {
                let x = state.x(i) - 1.0;
                let y = state.y(j);
                state.values[i * state.ny + j] =
                    0.8 * (-2.0 * (x * x + y * y)).exp();
            }
        }
        let mut prev_max = state.values.iter().cloned().fold(0.0_f64, f64::max);
        for _ in 0..50 {
            step(&mut state, 1.0, &q, &f, 3e-3).unwrap();
            let m = state.values.iter().cloned().fold(0.0_f64, f64::max);
            assert!(m < prev_max + 1e-15, "bump maximum must not grow");
            prev_max = m;
        }
        assert!(prev_max < 0.8 * 0.9);
    }

    #[test]
    fn explicit_and_imex_agree_on_smooth_data() {
        let q = sine_shear(1.0);
        let f = KppNonlinearity::logistic();
        let grid = GridSpec2D { nx: 32, ny: 96, hy: 0.125, y_min: -6.0, x_periods: 2 };
        let cone = ConeSpec::new(PI / 2.0, PI / 2.0).unwrap();
        let a = Field2D::conical_indicator(&grid, 1.0, &cone, 0.0).unwrap();
        let mut ex = a.clone();
        let mut im = a.clone();
        // below the explicit parabolic bound 0.9·hx²/(4ρ) = 1.758e-3
        let dt = 1.25e-3;
        let t_end = 0.5;
        let n = (t_end / dt) as usize;
        for _ in 0..n {
            step(&mut ex, 0.5, &q, &f, dt).unwrap();
            step_imex(&mut im, 0.5, &q, &f, dt).unwrap();
        }
        let sup = ex
            .values
            .iter()
            .zip(&im.values)
            .fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()));
        // both are first-order in dt; they agree to O(dt) on smooth data
        assert!(sup <= 0.02, "explicit vs IMEX sup difference {sup:.3e}");
    }

    #[test]
    fn translation_by_one_period_commutes_with_stepping_bitwise() {
        let q = sine_shear(2.0);
        let f = KppNonlinearity::logistic();
        let grid = GridSpec2D { nx: 24, ny: 48, hy: 0.2, y_min: -5.0, x_periods: 3 };
        let cone = ConeSpec::new(PI / 3.0, PI / 3.0).unwrap();
        let base = Field2D::conical_indicator(&grid, 1.0, &cone, 0.0).unwrap();
        let cells = grid.nx / grid.x_periods;
        let mut shifted = base.clone();
        for i in 0..grid.nx {
            let src = (i + cells) % grid.nx;
            for j in 0..grid.ny {
                shifted.values[i * grid.ny + j] = base.values[src * grid.ny + j];
            }
        }
        // evolve original and shifted copies with both schemes; shifting
        // back must give bitwise identical states for the explicit stencil
        // (local arithmetic commutes with index rotation exactly); the IMEX
        // cyclic line solve is a sequential recurrence whose rounding is not
        // rotation invariant, so it gets a few-ulp allowance instead
        for (label, imex) in [("explicit", false), ("imex", true)] {
            let mut a = base.clone();
            let mut b = shifted.clone();
            for _ in 0..25 {
                if imex {
                    step_imex(&mut a, 1.0, &q, &f, 2e-3).unwrap();
                    step_imex(&mut b, 1.0, &q, &f, 2e-3).unwrap();
                } else {
                    step(&mut a, 1.0, &q, &f, 2e-3).unwrap();
                    step(&mut b, 1.0, &q, &f, 2e-3).unwrap();
                }
            }
            for i in 0..grid.nx {
                let src = (i + cells) % grid.nx;
                for j in 0..grid.ny {
                    let x = b.values[i * grid.ny + j];
                    let y = a.values[src * grid.ny + j];
                    if imex {
                        assert!(
                            (x - y).abs() <= 1e-13 * (1.0 + x.abs()),
                            "{label} equivariance broken at ({i},{j}): {x} vs {y}"
                        );
                    } else {
                        assert!(
                            x.to_bits() == y.to_bits(),
                            "{label} equivariance broken at ({i},{j}): {x} vs {y}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn tent_angles_are_recovered_by_the_flank_fit() {
        let grid = GridSpec2D { nx: 128, ny: 256, hy: 0.125, y_min: -20.0, x_periods: 8 };
        let cone = ConeSpec::new(PI / 3.0, PI / 4.0).unwrap();
        let state = Field2D::conical_indicator(&grid, 4.0, &cone, 4.0).unwrap();
        let fit = angle_fit(&state).unwrap();
        let cot_a = (PI / 3.0_f64).cos() / (PI / 3.0_f64).sin();
        let cot_b = (PI / 4.0_f64).cos() / (PI / 4.0_f64).sin();
        assert!((fit.slope_left - cot_a).abs() <= 0.02, "left {}", fit.slope_left);
        assert!((fit.slope_right + cot_b).abs() <= 0.02, "right {}", fit.slope_right);
        // reflected tent: slopes swap signs
        let mut refl = state.clone();
        for i in 0..grid.nx {
            for j in 0..grid.ny {
                refl.values[i * grid.ny + j] =
                    1.0 - state.values[i * grid.ny + (grid.ny - 1 - j)];
            }
        }
        let rfit = angle_fit(&refl).unwrap();
        assert!(rfit.slope_left < -0.3 && rfit.slope_right > 0.3);
    }

    #[test]
    fn monotonicity_check_flags_inverted_fronts() {
        let grid = small_grid();
        let cone = ConeSpec::new(PI / 2.0, PI / 2.0).unwrap();
        let state = Field2D::conical_indicator(&grid, 1.0, &cone, 0.0).unwrap();
        let up = monotonicity_check(&state, 2);
        assert!(up.min_dy_u > 0.0, "tanh front must be increasing, {up:?}");
        let mut down = state.clone();
        for i in 0..grid.nx {
            for j in 0..grid.ny {
                down.values[i * grid.ny + j] = state.values[i * grid.ny + (grid.ny - 1 - j)];
            }
        }
        let d = monotonicity_check(&down, 2);
        assert!(d.min_dy_u < -0.1, "reflected front must be caught, {d:?}");
    }

    #[test]
    fn ratio_bound_is_positive_on_exponential_tails_and_errors_on_plateaus() {
        let grid = GridSpec2D { nx: 64, ny: 256, hy: 0.125, y_min: -24.0, x_periods: 4 };
        let cone = ConeSpec::new(PI / 2.0, PI / 2.0).unwrap();
        let mut state = Field2D::zeros(&grid, 1.0).unwrap();
        // u = exp(λ(y − a)) capped at 1: pure exponential tail below a front
        let lambda = 0.8;
        for i in 0..state.nx {
            for j in 0..state.ny {
                let y = state.y(j);
                state.values[i * state.ny + j] = (lambda * y).exp().min(1.0);
            }
        }
        let r = ratio_bound(&state, &cone, 10.0).unwrap();
        assert!((r - lambda).abs() <= 0.01, "tail ratio {r} vs λ = {lambda}");
        // a plateau at machine-zero level has no valid probe points
        let mut flat = Field2D::zeros(&grid, 1.0).unwrap();
        for i in 0..flat.nx {
            for j in 0..flat.ny {
                let y = flat.y(j);
                flat.values[i * flat.ny + j] = 0.5 * (1.0 + (y - 12.0).tanh());
            }
        }
        // front near the top: probe 10 below the tent lies in u ≈ 0 plateau
        assert!(matches!(
            ratio_bound(&flat, &cone, 30.0),
            Err(SimError::ProbeEmpty) | Err(SimError::FrontNotFound)
        ));
    }

    #[test]
    fn sandwich_of_the_same_tent_with_inflated_copy_stays_ordered() {
        let q = sine_shear(1.0);
        let f = KppNonlinearity::logistic();
        let grid = GridSpec2D { nx: 32, ny: 96, hy: 0.25, y_min: -12.0, x_periods: 2 };
        let cone = ConeSpec::new(PI / 2.0, PI / 2.0).unwrap();
        // a tent sitting lower in y has pointwise larger values: a valid
        // ordered pair even though neither is an exact sub/supersolution
        let under = Field2D::conical_indicator(&grid, 1.0, &cone, 1.5).unwrap();
        let over = Field2D::conical_indicator(&grid, 1.0, &cone, -1.0).unwrap();
        // dt below the explicit parabolic bound 0.9·hx²/(4ρ) = 8.79e-4
        let rep = sandwich_evolution(
            &under,
            &over,
            1.0,
            &q,
            &f,
            8e-4,
            375,
            50,
            Scheme::Explicit,
        )
        .unwrap();
        assert!(rep.ordered, "{rep:?}");
        assert!(rep.min_gap >= -1e-12);
        // swapped arguments: ordering is immediately violated
        let swapped = sandwich_evolution(
            &over,
            &under,
            1.0,
            &q,
            &f,
            8e-4,
            50,
            10,
            Scheme::Explicit,
        )
        .unwrap();
        assert!(!swapped.ordered);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn ordered_states_stay_ordered_under_both_schemes(
            seedx in 0.0..1.0f64,
            seedy in 0.0..1.0f64,
            amp in 0.0..2.0f64,
        ) {
            let q = sine_shear(amp);
            let f = KppNonlinearity::logistic();
            let grid = GridSpec2D { nx: 12, ny: 24, hy: 0.25, y_min: -3.0, x_periods: 2 };
            let mut lo = Field2D::zeros(&grid, 1.0).unwrap();
            let mut hi = Field2D::zeros(&grid, 1.0).unwrap();
            for i in 0..grid.nx {
                for j in 0..grid.ny {
                    let x = lo.x(i);
                    let y = lo.y(j);
                    let base = 0.5 + 0.4 * (2.0 * PI * (x * seedx + 0.13) ).sin()
                        * ((y * (0.5 + seedy)).sin());
                    let gap = 0.05 + 0.05 * ((x + y) * 3.0).cos().abs();
                    lo.values[i * grid.ny + j] = (base - gap).clamp(0.0, 1.0);
                    hi.values[i * grid.ny + j] = (base + gap).clamp(0.0, 1.0);
                }
            }
            let mut lo2 = lo.clone();
            let mut hi2 = hi.clone();
            for _ in 0..10 {
                step(&mut lo, 1.0, &q, &f, 2e-3).unwrap();
                step(&mut hi, 1.0, &q, &f, 2e-3).unwrap();
                step_imex(&mut lo2, 1.0, &q, &f, 2e-3).unwrap();
                step_imex(&mut hi2, 1.0, &q, &f, 2e-3).unwrap();
            }
            for idx in 0..lo.values.len() {
                prop_assert!(hi.values[idx] - lo.values[idx] >= -1e-10);
                prop_assert!(hi2.values[idx] - lo2.values[idx] >= -1e-10);
            }
        }
    }
}
