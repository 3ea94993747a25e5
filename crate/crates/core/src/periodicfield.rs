//! Mean-zero periodic coefficient fields and KPP nonlinearities.
//!
//! Every advection field `q` handled by this crate is L-periodic with zero
//! mean: ∫₀ᴸ q = 0. Mean-zero is enforced *by construction* — sampled fields
//! have their discrete mean subtracted (compensated summation, two sweeps), and
//! trigonometric presets carry no constant term — so downstream code may rely
//! on |mean| ≤ 1e-12 · sup|q| without re-normalizing.
//!
//! Nonlinearities are of KPP type on [0,1]: f(0) = f(1) = 0, f > 0 on (0,1),
//! and 0 < f(s) ≤ f′(0)·s. Concavity implies the KPP bound and the
//! subadditivity f(s+t) ≤ f(s) + f(t) used by the conical supersolution; all
//! three are checkable on a grid via [`validate_kpp`].

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Relative tolerance on the discrete mean of a mean-zero field.
pub const MEAN_ZERO_RTOL: f64 = 1e-12;

/// Errors from field construction and validation.
#[derive(Debug, Error)]
pub enum FieldError {
    #[error("period must be positive and finite, got {0}")]
    InvalidPeriod(f64),
    #[error("sampled fields need at least 8 samples per period, got {0}")]
    TooFewSamples(usize),
    #[error("invalid field: {0}")]
    InvalidField(String),
    #[error("field mean {mean:.3e} exceeds mean-zero tolerance {tol:.3e}")]
    NotMeanZero { mean: f64, tol: f64 },
}

/// Errors from nonlinearity construction and validation.
#[derive(Debug, Error)]
pub enum ReactionError {
    #[error("invalid nonlinearity: {0}")]
    InvalidReaction(String),
}

/// Errors from cone / diffusion-matrix validation.
#[derive(Debug, Error)]
pub enum ConeError {
    #[error("cone angle {0} outside (0, π)")]
    AngleOutOfRange(f64),
    #[error("diffusion matrix not positive definite (m11 = {m11}, det = {det})")]
    NotPositiveDefinite { m11: f64, det: f64 },
}

/// Interpolation order for sampled fields.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Interp {
    /// Piecewise linear between samples.
    Linear,
    /// Periodic Catmull–Rom cubic (default).
    Cubic,
}

/// One trigonometric mode `sin_amp · sin(2πk x/L) + cos_amp · cos(2πk x/L)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrigMode {
    pub k: usize,
    pub sin_amp: f64,
    pub cos_amp: f64,
}

#[derive(Debug, Clone, PartialEq)]
enum FieldKind {
    Zero,
    /// Finite trigonometric sum; exactly mean-zero (no k = 0 term).
    Trig(Vec<TrigMode>),
    /// Uniform samples on [0, L), mean removed; values interpolated.
    Samples { values: Vec<f64>, interp: Interp },
}

/// A mean-zero L-periodic scalar field q(x).
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicField {
    period: f64,
    kind: FieldKind,
    sup: f64,
}

fn check_period(period: f64) -> Result<(), FieldError> {
    if !(period.is_finite() && period > 0.0) {
        return Err(FieldError::InvalidPeriod(period));
    }
    Ok(())
}

/// Compensated (Kahan) sum.
fn kahan_sum(values: &[f64]) -> f64 {
    let mut sum = 0.0;
    let mut c = 0.0;
    for &v in values {
        let y = v - c;
        let t = sum + y;
        c = (t - sum) - y;
        sum = t;
    }
    sum
}

impl PeriodicField {
    /// The identically-zero field.
    pub fn zero(period: f64) -> Result<Self, FieldError> {
        check_period(period)?;
        Ok(Self { period, kind: FieldKind::Zero, sup: 0.0 })
    }

    /// `amplitude · sin(2πx/L)`.
    pub fn sine(amplitude: f64, period: f64) -> Result<Self, FieldError> {
        Self::sine_with_harmonics(amplitude, &[], period)
    }

    /// Fundamental sine plus optional higher sine harmonics: the i-th entry of
    /// `harmonics` is the amplitude of `sin(2π(i+2)x/L)`.
    pub fn sine_with_harmonics(
        amplitude: f64,
        harmonics: &[f64],
        period: f64,
    ) -> Result<Self, FieldError> {
        let mut modes = vec![TrigMode { k: 1, sin_amp: amplitude, cos_amp: 0.0 }];
        for (i, &a) in harmonics.iter().enumerate() {
            modes.push(TrigMode { k: i + 2, sin_amp: a, cos_amp: 0.0 });
        }
        Self::trig(modes, period)
    }

    /// General finite trigonometric sum (no constant term, hence mean-zero).
    pub fn trig(modes: Vec<TrigMode>, period: f64) -> Result<Self, FieldError> {
        check_period(period)?;
        for m in &modes {
            if m.k == 0 {
                return Err(FieldError::InvalidField(
                    "trig mode k = 0 would break mean-zero".into(),
                ));
            }
            if !(m.sin_amp.is_finite() && m.cos_amp.is_finite()) {
                return Err(FieldError::InvalidField("non-finite trig amplitude".into()));
            }
        }
        let mut field = Self { period, kind: FieldKind::Trig(modes), sup: 0.0 };
        field.sup = field.scan_sup();
        Ok(field)
    }

    /// Sawtooth ramp `amplitude · (2x/L − 1)`, realized as `n_samples` uniform
    /// samples with the discrete mean removed and linear interpolation (the
    /// ramp is piecewise linear; cubic interpolation would overshoot the
    /// wrap-around kink).
    pub fn sawtooth(amplitude: f64, period: f64, n_samples: usize) -> Result<Self, FieldError> {
        check_period(period)?;
        let n = n_samples.max(8);
        let values: Vec<f64> = (0..n)
            .map(|i| amplitude * (2.0 * (i as f64) / (n as f64) - 1.0))
            .collect();
        Self::from_samples(values, period, Interp::Linear)
    }

    /// Field from uniform samples on [0, L) (x_i = i·L/n). The discrete mean
    /// is subtracted, so the stored samples are mean-zero to machine
    /// precision.
    pub fn from_samples(
        mut values: Vec<f64>,
        period: f64,
        interp: Interp,
    ) -> Result<Self, FieldError> {
        check_period(period)?;
        if values.len() < 8 {
            return Err(FieldError::TooFewSamples(values.len()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(FieldError::InvalidField("non-finite sample".into()));
        }
        // Two compensated sweeps drive the residual mean to ~machine epsilon.
        for _ in 0..2 {
            let mean = kahan_sum(&values) / values.len() as f64;
            for v in &mut values {
                *v -= mean;
            }
        }
        let mut field = Self { period, kind: FieldKind::Samples { values, interp }, sup: 0.0 };
        field.sup = field.scan_sup();
        Ok(field)
    }

    /// Parse a one- or two-column CSV (optionally with a header line) into a
    /// sampled field. Two columns are interpreted as `x, q(x)` on a uniform
    /// grid starting at 0; one column as the values alone.
    pub fn from_csv_str(text: &str, period: f64, interp: Interp) -> Result<Self, FieldError> {
        let mut xs: Vec<f64> = Vec::new();
        let mut vs: Vec<f64> = Vec::new();
        let mut two_col = None;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            let cells: Vec<&str> = line.split(',').map(str::trim).collect();
            let parsed: Option<Vec<f64>> =
                cells.iter().map(|c| c.parse::<f64>().ok()).collect();
            let Some(nums) = parsed else {
                if vs.is_empty() && lineno == 0 {
                    continue; // header line
                }
                return Err(FieldError::InvalidField(format!(
                    "unparseable csv line {}: {raw:?}",
                    lineno + 1
                )));
            };
            match (two_col, nums.len()) {
                (None, 1) => two_col = Some(false),
                (None, 2) => two_col = Some(true),
                (Some(false), 1) | (Some(true), 2) => {}
                _ => {
                    return Err(FieldError::InvalidField(format!(
                        "inconsistent column count at line {}",
                        lineno + 1
                    )))
                }
            }
            if nums.len() == 2 {
                xs.push(nums[0]);
                vs.push(nums[1]);
            } else {
                vs.push(nums[0]);
            }
        }
        if two_col == Some(true) {
            // x must be uniform from 0 with spacing L/n.
            let n = xs.len();
            if n < 8 {
                return Err(FieldError::TooFewSamples(n));
            }
            let h = period / n as f64;
            for (i, &x) in xs.iter().enumerate() {
                if (x - i as f64 * h).abs() > 1e-9 * period {
                    return Err(FieldError::InvalidField(format!(
                        "x column not uniform with spacing L/n at row {i} (x = {x})"
                    )));
                }
            }
        }
        Self::from_samples(vs, period, interp)
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    /// sup |q| over a period (cached; computed on a fine scan grid at
    /// construction, exact for trig fields up to scan resolution).
    pub fn sup_norm(&self) -> f64 {
        self.sup
    }

    /// max q over a period (signed), from a fine scan grid.
    pub fn max_value(&self) -> f64 {
        match &self.kind {
            FieldKind::Zero => 0.0,
            _ => (0..4096)
                .map(|i| self.eval(i as f64 * self.period / 4096.0))
                .fold(f64::NEG_INFINITY, f64::max),
        }
    }

    fn scan_sup(&self) -> f64 {
        match &self.kind {
            FieldKind::Zero => 0.0,
            FieldKind::Samples { values, .. } => {
                values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
            }
            FieldKind::Trig(_) => (0..4096)
                .map(|i| self.eval(i as f64 * self.period / 4096.0).abs())
                .fold(0.0_f64, f64::max),
        }
    }

    /// Evaluate q(x) with periodic wrap.
    pub fn eval(&self, x: f64) -> f64 {
        match &self.kind {
            FieldKind::Zero => 0.0,
            FieldKind::Trig(modes) => {
                let w = 2.0 * std::f64::consts::PI / self.period;
                modes
                    .iter()
                    .map(|m| {
                        let ph = w * m.k as f64 * x;
                        m.sin_amp * ph.sin() + m.cos_amp * ph.cos()
                    })
                    .sum()
            }
            FieldKind::Samples { values, interp } => {
                let n = values.len();
                let mut t = x / self.period * n as f64;
                t = t.rem_euclid(n as f64);
                let i = (t.floor() as usize).min(n - 1);
                let f = t - i as f64;
                let ip1 = (i + 1) % n;
                match interp {
                    Interp::Linear => values[i] + f * (values[ip1] - values[i]),
                    Interp::Cubic => {
                        let im1 = (i + n - 1) % n;
                        let ip2 = (i + 2) % n;
                        let (p0, p1, p2, p3) =
                            (values[im1], values[i], values[ip1], values[ip2]);
                        // Catmull–Rom
                        0.5 * (2.0 * p1
                            + f * ((p2 - p0)
                                + f * ((2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3)
                                    + f * (3.0 * (p1 - p2) + p3 - p0))))
                    }
                }
            }
        }
    }

    /// Values at the n uniform nodes x_i = i·L/n.
    pub fn sample(&self, n: usize) -> Vec<f64> {
        let h = self.period / n as f64;
        match &self.kind {
            // Avoid interpolation when the requested grid refines the stored one.
            FieldKind::Samples { values, .. } if n % values.len() == 0 && n != values.len() => {
                (0..n).map(|i| self.eval(i as f64 * h)).collect()
            }
            FieldKind::Samples { values, .. } if n == values.len() => values.clone(),
            _ => (0..n).map(|i| self.eval(i as f64 * h)).collect(),
        }
    }

    /// Discrete mean over n uniform nodes (diagnostic; ≤ 1e-12·sup by
    /// construction for grids that refine the sample grid).
    pub fn mean_on_grid(&self, n: usize) -> f64 {
        kahan_sum(&self.sample(n)) / n as f64
    }

    /// The field multiplied by a scalar.
    pub fn scale(&self, s: f64) -> Self {
        let kind = match &self.kind {
            FieldKind::Zero => FieldKind::Zero,
            FieldKind::Trig(modes) => FieldKind::Trig(
                modes
                    .iter()
                    .map(|m| TrigMode { k: m.k, sin_amp: s * m.sin_amp, cos_amp: s * m.cos_amp })
                    .collect(),
            ),
            FieldKind::Samples { values, interp } => FieldKind::Samples {
                values: values.iter().map(|v| s * v).collect(),
                interp: *interp,
            },
        };
        Self { period: self.period, kind, sup: self.sup * s.abs() }
    }

    /// Same wave form compressed/stretched to a new period:
    /// q_new(x) = q(x · L_old/L_new).
    pub fn with_period(&self, new_period: f64) -> Result<Self, FieldError> {
        check_period(new_period)?;
        Ok(Self { period: new_period, kind: self.kind.clone(), sup: self.sup })
    }

    /// Antiderivative Q(x) = ∫₀ˣ q with Q(0) = 0, returned as a mean-zero
    /// periodic part plus the mean: Q(x) = centered(x) + mean.
    ///
    /// Trigonometric fields integrate in closed form; sampled fields by
    /// cumulative trapezoid on a refined grid (≥ 4096 nodes, exact for the
    /// linear interpolant). Q(L) = 0 holds within 1e-10 · L · sup|q| because
    /// the field is mean-zero.
    pub fn antiderivative(&self) -> Result<Antiderivative, FieldError> {
        // Defensive re-check of the construction invariant.
        let m = self.mean_on_grid(4096);
        let tol = MEAN_ZERO_RTOL * self.sup.max(1e-300);
        if self.sup > 0.0 && m.abs() > 10.0 * tol {
            return Err(FieldError::NotMeanZero { mean: m, tol });
        }
        let l = self.period;
        match &self.kind {
            FieldKind::Zero => Ok(Antiderivative {
                centered: Self::zero(l)?,
                mean: 0.0,
            }),
            FieldKind::Trig(modes) => {
                // ∫ sin(wkx) = (1 − cos(wkx))/(wk); ∫ cos(wkx) = sin(wkx)/(wk).
                let w = 2.0 * std::f64::consts::PI / l;
                let mut q_modes = Vec::with_capacity(modes.len());
                let mut mean = 0.0;
                for m in modes {
                    let wk = w * m.k as f64;
                    q_modes.push(TrigMode {
                        k: m.k,
                        sin_amp: m.cos_amp / wk,
                        cos_amp: -m.sin_amp / wk,
                    });
                    mean += m.sin_amp / wk;
                }
                Ok(Antiderivative { centered: Self::trig(q_modes, l)?, mean })
            }
            FieldKind::Samples { values, .. } => {
                let n_ref = (8 * values.len()).max(4096);
                let h = l / n_ref as f64;
                let mut q = Vec::with_capacity(n_ref + 1);
                let mut acc = 0.0;
                let mut prev = self.eval(0.0);
                q.push(0.0);
                for i in 1..=n_ref {
                    let cur = self.eval(i as f64 * h);
                    acc += 0.5 * h * (prev + cur);
                    q.push(acc);
                    prev = cur;
                }
                // Remove the tiny linear drift from the residual mean so the
                // stored samples are exactly periodic.
                let drift = q[n_ref];
                for (i, qi) in q.iter_mut().enumerate() {
                    *qi -= drift * i as f64 / n_ref as f64;
                }
                q.pop();
                let mean = kahan_sum(&q) / n_ref as f64;
                let centered = Self::from_samples(q, l, Interp::Cubic)?;
                Ok(Antiderivative { centered, mean })
            }
        }
    }

    /// L²(0, L) norm of the field: closed form for trig sums, composite
    /// Simpson on a refined grid otherwise.
    pub fn l2_norm(&self) -> f64 {
        match &self.kind {
            FieldKind::Zero => 0.0,
            FieldKind::Trig(modes) => {
                let s: f64 = modes
                    .iter()
                    .map(|m| m.sin_amp * m.sin_amp + m.cos_amp * m.cos_amp)
                    .sum();
                (self.period * 0.5 * s).sqrt()
            }
            FieldKind::Samples { values, .. } => {
                let n = 4 * values.len().max(1024);
                let h = self.period / n as f64;
                // Composite Simpson over the periodic interval.
                let mut s = 0.0;
                for i in 0..n / 2 {
                    let a = self.eval((2 * i) as f64 * h);
                    let b = self.eval((2 * i + 1) as f64 * h);
                    let c = self.eval((2 * i + 2) as f64 * h);
                    s += (h / 3.0) * (a * a + 4.0 * b * b + c * c);
                }
                s.sqrt()
            }
        }
    }
}

/// Antiderivative of a mean-zero field: Q(x) = centered(x) + mean, Q(0) = 0.
#[derive(Debug, Clone)]
pub struct Antiderivative {
    /// Mean-zero periodic part Q − Q̄.
    pub centered: PeriodicField,
    /// Q̄ = (1/L)∫₀ᴸ Q.
    pub mean: f64,
}

impl Antiderivative {
    /// Q(x).
    pub fn eval(&self, x: f64) -> f64 {
        self.centered.eval(x) + self.mean
    }
}

// ---------------------------------------------------------------------------
// KPP nonlinearities
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
enum ReactionKind {
    /// u(1 − u)
    Logistic,
    /// u(1 − u^p), p ≥ 1
    ConcavePower { p: f64 },
    /// Values on a uniform s-grid over [0, 1], linear interpolation.
    Tabulated { values: Vec<f64> },
}

/// A KPP nonlinearity m·f(u) on [0,1] (f ≡ 0 outside), with an optional
/// multiplicative scale m used by the asymptotic scans.
#[derive(Debug, Clone, PartialEq)]
pub struct KppNonlinearity {
    kind: ReactionKind,
    scale: f64,
}

impl KppNonlinearity {
    /// u(1 − u).
    pub fn logistic() -> Self {
        Self { kind: ReactionKind::Logistic, scale: 1.0 }
    }

    /// u(1 − u^p) with p ≥ 1 (p = 1 is logistic).
    pub fn concave_power(p: f64) -> Result<Self, ReactionError> {
        if !(p.is_finite() && p >= 1.0) {
            return Err(ReactionError::InvalidReaction(format!(
                "concave power needs p ≥ 1, got {p}"
            )));
        }
        Ok(Self { kind: ReactionKind::ConcavePower { p }, scale: 1.0 })
    }

    /// Tabulated values on the uniform grid s_i = i/(n−1) over [0,1].
    /// Endpoints must vanish.
    pub fn tabulated(values: Vec<f64>) -> Result<Self, ReactionError> {
        if values.len() < 9 {
            return Err(ReactionError::InvalidReaction(format!(
                "tabulated nonlinearity needs at least 9 nodes, got {}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(ReactionError::InvalidReaction("non-finite table value".into()));
        }
        let sup = values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let tol = 1e-12 * sup.max(1.0);
        if values[0].abs() > tol || values[values.len() - 1].abs() > tol {
            return Err(ReactionError::InvalidReaction(
                "tabulated f must vanish at s = 0 and s = 1".into(),
            ));
        }
        Ok(Self { kind: ReactionKind::Tabulated { values }, scale: 1.0 })
    }

    /// The nonlinearity multiplied by m (scans use m·f; f′(0) scales with m).
    pub fn scaled(&self, m: f64) -> Self {
        Self { kind: self.kind.clone(), scale: self.scale * m }
    }

    /// f(u); zero outside [0, 1].
    pub fn eval(&self, u: f64) -> f64 {
        if !(0.0..=1.0).contains(&u) {
            return 0.0;
        }
        self.scale
            * match &self.kind {
                ReactionKind::Logistic => u * (1.0 - u),
                ReactionKind::ConcavePower { p } => u * (1.0 - u.powf(*p)),
                ReactionKind::Tabulated { values } => {
                    let n = values.len();
                    let t = u * (n - 1) as f64;
                    let i = (t.floor() as usize).min(n - 2);
                    let f = t - i as f64;
                    values[i] + f * (values[i + 1] - values[i])
                }
            }
    }

    /// f′(u) on [0, 1]: closed form for presets, piecewise slope for
    /// tabulated data; zero outside the unit interval where f vanishes.
    pub fn fprime(&self, u: f64) -> f64 {
        if !(0.0..=1.0).contains(&u) {
            return 0.0;
        }
        self.scale
            * match &self.kind {
                ReactionKind::Logistic => 1.0 - 2.0 * u,
                ReactionKind::ConcavePower { p } => 1.0 - (p + 1.0) * u.powf(*p),
                ReactionKind::Tabulated { values } => {
                    let n = values.len();
                    let t = u * (n - 1) as f64;
                    let i = (t.floor() as usize).min(n - 2);
                    (values[i + 1] - values[i]) * (n - 1) as f64
                }
            }
    }

    /// f′(0): closed form for presets, one-sided finite differences with one
    /// Richardson step for tabulated data.
    pub fn fprime0(&self) -> f64 {
        self.scale
            * match &self.kind {
                ReactionKind::Logistic | ReactionKind::ConcavePower { .. } => 1.0,
                ReactionKind::Tabulated { .. } => self.one_sided_deriv(0.0, 1.0),
            }
    }

    /// f′(1): closed form for presets, one-sided finite differences otherwise.
    pub fn fprime1(&self) -> f64 {
        self.scale
            * match &self.kind {
                ReactionKind::Logistic => -1.0,
                ReactionKind::ConcavePower { p } => -p,
                ReactionKind::Tabulated { .. } => self.one_sided_deriv(1.0, -1.0),
            }
    }

    /// One-sided derivative at `at` in direction `dir` on the unscaled shape,
    /// step 1e-6 with Richardson refinement.
    fn one_sided_deriv(&self, at: f64, dir: f64) -> f64 {
        let raw = |u: f64| self.eval(u) / self.scale;
        let h = 1e-6;
        let d1 = dir * (raw(at + dir * h) - raw(at)) / h;
        let d2 = dir * (raw(at + dir * h * 0.5) - raw(at)) / (0.5 * h);
        2.0 * d2 - d1
    }

    /// A Lipschitz bound sup |f′| on [0,1].
    pub fn lipschitz(&self) -> f64 {
        self.scale.abs()
            * match &self.kind {
                ReactionKind::Logistic => 1.0,
                ReactionKind::ConcavePower { p } => p.max(1.0),
                ReactionKind::Tabulated { values } => {
                    let n = values.len();
                    let h = 1.0 / (n - 1) as f64;
                    values
                        .windows(2)
                        .map(|w| ((w[1] - w[0]) / h).abs())
                        .fold(0.0_f64, f64::max)
                }
            }
    }
}

/// Grid report from [`validate_kpp`].
#[derive(Debug, Clone, Serialize)]
pub struct KppReport {
    /// Second differences ≤ 1e-10 · Lipschitz bound on the check grid.
    pub concave: bool,
    /// f(s) ≤ f′(0)·s on the check grid.
    pub kpp: bool,
    /// f > 0 at interior grid nodes.
    pub positive: bool,
    /// f(s+t) ≤ f(s) + f(t) + 1e-12 on the (s,t) grid with s+t ≤ 1.
    pub subadditive: bool,
    /// Largest positive violation over all checks (0 when everything passes).
    pub max_violation: f64,
}

impl KppReport {
    pub fn all_pass(&self) -> bool {
        self.concave && self.kpp && self.positive && self.subadditive
    }
}

/// Check the KPP structure of `f` on a grid of `grid_n + 1` nodes
/// (subadditivity on the full (s, t) product grid restricted to s + t ≤ 1).
pub fn validate_kpp(f: &KppNonlinearity, grid_n: usize) -> Result<KppReport, ReactionError> {
    if grid_n < 16 {
        return Err(ReactionError::InvalidReaction(format!(
            "validation grid must have at least 16 cells, got {grid_n}"
        )));
    }
    let n = grid_n;
    let h = 1.0 / n as f64;
    let vals: Vec<f64> = (0..=n).map(|i| f.eval(i as f64 * h)).collect();
    let fp0 = f.fprime0();
    let lip = f.lipschitz();

    let mut max_violation = 0.0_f64;
    let conc_tol = 1e-10 * lip.max(1e-300);
    let mut concave = true;
    for i in 1..n {
        let second = vals[i - 1] - 2.0 * vals[i] + vals[i + 1];
        if second > conc_tol {
            concave = false;
            max_violation = max_violation.max(second);
        }
    }
    let mut kpp = true;
    let mut positive = true;
    for i in 0..=n {
        let s = i as f64 * h;
        let excess = vals[i] - fp0 * s;
        if excess > 1e-12 * lip.max(1.0) {
            kpp = false;
            max_violation = max_violation.max(excess);
        }
        if i > 0 && i < n && vals[i] <= 0.0 {
            positive = false;
            max_violation = max_violation.max(-vals[i]);
        }
    }
    let mut subadditive = true;
    for i in 0..=n {
        for j in 0..=(n - i) {
            let s = i as f64 * h;
            let t = j as f64 * h;
            let slack = f.eval(s) + f.eval(t) - f.eval(s + t);
            if slack < -1e-12 {
                subadditive = false;
                max_violation = max_violation.max(-slack);
            }
        }
    }
    Ok(KppReport { concave, kpp, positive, subadditive, max_violation })
}

// ---------------------------------------------------------------------------
// Diffusion matrices and cone geometry
// ---------------------------------------------------------------------------

/// Constant symmetric positive-definite diffusion matrix
/// M = [[m11, m12], [m12, m22]].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiffusionMatrix {
    pub m11: f64,
    pub m12: f64,
    pub m22: f64,
}

impl DiffusionMatrix {
    pub fn new(m11: f64, m12: f64, m22: f64) -> Result<Self, ConeError> {
        let m = Self { m11, m12, m22 };
        if !(m11 > 0.0 && m.det() > 0.0 && m11.is_finite() && m12.is_finite() && m22.is_finite())
        {
            return Err(ConeError::NotPositiveDefinite { m11, det: m.det() });
        }
        Ok(m)
    }

    pub fn identity() -> Self {
        Self { m11: 1.0, m12: 0.0, m22: 1.0 }
    }

    /// Left-branch matrix [[1, −cos α], [−cos α, 1]].
    pub fn cone_left(alpha: f64) -> Result<Self, ConeError> {
        check_angle(alpha)?;
        Self::new(1.0, -alpha.cos(), 1.0)
    }

    /// Right-branch matrix [[1, cos β], [cos β, 1]].
    pub fn cone_right(beta: f64) -> Result<Self, ConeError> {
        check_angle(beta)?;
        Self::new(1.0, beta.cos(), 1.0)
    }

    /// ρ·M.
    pub fn scaled(&self, rho: f64) -> Result<Self, ConeError> {
        Self::new(rho * self.m11, rho * self.m12, rho * self.m22)
    }

    pub fn det(&self) -> f64 {
        self.m11 * self.m22 - self.m12 * self.m12
    }
}

fn check_angle(angle: f64) -> Result<(), ConeError> {
    if !(angle.is_finite() && angle > 0.0 && angle < std::f64::consts::PI) {
        return Err(ConeError::AngleOutOfRange(angle));
    }
    Ok(())
}

/// Cone aperture: interior angles α (left) and β (right) of the far-field
/// tent, both in (0, π), measured from the horizontal. Angles are radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConeSpec {
    pub alpha: f64,
    pub beta: f64,
}

impl ConeSpec {
    pub fn new(alpha: f64, beta: f64) -> Result<Self, ConeError> {
        check_angle(alpha)?;
        check_angle(beta)?;
        Ok(Self { alpha, beta })
    }

    /// α + β ≤ π: fronts with these asymptotic angles exist; the two-branch
    /// speed formula is rigorous exactly in this regime.
    pub fn existence_regime(&self) -> bool {
        self.alpha + self.beta <= std::f64::consts::PI + 1e-14
    }

    pub fn min_sin(&self) -> f64 {
        self.alpha.sin().min(self.beta.sin())
    }
}

// ---------------------------------------------------------------------------
// Declarative specs (JSON-facing)
// ---------------------------------------------------------------------------

fn default_sawtooth_samples() -> usize {
    1024
}
fn default_interp_order() -> u8 {
    3
}

/// Declarative field description, the JSON-facing mirror of the constructors.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "snake_case")]
pub enum FieldSpec {
    Zero {
        period: f64,
    },
    Sine {
        amplitude: f64,
        period: f64,
        #[serde(default)]
        harmonics: Vec<f64>,
    },
    Sawtooth {
        amplitude: f64,
        period: f64,
        #[serde(default = "default_sawtooth_samples")]
        samples: usize,
    },
    Samples {
        period: f64,
        values: Vec<f64>,
        /// 1 = linear, 3 = cubic (default).
        #[serde(default = "default_interp_order")]
        interpolation: u8,
    },
}

impl FieldSpec {
    pub fn build(&self) -> Result<PeriodicField, FieldError> {
        match self {
            FieldSpec::Zero { period } => PeriodicField::zero(*period),
            FieldSpec::Sine { amplitude, period, harmonics } => {
                PeriodicField::sine_with_harmonics(*amplitude, harmonics, *period)
            }
            FieldSpec::Sawtooth { amplitude, period, samples } => {
                PeriodicField::sawtooth(*amplitude, *period, *samples)
            }
            FieldSpec::Samples { period, values, interpolation } => {
                let interp = match interpolation {
                    1 => Interp::Linear,
                    3 => Interp::Cubic,
                    other => {
                        return Err(FieldError::InvalidField(format!(
                            "interpolation order must be 1 or 3, got {other}"
                        )))
                    }
                };
                PeriodicField::from_samples(values.clone(), *period, interp)
            }
        }
    }
}

/// Declarative nonlinearity description.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ReactionSpec {
    Logistic,
    ConcavePower { p: f64 },
    Tabulated { values: Vec<f64> },
}

impl ReactionSpec {
    pub fn build(&self) -> Result<KppNonlinearity, ReactionError> {
        match self {
            ReactionSpec::Logistic => Ok(KppNonlinearity::logistic()),
            ReactionSpec::ConcavePower { p } => KppNonlinearity::concave_power(*p),
            ReactionSpec::Tabulated { values } => KppNonlinearity::tabulated(values.clone()),
        }
    }
}


#[cfg(test)]
mod prop_tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        /// Sampled fields are mean-zero on their own grid and any refinement.
        #[test]
        fn sampled_mean_zero(raw in proptest::collection::vec(-10.0f64..10.0, 8..80),
                             refine in 1usize..4) {
            let n = raw.len();
            let q = PeriodicField::from_samples(raw, 1.0, Interp::Cubic).unwrap();
            let sup = q.sup_norm();
            prop_assume!(sup > 1e-9);
            prop_assert!(q.mean_on_grid(n * refine).abs() <= 1e-12 * sup);
        }

        /// Trig fields evaluate periodically: q(x + L) = q(x).
        #[test]
        fn trig_periodic(amp in -5.0f64..5.0, x in 0.0f64..3.0) {
            let q = PeriodicField::sine(amp, 1.5).unwrap();
            prop_assert!((q.eval(x) - q.eval(x + 1.5)).abs() < 1e-9 * (1.0 + amp.abs()));
        }

        /// Subadditivity of the logistic preset at arbitrary points.
        #[test]
        fn logistic_subadditive(s in 0.0f64..1.0, t in 0.0f64..1.0) {
            prop_assume!(s + t <= 1.0);
            let f = KppNonlinearity::logistic();
            prop_assert!(f.eval(s) + f.eval(t) - f.eval(s + t) >= -1e-12);
        }
    }
}
