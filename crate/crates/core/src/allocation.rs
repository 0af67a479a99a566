//! Fluid-limit energy allocations over load age.
//!
//! An [`AllocationProfile`] is the energy `x_σ` already delivered to the load
//! of age `σ`, stored as a piecewise-linear function on a non-decreasing grid.
//! A repeated grid node encodes a jump, which is needed for the unbounded
//! power case where allocations are step functions.

use crate::error::{check_range, Error, Result};
use crate::model::LoadClass;
use crate::numeric::{self, fmt9};
use crate::tolerance;

/// Default number of uniform intervals on the age axis.
pub const DEFAULT_CELLS: usize = 2048;

#[derive(Debug, Clone, PartialEq)]
pub struct AllocationProfile {
    lc: LoadClass,
    grid: Vec<f64>,
    values: Vec<f64>,
}

impl AllocationProfile {
    pub fn new(lc: LoadClass, grid: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let t = lc.window();
        let e = lc.energy();
        if grid.len() != values.len() || grid.len() < 2 {
            return Err(Error::InvalidArgument("grid and values must have equal length ≥ 2".into()));
        }
        if grid[0] != 0.0 || *grid.last().unwrap() != t {
            return Err(Error::InvalidArgument("grid must start at 0 and end at T".into()));
        }
        for w in grid.windows(3) {
            if w[0] == w[1] && w[1] == w[2] {
                return Err(Error::InvalidArgument("grid node repeated more than twice".into()));
            }
        }
        if grid.windows(2).any(|w| !(w[1] >= w[0])) {
            return Err(Error::InvalidArgument("grid must be non-decreasing".into()));
        }
        for (&s, &x) in grid.iter().zip(&values) {
            let (lo, hi) = lc.envelope_hull(s);
            check_range("x", x, lo, hi, tolerance::ENVELOPE)?;
        }
        check_range("x(0)", values[0], 0.0, 0.0, tolerance::ENVELOPE)?;
        check_range("x(T)", *values.last().unwrap(), e, e, tolerance::ENVELOPE)?;
        Ok(Self { lc, grid, values })
    }

    pub fn from_fn(lc: LoadClass, grid: Vec<f64>, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = grid.iter().map(|&s| f(s)).collect();
        Self::new(lc, grid, values)
    }

    pub fn nominal(lc: LoadClass, cells: usize) -> Self {
        Self::from_fn(lc, lc.envelope_grid(cells), |s| lc.nominal_at(s)).expect("nominal is feasible")
    }

    /// Upper envelope. For an unbounded power limit the jump at σ = 0 is kept.
    pub fn upper(lc: LoadClass, cells: usize) -> Self {
        if lc.is_unbounded() {
            return step_profile(lc, cells, 0.0);
        }
        Self::from_fn(lc, lc.envelope_grid(cells), |s| lc.upper_at(s)).expect("upper envelope is feasible")
    }

    pub fn lower(lc: LoadClass, cells: usize) -> Self {
        if lc.is_unbounded() {
            return step_profile(lc, cells, lc.window());
        }
        Self::from_fn(lc, lc.envelope_grid(cells), |s| lc.lower_at(s)).expect("lower envelope is feasible")
    }

    pub fn load_class(&self) -> &LoadClass {
        &self.lc
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Piecewise-linear interpolation; right limit at a jump.
    pub fn value_at(&self, sigma: f64) -> f64 {
        let idx = self.grid.partition_point(|&g| g <= sigma);
        if idx == 0 {
            return self.values[0];
        }
        if idx >= self.grid.len() {
            return *self.values.last().unwrap();
        }
        let (g0, g1) = (self.grid[idx - 1], self.grid[idx]);
        let (v0, v1) = (self.values[idx - 1], self.values[idx]);
        if g1 == g0 {
            return v1;
        }
        v0 + (v1 - v0) * (sigma - g0) / (g1 - g0)
    }

    /// Stored energy relative to nominal, averaged over the window.
    pub fn average_stored_energy(&self) -> f64 {
        let t = self.lc.window();
        (numeric::trapezoid(&self.grid, &self.values) - 0.5 * self.lc.energy() * t) / t
    }

    /// CSV with columns `sigma,x,x_upper,x_lower,charge_slack,discharge_slack`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("sigma,x,x_upper,x_lower,charge_slack,discharge_slack\n");
        let t = self.lc.window();
        for (&s, &x) in self.grid.iter().zip(&self.values) {
            let cs = self.lc.charge_slack_unchecked(x);
            let row = [s, x, self.lc.upper_at(s), self.lc.lower_at(s), cs, t - s - cs];
            out.push_str(&row.map(fmt9).join(","));
            out.push('\n');
        }
        out
    }
}

/// Step allocation of the unbounded policy: nothing delivered up to age
/// `split`, everything delivered after it.
fn step_profile(lc: LoadClass, cells: usize, split: f64) -> AllocationProfile {
    let e = lc.energy();
    let mut grid = Vec::with_capacity(cells + 3);
    let mut values = Vec::with_capacity(cells + 3);
    for s in lc.envelope_grid(cells) {
        if s < split {
            grid.push(s);
            values.push(0.0);
        }
    }
    grid.push(split);
    values.push(0.0);
    grid.push(split);
    values.push(e);
    for s in lc.envelope_grid(cells) {
        if s > split {
            grid.push(s);
            values.push(e);
        }
    }
    AllocationProfile { lc, grid, values }
}

/// Slack-equalized allocation shapes, parameterized by a single scalar.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EqualizedShape {
    /// `x_σ = clamp(level, x̲_σ, x̄_σ)`: equal charge slacks.
    ChargeLevel(f64),
    /// `x_σ = clamp(E − P̄(T − σ − s), x̲_σ, x̄_σ)`: equal discharge slacks `s`.
    DischargeSlack(f64),
}

impl EqualizedShape {
    pub fn eval(&self, lc: &LoadClass, sigma: f64) -> f64 {
        let raw = match *self {
            EqualizedShape::ChargeLevel(level) => level,
            EqualizedShape::DischargeSlack(s) => {
                let p = lc.max_power().as_f64();
                lc.energy() - p * (lc.window() - sigma - s)
            }
        };
        raw.clamp(lc.lower_at(sigma), lc.upper_at(sigma))
    }

    fn kinks(&self, lc: &LoadClass) -> Vec<f64> {
        let p = lc.max_power().as_f64();
        let (e, t) = (lc.energy(), lc.window());
        match *self {
            EqualizedShape::ChargeLevel(level) => vec![level / p, t - (e - level) / p],
            EqualizedShape::DischargeSlack(s) => vec![t - s, t - s - e / p],
        }
    }

    /// Grid of all kinks; trapezoid quadrature on it is exact.
    fn exact_grid(&self, lc: &LoadClass) -> Vec<f64> {
        let pts: Vec<f64> = [0.0, lc.window()]
            .into_iter()
            .chain(lc.breakpoints())
            .chain(self.kinks(lc))
            .collect();
        numeric::sorted_nodes(pts, 0.0, lc.window())
    }

    pub fn average_stored_energy(&self, lc: &LoadClass) -> f64 {
        let grid = self.exact_grid(lc);
        let values: Vec<f64> = grid.iter().map(|&s| self.eval(lc, s)).collect();
        (numeric::trapezoid(&grid, &values) - 0.5 * lc.energy() * lc.window()) / lc.window()
    }

    pub fn profile(&self, lc: LoadClass, cells: usize) -> Result<AllocationProfile> {
        let grid = lc.grid_with(cells, self.kinks(&lc));
        AllocationProfile::from_fn(lc, grid, |s| self.eval(&lc, s))
    }
}

fn require_finite(lc: &LoadClass) -> Result<f64> {
    lc.max_power()
        .finite()
        .ok_or(Error::Unsupported("a finite power limit"))
}

fn check_target(lc: &LoadClass, chi: f64) -> Result<f64> {
    let half = 0.5 * lc.derive_capacity().c_max;
    check_range("chi", chi, -half, half, tolerance::MEMBERSHIP)?;
    Ok(half)
}

/// Bisection on a monotone shape parameter in `[lo, hi]` so the stored energy
/// hits `chi`. Targets at the end of the range resolve to the envelope.
fn solve_shape(
    lc: &LoadClass,
    chi: f64,
    lo: f64,
    hi: f64,
    make: impl Fn(f64) -> EqualizedShape,
) -> Result<f64> {
    let half = check_target(lc, chi)?;
    if chi >= half {
        return Ok(hi);
    }
    if chi <= -half {
        return Ok(lo);
    }
    let (mut a, mut b) = (lo, hi);
    for _ in 0..tolerance::BISECTION_MAX_ITER {
        let mid = 0.5 * (a + b);
        let f = make(mid).average_stored_energy(lc);
        if f < chi {
            a = mid;
        } else {
            b = mid;
        }
    }
    Ok(0.5 * (a + b))
}

/// Flat level `X*` of the charge-slack-equalized allocation storing `chi`.
pub fn charge_equalized_level(lc: &LoadClass, chi: f64) -> Result<f64> {
    require_finite(lc)?;
    solve_shape(lc, chi, 0.0, lc.energy(), EqualizedShape::ChargeLevel)
}

/// Common discharge slack `s*` of the discharge-slack-equalized allocation.
pub fn discharge_equalized_slack(lc: &LoadClass, chi: f64) -> Result<f64> {
    let p = require_finite(lc)?;
    let top = (lc.window() - lc.energy() / p).max(0.0);
    solve_shape(lc, chi, 0.0, top, EqualizedShape::DischargeSlack)
}

pub fn charge_slack_equalized(lc: &LoadClass, chi: f64) -> Result<AllocationProfile> {
    let level = charge_equalized_level(lc, chi)?;
    EqualizedShape::ChargeLevel(level).profile(*lc, DEFAULT_CELLS)
}

pub fn discharge_slack_equalized(lc: &LoadClass, chi: f64) -> Result<AllocationProfile> {
    let s = discharge_equalized_slack(lc, chi)?;
    EqualizedShape::DischargeSlack(s).profile(*lc, DEFAULT_CELLS)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FluidPolicy {
    /// Water-fill surplus power into the lowest energies (largest charge slack).
    ChargeGreedy,
    /// Water-fill surplus power into the smallest discharge slacks.
    DischargeGreedy,
    /// Step allocation with split age `ς = (C_max/2 + χ)/W̲_max`; unbounded `P̄` only.
    UnboundedStep,
}

/// Fluid allocation state. Greedy policies advect a uniform cohort grid;
/// the unbounded policy is carried by its split age.
#[derive(Debug, Clone, PartialEq)]
pub struct FluidPolicyState {
    profile: AllocationProfile,
    chi: f64,
    varsigma: Option<f64>,
    cells: usize,
}

impl FluidPolicyState {
    /// Greedy-policy state: `profile` resampled onto `cells` uniform cohorts.
    pub fn from_profile(profile: &AllocationProfile, cells: usize) -> Result<Self> {
        let lc = *profile.load_class();
        require_finite(&lc)?;
        if cells < 2 {
            return Err(Error::InvalidArgument("need at least two cohorts".into()));
        }
        let t = lc.window();
        let grid: Vec<f64> = (0..=cells)
            .map(|i| if i == cells { t } else { t * i as f64 / cells as f64 })
            .collect();
        let resampled = AllocationProfile::from_fn(lc, grid, |s| profile.value_at(s))?;
        let chi = resampled.average_stored_energy();
        Ok(Self { profile: resampled, chi, varsigma: None, cells })
    }

    /// State of the unbounded step policy storing `chi`.
    pub fn unbounded(lc: LoadClass, chi: f64, cells: usize) -> Result<Self> {
        if !lc.is_unbounded() {
            return Err(Error::Unsupported("an unbounded power limit"));
        }
        check_target(&lc, chi)?;
        let varsigma = split_age(&lc, chi);
        Ok(Self {
            profile: step_profile(lc, cells, lc.window() - varsigma),
            chi,
            varsigma: Some(varsigma),
            cells,
        })
    }

    pub fn profile(&self) -> &AllocationProfile {
        &self.profile
    }

    pub fn chi(&self) -> f64 {
        self.chi
    }

    pub fn varsigma(&self) -> Option<f64> {
        self.varsigma
    }

    pub fn cells(&self) -> usize {
        self.cells
    }
}

fn split_age(lc: &LoadClass, chi: f64) -> f64 {
    let cap = lc.derive_capacity();
    ((0.5 * cap.c_max + chi) / cap.w_under_max).clamp(0.0, lc.window())
}

/// Advance the fluid allocation by `dt` while the fleet deviates from nominal
/// by `w_value` per average active load.
///
/// Greedy policies require `dt` to be a whole number of cohort spacings.
pub fn fluid_step(
    state: &FluidPolicyState,
    w_value: f64,
    dt: f64,
    policy: FluidPolicy,
) -> Result<FluidPolicyState> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
    }
    match policy {
        FluidPolicy::UnboundedStep => step_unbounded(state, w_value, dt),
        FluidPolicy::ChargeGreedy | FluidPolicy::DischargeGreedy => {
            if state.varsigma.is_some() {
                return Err(Error::Unsupported("a finite power limit"));
            }
            let lc = *state.profile.load_class();
            let h = lc.window() / state.cells as f64;
            let k = (dt / h).round();
            if k < 1.0 || (k * h - dt).abs() > 1e-9 * dt {
                return Err(Error::InvalidArgument(format!(
                    "dt = {dt} is not a multiple of the cohort spacing {h}"
                )));
            }
            let mut values = state.profile.values.clone();
            for _ in 0..k as usize {
                values = greedy_substep(&lc, &values, h, w_value, policy)?;
            }
            let profile = AllocationProfile::new(lc, state.profile.grid.clone(), values)?;
            let chi = profile.average_stored_energy();
            Ok(FluidPolicyState { profile, chi, varsigma: None, cells: state.cells })
        }
    }
}

fn greedy_substep(
    lc: &LoadClass,
    x: &[f64],
    h: f64,
    w_value: f64,
    policy: FluidPolicy,
) -> Result<Vec<f64>> {
    let n = x.len() - 1;
    let (e, t) = (lc.energy(), lc.window());
    let p = require_finite(lc)?;
    let exiting = x[n];
    if (exiting - e).abs() > tolerance::ENVELOPE {
        return Err(Error::Infeasible { shortfall: (e - exiting) / t });
    }
    let mut lo = Vec::with_capacity(n);
    let mut hi = Vec::with_capacity(n);
    let mut offset = Vec::with_capacity(n);
    for (i, &xi) in x.iter().take(n).enumerate() {
        let age = if i + 1 == n { t } else { (i + 1) as f64 * h };
        lo.push(xi.max(lc.lower_at(age)));
        hi.push((xi + p * h).min(lc.upper_at(age)).max(xi.max(lc.lower_at(age))));
        offset.push(match policy {
            FluidPolicy::DischargeGreedy => p * age,
            _ => 0.0,
        });
    }
    let total: f64 = x[..n].iter().sum::<f64>() + (lc.nominal_rate() + w_value) * t;
    let y = numeric::water_fill(&offset, &lo, &hi, total).ok_or_else(|| {
        let (slo, shi): (f64, f64) = (lo.iter().sum(), hi.iter().sum());
        Error::Infeasible { shortfall: (total - total.clamp(slo, shi)) / t }
    })?;
    let mut next = Vec::with_capacity(n + 1);
    next.push(0.0);
    next.extend(y);
    Ok(next)
}

fn step_unbounded(state: &FluidPolicyState, w_value: f64, dt: f64) -> Result<FluidPolicyState> {
    let varsigma = state.varsigma.ok_or(Error::Unsupported("an unbounded power limit"))?;
    let lc = *state.profile.load_class();
    let cap = lc.derive_capacity();
    let half = 0.5 * cap.c_max;
    let chi = state.chi + w_value * dt;
    if chi > half + tolerance::MEMBERSHIP || chi < -half - tolerance::MEMBERSHIP {
        let over = if chi > half { chi - half } else { chi + half };
        return Err(Error::Infeasible { shortfall: over / dt });
    }
    let chi = chi.clamp(-half, half);
    let next = split_age(&lc, chi);
    // Completed cohorts cannot give energy back: the split may recede by at most dt.
    if next < varsigma - dt - 1e-12 {
        return Err(Error::Infeasible { shortfall: (next - (varsigma - dt)) * cap.w_under_max / dt });
    }
    Ok(FluidPolicyState {
        profile: step_profile(lc, state.cells, lc.window() - next),
        chi,
        varsigma: Some(next),
        cells: state.cells,
    })
}
