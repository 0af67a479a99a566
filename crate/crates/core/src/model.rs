//! Load-class parameters, energy envelopes, slacks and battery timing.
//!
//! A homogeneous load class is described by its energy demand `E`, the window
//! `T` in which it must be served and a power limit `P̄`. Everything here is a
//! pure function of those three numbers plus, for battery timing, a battery
//! triple `(C, W̄, W̲)`.

use crate::error::{check_range, Error, Result};
use crate::tolerance;

/// Power limit of a single load. `Unbounded` is kept distinct from any large
/// finite value so the unbounded formulas are exact.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MaxPower {
    Finite(f64),
    Unbounded,
}

impl MaxPower {
    pub fn finite(&self) -> Option<f64> {
        match *self {
            MaxPower::Finite(p) => Some(p),
            MaxPower::Unbounded => None,
        }
    }

    /// Finite value, or `f64::INFINITY` when unbounded.
    pub fn as_f64(&self) -> f64 {
        self.finite().unwrap_or(f64::INFINITY)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoadClass {
    energy: f64,
    window: f64,
    max_power: MaxPower,
}

/// The componentwise-maximal battery a load class can support.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivedCapacity {
    pub c_max: f64,
    /// `f64::INFINITY` for an unbounded power limit.
    pub w_bar_max: f64,
    pub w_under_max: f64,
}

impl DerivedCapacity {
    /// `φ_max` as a battery; fails when the charge rate is unbounded.
    pub fn as_battery(&self) -> Result<BatterySpec> {
        BatterySpec::new(self.c_max, self.w_bar_max, self.w_under_max)
    }
}

impl LoadClass {
    pub fn new(energy: f64, window: f64, max_power: MaxPower) -> Result<Self> {
        if !(energy.is_finite() && energy > 0.0) {
            return Err(Error::InvalidLoadClass(format!("energy must be positive, got {energy}")));
        }
        if !(window.is_finite() && window > 0.0) {
            return Err(Error::InvalidLoadClass(format!("window must be positive, got {window}")));
        }
        if let MaxPower::Finite(p) = max_power {
            let p0 = energy / window;
            if !(p.is_finite() && p >= p0) {
                return Err(Error::InvalidLoadClass(format!(
                    "max power {p} below nominal rate {p0}"
                )));
            }
        }
        Ok(Self { energy, window, max_power })
    }

    pub fn finite(energy: f64, window: f64, max_power: f64) -> Result<Self> {
        Self::new(energy, window, MaxPower::Finite(max_power))
    }

    pub fn unbounded(energy: f64, window: f64) -> Result<Self> {
        Self::new(energy, window, MaxPower::Unbounded)
    }

    pub fn energy(&self) -> f64 {
        self.energy
    }

    pub fn window(&self) -> f64 {
        self.window
    }

    pub fn max_power(&self) -> MaxPower {
        self.max_power
    }

    pub fn is_unbounded(&self) -> bool {
        matches!(self.max_power, MaxPower::Unbounded)
    }

    /// `P₀ = E/T`.
    pub fn nominal_rate(&self) -> f64 {
        self.energy / self.window
    }

    pub fn derive_capacity(&self) -> DerivedCapacity {
        let p0 = self.nominal_rate();
        match self.max_power {
            MaxPower::Finite(p) => DerivedCapacity {
                c_max: self.energy * (1.0 - p0 / p),
                w_bar_max: p - p0,
                w_under_max: p0,
            },
            MaxPower::Unbounded => DerivedCapacity {
                c_max: self.energy,
                w_bar_max: f64::INFINITY,
                w_under_max: p0,
            },
        }
    }

    fn check_age(&self, sigma: f64) -> Result<()> {
        check_range("sigma", sigma, 0.0, self.window, 0.0)
    }

    /// Fastest-fill trajectory, extended with `E` beyond the window.
    pub(crate) fn upper_at(&self, sigma: f64) -> f64 {
        match self.max_power {
            MaxPower::Finite(p) => (p * sigma).clamp(0.0, self.energy),
            MaxPower::Unbounded => {
                if sigma > 0.0 {
                    self.energy
                } else {
                    0.0
                }
            }
        }
    }

    /// Latest-fill trajectory, extended with `E` beyond the window.
    pub(crate) fn lower_at(&self, sigma: f64) -> f64 {
        match self.max_power {
            MaxPower::Finite(p) => (self.energy - p * (self.window - sigma)).clamp(0.0, self.energy),
            MaxPower::Unbounded => {
                if sigma >= self.window {
                    self.energy
                } else {
                    0.0
                }
            }
        }
    }

    pub(crate) fn nominal_at(&self, sigma: f64) -> f64 {
        (self.nominal_rate() * sigma).clamp(0.0, self.energy)
    }

    pub fn upper_envelope(&self, sigma: f64) -> Result<f64> {
        self.check_age(sigma)?;
        Ok(self.upper_at(sigma))
    }

    pub fn lower_envelope(&self, sigma: f64) -> Result<f64> {
        self.check_age(sigma)?;
        Ok(self.lower_at(sigma))
    }

    pub fn nominal_energy(&self, sigma: f64) -> Result<f64> {
        self.check_age(sigma)?;
        Ok(self.nominal_at(sigma))
    }

    /// Closed envelope bounds at `sigma`: the left limit of the lower envelope
    /// and the right limit of the upper one. They coincide with the envelopes
    /// for a finite power limit.
    pub(crate) fn envelope_hull(&self, sigma: f64) -> (f64, f64) {
        match self.max_power {
            MaxPower::Finite(_) => (self.lower_at(sigma), self.upper_at(sigma)),
            MaxPower::Unbounded => (0.0, self.energy),
        }
    }

    /// Kinks of the envelopes inside `(0, T)`: `E/P̄` (upper) and `T − E/P̄` (lower).
    pub fn breakpoints(&self) -> Vec<f64> {
        match self.max_power {
            MaxPower::Finite(p) => {
                let a = self.energy / p;
                crate::numeric::sorted_nodes([a, self.window - a], 0.0, self.window)
                    .into_iter()
                    .filter(|s| *s > 0.0 && *s < self.window)
                    .collect()
            }
            MaxPower::Unbounded => Vec::new(),
        }
    }

    /// `n` uniform intervals over `[0, T]` with the envelope breakpoints inserted.
    pub fn envelope_grid(&self, n: usize) -> Vec<f64> {
        self.grid_with(n, std::iter::empty())
    }

    pub(crate) fn grid_with(&self, n: usize, extra: impl IntoIterator<Item = f64>) -> Vec<f64> {
        let n = n.max(1);
        let t = self.window;
        let uniform = (0..=n).map(|i| if i == n { t } else { t * i as f64 / n as f64 });
        let pts: Vec<f64> = uniform.chain(self.breakpoints()).chain(extra).collect();
        crate::numeric::sorted_nodes(pts, 0.0, t)
    }

    fn check_energy(&self, x: f64, sigma: f64) -> Result<()> {
        self.check_age(sigma)?;
        let (lo, hi) = self.envelope_hull(sigma);
        check_range("x", x, lo, hi, tolerance::ENVELOPE)
    }

    /// Longest time a load holding `x` can keep consuming at `P̄`.
    pub fn charge_slack(&self, x: f64, sigma: f64) -> Result<f64> {
        self.check_energy(x, sigma)?;
        Ok(self.charge_slack_unchecked(x))
    }

    /// Longest time a load holding `x` at age `sigma` can consume nothing.
    pub fn discharge_slack(&self, x: f64, sigma: f64) -> Result<f64> {
        self.check_energy(x, sigma)?;
        Ok(self.window - sigma - self.charge_slack_unchecked(x))
    }

    pub(crate) fn charge_slack_unchecked(&self, x: f64) -> f64 {
        match self.max_power {
            MaxPower::Finite(p) => (self.energy - x) / p,
            MaxPower::Unbounded => 0.0,
        }
    }
}

/// Ideal battery `(C, W̄, W̲)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatterySpec {
    pub capacity: f64,
    pub charge_rate: f64,
    pub discharge_rate: f64,
}

impl BatterySpec {
    pub fn new(capacity: f64, charge_rate: f64, discharge_rate: f64) -> Result<Self> {
        for (name, v) in [
            ("capacity", capacity),
            ("charge rate", charge_rate),
            ("discharge rate", discharge_rate),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidBattery(format!("{name} must be finite and non-negative, got {v}")));
            }
        }
        Ok(Self { capacity, charge_rate, discharge_rate })
    }

    pub fn half(&self) -> f64 {
        0.5 * self.capacity
    }

    pub fn check_chi(&self, chi: f64) -> Result<()> {
        check_range("chi", chi, -self.half(), self.half(), tolerance::MEMBERSHIP)
    }

    /// Componentwise `self ≤ other`.
    pub fn le(&self, other: &BatterySpec) -> bool {
        self.capacity <= other.capacity
            && self.charge_rate <= other.charge_rate
            && self.discharge_rate <= other.discharge_rate
    }

    /// Time the battery can keep charging at full rate from `chi`.
    /// `f64::INFINITY` when the rate is zero and the battery is not full.
    pub fn time_to_full(&self, chi: f64) -> Result<f64> {
        self.check_chi(chi)?;
        Ok(ratio_or_inf((self.half() - chi).max(0.0), self.charge_rate))
    }

    /// Time the battery can keep discharging at full rate from `chi`.
    pub fn time_to_empty(&self, chi: f64) -> Result<f64> {
        self.check_chi(chi)?;
        Ok(ratio_or_inf((self.half() + chi).max(0.0), self.discharge_rate))
    }
}

fn ratio_or_inf(num: f64, rate: f64) -> f64 {
    if num == 0.0 {
        0.0
    } else if rate == 0.0 {
        f64::INFINITY
    } else {
        num / rate
    }
}

/// Battery scaled by `φ_max`: `(C/C_max, W̄/W̄_max, W̲/W̲_max)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizedBattery {
    c: f64,
    w_bar: f64,
    w_under: f64,
}

impl NormalizedBattery {
    pub fn new(c: f64, w_bar: f64, w_under: f64) -> Result<Self> {
        check_range("c", c, 0.0, 1.0, 0.0)?;
        check_range("w_bar", w_bar, 0.0, 1.0, 0.0)?;
        check_range("w_under", w_under, 0.0, 1.0, 0.0)?;
        Ok(Self { c, w_bar, w_under })
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn w_bar(&self) -> f64 {
        self.w_bar
    }

    pub fn w_under(&self) -> f64 {
        self.w_under
    }
}

fn normalized_component(component: &'static str, value: f64, max: f64) -> Result<f64> {
    let r = value / max;
    if r > 1.0 + 1e-12 {
        return Err(Error::ExceedsMaximum { component, value, max });
    }
    Ok(r.min(1.0))
}

pub fn normalize(spec: &BatterySpec, lc: &LoadClass) -> Result<NormalizedBattery> {
    let cap = lc.derive_capacity();
    if lc.is_unbounded() {
        return Err(Error::Normalization("charge rate limit is unbounded".into()));
    }
    if cap.c_max <= 0.0 || cap.w_bar_max <= 0.0 {
        return Err(Error::Normalization("load class has zero flexibility (P̄ = P₀)".into()));
    }
    NormalizedBattery::new(
        normalized_component("capacity", spec.capacity, cap.c_max)?,
        normalized_component("charge rate", spec.charge_rate, cap.w_bar_max)?,
        normalized_component("discharge rate", spec.discharge_rate, cap.w_under_max)?,
    )
}

pub fn denormalize(nb: &NormalizedBattery, lc: &LoadClass) -> Result<BatterySpec> {
    let cap = lc.derive_capacity();
    if lc.is_unbounded() {
        return Err(Error::Normalization("charge rate limit is unbounded".into()));
    }
    if cap.c_max <= 0.0 || cap.w_bar_max <= 0.0 {
        return Err(Error::Normalization("load class has zero flexibility (P̄ = P₀)".into()));
    }
    BatterySpec::new(nb.c * cap.c_max, nb.w_bar * cap.w_bar_max, nb.w_under * cap.w_under_max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn canonical() -> LoadClass {
        LoadClass::finite(1.0, 1.0, 2.0).unwrap()
    }

    #[test]
    fn derive_capacity_examples() {
        let c = canonical().derive_capacity();
        assert_eq!((c.c_max, c.w_bar_max, c.w_under_max), (0.5, 1.0, 1.0));
        let c = LoadClass::finite(1.0, 1.0, 1.0).unwrap().derive_capacity();
        assert_eq!((c.c_max, c.w_bar_max, c.w_under_max), (0.0, 0.0, 1.0));
        let c = LoadClass::finite(10.0, 10.0, 2.0).unwrap().derive_capacity();
        assert_eq!((c.c_max, c.w_bar_max, c.w_under_max), (5.0, 1.0, 1.0));
        let c = LoadClass::unbounded(1.0, 1.0).unwrap().derive_capacity();
        assert_eq!(c.c_max, 1.0);
        assert!(c.w_bar_max.is_infinite());
    }

    #[test]
    fn invalid_load_classes() {
        assert!(LoadClass::finite(1.0, 1.0, 0.5).is_err());
        assert!(LoadClass::finite(0.0, 1.0, 2.0).is_err());
        assert!(LoadClass::finite(1.0, -1.0, 2.0).is_err());
    }

    #[test]
    fn envelope_examples() {
        let lc = canonical();
        assert_eq!(lc.upper_envelope(0.25).unwrap(), 0.5);
        assert_eq!(lc.lower_envelope(0.25).unwrap(), 0.0);
        assert_eq!(lc.nominal_energy(0.25).unwrap(), 0.25);
        assert_eq!(lc.upper_envelope(0.75).unwrap(), 1.0);
        assert_eq!(lc.lower_envelope(0.75).unwrap(), 0.5);
        assert_eq!(lc.nominal_energy(0.75).unwrap(), 0.75);
        for lc in [lc, LoadClass::finite(3.0, 2.0, 7.0).unwrap(), LoadClass::unbounded(2.0, 5.0).unwrap()] {
            let t = lc.window();
            let e = lc.energy();
            assert_eq!(lc.upper_envelope(0.0).unwrap(), 0.0);
            assert_eq!(lc.lower_envelope(0.0).unwrap(), 0.0);
            assert_eq!(lc.nominal_energy(0.0).unwrap(), 0.0);
            assert_eq!(lc.upper_envelope(t).unwrap(), e);
            assert_eq!(lc.lower_envelope(t).unwrap(), e);
            assert_eq!(lc.nominal_energy(t).unwrap(), e);
        }
        assert!(matches!(lc.upper_envelope(1.5), Err(Error::Domain { .. })));
        assert!(lc.lower_envelope(-0.1).is_err());
    }

    #[test]
    fn unbounded_envelopes_are_steps() {
        let lc = LoadClass::unbounded(1.0, 1.0).unwrap();
        assert_eq!(lc.upper_envelope(1e-300).unwrap(), 1.0);
        assert_eq!(lc.lower_envelope(1.0 - 1e-12).unwrap(), 0.0);
        assert!(lc.breakpoints().is_empty());
    }

    #[test]
    fn slack_examples() {
        let lc = canonical();
        assert_eq!(lc.charge_slack(0.5, 0.5).unwrap(), 0.25);
        assert_eq!(lc.discharge_slack(0.5, 0.5).unwrap(), 0.25);
        assert_eq!(lc.charge_slack(1.0, 0.5).unwrap(), 0.0);
        // independent evaluation: (E - x)/P̄ and T - σ - that
        let (x, s) = (0.25, 0.25);
        let cs = (1.0 - x) / 2.0;
        assert_eq!(lc.charge_slack(x, s).unwrap(), cs);
        assert_eq!(lc.discharge_slack(x, s).unwrap(), 1.0 - s - cs);
        assert_eq!(cs, 0.375);
        assert!(lc.charge_slack(0.9, 0.25).is_err());
    }

    #[test]
    fn battery_timing_examples() {
        let b = BatterySpec::new(0.5, 1.0, 1.0).unwrap();
        assert_eq!(b.time_to_full(0.0).unwrap(), 0.25);
        assert_eq!(b.time_to_empty(0.0).unwrap(), 0.25);
        assert_eq!(b.time_to_full(0.25).unwrap(), 0.0);
        assert_eq!(b.time_to_empty(0.25).unwrap(), 0.5);
        let b = BatterySpec::new(0.5, 0.5, 0.5).unwrap();
        assert_eq!(b.time_to_full(0.0).unwrap(), 0.5);
        assert_eq!(b.time_to_empty(0.0).unwrap(), 0.5);
        assert!(b.time_to_full(0.3).is_err());
        let b = BatterySpec::new(0.5, 0.0, 1.0).unwrap();
        assert!(b.time_to_full(0.0).unwrap().is_infinite());
        assert_eq!(b.time_to_full(0.25).unwrap(), 0.0);
    }

    #[test]
    fn normalize_examples() {
        let lc = canonical();
        let nb = normalize(&BatterySpec::new(0.25, 0.5, 0.5).unwrap(), &lc).unwrap();
        assert_eq!((nb.c(), nb.w_bar(), nb.w_under()), (0.5, 0.5, 0.5));
        let max = lc.derive_capacity().as_battery().unwrap();
        let nb = normalize(&max, &lc).unwrap();
        assert_eq!((nb.c(), nb.w_bar(), nb.w_under()), (1.0, 1.0, 1.0));
        let nb = normalize(&BatterySpec::new(0.0, 0.0, 0.0).unwrap(), &lc).unwrap();
        assert_eq!((nb.c(), nb.w_bar(), nb.w_under()), (0.0, 0.0, 0.0));
        let rigid = LoadClass::finite(1.0, 1.0, 1.0).unwrap();
        assert!(matches!(normalize(&max, &rigid), Err(Error::Normalization(_))));
        assert!(matches!(
            normalize(&BatterySpec::new(0.6, 0.5, 0.5).unwrap(), &lc),
            Err(Error::ExceedsMaximum { component: "capacity", .. })
        ));
    }

    #[test]
    fn grid_contains_breakpoints() {
        let lc = LoadClass::finite(1.0, 1.0, 3.0).unwrap();
        let g = lc.envelope_grid(10);
        assert!(g.iter().any(|s| (s - 1.0 / 3.0).abs() < 1e-15));
        assert!(g.iter().any(|s| (s - 2.0 / 3.0).abs() < 1e-15));
        assert_eq!(g[0], 0.0);
        assert_eq!(*g.last().unwrap(), 1.0);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
    }
}
