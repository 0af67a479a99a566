//! Analytic realizability machinery: the closed-form trade-off condition, the
//! area (parallelogram) condition it derives from, frontier curves, critical
//! profiles and the deficiency budgets they must respect.
//!
//! Everything here is a *necessary* condition. A battery that passes is only
//! "not excluded"; nothing in this module claims it is realizable.

use crate::allocation::AllocationProfile;
use crate::error::{check_range, Error, Result};
use crate::model::{normalize, BatterySpec, LoadClass, MaxPower, NormalizedBattery};
use crate::numeric::{positive_part_linear, sorted_nodes};
use crate::tolerance;

/// Number of `χ` samples in the guard scan of [`area_condition_holds`].
pub const GUARD_SAMPLES: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegionReason {
    Ok,
    WbarBelowOneMinusC,
    WunderBelowOneMinusC,
    SumBelowC,
}

/// Membership of a normalized battery in the region where the closed-form
/// condition applies: `w̄, w̲ ≥ 1 − c` and `w̄ + w̲ ≥ c`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RegionFlag {
    pub in_region_s: bool,
    pub reason: RegionReason,
}

pub fn region_flag(nb: &NormalizedBattery) -> RegionFlag {
    let (c, wb, wu) = (nb.c(), nb.w_bar(), nb.w_under());
    let reason = if wb < 1.0 - c {
        RegionReason::WbarBelowOneMinusC
    } else if wu < 1.0 - c {
        RegionReason::WunderBelowOneMinusC
    } else if wb + wu < c {
        RegionReason::SumBelowC
    } else {
        RegionReason::Ok
    };
    RegionFlag { in_region_s: reason == RegionReason::Ok, reason }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tradeoff {
    SatisfiesNecessary,
    Violates,
    OutsideRegion,
}

/// `4 w̄ w̲ (1 − c) − (w̄ + w̲ − c)²`; non-negative iff the trade-off holds.
pub fn tradeoff_margin(nb: &NormalizedBattery) -> f64 {
    let (c, wb, wu) = (nb.c(), nb.w_bar(), nb.w_under());
    let s = wb + wu - c;
    4.0 * wb * wu * (1.0 - c) - s * s
}

pub fn tradeoff_feasible(nb: &NormalizedBattery) -> Tradeoff {
    if !region_flag(nb).in_region_s {
        Tradeoff::OutsideRegion
    } else if tradeoff_margin(nb) >= -tolerance::TRADEOFF {
        Tradeoff::SatisfiesNecessary
    } else {
        Tradeoff::Violates
    }
}

/// Result of the normalized area condition `a(χ') ≤ 1 − c` on `𝕀`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AreaCheck {
    /// Unconstrained maximizer `(w̲ − w̄)/2` of `a`.
    pub chi_star: f64,
    /// Supremum of `a` over `𝕀` (0 when `𝕀` is empty or a rate is zero).
    pub sup_a: f64,
    /// `1 − c`.
    pub budget: f64,
    pub satisfied: bool,
    /// `[−c/2, c/2] ∩ [c/2 − w̄, −c/2 + w̲]`, `None` when empty or vacuous.
    pub interval_i: Option<(f64, f64)>,
    /// Normalized stored energy attaining `sup_a`.
    pub argmax: Option<f64>,
}

/// `a(χ') = b(χ')·h(χ')` with negative factors cut to zero.
pub fn area_product(nb: &NormalizedBattery, chi: f64) -> f64 {
    let (c, wb, wu) = (nb.c(), nb.w_bar(), nb.w_under());
    let b = 1.0 - (0.5 * c + chi) / wu;
    let h = 1.0 - (0.5 * c - chi) / wb;
    b.max(0.0) * h.max(0.0)
}

/// Closed-form `sup_χ∈ℝ a(χ) = (w̄ + w̲ − c)² / (4 w̄ w̲)`.
pub fn unconstrained_sup(nb: &NormalizedBattery) -> f64 {
    let s = nb.w_bar() + nb.w_under() - nb.c();
    s * s / (4.0 * nb.w_bar() * nb.w_under())
}

fn area_check_with_tol(nb: &NormalizedBattery, tol: f64) -> AreaCheck {
    let (c, wb, wu) = (nb.c(), nb.w_bar(), nb.w_under());
    let chi_star = 0.5 * (wu - wb);
    let budget = 1.0 - c;
    let vacuous = AreaCheck {
        chi_star,
        sup_a: 0.0,
        budget,
        satisfied: true,
        interval_i: None,
        argmax: None,
    };
    // With a zero rate the corresponding extremal outcome never binds.
    if wb == 0.0 || wu == 0.0 {
        return vacuous;
    }
    if c == 0.0 {
        // Zero volume: 𝕀 = {0} and a(0) = 1 = budget.
        return AreaCheck {
            sup_a: 1.0,
            interval_i: Some((0.0, 0.0)),
            argmax: Some(0.0),
            ..vacuous
        };
    }
    let lo = (-0.5 * c).max(0.5 * c - wb);
    let hi = (0.5 * c).min(-0.5 * c + wu);
    if lo > hi {
        return vacuous;
    }
    let mut best = (f64::NEG_INFINITY, lo);
    for x in [lo, hi, chi_star.clamp(lo, hi)] {
        let a = area_product(nb, x);
        if a > best.0 {
            best = (a, x);
        }
    }
    AreaCheck {
        chi_star,
        sup_a: best.0,
        budget,
        satisfied: best.0 <= budget + tol,
        interval_i: Some((lo, hi)),
        argmax: Some(best.1),
    }
}

/// Normalized area condition, classified with the boundary tolerance.
pub fn area_check(nb: &NormalizedBattery) -> AreaCheck {
    area_check_with_tol(nb, tolerance::BOUNDARY)
}

/// Area condition in absolute units, with a witness on failure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AreaVerdict {
    pub check: AreaCheck,
    pub holds: bool,
    /// Stored energy `χ` at which the condition fails.
    pub witness: Option<f64>,
    /// `max_χ A(χ)` over `[−C/2, C/2]`.
    pub max_area: f64,
    /// `(C_max − C)·T`.
    pub area_budget: f64,
}

impl AreaVerdict {
    /// `max A / budget`; infinite when the budget is zero and the area is not.
    pub fn ratio(&self) -> f64 {
        if self.area_budget > 0.0 {
            self.max_area / self.area_budget
        } else if self.max_area > 0.0 {
            f64::INFINITY
        } else {
            0.0
        }
    }
}

/// Parallelogram area `A(χ) = max(0, B(χ))·max(0, H(χ))` in absolute units.
pub fn parallelogram_area(lc: &LoadClass, spec: &BatterySpec, chi: f64) -> Result<f64> {
    let p = lc.max_power().finite().ok_or(Error::Unsupported("a finite power limit"))?;
    let t_c = spec.time_to_full(chi)?;
    let t_d = spec.time_to_empty(chi)?;
    let base = (1.0 - lc.nominal_rate() / p) * lc.window() - t_d;
    let height = lc.energy() - p * t_c;
    Ok(base.max(0.0) * height.max(0.0))
}

/// Whether `spec` passes the general necessary condition for `lc`.
pub fn area_condition_holds(lc: &LoadClass, spec: &BatterySpec) -> Result<AreaVerdict> {
    let nb = normalize(spec, lc)?;
    let cap = lc.derive_capacity();
    let t = lc.window();
    let area_budget = (cap.c_max - spec.capacity).max(0.0) * t;
    let check = area_check(&nb);
    let mut holds = check.satisfied;
    let mut witness = if holds { None } else { check.argmax.map(|x| x * cap.c_max) };
    let mut max_area = check.sup_a * cap.c_max * t;

    if spec.charge_rate > 0.0 && spec.discharge_rate > 0.0 {
        let half = spec.half();
        let slack = tolerance::BOUNDARY * cap.c_max * t;
        for k in 0..GUARD_SAMPLES {
            let chi = if spec.capacity == 0.0 {
                0.0
            } else {
                -half + spec.capacity * k as f64 / (GUARD_SAMPLES - 1) as f64
            };
            let a = parallelogram_area(lc, spec, chi.clamp(-half, half))?;
            if a > max_area {
                max_area = a;
            }
            if a > area_budget + slack && holds {
                holds = false;
                witness = Some(chi);
            }
        }
    }
    Ok(AreaVerdict { check, holds, witness, max_area, area_budget })
}

/// Largest `w̲ ∈ [0, 1]` that passes the area condition at `(c, w̄)`.
///
/// On the closed-form region the answer is the larger root
/// `(√(w̄(1−c)) + √(c(1−w̄)))²`; elsewhere it is found by bisection.
pub fn max_wunder_on_frontier(c: f64, w_bar: f64) -> Result<f64> {
    check_range("c", c, 0.0, 1.0, 0.0)?;
    check_range("w_bar", w_bar, 0.0, 1.0, 0.0)?;
    if w_bar == 0.0 || c == 0.0 {
        return Ok(1.0);
    }
    let root = ((w_bar * (1.0 - c)).sqrt() + (c * (1.0 - w_bar)).sqrt()).powi(2).min(1.0);
    if w_bar >= 1.0 - c - tolerance::TRADEOFF && w_bar + root >= c - tolerance::TRADEOFF {
        return Ok(root);
    }
    let feasible = |wu: f64| {
        let nb = NormalizedBattery::new(c, w_bar, wu).expect("in range");
        area_check_with_tol(&nb, tolerance::TRADEOFF).satisfied
    };
    if feasible(1.0) {
        return Ok(1.0);
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..tolerance::BISECTION_MAX_ITER {
        if hi - lo <= tolerance::BISECTION {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if feasible(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// `(w̄, max w̲)` on a uniform `w̄` grid of `n_points` over `[0, 1]`.
pub fn frontier_curve(c: f64, n_points: usize) -> Result<Vec<(f64, f64)>> {
    if n_points < 2 {
        return Err(Error::InvalidArgument("frontier needs at least two points".into()));
    }
    (0..n_points)
        .map(|i| {
            let wb = if i + 1 == n_points { 1.0 } else { i as f64 / (n_points - 1) as f64 };
            max_wunder_on_frontier(c, wb).map(|wu| (wb, wu))
        })
        .collect()
}

/// Critical profiles `(z̄_σ(χ), z̲_σ(χ))`: the least energy at age `σ` that
/// still allows a full charge, and the most that still allows a full discharge.
pub fn critical_profiles(lc: &LoadClass, spec: &BatterySpec, chi: f64, sigma: f64) -> Result<(f64, f64)> {
    check_range("sigma", sigma, 0.0, lc.window(), 0.0)?;
    let t_c = spec.time_to_full(chi)?;
    let t_d = spec.time_to_empty(chi)?;
    Ok((z_upper(lc, sigma, t_c), lc.lower_at(sigma + t_d)))
}

fn z_upper(lc: &LoadClass, sigma: f64, t_c: f64) -> f64 {
    if t_c == 0.0 {
        return lc.upper_at(sigma);
    }
    match lc.max_power() {
        MaxPower::Finite(p) if t_c.is_finite() => lc.upper_at(sigma + t_c) - p * t_c,
        _ => f64::NEG_INFINITY,
    }
}

/// Minimal deficiencies of an allocation against the critical profiles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeficiencyReport {
    /// `∫ max(0, z̄_σ − x_σ) dσ`
    pub integral_delta_bar: f64,
    /// `∫ max(0, x_σ − z̲_σ) dσ`
    pub integral_delta_under: f64,
    /// `T (C_max − C) / 2`
    pub budget: f64,
    pub feasible: bool,
}

pub fn deficiency_report(
    lc: &LoadClass,
    spec: &BatterySpec,
    chi: f64,
    alloc: &AllocationProfile,
) -> Result<DeficiencyReport> {
    if alloc.load_class() != lc {
        return Err(Error::InvalidArgument("allocation belongs to a different load class".into()));
    }
    let t_c = spec.time_to_full(chi)?;
    let t_d = spec.time_to_empty(chi)?;
    let (e, t) = (lc.energy(), lc.window());
    let p = lc.max_power().as_f64();
    let kinks = sorted_nodes([e / p - t_c, t - t_c, t - e / p - t_d, t - t_d], 0.0, t);

    let grid = alloc.grid();
    let values = alloc.values();
    let (mut over, mut under) = (0.0, 0.0);
    for j in 0..grid.len() - 1 {
        let (g0, g1) = (grid[j], grid[j + 1]);
        if g1 <= g0 {
            continue;
        }
        let (v0, v1) = (values[j], values[j + 1]);
        let x_at = |s: f64| v0 + (v1 - v0) * (s - g0) / (g1 - g0);
        let mut nodes = vec![g0];
        nodes.extend(kinks.iter().copied().filter(|&k| k > g0 && k < g1));
        nodes.push(g1);
        for w in nodes.windows(2) {
            let (a, b) = (w[0], w[1]);
            // Evaluate x from the segment's own end values so jumps are respected.
            let (xa, xb) = (if a == g0 { v0 } else { x_at(a) }, if b == g1 { v1 } else { x_at(b) });
            let (zb_a, zb_b) = (z_upper(lc, a, t_c), z_upper(lc, b, t_c));
            let (zu_a, zu_b) = (lc.lower_at(a + t_d), lc.lower_at(b + t_d));
            over += positive_part_linear(a, b, zb_a - xa, zb_b - xb);
            under += positive_part_linear(a, b, xa - zu_a, xb - zu_b);
        }
    }
    let budget = 0.5 * t * (lc.derive_capacity().c_max - spec.capacity);
    let tol = tolerance::ENVELOPE * (1.0 + e * t);
    Ok(DeficiencyReport {
        integral_delta_bar: over,
        integral_delta_under: under,
        budget,
        feasible: over <= budget + tol && under <= budget + tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::allocation::AllocationProfile;

    fn nb(c: f64, wb: f64, wu: f64) -> NormalizedBattery {
        NormalizedBattery::new(c, wb, wu).unwrap()
    }

    fn canonical() -> LoadClass {
        LoadClass::finite(1.0, 1.0, 2.0).unwrap()
    }

    #[test]
    fn tradeoff_examples() {
        assert_eq!(tradeoff_feasible(&nb(0.0, 1.0, 1.0)), Tradeoff::SatisfiesNecessary);
        assert_eq!(tradeoff_margin(&nb(0.0, 1.0, 1.0)), 0.0);
        assert_eq!(tradeoff_feasible(&nb(1.0, 0.5, 0.5)), Tradeoff::SatisfiesNecessary);
        assert_eq!(tradeoff_margin(&nb(1.0, 0.5, 0.5)), 0.0);
        assert_eq!(tradeoff_feasible(&nb(0.5, 1.0, 0.6)), Tradeoff::Violates);
        assert_eq!(tradeoff_feasible(&nb(0.5, 0.5, 0.5)), Tradeoff::SatisfiesNecessary);
        assert_eq!(tradeoff_feasible(&nb(0.5, 0.2, 0.9)), Tradeoff::OutsideRegion);
        assert_eq!(region_flag(&nb(0.5, 0.9, 0.2)).reason, RegionReason::WunderBelowOneMinusC);
    }

    #[test]
    fn quadratic_pins_wunder_at_half_for_full_charge_rate() {
        // with w̄ = 1, c = 0.5 only w̲ = 0.5 survives; scan at 1e-6
        let mut passing = Vec::new();
        for k in 0..=1_000_000u32 {
            let wu = k as f64 * 1e-6;
            if wu < 0.5 {
                continue;
            }
            if tradeoff_margin(&nb(0.5, 1.0, wu)) >= -1e-12 {
                passing.push(wu);
            }
        }
        assert!(!passing.is_empty());
        assert!(passing.iter().all(|w| (w - 0.5).abs() <= 2e-6), "{passing:?}");
    }

    #[test]
    fn frontier_examples() {
        assert!((max_wunder_on_frontier(1.0, 0.3).unwrap() - 0.7).abs() < 1e-12);
        assert!((max_wunder_on_frontier(0.5, 1.0).unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(max_wunder_on_frontier(0.0, 1.0).unwrap(), 1.0);
        let curve = frontier_curve(1.0, 3).unwrap();
        assert_eq!(curve.len(), 3);
        for ((wb, wu), (eb, eu)) in curve.iter().zip([(0.0, 1.0), (0.5, 0.5), (1.0, 0.0)]) {
            assert_eq!(*wb, eb);
            assert!((wu - eu).abs() < 1e-12);
        }
        assert!(frontier_curve(0.5, 1).is_err());
    }

    #[test]
    fn closed_form_root_agrees_with_bisection() {
        for ci in 1..20 {
            for wi in 1..=20 {
                let (c, wb) = (ci as f64 / 20.0, wi as f64 / 20.0);
                let fast = max_wunder_on_frontier(c, wb).unwrap();
                let feasible = |wu: f64| area_check_with_tol(&nb(c, wb, wu), 1e-12).satisfied;
                let (mut lo, mut hi) = (0.0, 1.0);
                if feasible(1.0) {
                    lo = 1.0;
                } else {
                    for _ in 0..60 {
                        let m = 0.5 * (lo + hi);
                        if feasible(m) { lo = m } else { hi = m }
                    }
                }
                assert!((fast - lo).abs() < 1e-5, "c={c} w̄={wb}: {fast} vs {lo}");
            }
        }
    }

    #[test]
    fn sup_of_a_is_attained_at_chi_star() {
        for (c, wb, wu) in [(0.5, 0.7, 0.9), (0.9, 0.3, 0.8), (0.2, 1.0, 0.95)] {
            let n = nb(c, wb, wu);
            let star = 0.5 * (wu - wb);
            let raw = |x: f64| (1.0 - (0.5 * c + x) / wu) * (1.0 - (0.5 * c - x) / wb);
            assert!((raw(star) - unconstrained_sup(&n)).abs() < 1e-12);
            let scan = (0..=1023)
                .map(|k| raw(-2.0 + 4.0 * k as f64 / 1023.0))
                .fold(f64::NEG_INFINITY, f64::max);
            assert!(scan <= unconstrained_sup(&n) + 1e-12);
            let check = area_check(&n);
            let inside = (wb - wu).abs() <= c;
            let (lo, hi) = check.interval_i.unwrap();
            assert_eq!(inside, star >= lo - 1e-15 && star <= hi + 1e-15);
        }
    }

    #[test]
    fn area_condition_examples() {
        let lc = canonical();
        let max = lc.derive_capacity().as_battery().unwrap();
        let v = area_condition_holds(&lc, &max).unwrap();
        assert!(!v.holds);
        assert_eq!(v.witness, Some(0.0));
        assert!((v.max_area - 0.125).abs() < 1e-12);
        assert!((parallelogram_area(&lc, &max, 0.0).unwrap() - 0.125).abs() < 1e-15);

        let half = BatterySpec::new(0.25, 0.5, 0.5).unwrap();
        assert!(area_condition_holds(&lc, &half).unwrap().holds);

        let charge_only = BatterySpec::new(0.5, 1.0, 0.0).unwrap();
        assert!(area_condition_holds(&lc, &charge_only).unwrap().holds);

        let too_big = BatterySpec::new(0.5, 1.5, 0.0).unwrap();
        assert!(matches!(area_condition_holds(&lc, &too_big), Err(Error::ExceedsMaximum { .. })));
    }

    #[test]
    fn critical_profile_examples() {
        let lc = canonical();
        let max = BatterySpec::new(0.5, 1.0, 1.0).unwrap();
        let (zb, zu) = critical_profiles(&lc, &max, 0.0, 0.125).unwrap();
        assert!((zb - 0.25).abs() < 1e-15);
        assert_eq!(zu, 0.0);
        for s in [0.0, 0.3, 0.6, 1.0] {
            let (zb, _) = critical_profiles(&lc, &max, 0.25, s).unwrap();
            assert_eq!(zb, lc.upper_at(s));
        }
        let small = BatterySpec::new(0.5, 0.5, 0.5).unwrap();
        for s in [0.0, 0.2, 0.7, 1.0] {
            let (zb, _) = critical_profiles(&lc, &small, 0.0, s).unwrap();
            assert!(zb.abs() < 1e-15);
        }
        assert!(critical_profiles(&lc, &max, 0.3, 0.1).is_err());
    }

    /// Dense midpoint quadrature of the deficiency integrands; independent of
    /// the exact segment integration.
    fn quadrature_oracle(lc: &LoadClass, spec: &BatterySpec, chi: f64, alloc: &AllocationProfile) -> (f64, f64) {
        let n = 200_000;
        let h = lc.window() / n as f64;
        let (mut a, mut b) = (0.0, 0.0);
        for k in 0..n {
            let s = (k as f64 + 0.5) * h;
            let (zb, zu) = critical_profiles(lc, spec, chi, s).unwrap();
            let x = alloc.value_at(s);
            a += (zb - x).max(0.0) * h;
            b += (x - zu).max(0.0) * h;
        }
        (a, b)
    }

    #[test]
    fn deficiency_examples() {
        let lc = canonical();
        let max = BatterySpec::new(0.5, 1.0, 1.0).unwrap();
        let nominal = AllocationProfile::nominal(lc, 2048);
        let r = deficiency_report(&lc, &max, 0.0, &nominal).unwrap();
        assert!((r.integral_delta_bar - 0.0625).abs() < 1e-12);
        assert_eq!(r.budget, 0.0);
        assert!(!r.feasible);
        let (oa, ob) = quadrature_oracle(&lc, &max, 0.0, &nominal);
        assert!((oa - r.integral_delta_bar).abs() < 1e-8);
        assert!((ob - r.integral_delta_under).abs() < 1e-8);

        let zero_volume = BatterySpec::new(0.0, 1.0, 1.0).unwrap();
        let r = deficiency_report(&lc, &zero_volume, 0.0, &nominal).unwrap();
        assert_eq!(r.budget, 0.25);
        assert!(r.feasible);
        let (oa, ob) = quadrature_oracle(&lc, &zero_volume, 0.0, &nominal);
        assert!((oa - r.integral_delta_bar).abs() < 1e-8 && (ob - r.integral_delta_under).abs() < 1e-8);

        let upper = AllocationProfile::upper(lc, 2048);
        for spec in [max, BatterySpec::new(0.2, 0.3, 0.9).unwrap()] {
            let r = deficiency_report(&lc, &spec, spec.half(), &upper).unwrap();
            assert_eq!(r.integral_delta_bar, 0.0);
        }
    }

    #[test]
    fn area_equals_critical_gap_integral() {
        // ∫₀^{T−t_c−t_d} (z̄ − z̲) dσ = A(χ) wherever the base and height are positive
        let lc = canonical();
        let spec = BatterySpec::new(0.5, 1.0, 1.0).unwrap();
        for chi in [-0.1, 0.0, 0.05] {
            let t_c = spec.time_to_full(chi).unwrap();
            let t_d = spec.time_to_empty(chi).unwrap();
            let end = 1.0 - t_c - t_d;
            let n = 100_000;
            let h = end / n as f64;
            let gap: f64 = (0..n)
                .map(|k| {
                    let s = (k as f64 + 0.5) * h;
                    let (zb, zu) = critical_profiles(&lc, &spec, chi, s).unwrap();
                    (zb - zu) * h
                })
                .sum();
            let a = parallelogram_area(&lc, &spec, chi).unwrap();
            assert!((gap - a).abs() < 1e-8, "χ={chi}: {gap} vs {a}");
        }
    }
}
