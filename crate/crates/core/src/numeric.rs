//! Small numerical helpers: exact piecewise-linear quadrature, water-filling,
//! and 9-significant-digit float formatting.

/// Trapezoid rule over a non-decreasing grid. Zero-width intervals contribute
/// nothing, so a repeated node encodes a jump.
pub fn trapezoid(grid: &[f64], values: &[f64]) -> f64 {
    debug_assert_eq!(grid.len(), values.len());
    grid.windows(2)
        .zip(values.windows(2))
        .map(|(g, v)| 0.5 * (v[0] + v[1]) * (g[1] - g[0]))
        .sum()
}

/// Exact integral of `max(0, f)` over `[a, b]` for linear `f` with end values `fa`, `fb`.
pub fn positive_part_linear(a: f64, b: f64, fa: f64, fb: f64) -> f64 {
    let w = b - a;
    if w <= 0.0 {
        return 0.0;
    }
    if fa >= 0.0 && fb >= 0.0 {
        0.5 * (fa + fb) * w
    } else if fa <= 0.0 && fb <= 0.0 {
        0.0
    } else {
        let pos = fa.max(fb);
        let neg = -fa.min(fb);
        0.5 * pos * pos / (pos + neg) * w
    }
}

/// Sorted, deduplicated copy of `points` restricted to `[lo, hi]`.
pub fn sorted_nodes(points: impl IntoIterator<Item = f64>, lo: f64, hi: f64) -> Vec<f64> {
    let mut v: Vec<f64> = points
        .into_iter()
        .filter(|p| p.is_finite() && *p >= lo && *p <= hi)
        .collect();
    v.sort_by(f64::total_cmp);
    v.dedup_by(|a, b| (*a - *b).abs() <= 1e-15 * (1.0 + b.abs()));
    v
}

/// Solve `sum_i clamp(level + offset[i], lo[i], hi[i]) = total` for `level` and
/// return the clamped values. Returns `None` when `total` lies outside
/// `[sum lo, sum hi]`.
pub fn water_fill(offset: &[f64], lo: &[f64], hi: &[f64], total: f64) -> Option<Vec<f64>> {
    let n = offset.len();
    let sum_lo: f64 = lo.iter().sum();
    let sum_hi: f64 = hi.iter().sum();
    let scale = 1.0 + sum_lo.abs().max(sum_hi.abs());
    if total < sum_lo - 1e-12 * scale || total > sum_hi + 1e-12 * scale {
        return None;
    }
    if total <= sum_lo {
        return Some(lo.to_vec());
    }
    if total >= sum_hi {
        return Some(hi.to_vec());
    }
    let mut events: Vec<(f64, i32)> = Vec::with_capacity(2 * n);
    for i in 0..n {
        if hi[i] > lo[i] {
            events.push((lo[i] - offset[i], 1));
            events.push((hi[i] - offset[i], -1));
        }
    }
    events.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.cmp(&a.1)));
    let mut f = sum_lo;
    let mut slope = 0i32;
    let mut prev = events.first().map(|e| e.0).unwrap_or(0.0);
    let mut level = prev;
    for &(pos, d) in &events {
        let next = f + slope as f64 * (pos - prev);
        if slope > 0 && next >= total {
            level = prev + (total - f) / slope as f64;
            break;
        }
        f = next;
        prev = pos;
        level = pos;
        slope += d;
    }
    Some(
        (0..n)
            .map(|i| (level + offset[i]).clamp(lo[i], hi[i].max(lo[i])))
            .collect(),
    )
}

/// Format like C's `%.9g`.
pub fn fmt9(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x.is_nan() {
            "nan".into()
        } else if x.is_infinite() {
            if x > 0.0 { "inf".into() } else { "-inf".into() }
        } else {
            "0".into()
        };
    }
    let sci = format!("{:.8e}", x);
    let (mant, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("exponent digits");
    if (-5..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        trim_zeros(format!("{:.*}", decimals, x))
    } else {
        let mant = trim_zeros(mant.to_string());
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{}{:02}", mant, sign, exp.abs())
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        let t = s.trim_end_matches('0').trim_end_matches('.');
        if t == "-0" { "0".into() } else { t.to_string() }
    } else {
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fmt9_matches_printf_g() {
        assert_eq!(fmt9(0.5), "0.5");
        assert_eq!(fmt9(1.0), "1");
        assert_eq!(fmt9(-0.0), "0");
        assert_eq!(fmt9(1.0 / 3.0), "0.333333333");
        assert_eq!(fmt9(123456789.0), "123456789");
        assert_eq!(fmt9(1234567890.0), "1.23456789e+09");
        assert_eq!(fmt9(1.5e-7), "1.5e-07");
        assert_eq!(fmt9(0.0001), "0.0001");
        assert_eq!(fmt9(-2.25), "-2.25");
        assert_eq!(fmt9(0.1 + 0.2), "0.3");
    }

    #[test]
    fn positive_part_crossing() {
        // f = x - 0.5 on [0, 1]: positive area 0.125
        assert!((positive_part_linear(0.0, 1.0, -0.5, 0.5) - 0.125).abs() < 1e-15);
        assert_eq!(positive_part_linear(0.0, 1.0, -1.0, -0.1), 0.0);
        assert!((positive_part_linear(0.0, 2.0, 1.0, 3.0) - 4.0).abs() < 1e-15);
    }

    #[test]
    fn water_fill_levels_lowest_first() {
        // three loads at energies 0, 1, 2 raised to a common level with total 4.5
        let offset = [0.0, 0.0, 0.0];
        let lo = [0.0, 1.0, 2.0];
        let hi = [5.0, 5.0, 5.0];
        let y = water_fill(&offset, &lo, &hi, 4.5).unwrap();
        assert!((y[0] - 1.25).abs() < 1e-12 && (y[1] - 1.25).abs() < 1e-12 && y[2] == 2.0);
        assert!(water_fill(&offset, &lo, &hi, 2.0).is_none());
        assert!(water_fill(&offset, &lo, &hi, 16.0).is_none());
    }
}
