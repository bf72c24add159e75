//! Small numeric and formatting helpers shared across modules.

/// Compensated (Neumaier) summation: order-independent aggregation error
/// of one or two ulps regardless of the number of terms.
pub fn kahan_sum(xs: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for x in xs {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Format a float with 10 significant digits, trimming the representation
/// like `%.10g` (fixed notation for moderate exponents, scientific otherwise).
pub fn fmt_sig10(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let exp = x.abs().log10().floor() as i32;
    let s = if (-4..10).contains(&exp) {
        let decimals = (9 - exp).max(0) as usize;
        format!("{:.*}", decimals, x)
    } else {
        return format!("{:.9e}", x);
    };
    // trim trailing zeros (and a dangling decimal point)
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

/// `j*dt` grid index of the last node at or below time `t` (floor lookup
/// with a one-ulp-scale guard so exact grid times are not rounded down).
pub fn floor_index(t: f64, dt: f64, n_steps: usize) -> usize {
    if t <= 0.0 {
        return 0;
    }
    let j = ((t + 1e-9 * dt.max(1e-12)) / dt).floor() as usize;
    j.min(n_steps)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kahan_handles_cancellation() {
        let xs = vec![1e16, 1.0, -1e16];
        assert_eq!(kahan_sum(xs), 1.0);
    }

    #[test]
    fn kahan_matches_exact_small_sum() {
        let xs: Vec<f64> = (1..=1000).map(|i| i as f64).collect();
        assert_eq!(kahan_sum(xs), 500500.0);
    }

    #[test]
    fn sig10_formats() {
        assert_eq!(fmt_sig10(0.0), "0");
        assert_eq!(fmt_sig10(77.8), "77.8");
        assert_eq!(fmt_sig10(1.0), "1");
        assert_eq!(fmt_sig10(0.5), "0.5");
        assert_eq!(fmt_sig10(1234.56789012345), "1234.56789");
        assert_eq!(fmt_sig10(12.34567894321), "12.34567894");
        assert_eq!(fmt_sig10(1e12), "1.000000000e12");
    }

    #[test]
    fn floor_index_snaps_to_grid() {
        assert_eq!(floor_index(1.0, 0.01, 100), 100);
        assert_eq!(floor_index(1.0 - 1e-13, 0.01, 100), 100); // fp noise, not a real gap
        assert_eq!(floor_index(0.999, 0.01, 100), 99);
        assert_eq!(floor_index(0.9949, 0.01, 100), 99);
        assert_eq!(floor_index(0.0, 0.01, 100), 0);
        assert_eq!(floor_index(5.0, 0.01, 100), 100);
    }
}
