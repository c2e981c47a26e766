//! Closed-form eclipse and score-distribution formulas.
//!
//! Combinatorial terms are evaluated in the log-gamma domain and exponentiated
//! last, so counts in the 10^5 range neither overflow nor lose precision.
//! Degenerate corners (too few attackers, no honest competition) are given
//! total definitions so every function can be property-tested on a grid.

use statrs::function::gamma::ln_gamma;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalyticsError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("unsupported parameter: {0}")]
    Unsupported(String),
}

fn invalid(msg: impl Into<String>) -> AnalyticsError {
    AnalyticsError::InvalidParameter(msg.into())
}

/// `ln C(n, k)`, or `-inf` when `k > n`.
pub fn ln_binomial(n: u64, k: u64) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    if k == 0 || k == n {
        return 0.0;
    }
    ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
}

/// `C(n, k)` as a float (0 when `k > n`).
pub fn binomial(n: u64, k: u64) -> f64 {
    ln_binomial(n, k).exp()
}

/// `x^a (1-x)^b` with `0^0 = 1`, in log space.
fn ln_beta_kernel(x: f64, a: u64, b: u64) -> f64 {
    let left = if a == 0 { 0.0 } else { a as f64 * x.ln() };
    let right = if b == 0 { 0.0 } else { b as f64 * (-x).ln_1p() };
    left + right
}

/// Density of the `r`-th smallest of `l` i.i.d. Uniform[0,1] draws:
/// `l! / ((r-1)! (l-r)!) · x^(r-1) (1-x)^(l-r)` on `[0, 1]`, zero elsewhere.
pub fn order_stat_pdf(r: u64, l: u64, x: f64) -> Result<f64, AnalyticsError> {
    if r == 0 || r > l {
        return Err(invalid(format!("rank r={r} must satisfy 1 <= r <= L={l}")));
    }
    if !(0.0..=1.0).contains(&x) {
        return Ok(0.0);
    }
    let ln_coef = ln_gamma(l as f64 + 1.0) - ln_gamma(r as f64) - ln_gamma((l - r) as f64 + 1.0);
    Ok((ln_coef + ln_beta_kernel(x, r - 1, l - r)).exp())
}

/// CDF of the minimum of `l` uniforms: `1 - (1-x)^l`, clamped to `[0, 1]`.
pub fn min_order_stat_cdf(l: u64, x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x >= 1.0 {
        1.0
    } else {
        -(l as f64 * (-x).ln_1p()).exp_m1()
    }
}

/// Expectation of the `r`-th order statistic of `l` uniforms: `r / (l + 1)`.
pub fn order_stat_mean(r: u64, l: u64) -> Result<f64, AnalyticsError> {
    if r == 0 || r > l {
        return Err(invalid(format!("rank r={r} must satisfy 1 <= r <= L={l}")));
    }
    Ok(r as f64 / (l as f64 + 1.0))
}

/// Probability that `n_a` attacker requests take all `k` inbound slots against
/// `l` honest requests, all scores i.i.d. uniform:
/// `∏_{j<k} (n_a - j) / (n_a + l - j)`.
pub fn inbound_takeover_prob(n_a: u64, l: u64, k: u64) -> f64 {
    if n_a < k {
        return 0.0;
    }
    if l == 0 {
        return 1.0;
    }
    (0..k).fold(1.0, |acc, j| acc * (n_a - j) as f64 / (n_a + l - j) as f64)
}

/// Inbound takeover with the θ-test thinning the attacker to `round(θ·n_a)`
/// effective identities (ties round away from zero).
pub fn inbound_takeover_prob_with_theta(n_a: u64, l: u64, k: u64, theta: f64) -> Result<f64, AnalyticsError> {
    if !(0.0..=1.0).contains(&theta) {
        return Err(invalid(format!("theta {theta} outside [0, 1]")));
    }
    let effective = (theta * n_a as f64).round() as u64;
    Ok(inbound_takeover_prob(effective, l, k))
}

/// Probability that an attacker with `n_a` identities overtakes all `k`
/// outbound connections of a node that made `l` requests to `n` honest nodes.
///
/// Requires `2 <= k <= l <= n_a`; `n_a = 0` short-circuits to 0. `k = 1` is
/// rejected because the acceptance-position term is undefined there.
pub fn outbound_takeover_prob(n_a: u64, n: u64, l: u64, k: u64) -> Result<f64, AnalyticsError> {
    if k < 2 {
        return Err(AnalyticsError::Unsupported(format!("k={k}: the closed form needs k >= 2")));
    }
    if n_a == 0 {
        return Ok(0.0);
    }
    if k > l {
        return Err(invalid(format!("k={k} exceeds the request count L={l}")));
    }
    if l > n_a {
        return Err(invalid(format!("L={l} exceeds the attacker count N_A={n_a}")));
    }
    let ln_positions = ln_binomial(l - 1, k - 1);
    let mut total = 0.0;
    for m in 1..=(l - (k - 1)) {
        // P(Y = m): first accepted honest request sits at position m
        let ln_py = ln_binomial(l - 1 - m, k - 2) - ln_positions;
        // P(attacker's k-th smallest < honest m-th smallest): at least k of the
        // k+m-1 smallest combined scores are attackers
        let ln_denom = ln_binomial(n_a + n, k + m - 1);
        let inner: f64 = (0..m)
            .map(|j| (ln_binomial(n_a, k + j) + ln_binomial(n, m - 1 - j) - ln_denom).exp())
            .sum();
        total += inner * ln_py.exp();
    }
    Ok(total.clamp(0.0, 1.0))
}

/// Finite-`N` CDF of the smallest accepted outbound score under the
/// geometric acceptance heuristic: `(1 - (1 - kx/L)^N) / (1 - (1 - k/L)^N)`.
pub fn finite_outbound_cdf(x: f64, n: u64, k: u64, l: u64) -> Result<f64, AnalyticsError> {
    if n == 0 || k == 0 {
        return Err(invalid("N and k must be positive"));
    }
    if k > l {
        return Err(invalid(format!("k={k} exceeds L={l}")));
    }
    if x <= 0.0 {
        return Ok(0.0);
    }
    if x >= 1.0 {
        return Ok(1.0);
    }
    let p = k as f64 / l as f64;
    // 1 - (1 - u)^N computed as -expm1(N · ln1p(-u))
    let tail = |u: f64| -(n as f64 * (-u).ln_1p()).exp_m1();
    Ok((tail(p * x) / tail(p)).clamp(0.0, 1.0))
}

/// `N → ∞` limit of [`finite_outbound_cdf`] in the scaled score `x̄ = xN`:
/// `1 - exp(-x̄ k / L)`.
pub fn limiting_outbound_cdf(x_bar: f64, k: u64, l: u64) -> Result<f64, AnalyticsError> {
    if k == 0 || k > l {
        return Err(invalid(format!("need 1 <= k={k} <= L={l}")));
    }
    if x_bar <= 0.0 {
        return Ok(0.0);
    }
    Ok(-(-x_bar * k as f64 / l as f64).exp_m1())
}

/// Rough eclipse probability when attackers behave like honest nodes:
/// `(a / (1 + a))^k` with `a = N_A / N`.
pub fn eclipse_lower_bound(a: f64, k: u32) -> Result<f64, AnalyticsError> {
    if a.is_nan() || a < 0.0 {
        return Err(invalid(format!("attacker ratio {a} must be non-negative")));
    }
    if k == 0 {
        return Err(invalid("k must be at least 1"));
    }
    if a.is_infinite() {
        return Ok(1.0);
    }
    Ok((a / (1.0 + a)).powi(k as i32))
}

/// Chance that `k` slots filled uniformly at random without replacement from
/// `n` honest and `n_a` attacker nodes all go to the attacker:
/// `C(n_a, k) / C(n + n_a, k)`.
pub fn random_choice_eclipse_prob(n: u64, n_a: u64, k: u64) -> f64 {
    if n_a < k {
        return 0.0;
    }
    (ln_binomial(n_a, k) - ln_binomial(n + n_a, k)).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::verify::{enumerate_inbound, enumerate_outbound, simpson};
    use proptest::prelude::*;

    #[test]
    fn uniform_density() {
        for x in [0.0, 0.3, 1.0] {
            assert!((order_stat_pdf(1, 1, x).unwrap() - 1.0).abs() < 1e-12);
        }
        assert_eq!(order_stat_pdf(1, 1, 1.5).unwrap(), 0.0);
        assert_eq!(order_stat_pdf(2, 3, -0.1).unwrap(), 0.0);
    }

    #[test]
    fn min_density_at_zero_is_l() {
        assert!((order_stat_pdf(1, 9, 0.0).unwrap() - 9.0).abs() < 1e-12);
    }

    #[test]
    fn pdf_rank_out_of_range() {
        assert!(order_stat_pdf(0, 5, 0.5).is_err());
        assert!(order_stat_pdf(6, 5, 0.5).is_err());
        assert!(order_stat_mean(0, 5).is_err());
    }

    #[test]
    fn pdf_integrates_to_one() {
        for (r, l) in [(1, 5), (3, 7)] {
            let integral = simpson(|x| order_stat_pdf(r, l, x).unwrap(), 0.0, 1.0, 2000);
            assert!((integral - 1.0).abs() < 1e-10, "(r={r}, L={l}) integral {integral}");
        }
    }

    #[test]
    fn min_pdf_integrates_to_cdf() {
        for l in [1u64, 2, 5, 20, 50, 100] {
            for x in [0.01, 0.1, 0.37, 0.8, 1.0] {
                let q = simpson(|t| order_stat_pdf(1, l, t).unwrap(), 0.0, x, 4000);
                let closed = 1.0 - (1.0 - x).powi(l as i32);
                assert!((q - closed).abs() < 1e-8, "L={l} x={x}: {q} vs {closed}");
                assert!((min_order_stat_cdf(l, x) - closed).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn order_stat_means() {
        assert_eq!(order_stat_mean(1, 1).unwrap(), 0.5);
        assert_eq!(order_stat_mean(2, 3).unwrap(), 0.5);
        assert!((order_stat_mean(1, 9).unwrap() - 0.1).abs() < 1e-15);
    }

    #[test]
    fn pdf_mean_matches_closed_form() {
        for (r, l) in [(1u64, 4u64), (2, 3), (5, 9)] {
            let m = simpson(|x| x * order_stat_pdf(r, l, x).unwrap(), 0.0, 1.0, 2000);
            assert!((m - order_stat_mean(r, l).unwrap()).abs() < 1e-10);
        }
    }

    #[test]
    fn inbound_degenerate_cases() {
        assert_eq!(inbound_takeover_prob(10, 0, 4), 1.0);
        assert_eq!(inbound_takeover_prob(4, 0, 4), 1.0);
        assert_eq!(inbound_takeover_prob(3, 5, 4), 0.0);
        assert_eq!(inbound_takeover_prob(3, 0, 4), 0.0);
    }

    #[test]
    fn inbound_matches_enumeration() {
        let (hits, all) = enumerate_inbound(4, 4, 4);
        assert_eq!((hits, all), (1, 70));
        assert!((inbound_takeover_prob(4, 4, 4) - 1.0 / 70.0).abs() < 1e-15);
        for (n_a, l, k) in [(5, 3, 2), (6, 6, 3), (3, 7, 1), (8, 4, 4)] {
            let (hits, all) = enumerate_inbound(n_a, l, k);
            let p = inbound_takeover_prob(n_a as u64, l as u64, k as u64);
            assert!((p - hits as f64 / all as f64).abs() < 1e-14, "({n_a},{l},{k})");
        }
    }

    #[test]
    fn inbound_factorial_form_agrees() {
        // N_A! (N_A+L-k)! / ((N_A-k)! (N_A+L)!) via log-gamma
        for (n_a, l, k) in [(20u64, 80u64, 4u64), (500, 1000, 8), (80, 5, 4)] {
            let lg = |v: u64| ln_gamma(v as f64 + 1.0);
            let f = (lg(n_a) + lg(n_a + l - k) - lg(n_a - k) - lg(n_a + l)).exp();
            let p = inbound_takeover_prob(n_a, l, k);
            assert!((f - p).abs() <= 1e-10 * p, "{f} vs {p}");
        }
    }

    #[test]
    fn theta_wrapper_rounds() {
        let p = inbound_takeover_prob_with_theta(45, 10, 4, 0.1).unwrap();
        assert_eq!(p, inbound_takeover_prob(5, 10, 4));
        assert!(inbound_takeover_prob_with_theta(45, 10, 4, 1.5).is_err());
    }

    #[test]
    fn outbound_small_case_is_one_sixth() {
        assert!((enumerate_outbound(2, 2, 2, 2) - 1.0 / 6.0).abs() < 1e-15);
        assert!((outbound_takeover_prob(2, 2, 2, 2).unwrap() - 1.0 / 6.0).abs() < 1e-14);
        assert!((binomial(2, 2) / binomial(4, 2) - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn outbound_matches_enumeration() {
        for (n_a, n, l, k) in [(3, 4, 3, 2), (4, 5, 4, 3), (5, 5, 4, 2), (6, 6, 5, 3)] {
            let brute = enumerate_outbound(n_a, n, l, k);
            let p = outbound_takeover_prob(n_a as u64, n as u64, l as u64, k as u64).unwrap();
            assert!((brute - p).abs() < 1e-12, "({n_a},{n},{l},{k}): {brute} vs {p}");
        }
    }

    #[test]
    fn outbound_parameter_errors() {
        assert!(matches!(outbound_takeover_prob(10, 10, 5, 1), Err(AnalyticsError::Unsupported(_))));
        assert_eq!(outbound_takeover_prob(0, 50, 10, 4), Ok(0.0));
        assert!(outbound_takeover_prob(10, 50, 3, 4).is_err());
        assert!(outbound_takeover_prob(5, 50, 10, 4).is_err());
    }

    #[test]
    fn outbound_cdf_limits() {
        assert_eq!(finite_outbound_cdf(0.0, 100, 4, 16).unwrap(), 0.0);
        assert_eq!(finite_outbound_cdf(1.0, 100, 4, 16).unwrap(), 1.0);
        assert!((finite_outbound_cdf(1.0 - 1e-12, 100, 4, 4).unwrap() - 1.0).abs() < 1e-9);
        assert_eq!(limiting_outbound_cdf(0.0, 4, 16).unwrap(), 0.0);
        assert!((limiting_outbound_cdf(std::f64::consts::LN_2, 4, 4).unwrap() - 0.5).abs() < 1e-15);
        assert!(limiting_outbound_cdf(1.0, 5, 4).is_err());
        let n = 10_000u64;
        for i in 0..=200 {
            let x_bar = i as f64 * 0.1;
            let fin = finite_outbound_cdf(x_bar / n as f64, n, 4, 16).unwrap();
            let lim = limiting_outbound_cdf(x_bar, 4, 16).unwrap();
            assert!((fin - lim).abs() <= 1e-3, "x̄={x_bar}");
        }
    }

    #[test]
    fn eclipse_bound_values() {
        assert_eq!(eclipse_lower_bound(0.0, 4).unwrap(), 0.0);
        assert_eq!(eclipse_lower_bound(f64::INFINITY, 4).unwrap(), 1.0);
        assert!(eclipse_lower_bound(1e12, 4).unwrap() > 0.999_999);
        assert_eq!(eclipse_lower_bound(1.0, 4).unwrap(), 1.0 / 16.0);
        assert!(eclipse_lower_bound(-1.0, 4).is_err());
    }

    #[test]
    fn random_choice_model_near_bound() {
        // direct product form of C(500,4)/C(1500,4)
        let direct = (0..4).fold(1.0, |acc, j| acc * (500.0 - j as f64) / (1500.0 - j as f64));
        let p = random_choice_eclipse_prob(1000, 500, 4);
        assert!((p - direct).abs() < 1e-14);
        let bound = eclipse_lower_bound(0.5, 4).unwrap();
        assert!(((p - bound) / bound).abs() < 0.1);
        assert_eq!(random_choice_eclipse_prob(10, 3, 4), 0.0);
    }

    proptest! {
        #[test]
        fn inbound_is_probability_and_monotone(n_a in 0u64..400, l in 0u64..400, k in 1u64..12) {
            let p = inbound_takeover_prob(n_a, l, k);
            prop_assert!((0.0..=1.0).contains(&p));
            prop_assert!(inbound_takeover_prob(n_a, l + 1, k) <= p + 1e-15);
            prop_assert!(inbound_takeover_prob(n_a + 1, l, k) >= p - 1e-15);
        }

        #[test]
        fn outbound_is_probability(k in 2u64..6, extra_l in 0u64..20, extra_na in 0u64..60, n in 1u64..200) {
            let l = k + extra_l;
            let n_a = l + extra_na;
            let p = outbound_takeover_prob(n_a, n, l, k).unwrap();
            prop_assert!((0.0..=1.0).contains(&p));
        }

        #[test]
        fn cdfs_are_monotone(n in 1u64..5000, k in 1u64..8, mult in 1u64..6, a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let l = k * mult;
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let f_lo = finite_outbound_cdf(lo, n, k, l).unwrap();
            let f_hi = finite_outbound_cdf(hi, n, k, l).unwrap();
            prop_assert!((0.0..=1.0).contains(&f_lo) && f_lo <= f_hi + 1e-15);
            let g_lo = limiting_outbound_cdf(lo * 20.0, k, l).unwrap();
            let g_hi = limiting_outbound_cdf(hi * 20.0, k, l).unwrap();
            prop_assert!((0.0..1.0).contains(&g_lo) && g_lo <= g_hi);
            prop_assert!(min_order_stat_cdf(l, lo) <= min_order_stat_cdf(l, hi));
        }

        #[test]
        fn pdf_is_non_negative(l in 1u64..200, r_frac in 0.0f64..1.0, x in -0.5f64..1.5) {
            let r = 1 + ((l - 1) as f64 * r_frac) as u64;
            let v = order_stat_pdf(r, l, x).unwrap();
            prop_assert!(v >= 0.0 && v.is_finite());
        }

        #[test]
        fn eclipse_bound_is_probability(a in 0.0f64..1e6, k in 1u32..20) {
            let p = eclipse_lower_bound(a, k).unwrap();
            prop_assert!((0.0..=1.0).contains(&p));
        }
    }
}
