//! Repeated-run summaries and the Tukey HSD test.
//!
//! Winners and baselines are each trained/tested many times; this module
//! reduces those samples to mean/std and decides pairwise significance with
//! the studentized-range distribution. No closed form exists for that CDF,
//! so it is evaluated by nested Gauss-Legendre quadrature: the outer
//! integral over the pooled-variance scale, the inner over the normal range
//! probability, with the normal domain truncated at +-8.

use std::sync::OnceLock;

use statrs::function::erf::erfc;
use statrs::function::gamma::ln_gamma;

/// Per-run metric samples for one labelled system.
#[derive(Clone, Debug)]
pub struct RunReport {
    pub label: String,
    pub samples: Vec<f64>,
}

impl RunReport {
    pub fn new(label: impl Into<String>, samples: Vec<f64>) -> Self {
        Self {
            label: label.into(),
            samples,
        }
    }
}

/// One pairwise comparison. `p_value` is symmetric under swapping the pair;
/// `mean_diff` is `mean(a) - mean(b)`.
#[derive(Clone, Debug)]
pub struct TukeyResult {
    pub a: String,
    pub b: String,
    pub mean_diff: f64,
    pub q: f64,
    pub p_value: f64,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum StatsError {
    #[error("Tukey HSD needs at least two groups, got {0}")]
    TooFewGroups(usize),
    #[error("group '{0}' needs at least two samples for a significance test")]
    TooFewSamples(String),
}

/// Arithmetic mean and sample standard deviation (n-1 denominator). A single
/// sample reports std 0.
pub fn summarize(samples: &[f64]) -> (f64, f64) {
    assert!(!samples.is_empty(), "empty sample set");
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    if samples.len() < 2 {
        return (mean, 0.0);
    }
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// All-pairs Tukey HSD over `groups`, using the Tukey-Kramer denominator so
/// unequal group sizes are handled. When every sample is identical (pooled
/// variance 0), equal-mean pairs report p = 1 and unequal-mean pairs p = 0.
pub fn tukey_hsd(groups: &[RunReport]) -> Result<Vec<TukeyResult>, StatsError> {
    if groups.len() < 2 {
        return Err(StatsError::TooFewGroups(groups.len()));
    }
    for g in groups {
        if g.samples.len() < 2 {
            return Err(StatsError::TooFewSamples(g.label.clone()));
        }
    }

    let k = groups.len();
    let means: Vec<f64> = groups
        .iter()
        .map(|g| g.samples.iter().sum::<f64>() / g.samples.len() as f64)
        .collect();
    let df: f64 = groups.iter().map(|g| (g.samples.len() - 1) as f64).sum();
    let sse: f64 = groups
        .iter()
        .zip(&means)
        .map(|(g, &m)| g.samples.iter().map(|x| (x - m).powi(2)).sum::<f64>())
        .sum();
    let mse = sse / df;

    let mut results = Vec::new();
    for i in 0..k {
        for j in (i + 1)..k {
            let diff = means[i] - means[j];
            let (q, p) = if mse > 0.0 {
                let ni = groups[i].samples.len() as f64;
                let nj = groups[j].samples.len() as f64;
                let se = (mse / 2.0 * (1.0 / ni + 1.0 / nj)).sqrt();
                let q = diff.abs() / se;
                (q, (1.0 - studentized_range_cdf(q, k, df)).clamp(0.0, 1.0))
            } else if diff == 0.0 {
                (0.0, 1.0)
            } else {
                (f64::INFINITY, 0.0)
            };
            results.push(TukeyResult {
                a: groups[i].label.clone(),
                b: groups[j].label.clone(),
                mean_diff: diff,
                q,
                p_value: p,
            });
        }
    }
    Ok(results)
}

/// P(Q <= q) for the studentized range of `k` groups with `df` degrees of
/// freedom of the pooled variance estimate.
pub fn studentized_range_cdf(q: f64, k: usize, df: f64) -> f64 {
    assert!(k >= 2, "need at least two groups");
    assert!(df >= 1.0, "need at least one degree of freedom");
    if q <= 0.0 {
        return 0.0;
    }

    // Integrate the range probability against the density of
    // s = sqrt(chi^2_df / df). The density mass sits near 1 with spread
    // ~ 1/sqrt(2 df); pad the window generously on both sides.
    let spread = 1.0 / (2.0 * df).sqrt();
    let lo = (1.0 - 12.0 * spread).max(0.0);
    let hi = 1.0 + 12.0 * spread;
    let ln_coef = std::f64::consts::LN_2 + (df / 2.0) * (df / 2.0).ln() - ln_gamma(df / 2.0);

    let cdf = integrate_panels(lo, hi, 8, |s| {
        let ln_density = ln_coef + (df - 1.0) * s.ln() - df * s * s / 2.0;
        ln_density.exp() * normal_range_cdf(q * s, k)
    });
    cdf.clamp(0.0, 1.0)
}

/// CDF of the range of `k` independent standard normal variates, evaluated
/// at `w`: k * integral of phi(z) * [Phi(z) - Phi(z - w)]^(k-1) dz.
fn normal_range_cdf(w: f64, k: usize) -> f64 {
    if w <= 0.0 {
        return 0.0;
    }
    let value = integrate_panels(-8.0, 8.0, 4, |z| {
        let tail = normal_cdf(z) - normal_cdf(z - w);
        normal_pdf(z) * tail.max(0.0).powi(k as i32 - 1)
    });
    (k as f64 * value).clamp(0.0, 1.0)
}

fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

fn normal_pdf(z: f64) -> f64 {
    (-z * z / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Smallest q with `P(Q <= q) >= 1 - alpha`, by bisection.
pub fn studentized_range_critical(alpha: f64, k: usize, df: f64) -> f64 {
    assert!((0.0..1.0).contains(&alpha) && alpha > 0.0);
    let target = 1.0 - alpha;
    let (mut lo, mut hi) = (0.0f64, 100.0f64);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if studentized_range_cdf(mid, k, df) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

const GL_NODES: usize = 128;

/// Composite Gauss-Legendre quadrature: `panels` equal panels of 128 nodes.
fn integrate_panels<F: Fn(f64) -> f64>(lo: f64, hi: f64, panels: usize, f: F) -> f64 {
    let (nodes, weights) = gauss_legendre_128();
    let width = (hi - lo) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let a = lo + width * p as f64;
        let half = width / 2.0;
        let mid = a + half;
        for (x, w) in nodes.iter().zip(weights) {
            total += w * half * f(mid + half * x);
        }
    }
    total
}

/// Nodes/weights for 128-point Gauss-Legendre on [-1, 1], via Newton
/// iteration on the Legendre recurrence.
fn gauss_legendre_128() -> (&'static [f64; GL_NODES], &'static [f64; GL_NODES]) {
    static CACHE: OnceLock<([f64; GL_NODES], [f64; GL_NODES])> = OnceLock::new();
    let (nodes, weights) = CACHE.get_or_init(|| {
        let n = GL_NODES;
        let mut nodes = [0.0; GL_NODES];
        let mut weights = [0.0; GL_NODES];
        for i in 0..n {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                // Legendre P_n(x) and derivative by recurrence.
                let (mut p0, mut p1) = (1.0f64, x);
                for j in 2..=n {
                    let p2 = ((2 * j - 1) as f64 * x * p1 - (j - 1) as f64 * p0) / j as f64;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-15 {
                    break;
                }
            }
            nodes[i] = -x;
            weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
        }
        (nodes, weights)
    });
    (nodes, weights)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summarize_reference_values() {
        assert_eq!(summarize(&[1.0, 1.0, 1.0]), (1.0, 0.0));
        let (mean, std) = summarize(&[0.0, 2.0]);
        assert_eq!(mean, 1.0);
        assert!((std - std::f64::consts::SQRT_2).abs() < 1e-15);
        let (mean, std) = summarize(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]);
        assert_eq!(mean, 5.0);
        // Sample variance 32/7.
        assert!((std - (32.0f64 / 7.0).sqrt()).abs() < 1e-12);
        assert!((std - 2.1381).abs() < 1e-4);
        assert_eq!(summarize(&[3.5]), (3.5, 0.0));
    }

    #[test]
    fn quadrature_integrates_polynomials_exactly() {
        let v = integrate_panels(0.0, 2.0, 2, |x| 3.0 * x * x);
        assert!((v - 8.0).abs() < 1e-12);
        let v = integrate_panels(-1.0, 1.0, 1, |x| x.powi(7) + 1.0);
        assert!((v - 2.0).abs() < 1e-12);
    }

    #[test]
    fn cdf_sanity() {
        assert_eq!(studentized_range_cdf(0.0, 3, 10.0), 0.0);
        let mut prev = 0.0;
        for i in 1..=20 {
            let q = i as f64 * 0.5;
            let c = studentized_range_cdf(q, 3, 10.0);
            assert!(c >= prev, "CDF not monotone at q={q}");
            prev = c;
        }
        assert!(studentized_range_cdf(50.0, 3, 10.0) > 1.0 - 1e-9);
    }

    #[test]
    fn critical_value_matches_published_table() {
        // q(alpha=0.05, k=3, df=10) from the studentized-range tables.
        let q = studentized_range_critical(0.05, 3, 10.0);
        assert!((q - 3.877).abs() < 0.01, "q = {q}");
    }

    #[test]
    fn identical_groups_are_insignificant() {
        let g = |label: &str| RunReport::new(label, vec![1.0, 2.0, 3.0]);
        let results = tukey_hsd(&[g("a"), g("b"), g("c")]).unwrap();
        assert_eq!(results.len(), 3);
        for r in results {
            assert_eq!(r.q, 0.0);
            assert!((r.p_value - 1.0).abs() < 1e-9, "p = {}", r.p_value);
        }
    }

    #[test]
    fn extreme_separation_is_significant() {
        let a = RunReport::new("a", (0..30).map(|i| (i % 3) as f64 * 0.01).collect());
        let b = RunReport::new(
            "b",
            (0..30).map(|i| 100.0 + (i % 3) as f64 * 0.01).collect(),
        );
        let results = tukey_hsd(&[a, b]).unwrap();
        assert!(results[0].p_value < 0.001);
    }

    #[test]
    fn degenerate_variance_rule() {
        let a = RunReport::new("a", vec![5.0, 5.0]);
        let b = RunReport::new("b", vec![5.0, 5.0]);
        let c = RunReport::new("c", vec![6.0, 6.0]);
        let results = tukey_hsd(&[a, b, c]).unwrap();
        let by_pair = |x: &str, y: &str| {
            results
                .iter()
                .find(|r| (r.a == x && r.b == y) || (r.a == y && r.b == x))
                .unwrap()
                .p_value
        };
        assert_eq!(by_pair("a", "b"), 1.0);
        assert_eq!(by_pair("a", "c"), 0.0);
        assert_eq!(by_pair("b", "c"), 0.0);
    }

    #[test]
    fn p_value_nonincreasing_in_mean_separation() {
        let base: Vec<f64> = (0..10).map(|i| i as f64 * 0.1).collect();
        let mut prev_p = 1.0;
        for sep in [0.0, 0.2, 0.5, 1.0, 2.0, 5.0] {
            let a = RunReport::new("a", base.clone());
            let b = RunReport::new("b", base.iter().map(|x| x + sep).collect());
            let p = tukey_hsd(&[a, b]).unwrap()[0].p_value;
            assert!(p <= prev_p + 1e-12, "p jumped at separation {sep}");
            prev_p = p;
        }
    }

    #[test]
    fn pair_symmetry() {
        let a = RunReport::new("a", vec![1.0, 2.0, 3.0, 2.5]);
        let b = RunReport::new("b", vec![2.0, 3.0, 4.0, 3.5]);
        let ab = tukey_hsd(&[a.clone(), b.clone()]).unwrap()[0].clone();
        let ba = tukey_hsd(&[b, a]).unwrap()[0].clone();
        assert_eq!(ab.p_value, ba.p_value);
        assert_eq!(ab.mean_diff, -ba.mean_diff);
    }

    #[test]
    fn preconditions_are_checked() {
        let err = tukey_hsd(&[RunReport::new("a", vec![1.0, 2.0])]).unwrap_err();
        assert_eq!(err, StatsError::TooFewGroups(1));
        let err = tukey_hsd(&[
            RunReport::new("a", vec![1.0, 2.0]),
            RunReport::new("b", vec![1.0]),
        ])
        .unwrap_err();
        assert_eq!(err, StatsError::TooFewSamples("b".into()));
    }
}
