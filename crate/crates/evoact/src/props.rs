//! Shape properties of activation functions.
//!
//! Four flags describe what a function looks like: monotonically
//! nondecreasing, zero on the nonpositive axis (ReLU-style hard zeroes),
//! upper unbounded, and lower unbounded. The flags are decided numerically
//! on fixed grids, so the analysis is deterministic; per-generation
//! population fractions of each flag are what the run log and props.csv
//! track.

use serde::Serialize;

use crate::expr::{ActivationTree, NonFinite};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct PropertyVector {
    pub monotone_nondecreasing: bool,
    pub zero_on_nonpositive: bool,
    pub upper_unbounded: bool,
    pub lower_unbounded: bool,
}

impl PropertyVector {
    pub fn as_flags(&self) -> [bool; 4] {
        [
            self.monotone_nondecreasing,
            self.zero_on_nonpositive,
            self.upper_unbounded,
            self.lower_unbounded,
        ]
    }
}

/// Probe layout for [`analyze_fn`]. The defaults classify every primitive
/// and all reported winners correctly; they are exposed so sensitivity
/// studies can vary them.
#[derive(Clone, Debug)]
pub struct PropertyGrid {
    /// Inclusive range of the dense grid used for the monotone and zero
    /// checks.
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
    /// Tolerance for both checks, relative to max(1, |f|).
    pub tolerance: f64,
    /// Unboundedness probes run at +-10^k for k in 1..=probe_decades and
    /// require |f| beyond this threshold at the last probe.
    pub probe_decades: u32,
    pub unbounded_threshold: f64,
}

impl Default for PropertyGrid {
    fn default() -> Self {
        Self {
            lo: -100.0,
            hi: 100.0,
            points: 10_001,
            tolerance: 1e-9,
            probe_decades: 6,
            unbounded_threshold: 1e3,
        }
    }
}

/// Decides the four properties of a tree on the default grid.
pub fn analyze(tree: &ActivationTree) -> PropertyVector {
    analyze_fn(|x| tree.eval(x), &PropertyGrid::default())
}

/// Decides the four properties of an arbitrary scalar function.
///
/// A non-finite evaluation fails the monotone and zero checks outright; on
/// the unboundedness probes it is read as divergence with the sign of the
/// last finite probe.
pub fn analyze_fn<F>(f: F, grid: &PropertyGrid) -> PropertyVector
where
    F: Fn(f64) -> Result<f64, NonFinite>,
{
    let mut monotone = true;
    let mut zero = true;
    let step = (grid.hi - grid.lo) / (grid.points - 1) as f64;
    let mut prev: Option<f64> = None;
    for i in 0..grid.points {
        let x = grid.lo + step * i as f64;
        let Ok(v) = f(x) else {
            monotone = false;
            zero = false;
            break;
        };
        if let Some(p) = prev {
            if v < p - grid.tolerance * p.abs().max(1.0) {
                monotone = false;
            }
        }
        if x <= 0.0 && v.abs() > grid.tolerance {
            zero = false;
        }
        prev = Some(v);
        if !monotone && !zero {
            break;
        }
    }

    let upper = diverges(&f, grid, 1.0);
    let lower = diverges(&f, grid, -1.0);
    PropertyVector {
        monotone_nondecreasing: monotone,
        zero_on_nonpositive: zero,
        upper_unbounded: upper,
        lower_unbounded: lower,
    }
}

/// Walks f(sign * 10^k). Unbounded means the probe sequence moves strictly
/// in the sign's direction and clears the threshold, or overflows while the
/// last finite value already pointed that way. f(sign * 1) only seeds the
/// overflow fallback; it takes no part in the strictness check.
fn diverges<F>(f: &F, grid: &PropertyGrid, sign: f64) -> bool
where
    F: Fn(f64) -> Result<f64, NonFinite>,
{
    let mut last = match f(sign) {
        Ok(v) => v,
        Err(NonFinite) => return false,
    };
    let mut first_probe = true;
    for k in 1..=grid.probe_decades {
        match f(sign * 10f64.powi(k as i32)) {
            Ok(v) => {
                if !first_probe && sign * v <= sign * last {
                    return false;
                }
                first_probe = false;
                last = v;
            }
            Err(NonFinite) => return sign * last > 0.0,
        }
    }
    sign * last > grid.unbounded_threshold
}

/// Per-generation fraction of the population carrying each flag.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PropertyFractions {
    pub zero_on_nonpositive: f64,
    pub monotone: f64,
    pub upper_unbounded: f64,
    pub lower_unbounded: f64,
}

pub fn population_fractions<'a, I>(vectors: I) -> PropertyFractions
where
    I: IntoIterator<Item = &'a PropertyVector>,
{
    let (mut n, mut zero, mut mono, mut up, mut low) = (0usize, 0usize, 0usize, 0usize, 0usize);
    for v in vectors {
        n += 1;
        zero += usize::from(v.zero_on_nonpositive);
        mono += usize::from(v.monotone_nondecreasing);
        up += usize::from(v.upper_unbounded);
        low += usize::from(v.lower_unbounded);
    }
    assert!(n > 0, "empty population");
    let frac = |k: usize| k as f64 / n as f64;
    PropertyFractions {
        zero_on_nonpositive: frac(zero),
        monotone: frac(mono),
        upper_unbounded: frac(up),
        lower_unbounded: frac(low),
    }
}
