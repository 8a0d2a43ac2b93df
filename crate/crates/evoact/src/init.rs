//! Weight-initialization schemes.
//!
//! The eleven schemes the initialization gene can take, parameterized by the
//! receiving layer's fan-in/fan-out. Formulas follow the defaults of the
//! tensor framework they are named after: fan-based stddevs/limits for the
//! glorot/he/lecun families, 0.05 for the plain random families, and a QR
//! factorization with positive-diagonal sign convention for `orthogonal`.
//! Biases initialize to zero everywhere; only kernels are sampled here.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::rng::Stream;

/// Stddev of a standard normal truncated to two standard deviations. Used
/// by `variance_scaling` so the post-truncation variance matches the target.
const TWO_SIGMA_TRUNCATION_STD: f64 = 0.879_625_661_034_239_8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitScheme {
    RandomNormal,
    RandomUniform,
    TruncatedNormal,
    VarianceScaling,
    Orthogonal,
    LecunUniform,
    LecunNormal,
    GlorotUniform,
    GlorotNormal,
    HeNormal,
    HeUniform,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("unknown weight initialization scheme '{0}'")]
pub struct UnknownScheme(pub String);

impl InitScheme {
    pub const ALL: [InitScheme; 11] = [
        InitScheme::RandomNormal,
        InitScheme::RandomUniform,
        InitScheme::TruncatedNormal,
        InitScheme::VarianceScaling,
        InitScheme::Orthogonal,
        InitScheme::LecunUniform,
        InitScheme::LecunNormal,
        InitScheme::GlorotUniform,
        InitScheme::GlorotNormal,
        InitScheme::HeNormal,
        InitScheme::HeUniform,
    ];

    /// Canonical snake_case name used in config files and reports.
    pub fn name(self) -> &'static str {
        match self {
            InitScheme::RandomNormal => "random_normal",
            InitScheme::RandomUniform => "random_uniform",
            InitScheme::TruncatedNormal => "truncated_normal",
            InitScheme::VarianceScaling => "variance_scaling",
            InitScheme::Orthogonal => "orthogonal",
            InitScheme::LecunUniform => "lecun_uniform",
            InitScheme::LecunNormal => "lecun_normal",
            InitScheme::GlorotUniform => "glorot_uniform",
            InitScheme::GlorotNormal => "glorot_normal",
            InitScheme::HeNormal => "he_normal",
            InitScheme::HeUniform => "he_uniform",
        }
    }

    pub fn from_name(name: &str) -> Result<Self, UnknownScheme> {
        Self::ALL
            .into_iter()
            .find(|s| s.name() == name)
            .ok_or_else(|| UnknownScheme(name.to_string()))
    }
}

/// Samples a `rows x cols` kernel under `scheme`. Each call should receive a
/// fresh sub-stream so repeated invocations are independently seeded.
pub fn sample_weights(
    scheme: InitScheme,
    fan_in: usize,
    fan_out: usize,
    rows: usize,
    cols: usize,
    rng: &mut Stream,
) -> Array2<f64> {
    assert!(fan_in >= 1 && fan_out >= 1, "fans must be positive");
    assert!(rows * cols >= 1, "empty kernel");
    let fan_in = fan_in as f64;
    let fan_out = fan_out as f64;
    match scheme {
        InitScheme::RandomNormal => fill_normal(rows, cols, 0.05, rng),
        InitScheme::RandomUniform => fill_uniform(rows, cols, 0.05, rng),
        InitScheme::TruncatedNormal => fill_truncated(rows, cols, 0.05, rng),
        InitScheme::VarianceScaling => {
            let target = (1.0 / fan_in).sqrt();
            fill_truncated(rows, cols, target / TWO_SIGMA_TRUNCATION_STD, rng)
        }
        InitScheme::Orthogonal => orthogonal(rows, cols, rng),
        InitScheme::LecunUniform => fill_uniform(rows, cols, (3.0 / fan_in).sqrt(), rng),
        InitScheme::LecunNormal => fill_normal(rows, cols, (1.0 / fan_in).sqrt(), rng),
        InitScheme::GlorotUniform => {
            fill_uniform(rows, cols, (6.0 / (fan_in + fan_out)).sqrt(), rng)
        }
        InitScheme::GlorotNormal => fill_normal(rows, cols, (2.0 / (fan_in + fan_out)).sqrt(), rng),
        InitScheme::HeNormal => fill_normal(rows, cols, (2.0 / fan_in).sqrt(), rng),
        InitScheme::HeUniform => fill_uniform(rows, cols, (6.0 / fan_in).sqrt(), rng),
    }
}

fn fill_normal(rows: usize, cols: usize, std: f64, rng: &mut Stream) -> Array2<f64> {
    let dist = Normal::new(0.0, std).expect("valid stddev");
    Array2::from_shape_simple_fn((rows, cols), || dist.sample(rng))
}

fn fill_uniform(rows: usize, cols: usize, limit: f64, rng: &mut Stream) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-limit..limit))
}

fn fill_truncated(rows: usize, cols: usize, std: f64, rng: &mut Stream) -> Array2<f64> {
    let dist = Normal::new(0.0, std).expect("valid stddev");
    Array2::from_shape_simple_fn((rows, cols), || loop {
        let v = dist.sample(rng);
        if v.abs() <= 2.0 * std {
            break v;
        }
    })
}

/// Q factor of a standard-normal matrix, diagonal sign-corrected so the
/// factorization is unique, gain 1. The shorter dimension is orthonormal.
fn orthogonal(rows: usize, cols: usize, rng: &mut Stream) -> Array2<f64> {
    let (big, small) = (rows.max(cols), rows.min(cols));
    let a = fill_normal(big, small, 1.0, rng);
    let q = qr_orthonormal(&a);
    if rows >= cols {
        q
    } else {
        q.t().to_owned()
    }
}

/// Orthonormal basis of the columns of `a` (`big x small`, full column rank)
/// via modified Gram-Schmidt with re-orthogonalization. The R diagonal is
/// positive by construction, which is exactly the sign-corrected convention.
fn qr_orthonormal(a: &Array2<f64>) -> Array2<f64> {
    let (n, m) = a.dim();
    debug_assert!(n >= m);
    let mut q = a.clone();
    for j in 0..m {
        let mut v: Array1<f64> = q.column(j).to_owned();
        for _ in 0..2 {
            for i in 0..j {
                let qi = q.column(i);
                let proj = qi.dot(&v);
                v.scaled_add(-proj, &qi);
            }
        }
        let norm = v.dot(&v).sqrt();
        assert!(norm > 0.0, "rank-deficient random matrix");
        v.mapv_inplace(|x| x / norm);
        q.column_mut(j).assign(&v);
    }
    q
}
