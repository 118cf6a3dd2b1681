//! Seeded samplers for the synthetic benchmarks: d-dimensional Gaussian
//! pairs with identity covariance and the six 2-D shapes.

pub mod rng;
mod shapes;

pub use shapes::{sample_shape2d, sample_shape2d_from, Shape2D};

use crate::autodiff::Tensor;
use crate::metrics::GaussianPairSpec;
use rng::{role, trial_stream, NormalSource};

/// Where a sample pair came from, carried along for provenance.
#[derive(Debug, Clone)]
pub enum SourceSpec {
    Gaussian(GaussianPairSpec),
    Shape(Shape2D),
    Custom,
}

/// Two labeled point sets: `x` drawn from P (n×d) and `z` from Q (m×d).
#[derive(Debug, Clone)]
pub struct SamplePair {
    pub x: Tensor,
    pub z: Tensor,
    pub seed: u64,
    pub source: SourceSpec,
}

impl SamplePair {
    pub fn from_tensors(x: Tensor, z: Tensor) -> SamplePair {
        assert_eq!(x.cols(), z.cols(), "X and Z must share a dimension");
        SamplePair {
            x,
            z,
            seed: 0,
            source: SourceSpec::Custom,
        }
    }

    pub fn dim(&self) -> usize {
        self.x.cols()
    }
}

/// `n` i.i.d. draws from N(mu, I_d) using the given normal source.
pub fn sample_gaussian(mu: &[f64], n: usize, src: &mut NormalSource) -> Tensor {
    let d = mu.len();
    let mut data = Vec::with_capacity(n * d);
    for _ in 0..n {
        for &m in mu {
            data.push(m + src.next());
        }
    }
    Tensor::new(n, d, data)
}

/// Sample `X ~ N(mu_p, I)` (n points) and `Z ~ N(mu_q, I)` (m points).
/// X and Z come from disjoint sub-streams of `seed`, so the X bytes are
/// independent of `m` and vice versa.
pub fn sample_gaussian_pair(spec: &GaussianPairSpec, n: usize, m: usize, seed: u64) -> SamplePair {
    sample_gaussian_pair_for_trial(spec, n, m, seed, 0)
}

/// Trial-indexed variant used by the benchmark harness.
pub fn sample_gaussian_pair_for_trial(
    spec: &GaussianPairSpec,
    n: usize,
    m: usize,
    seed: u64,
    trial: u64,
) -> SamplePair {
    assert!(n >= 1 && m >= 1);
    let mut src_x = NormalSource::new(trial_stream(seed, trial, role::SAMPLE_X));
    let mut src_z = NormalSource::new(trial_stream(seed, trial, role::SAMPLE_Z));
    SamplePair {
        x: sample_gaussian(&spec.mu_p, n, &mut src_x),
        z: sample_gaussian(&spec.mu_q, m, &mut src_z),
        seed,
        source: SourceSpec::Gaussian(spec.clone()),
    }
}

/// CSV dump with header `dim0,...,dim{d-1},source`, source ∈ {P, Q}.
pub fn dump_csv(pair: &SamplePair) -> String {
    let d = pair.dim();
    let mut out = String::new();
    for j in 0..d {
        if j > 0 {
            out.push(',');
        }
        out.push_str(&format!("dim{j}"));
    }
    out.push_str(",source\n");
    let mut write_rows = |t: &Tensor, tag: &str| {
        for r in 0..t.rows() {
            for j in 0..d {
                out.push_str(&format!("{},", t.get(r, j)));
            }
            out.push_str(tag);
            out.push('\n');
        }
    };
    write_rows(&pair.x, "P");
    write_rows(&pair.z, "Q");
    out
}
