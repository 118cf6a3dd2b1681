//! Six 2-D benchmark shapes. The literature names these datasets without
//! defining them, so the recipes below are frozen here (and in
//! `docs/formats.md`) as the reference definitions for this crate.
//!
//! | shape  | recipe                                                          |
//! |--------|-----------------------------------------------------------------|
//! | mog    | 8 equal-weight Gaussians, means on a circle of radius 2, std 0.1 |
//! | banana | (x, y₀) ~ N(0, I₂), warp y = y₀ + 0.5·x² − 0.5                   |
//! | rings  | two circles r ∈ {1, 2}, uniform angle, radial noise std 0.1      |
//! | square | uniform on the boundary of [−2, 2]², plus N(0, 0.1²·I₂) noise    |
//! | cosine | x ~ U(−2, 2), y = cos(πx) + 0.1·N(0, 1)                          |
//! | funnel | v ~ N(0, 1), x ~ N(0, exp(v/2)²), point (x, v) clipped to box    |
//!
//! Only the funnel is clipped; every shape's samples lie inside a documented
//! bounding box (see [`Shape2D::bounding_box`]).

use super::rng::{below, role, stream, uniform01, uniform_in, NormalSource};
use crate::autodiff::Tensor;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape2D {
    MoG,
    Banana,
    Rings,
    Square,
    Cosine,
    Funnel,
}

impl Shape2D {
    pub const ALL: [Shape2D; 6] = [
        Shape2D::MoG,
        Shape2D::Banana,
        Shape2D::Rings,
        Shape2D::Square,
        Shape2D::Cosine,
        Shape2D::Funnel,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Shape2D::MoG => "mog",
            Shape2D::Banana => "banana",
            Shape2D::Rings => "rings",
            Shape2D::Square => "square",
            Shape2D::Cosine => "cosine",
            Shape2D::Funnel => "funnel",
        }
    }

    pub fn parse(s: &str) -> Result<Shape2D> {
        match s.to_ascii_lowercase().as_str() {
            "mog" => Ok(Shape2D::MoG),
            "banana" => Ok(Shape2D::Banana),
            "rings" => Ok(Shape2D::Rings),
            "square" => Ok(Shape2D::Square),
            "cosine" => Ok(Shape2D::Cosine),
            "funnel" => Ok(Shape2D::Funnel),
            other => Err(Error::UnknownShape(other.to_string())),
        }
    }

    /// `((x_lo, x_hi), (y_lo, y_hi))` containing all samples. Boxes leave a
    /// 9σ margin on unbounded noise terms; the funnel is clipped hard.
    pub fn bounding_box(&self) -> ((f64, f64), (f64, f64)) {
        match self {
            Shape2D::MoG => ((-4.0, 4.0), (-4.0, 4.0)),
            Shape2D::Banana => ((-9.0, 9.0), (-10.0, 50.0)),
            Shape2D::Rings => ((-4.0, 4.0), (-4.0, 4.0)),
            Shape2D::Square => ((-4.0, 4.0), (-4.0, 4.0)),
            Shape2D::Cosine => ((-2.0, 2.0), (-2.0, 2.0)),
            Shape2D::Funnel => ((-4.0, 4.0), (-4.0, 4.0)),
        }
    }

    /// Mode centers of the MoG shape, used by mode-coverage diagnostics.
    pub fn mog_centers() -> Vec<[f64; 2]> {
        (0..8)
            .map(|k| {
                let a = 2.0 * std::f64::consts::PI * k as f64 / 8.0;
                [2.0 * a.cos(), 2.0 * a.sin()]
            })
            .collect()
    }
}

/// Sample `n` points from `shape` using an explicit normal source, for
/// callers that manage their own streams (e.g. separate validation splits).
pub fn sample_shape2d_from(shape: Shape2D, n: usize, src: &mut NormalSource) -> Tensor {
    let mut data = Vec::with_capacity(n * 2);
    let centers = Shape2D::mog_centers();
    for _ in 0..n {
        let (x, y) = match shape {
            Shape2D::MoG => {
                let k = below(src.rng_mut(), 8) as usize;
                let c = centers[k];
                (c[0] + 0.1 * src.next(), c[1] + 0.1 * src.next())
            }
            Shape2D::Banana => {
                let x = src.next();
                let y0 = src.next();
                (x, y0 + 0.5 * x * x - 0.5)
            }
            Shape2D::Rings => {
                let ring = if below(src.rng_mut(), 2) == 0 {
                    1.0
                } else {
                    2.0
                };
                let a = 2.0 * std::f64::consts::PI * uniform01(src.rng_mut());
                let r = ring + 0.1 * src.next();
                (r * a.cos(), r * a.sin())
            }
            Shape2D::Square => {
                let side = below(src.rng_mut(), 4);
                let t = uniform_in(src.rng_mut(), -2.0, 2.0);
                let (bx, by) = match side {
                    0 => (t, 2.0),
                    1 => (t, -2.0),
                    2 => (2.0, t),
                    _ => (-2.0, t),
                };
                (bx + 0.1 * src.next(), by + 0.1 * src.next())
            }
            Shape2D::Cosine => {
                let x = uniform_in(src.rng_mut(), -2.0, 2.0);
                (x, (std::f64::consts::PI * x).cos() + 0.1 * src.next())
            }
            Shape2D::Funnel => {
                let v = src.next();
                let x = src.next() * (v / 2.0).exp();
                (x.clamp(-4.0, 4.0), v.clamp(-4.0, 4.0))
            }
        };
        data.push(x);
        data.push(y);
    }
    Tensor::new(n, 2, data)
}

/// Seeded sampler: `n` points from `shape`, deterministic given `seed`.
pub fn sample_shape2d(shape: Shape2D, n: usize, seed: u64) -> Tensor {
    let mut src = NormalSource::new(stream(seed, role::SHAPE));
    sample_shape2d_from(shape, n, &mut src)
}
