//! Weighted mean-shift mode seeking over a per-pixel weight field.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{PixelRect, Vec2};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum KernelProfile {
    #[default]
    Epanechnikov,
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec {
    pub profile: KernelProfile,
    pub bandwidth: f64,
}

impl KernelSpec {
    pub fn new(profile: KernelProfile, bandwidth: f64) -> Result<Self> {
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(Error::InvalidArgument(format!("bandwidth must be positive, got {bandwidth}")));
        }
        Ok(KernelSpec { profile, bandwidth })
    }
}

/// Profile derivative `g` evaluated at a squared normalized distance.
#[inline]
pub fn kernel_g(profile: KernelProfile, r2: f64) -> f64 {
    match profile {
        KernelProfile::Epanechnikov => {
            if r2 <= 1.0 {
                1.0
            } else {
                0.0
            }
        }
        KernelProfile::Gaussian => (-r2 / 2.0).exp(),
    }
}

/// Non-negative weights over a window of pixel positions. Pixel `(x, y)`
/// sits at coordinate `(x, y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightField {
    pub window: PixelRect,
    pub weights: Vec<f64>,
}

impl WeightField {
    pub fn new(window: PixelRect, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != window.area() {
            return Err(Error::InvalidArgument(format!(
                "weight field needs {} values, got {}",
                window.area(),
                weights.len()
            )));
        }
        if weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::InvalidArgument("weights must be non-negative".into()));
        }
        Ok(WeightField { window, weights })
    }

    /// Iterate `(position, weight)` over positive-weight pixels.
    pub fn support(&self) -> impl Iterator<Item = (Vec2, f64)> + '_ {
        let w = self.window.w;
        self.weights.iter().enumerate().filter(|(_, &v)| v > 0.0).map(move |(i, &v)| {
            (
                Vec2::new((self.window.x + i % w) as f64, (self.window.y + i / w) as f64),
                v,
            )
        })
    }
}

/// Shift from `x` to the kernel- and weight-averaged position of the field.
pub fn meanshift_vector(x: Vec2, field: &WeightField, k: &KernelSpec) -> Result<Vec2> {
    let inv_h2 = 1.0 / (k.bandwidth * k.bandwidth);
    let (mut num_x, mut num_y, mut den) = (0.0, 0.0, 0.0);

    // The Epanechnikov kernel vanishes outside radius h; skip rows and
    // columns that cannot contribute.
    let win = field.window;
    let (mut y0, mut y1, mut x0, mut x1) = (win.y, win.bottom(), win.x, win.right());
    if k.profile == KernelProfile::Epanechnikov {
        let clip = |lo: f64, hi: f64, a: usize, b: usize| {
            let lo = lo.ceil().max(a as f64).min(b as f64) as usize;
            let hi = (hi.floor() + 1.0).max(a as f64).min(b as f64) as usize;
            (lo, hi.max(lo))
        };
        (y0, y1) = clip(x.y - k.bandwidth, x.y + k.bandwidth, win.y, win.bottom());
        (x0, x1) = clip(x.x - k.bandwidth, x.x + k.bandwidth, win.x, win.right());
    }

    for py in y0..y1 {
        let dy = py as f64 - x.y;
        let row = &field.weights[(py - win.y) * win.w..];
        for px in x0..x1 {
            let w = row[px - win.x];
            if w <= 0.0 {
                continue;
            }
            let dx = px as f64 - x.x;
            let g = kernel_g(k.profile, (dx * dx + dy * dy) * inv_h2);
            let gw = g * w;
            num_x += gw * dx;
            num_y += gw * dy;
            den += gw;
        }
    }
    if !(den > 0.0) {
        return Err(Error::EmptySupport);
    }
    Ok(Vec2::new(num_x / den, num_y / den))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanShiftOutcome {
    pub center: Vec2,
    pub iterations: usize,
    pub converged: bool,
}

/// Follow `x ← x + m(x)` from `start` until the shift is shorter than `eps`
/// or `max_iters` shifts have been taken. `field_at` supplies the weight
/// field to use around the current position.
pub fn meanshift_iterate<F>(
    start: Vec2,
    mut field_at: F,
    k: &KernelSpec,
    eps: f64,
    max_iters: usize,
) -> Result<MeanShiftOutcome>
where
    F: FnMut(Vec2) -> Result<WeightField>,
{
    let mut x = start;
    for it in 0..max_iters {
        let field = field_at(x)?;
        let m = meanshift_vector(x, &field, k)?;
        x = x + m;
        if m.norm() < eps {
            return Ok(MeanShiftOutcome {
                center: x,
                iterations: it + 1,
                converged: true,
            });
        }
    }
    Ok(MeanShiftOutcome {
        center: x,
        iterations: max_iters,
        converged: false,
    })
}
