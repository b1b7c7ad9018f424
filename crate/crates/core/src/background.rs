//! Per-pixel Gaussian background model over normalized gray values.
//!
//! The model is seeded from the sample mean and population variance of the
//! first frames, classifies pixels deviating by more than `k_sigma` standard
//! deviations as foreground, and is updated with exponential forgetting where
//! pixels inside moving blocks learn more slowly than the rest of the scene.

use crate::error::{Error, Result};
use crate::sequence_io::GrayFrame;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianBackground {
    pub width: usize,
    pub height: usize,
    pub mu: Vec<f64>,
    pub sigma2: Vec<f64>,
    pub frames_seen: usize,
}

/// Binary foreground mask; `true` marks a moving pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ForegroundMask {
    pub width: usize,
    pub height: usize,
    pub flags: Vec<bool>,
}

impl ForegroundMask {
    pub fn empty(width: usize, height: usize) -> Self {
        ForegroundMask {
            width,
            height,
            flags: vec![false; width * height],
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.flags[y * self.width + x]
    }

    pub fn count(&self) -> usize {
        self.flags.iter().filter(|&&f| f).count()
    }

    pub fn fraction(&self) -> f64 {
        self.count() as f64 / self.flags.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearningRates {
    /// Rate outside moving blocks.
    pub alpha_bg: f64,
    /// Rate inside moving blocks.
    pub alpha_fg: f64,
}

impl LearningRates {
    pub fn new(alpha_bg: f64, alpha_fg: f64) -> Result<Self> {
        let rates = LearningRates { alpha_bg, alpha_fg };
        rates.validate()?;
        Ok(rates)
    }

    pub fn uniform(alpha: f64) -> Result<Self> {
        Self::new(alpha, alpha)
    }

    pub fn validate(&self) -> Result<()> {
        for (key, v) in [("alpha_bg", self.alpha_bg), ("alpha_fg", self.alpha_fg)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config {
                    key: key.into(),
                    message: format!("{v} is outside [0, 1]"),
                });
            }
        }
        if self.alpha_fg > self.alpha_bg {
            return Err(Error::Config {
                key: "alpha_fg".into(),
                message: format!("{} exceeds alpha_bg = {}", self.alpha_fg, self.alpha_bg),
            });
        }
        Ok(())
    }
}

impl Default for LearningRates {
    fn default() -> Self {
        LearningRates {
            alpha_bg: 0.05,
            alpha_fg: 0.005,
        }
    }
}

fn check_dims(what: &str, w: usize, h: usize, ew: usize, eh: usize) -> Result<()> {
    if (w, h) != (ew, eh) {
        return Err(Error::DimensionMismatch(format!("{what} is {w}x{h}, model is {ew}x{eh}")));
    }
    Ok(())
}

impl GaussianBackground {
    /// Mean and population variance of each pixel over `frames`.
    pub fn init_model(frames: &[GrayFrame]) -> Result<Self> {
        if frames.len() < 2 {
            return Err(Error::TooFewFrames {
                required: 2,
                got: frames.len(),
            });
        }
        let (width, height) = (frames[0].width, frames[0].height);
        for f in &frames[1..] {
            check_dims("frame", f.width, f.height, width, height)?;
        }
        let n = frames.len() as f64;
        let len = width * height;
        let mut mu = vec![0.0; len];
        for f in frames {
            for (m, &v) in mu.iter_mut().zip(&f.values) {
                *m += v;
            }
        }
        for m in &mut mu {
            *m = (*m / n).clamp(0.0, 1.0);
        }
        let mut sigma2 = vec![0.0; len];
        for f in frames {
            for ((s, &m), &v) in sigma2.iter_mut().zip(&mu).zip(&f.values) {
                let d = v - m;
                *s += d * d;
            }
        }
        for s in &mut sigma2 {
            *s /= n;
        }
        Ok(GaussianBackground {
            width,
            height,
            mu,
            sigma2,
            frames_seen: frames.len(),
        })
    }

    /// Flag pixels with `|g - mu| > k_sigma * max(sigma, sigma_floor)`.
    pub fn classify_foreground(&self, g: &GrayFrame, k_sigma: f64, sigma_floor: f64) -> Result<ForegroundMask> {
        check_dims("gray frame", g.width, g.height, self.width, self.height)?;
        if !(k_sigma > 0.0) {
            return Err(Error::InvalidArgument(format!("k_sigma must be positive, got {k_sigma}")));
        }
        let flags = g
            .values
            .iter()
            .zip(&self.mu)
            .zip(&self.sigma2)
            .map(|((&v, &m), &s2)| (v - m).abs() > k_sigma * s2.sqrt().max(sigma_floor))
            .collect();
        Ok(ForegroundMask {
            width: self.width,
            height: self.height,
            flags,
        })
    }

    /// Exponential update of mean then variance. The variance uses the
    /// freshly updated mean, so `alpha = 1` leaves zero variance behind.
    pub fn update_model(&mut self, g: &GrayFrame, moving_region: &[bool], rates: LearningRates) -> Result<()> {
        check_dims("gray frame", g.width, g.height, self.width, self.height)?;
        if moving_region.len() != self.mu.len() {
            return Err(Error::DimensionMismatch(format!(
                "moving region has {} entries, model has {}",
                moving_region.len(),
                self.mu.len()
            )));
        }
        rates.validate()?;
        for (((m, s2), &l), &moving) in self
            .mu
            .iter_mut()
            .zip(self.sigma2.iter_mut())
            .zip(&g.values)
            .zip(moving_region)
        {
            let a = if moving { rates.alpha_fg } else { rates.alpha_bg };
            let mu_new = (1.0 - a) * *m + a * l;
            let d = l - mu_new;
            *m = mu_new.clamp(0.0, 1.0);
            *s2 = ((1.0 - a) * *s2 + a * d * d).max(0.0);
        }
        self.frames_seen += 1;
        Ok(())
    }
}

/// Histogram-driven cleanup of a raw foreground mask.
///
/// Gray histograms are built separately over flagged and unflagged pixels
/// and normalized to densities. An unflagged pixel is admitted (a hole) when
/// most of its 8 neighbors are flagged and its bin is at least twice as dense
/// in the foreground histogram. A flagged pixel is dropped when its bin's
/// foreground density is below half its background density, or when none of
/// its neighbors is flagged (pixels do not move alone). Both rules read the
/// input mask, so growth never reaches beyond one pixel of it.
///
/// The neighbor counts matter on noisy input: i.i.d. sensor noise puts its
/// flagged pixels in the histogram tails, where the density ratio alone
/// would keep them and admit their unflagged neighbors too.
pub fn refine_by_gray_histogram(
    mask: &ForegroundMask,
    g: &GrayFrame,
    _model: &GaussianBackground,
    bins: usize,
) -> Result<ForegroundMask> {
    check_dims("gray frame", g.width, g.height, mask.width, mask.height)?;
    if bins == 0 {
        return Err(Error::InvalidArgument("hist_bins must be positive".into()));
    }
    let (w, h) = (mask.width, mask.height);
    let bin_of = |v: f64| ((v * bins as f64) as usize).min(bins - 1);

    let mut fg_hist = vec![0usize; bins];
    let mut bg_hist = vec![0usize; bins];
    for (&f, &v) in mask.flags.iter().zip(&g.values) {
        if f {
            fg_hist[bin_of(v)] += 1;
        } else {
            bg_hist[bin_of(v)] += 1;
        }
    }
    let fg_total: usize = fg_hist.iter().sum();
    if fg_total == 0 {
        return Ok(mask.clone());
    }
    let bg_total: usize = bg_hist.iter().sum();

    // ratio[b] = fg density / bg density; +inf where the background is empty.
    let ratio: Vec<f64> = fg_hist
        .iter()
        .zip(&bg_hist)
        .map(|(&f, &b)| {
            let fd = f as f64 / fg_total as f64;
            if b == 0 || bg_total == 0 {
                f64::INFINITY
            } else {
                fd / (b as f64 / bg_total as f64)
            }
        })
        .collect();

    let mut out = mask.clone();
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let r = ratio[bin_of(g.values[i])];
            let (flagged, total) = neighbor_counts(mask, x, y);
            if mask.flags[i] {
                if r < 0.5 || flagged == 0 {
                    out.flags[i] = false;
                }
            } else if r >= 2.0 && 2 * flagged > total {
                out.flags[i] = true;
            }
        }
    }
    Ok(out)
}

/// Flagged and total 8-neighbors (fewer at the frame border).
fn neighbor_counts(mask: &ForegroundMask, x: usize, y: usize) -> (usize, usize) {
    let x0 = x.saturating_sub(1);
    let y0 = y.saturating_sub(1);
    let x1 = (x + 1).min(mask.width - 1);
    let y1 = (y + 1).min(mask.height - 1);
    let (mut flagged, mut total) = (0, 0);
    for yy in y0..=y1 {
        for xx in x0..=x1 {
            if (xx, yy) != (x, y) {
                total += 1;
                flagged += mask.get(xx, yy) as usize;
            }
        }
    }
    (flagged, total)
}
