//! Synthetic scenarios with exact ground truth, scoring of tracker output
//! against ground truth, and throughput measurement.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::color_names::{base_index, BASE_NAMES, BASE_PROTOTYPES};
use crate::config::TrackerConfig;
use crate::error::{Error, Result};
use crate::geometry::{iou, BoundingBox};
use crate::records::OutputRecord;
use crate::sequence_io::{format_mot, write_ppm, Annotation, Frame, GroundTruth};
use crate::tracker::Tracker;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Background {
    Constant { gray: u8 },
    /// Independent Gaussian gray noise per pixel and frame.
    Noise { mean: f64, sigma: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSpec {
    /// `[x, y, w, h]` at frame 0.
    pub bbox: [f64; 4],
    #[serde(default)]
    pub velocity: [f64; 2],
    /// Relative size change per frame, compounded; the center follows
    /// `velocity` unaffected.
    #[serde(default)]
    pub scale_rate: f64,
    /// Color names. With more than one, the target is painted as a
    /// checkerboard of `cell`-pixel squares.
    pub colors: Vec<String>,
    #[serde(default = "default_cell")]
    pub cell: f64,
}

fn default_cell() -> f64 {
    8.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OccluderSpec {
    /// `[x, y, w, h]` at the first active frame.
    pub bbox: [f64; 4],
    pub color: String,
    /// Active frames, inclusive, 0-based.
    pub frames: [usize; 2],
    #[serde(default)]
    pub velocity: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub width: usize,
    pub height: usize,
    pub n_frames: usize,
    pub background: Background,
    #[serde(default)]
    pub targets: Vec<TargetSpec>,
    #[serde(default)]
    pub occluders: Vec<OccluderSpec>,
    #[serde(default)]
    pub rng_seed: u64,
}

fn color(name: &str) -> Result<[u8; 3]> {
    base_index(name)
        .map(|i| BASE_PROTOTYPES[i])
        .ok_or_else(|| Error::Scenario(format!("unknown color {name:?}; expected one of {}", BASE_NAMES.join(", "))))
}

impl ScenarioSpec {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let spec: ScenarioSpec = serde_json::from_str(text).map_err(|e| Error::Scenario(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 || self.n_frames == 0 {
            return Err(Error::Scenario("width, height and n_frames must be positive".into()));
        }
        if let Background::Noise { mean, sigma } = self.background {
            if !(0.0..=255.0).contains(&mean) || !(sigma >= 0.0 && sigma.is_finite()) {
                return Err(Error::Scenario(format!("bad noise parameters mean={mean} sigma={sigma}")));
            }
        }
        for (i, t) in self.targets.iter().enumerate() {
            let [_, _, w, h] = t.bbox;
            if !(w > 0.0 && h > 0.0) || t.bbox.iter().any(|v| !v.is_finite()) {
                return Err(Error::Scenario(format!("target {i} has a degenerate box {:?}", t.bbox)));
            }
            if t.colors.is_empty() {
                return Err(Error::Scenario(format!("target {i} has no colors")));
            }
            for c in &t.colors {
                color(c)?;
            }
            if !(t.scale_rate > -1.0) || !(t.cell > 0.0) {
                return Err(Error::Scenario(format!("target {i}: scale_rate must exceed -1 and cell be positive")));
            }
        }
        for (i, o) in self.occluders.iter().enumerate() {
            if !(o.bbox[2] > 0.0 && o.bbox[3] > 0.0) || o.frames[0] > o.frames[1] {
                return Err(Error::Scenario(format!("occluder {i} is degenerate")));
            }
            color(&o.color)?;
        }
        Ok(())
    }
}

impl TargetSpec {
    fn scale_at(&self, t: usize) -> f64 {
        (1.0 + self.scale_rate).powi(t as i32)
    }

    pub fn bbox_at(&self, t: usize) -> BoundingBox {
        let [x, y, w, h] = self.bbox;
        let s = self.scale_at(t);
        let c = (
            x + w / 2.0 + self.velocity[0] * t as f64,
            y + h / 2.0 + self.velocity[1] * t as f64,
        );
        BoundingBox::new(c.0 - w * s / 2.0, c.1 - h * s / 2.0, w * s, h * s)
    }
}

impl OccluderSpec {
    pub fn bbox_at(&self, t: usize) -> Option<BoundingBox> {
        if t < self.frames[0] || t > self.frames[1] {
            return None;
        }
        let dt = (t - self.frames[0]) as f64;
        let [x, y, w, h] = self.bbox;
        Some(BoundingBox::new(x + self.velocity[0] * dt, y + self.velocity[1] * dt, w, h))
    }
}

/// Pixel columns (or rows) whose centers fall inside `[lo, lo + len)`.
fn covered(lo: f64, len: f64, limit: usize) -> std::ops::Range<usize> {
    let a = (lo - 0.5).ceil().max(0.0) as usize;
    let b = ((lo + len - 0.5).ceil().max(0.0) as usize).min(limit);
    a..b.max(a.min(limit))
}

/// Render every frame and its ground truth. Truth ids are 1-based target
/// indices; a target is annotated on frames where its box overlaps the frame.
pub fn generate(spec: &ScenarioSpec) -> Result<(Vec<Frame>, GroundTruth)> {
    spec.validate()?;
    let (w, h) = (spec.width, spec.height);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    let noise = match spec.background {
        Background::Noise { mean, sigma } if sigma > 0.0 => {
            Some(Normal::new(mean, sigma).map_err(|e| Error::Scenario(e.to_string()))?)
        }
        _ => None,
    };
    let base_gray = match spec.background {
        Background::Constant { gray } => gray,
        Background::Noise { mean, .. } => mean.round() as u8,
    };
    let target_colors: Vec<Vec<[u8; 3]>> = spec
        .targets
        .iter()
        .map(|t| t.colors.iter().map(|c| color(c)).collect::<Result<_>>())
        .collect::<Result<_>>()?;

    let mut frames = Vec::with_capacity(spec.n_frames);
    let mut truth = GroundTruth::new();
    for t in 0..spec.n_frames {
        let mut f = Frame::filled(w, h, [base_gray; 3], t);
        if let Some(n) = &noise {
            for px in f.pixels.chunks_exact_mut(3) {
                let v = n.sample(&mut rng).round().clamp(0.0, 255.0) as u8;
                px.fill(v);
            }
        }
        for (ti, target) in spec.targets.iter().enumerate() {
            let b = target.bbox_at(t);
            let cols = &target_colors[ti];
            let cell = target.cell * target.scale_at(t);
            for y in covered(b.y, b.h, h) {
                let cy = ((y as f64 + 0.5 - b.y) / cell).floor() as usize;
                for x in covered(b.x, b.w, w) {
                    let cx = ((x as f64 + 0.5 - b.x) / cell).floor() as usize;
                    f.set_rgb(x, y, cols[(cx + cy) % cols.len()]);
                }
            }
            if b.intersects_frame(w, h) {
                truth.entry(t).or_default().push(Annotation {
                    id: ti as u64 + 1,
                    bbox: b,
                });
            }
        }
        for o in &spec.occluders {
            if let Some(b) = o.bbox_at(t) {
                let c = color(&o.color)?;
                for y in covered(b.y, b.h, h) {
                    for x in covered(b.x, b.w, w) {
                        f.set_rgb(x, y, c);
                    }
                }
            }
        }
        frames.push(f);
    }
    Ok((frames, truth))
}

/// Write `frame_00000.ppm`, ... and `gt.csv` into `dir`.
pub fn write_scenario(frames: &[Frame], truth: &GroundTruth, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for f in frames {
        write_ppm(&dir.join(format!("frame_{:05}.ppm", f.index)), f)?;
    }
    let gt = dir.join("gt.csv");
    std::fs::write(&gt, format_mot(truth)).map_err(|e| Error::io(&gt, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EvalOptions {
    /// Frames before this 0-based index are ignored.
    pub start_frame: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeriesPoint {
    pub frame: usize,
    pub truth_id: u64,
    pub output_id: Option<u64>,
    pub iou: f64,
    pub center_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrackEval {
    pub truth_id: u64,
    /// Mean over every frame the truth is present; missed frames score 0.
    pub mean_iou: f64,
    /// Mean over matched frames only.
    pub mean_center_error: Option<f64>,
    pub frames_tracked: usize,
    pub frames_total: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub tracks: Vec<TrackEval>,
    pub mean_iou: f64,
    pub mean_center_error: Option<f64>,
    pub frames_tracked: usize,
    pub frames_total: usize,
    pub fps: Option<f64>,
    pub series: Vec<SeriesPoint>,
}

/// Score output boxes against ground truth. In each frame, truth and output
/// boxes are paired greedily by descending IoU (ties by truth id, then output
/// id); unpaired truth boxes score IoU 0.
pub fn evaluate(outputs: &[OutputRecord], truth: &GroundTruth, opts: &EvalOptions) -> Result<EvalReport> {
    let mut by_frame: BTreeMap<usize, Vec<&OutputRecord>> = BTreeMap::new();
    for o in outputs {
        by_frame.entry(o.frame).or_default().push(o);
    }
    let mut series = Vec::new();
    for (&frame, annots) in truth.range(opts.start_frame..) {
        let outs = by_frame.get(&frame).map(Vec::as_slice).unwrap_or(&[]);
        let mut pairs = Vec::new();
        for (ai, a) in annots.iter().enumerate() {
            for (oi, o) in outs.iter().enumerate() {
                let v = iou(&a.bbox, &o.bbox);
                if v > 0.0 {
                    pairs.push((v, a.id, o.id, ai, oi));
                }
            }
        }
        pairs.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
        let mut t_used = vec![None; annots.len()];
        let mut o_used = vec![false; outs.len()];
        for (v, _, _, ai, oi) in pairs {
            if t_used[ai].is_none() && !o_used[oi] {
                t_used[ai] = Some((oi, v));
                o_used[oi] = true;
            }
        }
        let mut order: Vec<usize> = (0..annots.len()).collect();
        order.sort_by_key(|&i| annots[i].id);
        for ai in order {
            let a = &annots[ai];
            series.push(match t_used[ai] {
                Some((oi, v)) => SeriesPoint {
                    frame,
                    truth_id: a.id,
                    output_id: Some(outs[oi].id),
                    iou: v,
                    center_error: Some((outs[oi].bbox.center() - a.bbox.center()).norm()),
                },
                None => SeriesPoint {
                    frame,
                    truth_id: a.id,
                    output_id: None,
                    iou: 0.0,
                    center_error: None,
                },
            });
        }
    }
    if series.is_empty() {
        return Err(Error::EmptyGroundTruth);
    }

    let mut per: BTreeMap<u64, Vec<&SeriesPoint>> = BTreeMap::new();
    for p in &series {
        per.entry(p.truth_id).or_default().push(p);
    }
    let tracks = per
        .into_iter()
        .map(|(truth_id, pts)| {
            let errs: Vec<f64> = pts.iter().filter_map(|p| p.center_error).collect();
            TrackEval {
                truth_id,
                mean_iou: pts.iter().map(|p| p.iou).sum::<f64>() / pts.len() as f64,
                mean_center_error: mean(&errs),
                frames_tracked: errs.len(),
                frames_total: pts.len(),
            }
        })
        .collect();
    let errs: Vec<f64> = series.iter().filter_map(|p| p.center_error).collect();
    Ok(EvalReport {
        tracks,
        mean_iou: series.iter().map(|p| p.iou).sum::<f64>() / series.len() as f64,
        mean_center_error: mean(&errs),
        frames_tracked: errs.len(),
        frames_total: series.len(),
        fps: None,
        series,
    })
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

impl EvalReport {
    pub fn to_table(&self) -> String {
        let fmt_err = |e: Option<f64>| e.map_or("-".to_string(), |v| format!("{v:.2}"));
        let mut s = String::from("truth_id  mean_iou  center_err  tracked\n");
        for t in &self.tracks {
            s.push_str(&format!(
                "{:>8}  {:>8.4}  {:>10}  {}/{}\n",
                t.truth_id,
                t.mean_iou,
                fmt_err(t.mean_center_error),
                t.frames_tracked,
                t.frames_total
            ));
        }
        s.push_str(&format!(
            "{:>8}  {:>8.4}  {:>10}  {}/{}\n",
            "all",
            self.mean_iou,
            fmt_err(self.mean_center_error),
            self.frames_tracked,
            self.frames_total
        ));
        if let Some(fps) = self.fps {
            s.push_str(&format!("fps: {fps:.1}\n"));
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub frames: usize,
    pub samples: Vec<f64>,
    pub median_fps: f64,
}

/// Time the full pipeline (bootstrap plus every step) over in-memory frames
/// `repeat` times.
pub fn bench(config: &TrackerConfig, frames: &[Frame], repeat: usize) -> Result<BenchReport> {
    if repeat == 0 {
        return Err(Error::InvalidArgument("repeat must be positive".into()));
    }
    let mut samples = Vec::with_capacity(repeat);
    for _ in 0..repeat {
        let t0 = Instant::now();
        let mut tracker = Tracker::bootstrap(config.clone(), frames)?;
        for f in &frames[config.init_frames..] {
            tracker.step(f)?;
        }
        let secs = t0.elapsed().as_secs_f64().max(1e-9);
        samples.push(frames.len() as f64 / secs);
    }
    let mut sorted = samples.clone();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let median_fps = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    };
    Ok(BenchReport {
        frames: frames.len(),
        samples,
        median_fps,
    })
}
