//! Frame-by-frame tracking pipeline.
//!
//! Each step classifies foreground against the background model, groups
//! moving blocks into candidates, associates candidates with tracks, localizes
//! every track with MeanShift over its color-name weights, falls back to the
//! graded component match when the template confidence is low, and finally
//! updates the background with block-gated rates.

use std::fmt;

use crate::background::{refine_by_gray_histogram, ForegroundMask, GaussianBackground};
use crate::blocks::{estimate_block_motion, gray_density, group_blocks, partition_blocks, BlockGrid, BlockGroup};
use crate::color_names::{
    entropy_weights, load_palette_file, map_rgb_to_labels, select_labels, ColorPalette, LabelMap, BASE_PROTOTYPES,
    BASE_LABELS,
};
use crate::config::TrackerConfig;
use crate::error::{Error, Result};
use crate::geometry::{iou, BoundingBox, PixelRect, Vec2};
use crate::graded::{confidence, displacement_bounds, graded_match, Component, TargetTemplate};
use crate::meanshift::{meanshift_iterate, KernelSpec, WeightField};
use crate::sequence_io::{to_gray_normalized, Frame, GrayFrame};

const VELOCITY_SMOOTHING: f64 = 0.5;
/// Tracks and groups slower than this (pixels/frame) are not shielded from
/// the fast background learning rate.
const MOVING_SPEED: f64 = 0.5;
/// Share of the smaller box covered by the other above which two tracks are
/// taken to follow one target.
const DUPLICATE_OVERLAP: f64 = 0.7;
/// Largest share of the frame a candidate group may cover.
const MAX_CANDIDATE_SHARE: f64 = 0.25;
/// Largest relative change of width or height accepted in one frame.
const MAX_RESIZE: f64 = 0.15;
/// Background variance above this multiple of the bootstrap median marks a
/// pixel whose model cannot separate target from background yet.
const UNRELIABLE_VAR_RATIO: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrackMode {
    Normal,
    Graded,
    Coasting,
}

impl TrackMode {
    pub fn as_str(self) -> &'static str {
        match self {
            TrackMode::Normal => "NORMAL",
            TrackMode::Graded => "GRADED",
            TrackMode::Coasting => "COASTING",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim() {
            "NORMAL" => Some(TrackMode::Normal),
            "GRADED" => Some(TrackMode::Graded),
            "COASTING" => Some(TrackMode::Coasting),
            _ => None,
        }
    }
}

impl fmt::Display for TrackMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackState {
    pub id: u64,
    pub bbox: BoundingBox,
    pub center: Vec2,
    pub velocity: Vec2,
    pub confidence: f64,
    pub mode: TrackMode,
    pub age: usize,
    pub misses: usize,
}

#[derive(Debug, Clone)]
struct Track {
    state: TrackState,
    palette: ColorPalette,
    template: TargetTemplate,
    /// Palette labels that characterize the target against its surround.
    target: Vec<bool>,
    /// MeanShift mode minus box center, measured when the template was taken.
    ms_offset: Vec2,
}

#[derive(Debug, Clone)]
struct Candidate {
    bbox: BoundingBox,
    first_center: Vec2,
    hits: usize,
}

/// Everything derived from the current frame before tracks are updated.
struct FrameAnalysis {
    gray: GrayFrame,
    mask: ForegroundMask,
    /// `mask` plus pixels whose background variance is still inflated by
    /// motion seen during the bootstrap; used for sizing, where color decides.
    shape: ForegroundMask,
    grid: BlockGrid,
    groups: Vec<BlockGroup>,
}

pub struct Tracker {
    config: TrackerConfig,
    base: [[u8; 3]; BASE_LABELS],
    background: GaussianBackground,
    /// Typical background variance right after the bootstrap.
    reference_var: f64,
    prev_gray: GrayFrame,
    prev_mask: ForegroundMask,
    prev_grid: BlockGrid,
    tracks: Vec<Track>,
    candidates: Vec<Candidate>,
    next_id: u64,
    frames_seen: usize,
}

impl fmt::Debug for Tracker {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tracker")
            .field("frames_seen", &self.frames_seen)
            .field("tracks", &self.tracks.len())
            .field("candidates", &self.candidates.len())
            .finish()
    }
}

impl Tracker {
    /// Build the background model from the first `init_frames` frames.
    /// Those frames produce no track output.
    pub fn bootstrap(config: TrackerConfig, frames: &[Frame]) -> Result<Self> {
        config.validate()?;
        if frames.len() < config.init_frames {
            return Err(Error::TooFewFrames {
                required: config.init_frames,
                got: frames.len(),
            });
        }
        let base = match &config.palette_file {
            Some(p) => load_palette_file(p)?,
            None => BASE_PROTOTYPES,
        };
        let frames = &frames[..config.init_frames];
        let (w, h) = (frames[0].width, frames[0].height);
        if let Some(f) = frames.iter().find(|f| (f.width, f.height) != (w, h)) {
            return Err(Error::DimensionMismatch(format!(
                "bootstrap frame {} is {}x{}, expected {w}x{h}",
                f.index, f.width, f.height
            )));
        }
        let grays: Vec<GrayFrame> = frames.iter().map(to_gray_normalized).collect();
        let background = GaussianBackground::init_model(&grays)?;
        let mut vars = background.sigma2.clone();
        let mid = vars.len() / 2;
        let reference_var = vars
            .select_nth_unstable_by(mid, f64::total_cmp)
            .1
            .max(config.sigma_floor * config.sigma_floor);
        let prev_gray = grays.into_iter().last().expect("at least two frames");
        let raw = background.classify_foreground(&prev_gray, config.k_sigma, config.sigma_floor)?;
        let prev_mask = refine_by_gray_histogram(&raw, &prev_gray, &background, config.hist_bins)?;
        let mut prev_grid = partition_blocks(&prev_mask, config.block_size)?;
        prev_grid.classify_moving(config.theta)?;
        Ok(Tracker {
            config,
            base,
            background,
            reference_var,
            prev_gray,
            prev_mask,
            prev_grid,
            tracks: Vec::new(),
            candidates: Vec::new(),
            next_id: 1,
            frames_seen: frames.len(),
        })
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.config
    }

    pub fn background(&self) -> &GaussianBackground {
        &self.background
    }

    /// Frames consumed so far, bootstrap included.
    pub fn frames_seen(&self) -> usize {
        self.frames_seen
    }

    pub fn tracks(&self) -> Vec<TrackState> {
        self.tracks.iter().map(|t| t.state.clone()).collect()
    }

    /// Process the next frame and return the states of all live tracks.
    pub fn step(&mut self, frame: &Frame) -> Result<Vec<TrackState>> {
        if (frame.width, frame.height) != (self.background.width, self.background.height) {
            return Err(Error::DimensionMismatch(format!(
                "frame {} is {}x{}, model is {}x{}",
                frame.index, frame.width, frame.height, self.background.width, self.background.height
            )));
        }
        let an = self.analyze(frame)?;

        let assoc = self.associate(&an.groups);
        for (ti, gi) in assoc.iter().enumerate() {
            let group = gi.map(|g| &an.groups[g]);
            if let Err(e) = self.update_track(ti, frame, &an, group) {
                log::warn!("track {}: {e}", self.tracks[ti].state.id);
                let t = &mut self.tracks[ti];
                t.state.mode = TrackMode::Coasting;
                t.state.misses += 1;
                t.state.center = t.state.center + t.state.velocity;
                t.state.bbox = t.state.bbox.translate(t.state.velocity);
            }
        }
        let (fw, fh) = (frame.width, frame.height);
        let max_misses = self.config.max_misses;
        self.tracks
            .retain(|t| t.state.misses <= max_misses && t.state.bbox.intersects_frame(fw, fh));
        self.drop_duplicates();

        let taken: Vec<bool> = (0..an.groups.len()).map(|g| assoc.contains(&Some(g))).collect();
        self.update_candidates(frame, &an, &taken);

        self.update_background(&an)?;
        self.prev_gray = an.gray;
        self.prev_mask = an.mask;
        self.prev_grid = an.grid;
        self.frames_seen += 1;
        Ok(self.tracks())
    }

    /// When one box lies mostly inside another, both tracks follow the same
    /// target; keep the better one (normal mode, then confidence, then the
    /// larger box, then the older id).
    fn drop_duplicates(&mut self) {
        let rank = |s: &TrackState| (s.mode == TrackMode::Normal, s.confidence, s.bbox.area(), std::cmp::Reverse(s.id));
        let n = self.tracks.len();
        let mut dead = vec![false; n];
        for i in 0..n {
            for j in i + 1..n {
                if dead[i] || dead[j] {
                    continue;
                }
                let (a, b) = (&self.tracks[i].state, &self.tracks[j].state);
                if overlap_share(&a.bbox, &b.bbox) < DUPLICATE_OVERLAP {
                    continue;
                }
                let (ra, rb) = (rank(a), rank(b));
                let a_wins = ra.partial_cmp(&rb).is_some_and(|o| o.is_ge());
                dead[if a_wins { j } else { i }] = true;
            }
        }
        let mut k = 0;
        self.tracks.retain(|_| {
            k += 1;
            !dead[k - 1]
        });
    }

    fn analyze(&self, frame: &Frame) -> Result<FrameAnalysis> {
        let c = &self.config;
        let gray = to_gray_normalized(frame);
        let raw = self.background.classify_foreground(&gray, c.k_sigma, c.sigma_floor)?;
        let mask = refine_by_gray_histogram(&raw, &gray, &self.background, c.hist_bins)?;
        let mut grid = partition_blocks(&mask, c.block_size)?;
        grid.classify_moving(c.theta)?;
        estimate_block_motion(&self.prev_grid, &mut grid, &self.prev_gray, &gray, &self.prev_mask, c.search_radius)?;
        let mut groups = group_blocks(&grid, c.grouping());
        for g in &mut groups {
            if let Some(b) = silhouette_box(&mask, &grid, g) {
                g.bbox = b;
            }
        }
        let limit = UNRELIABLE_VAR_RATIO * self.reference_var;
        let mut shape = mask.clone();
        for (f, &v) in shape.flags.iter_mut().zip(&self.background.sigma2) {
            *f |= v > limit;
        }
        Ok(FrameAnalysis {
            gray,
            mask,
            shape,
            grid,
            groups,
        })
    }

    /// Greedy one-to-one association of tracks (at their predicted boxes)
    /// with groups, highest IoU first.
    fn associate(&self, groups: &[BlockGroup]) -> Vec<Option<usize>> {
        let mut pairs = Vec::new();
        for (ti, t) in self.tracks.iter().enumerate() {
            let pred = t.state.bbox.translate(t.state.velocity);
            for (gi, g) in groups.iter().enumerate() {
                let v = iou(&pred, &g.bbox);
                if v >= self.config.iou_assoc_threshold && v > 0.0 {
                    pairs.push((v, ti, gi));
                }
            }
        }
        pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let mut out = vec![None; self.tracks.len()];
        let mut used = vec![false; groups.len()];
        for (_, ti, gi) in pairs {
            if out[ti].is_none() && !used[gi] {
                out[ti] = Some(gi);
                used[gi] = true;
            }
        }
        out
    }

    fn search_window(&self, bbox: &BoundingBox, velocity: Vec2, w: usize, h: usize) -> Option<PixelRect> {
        let c = &self.config;
        let reach = bbox.w.max(bbox.h) * c.bandwidth_scale.max(1.0)
            + velocity.norm() * c.lambda_max
            + c.min_search_radius
            + 2.0;
        bbox.to_pixel_rect(w, h).map(|r| r.expand(reach.ceil() as usize, w, h))
    }

    fn update_track(&mut self, ti: usize, frame: &Frame, an: &FrameAnalysis, group: Option<&BlockGroup>) -> Result<()> {
        let c = self.config.clone();
        let (fw, fh) = (frame.width, frame.height);
        let t = &self.tracks[ti];
        let prev = t.state.clone();
        let predicted = prev.center + prev.velocity;
        let pred_box = prev.bbox.translate(prev.velocity);

        let window = self
            .search_window(&pred_box, prev.velocity, fw, fh)
            .or_else(|| self.search_window(&prev.bbox, prev.velocity, fw, fh))
            .ok_or_else(|| Error::InvalidArgument("track left the frame".into()))?;
        let labels = map_rgb_to_labels(frame, window, &t.palette);
        let ctx = context_weights(&labels, t.palette.len(), c.entropy_c)?;
        let field = weight_field(&labels, &ctx, &t.target)?;

        let start = group.map(|g| g.centroid + t.ms_offset).unwrap_or(predicted + t.ms_offset);
        let kernel = KernelSpec::new(c.kernel, c.bandwidth_scale * prev.bbox.diagonal() / 2.0)?;
        let ms_center = match meanshift_iterate(start, |_| Ok(field.clone()), &kernel, c.ms_eps, c.ms_max_iters) {
            Ok(out) => out.center - t.ms_offset,
            Err(Error::EmptySupport) => predicted,
            Err(e) => return Err(e),
        };

        let mut template = t.template.clone();
        template.anchor = (prev.bbox.x.round() as i64, prev.bbox.y.round() as i64);
        let mut delta = ms_center - prev.center;
        let mut d = confidence(&template, &labels, delta.round())?;
        let mut mode = TrackMode::Normal;
        if d < c.conf_threshold {
            log::debug!("track {}: confidence {d:.3} below threshold, graded search", prev.id);
            let bounds = displacement_bounds(prev.velocity, c.lambda_min, c.lambda_max, c.min_search_radius)?;
            let m = graded_match(&template, &labels, &bounds, prev.velocity, &c.graded())?;
            delta = m.offset;
            d = m.score;
            mode = if m.coasting { TrackMode::Coasting } else { TrackMode::Graded };
        }

        let center = prev.center + delta;
        let velocity = if mode == TrackMode::Coasting {
            prev.velocity
        } else {
            prev.velocity * (1.0 - VELOCITY_SMOOTHING) + delta * VELOCITY_SMOOTHING
        };
        let (mut w, mut h) = (prev.bbox.w, prev.bbox.h);
        let confident = d >= c.template_update_conf;
        // Size from the target-colored flagged pixels of the associated group
        // and the box where the track now sits; the group alone can miss part
        // of the target when its blocks split.
        let silhouette = match (confident, group) {
            (true, Some(g)) => g
                .bbox
                .union(&BoundingBox::from_center(center, prev.bbox.w, prev.bbox.h))
                .to_pixel_rect(fw, fh)
                .map(|r| r.expand(2, fw, fh))
                .and_then(|r| color_box(&labels, &an.shape, &r, &t.target)),
            _ => None,
        }
        .filter(|s| plausible_resize(&prev.bbox, s));
        if let Some(s) = silhouette {
            w = s.w;
            h = s.h;
        }
        let bbox = BoundingBox::from_center(center, w, h);

        let t = &mut self.tracks[ti];
        if let (Some(g), Some(s)) = (group, silhouette) {
            if let Some(rect) = bbox.to_pixel_rect(fw, fh) {
                match build_template(frame, &t.palette, &an.shape, &an.grid, g, rect, &ctx, &t.target) {
                    Ok(fresh) => {
                        t.template = fresh;
                        let off = ms_center + t.ms_offset - s.center();
                        t.ms_offset = Vec2::new(off.x.clamp(-w / 2.0, w / 2.0), off.y.clamp(-h / 2.0, h / 2.0));
                    }
                    Err(e) => log::debug!("track {}: template kept ({e})", t.state.id),
                }
            }
        }

        let low = d < c.conf_threshold || mode == TrackMode::Coasting;
        t.state = TrackState {
            id: prev.id,
            bbox,
            center,
            velocity,
            confidence: d.clamp(0.0, 1.0),
            mode,
            age: prev.age + 1,
            misses: if mode == TrackMode::Normal {
                0
            } else if low {
                prev.misses + 1
            } else {
                prev.misses
            },
        };
        Ok(())
    }

    fn update_candidates(&mut self, frame: &Frame, an: &FrameAnalysis, taken: &[bool]) {
        let thr = self.config.iou_assoc_threshold;
        let mut next: Vec<Candidate> = Vec::new();
        let mut used = vec![false; self.candidates.len()];
        for (gi, g) in an.groups.iter().enumerate() {
            if taken[gi] {
                continue;
            }
            // A group spanning much of the frame is a scene-wide change
            // (noise, lighting), not a target.
            if g.bbox.area() > MAX_CANDIDATE_SHARE * (frame.width * frame.height) as f64 {
                continue;
            }
            // Fragments of tracked targets (an occluder splitting a target,
            // say) must not spawn duplicates.
            let c = g.bbox.center();
            if self.tracks.iter().any(|t| {
                let b = t.state.bbox;
                c.x >= b.x && c.x <= b.x + b.w && c.y >= b.y && c.y <= b.y + b.h
            }) {
                continue;
            }
            let mut best: Option<(f64, usize)> = None;
            for (ci, cand) in self.candidates.iter().enumerate() {
                if used[ci] {
                    continue;
                }
                let v = iou(&cand.bbox, &g.bbox);
                if v >= thr && v > 0.0 && best.is_none_or(|(bv, _)| v > bv) {
                    best = Some((v, ci));
                }
            }
            let cand = match best {
                Some((_, ci)) => {
                    used[ci] = true;
                    let old = &self.candidates[ci];
                    Candidate {
                        bbox: g.bbox,
                        first_center: old.first_center,
                        hits: old.hits + 1,
                    }
                }
                None => Candidate {
                    bbox: g.bbox,
                    first_center: g.bbox.center(),
                    hits: 1,
                },
            };
            if cand.hits >= self.config.warmup_frames && self.spawn(frame, an, g, &cand) {
                continue;
            }
            next.push(cand);
        }
        self.candidates = next;
    }

    /// Try to open a track on a persistent candidate. Returns false when the
    /// region carries no usable color information.
    fn spawn(&mut self, frame: &Frame, an: &FrameAnalysis, g: &BlockGroup, cand: &Candidate) -> bool {
        let (fw, fh) = (frame.width, frame.height);
        let center = g.bbox.center();
        let velocity = if g.velocity_known {
            g.velocity
        } else if cand.hits > 1 {
            (center - cand.first_center) * (1.0 / (cand.hits - 1) as f64)
        } else {
            Vec2::ZERO
        };
        // Stationary candidates are background leftovers (ghosts of objects
        // that sat still during bootstrap), not moving targets.
        if velocity.norm() < MOVING_SPEED {
            return false;
        }
        let Some(rect) = g.bbox.to_pixel_rect(fw, fh) else {
            return false;
        };
        let margin = rect.w.max(rect.h).div_ceil(2);
        let region = rect.expand(margin, fw, fh);
        let palette = match select_labels(frame, region, self.config.k_labels, &self.base) {
            Ok(p) => p,
            Err(e) => {
                log::debug!("candidate at {:?}: {e}", g.bbox);
                return false;
            }
        };
        let labels = map_rgb_to_labels(frame, region, &palette);
        let target = target_labels(&labels, &an.mask, &rect, palette.len());
        // Search the whole region: the group can miss target parts the
        // background model does not yet separate.
        let Some(bbox) = color_box(&labels, &an.shape, &region, &target) else {
            log::debug!("candidate at {:?} has no distinctive colors", g.bbox);
            return false;
        };
        if self.tracks.iter().any(|t| overlap_share(&t.state.bbox, &bbox) >= DUPLICATE_OVERLAP) {
            return false;
        }
        let Some(rect) = bbox.to_pixel_rect(fw, fh) else {
            return false;
        };
        let Ok(ctx) = context_weights(&labels, palette.len(), self.config.entropy_c) else {
            return false;
        };
        let template = match build_template(frame, &palette, &an.shape, &an.grid, g, rect, &ctx, &target) {
            Ok(t) => t,
            Err(e) => {
                log::debug!("candidate at {:?} rejected: {e}", g.bbox);
                return false;
            }
        };

        // Calibrate the offset between the color mode and the box center.
        let center = bbox.center();
        let ms_offset = weight_field(&labels, &ctx, &target)
            .and_then(|field| {
                let kernel = KernelSpec::new(self.config.kernel, self.config.bandwidth_scale * bbox.diagonal() / 2.0)?;
                meanshift_iterate(center, |_| Ok(field.clone()), &kernel, self.config.ms_eps, self.config.ms_max_iters)
            })
            .map(|o| o.center - center)
            .unwrap_or(Vec2::ZERO);

        let id = self.next_id;
        self.next_id += 1;
        self.tracks.push(Track {
            state: TrackState {
                id,
                bbox,
                center,
                velocity,
                confidence: 1.0,
                mode: TrackMode::Normal,
                age: 1,
                misses: 0,
            },
            palette,
            template,
            target,
            ms_offset,
        });
        true
    }

    /// Blocks with a known non-zero motion and the boxes of moving tracks
    /// learn at the slow rate; everything else (static ghosts included) at
    /// the fast one.
    fn update_background(&mut self, an: &FrameAnalysis) -> Result<()> {
        let (w, h) = (an.gray.width, an.gray.height);
        let mut region = an
            .grid
            .region_mask(|_, b| b.moving && b.motion.is_some_and(|m| m.to_vec2().norm() >= MOVING_SPEED));
        for t in &self.tracks {
            if t.state.velocity.norm() < MOVING_SPEED {
                continue;
            }
            if let Some(r) = t.state.bbox.to_pixel_rect(w, h) {
                let r = r.expand(2, w, h);
                for y in r.y..r.bottom() {
                    region[y * w + r.x..y * w + r.right()].fill(true);
                }
            }
        }
        let rates = self.config.learning_rates()?;
        self.background.update_model(&an.gray, &region, rates)
    }
}

/// Box around the flagged pixels of a group, including the thin slivers that
/// fall into adjacent blocks below the moving threshold. Rows and columns
/// with fewer than a quarter of the peak count are treated as noise.
fn silhouette_box(mask: &ForegroundMask, grid: &BlockGrid, g: &BlockGroup) -> Option<BoundingBox> {
    let mut inside = vec![false; grid.blocks.len()];
    for &m in &g.members {
        inside[m] = true;
        let (r, c) = ((m / grid.cols) as i64, (m % grid.cols) as i64);
        for dr in -1..=1 {
            for dc in -1..=1 {
                let (nr, nc) = (r + dr, c + dc);
                if nr >= 0 && nc >= 0 && (nr as usize) < grid.rows && (nc as usize) < grid.cols {
                    let j = nr as usize * grid.cols + nc as usize;
                    if !grid.blocks[j].moving {
                        inside[j] = true;
                    }
                }
            }
        }
    }
    let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
    for (_, b) in grid.blocks.iter().enumerate().filter(|(i, _)| inside[*i]) {
        x0 = x0.min(b.rect.x);
        y0 = y0.min(b.rect.y);
        x1 = x1.max(b.rect.right());
        y1 = y1.max(b.rect.bottom());
    }
    let bs = grid.block_size;
    let mut cols = vec![0usize; x1 - x0];
    let mut rows = vec![0usize; y1 - y0];
    for y in y0..y1 {
        for x in x0..x1 {
            if mask.get(x, y) && inside[(y / bs) * grid.cols + x / bs] {
                cols[x - x0] += 1;
                rows[y - y0] += 1;
            }
        }
    }
    let (cx0, cx1) = dominant_span(&cols)?;
    let (ry0, ry1) = dominant_span(&rows)?;
    Some(BoundingBox::new(
        (x0 + cx0) as f64,
        (y0 + ry0) as f64,
        (cx1 - cx0) as f64,
        (ry1 - ry0) as f64,
    ))
}

/// Share of the smaller box covered by the other.
fn overlap_share(a: &BoundingBox, b: &BoundingBox) -> f64 {
    a.intersection_area(b) / a.area().min(b.area())
}

/// Real targets change size gradually; a sudden jump in the measured box
/// means part of the target went missing from (or joined) the mask.
fn plausible_resize(prev: &BoundingBox, next: &BoundingBox) -> bool {
    let ok = |a: f64, b: f64| (b / a - 1.0).abs() <= MAX_RESIZE;
    ok(prev.w, next.w) && ok(prev.h, next.h)
}

/// Entropy weight of every palette label over a context region.
fn context_weights(labels: &LabelMap, k: usize, c: f64) -> Result<Vec<f64>> {
    entropy_weights(&labels.histogram(k), c)
}

/// Labels over-represented among the flagged pixels of `rect` relative to
/// the unflagged pixels of the whole map (at least twice as frequent).
fn target_labels(labels: &LabelMap, mask: &ForegroundMask, rect: &PixelRect, k: usize) -> Vec<bool> {
    let mut fg = vec![0usize; k];
    let mut bg = vec![0usize; k];
    let r = labels.rect;
    for y in r.y..r.bottom() {
        for x in r.x..r.right() {
            let l = labels.labels[(y - r.y) * r.w + (x - r.x)] as usize;
            if !mask.get(x, y) {
                bg[l] += 1;
            } else if rect.contains(x as i64, y as i64) {
                fg[l] += 1;
            }
        }
    }
    let (nf, nb) = (fg.iter().sum::<usize>().max(1) as f64, bg.iter().sum::<usize>().max(1) as f64);
    (0..k)
        .map(|l| fg[l] > 0 && fg[l] as f64 / nf >= 2.0 * bg[l] as f64 / nb)
        .collect()
}

/// Box around flagged, target-labeled pixels inside `area`. Rows and
/// columns with fewer than a quarter of the peak count are ignored.
fn color_box(labels: &LabelMap, mask: &ForegroundMask, area: &PixelRect, target: &[bool]) -> Option<BoundingBox> {
    let a = area.intersect(&labels.rect)?;
    let r = labels.rect;
    let mut cols = vec![0usize; a.w];
    let mut rows = vec![0usize; a.h];
    for y in a.y..a.bottom() {
        for x in a.x..a.right() {
            let l = labels.labels[(y - r.y) * r.w + (x - r.x)] as usize;
            if target[l] && mask.get(x, y) {
                cols[x - a.x] += 1;
                rows[y - a.y] += 1;
            }
        }
    }
    let (cx0, cx1) = dominant_span(&cols)?;
    let (ry0, ry1) = dominant_span(&rows)?;
    Some(BoundingBox::new(
        (a.x + cx0) as f64,
        (a.y + ry0) as f64,
        (cx1 - cx0) as f64,
        (ry1 - ry0) as f64,
    ))
}

fn dominant_span(counts: &[usize]) -> Option<(usize, usize)> {
    let peak = *counts.iter().max()?;
    let keep = |&n: &usize| n > 0 && 4 * n >= peak;
    let lo = counts.iter().position(keep)?;
    let hi = counts.iter().rposition(keep)?;
    Some((lo, hi + 1))
}

/// MeanShift weights: the context weight of each target label, zero for the
/// rest. Falls back to plain indicators when every target label saturates
/// the context.
fn weight_field(labels: &LabelMap, ctx: &[f64], target: &[bool]) -> Result<WeightField> {
    let mut per_label: Vec<f64> = ctx
        .iter()
        .zip(target)
        .map(|(&w, &p)| if p { w } else { 0.0 })
        .collect();
    if per_label.iter().all(|&w| w <= 0.0) {
        per_label = target.iter().map(|&p| if p { 1.0 } else { 0.0 }).collect();
    }
    let weights = labels.labels.iter().map(|&l| per_label[l as usize]).collect();
    WeightField::new(labels.rect, weights)
}

/// Template over `rect`: labels of every pixel, weighted by context weight
/// where the mask is set and the label is a target label, zero elsewhere;
/// one component per member block.
#[allow(clippy::too_many_arguments)]
fn build_template(
    frame: &Frame,
    palette: &ColorPalette,
    mask: &ForegroundMask,
    grid: &BlockGrid,
    group: &BlockGroup,
    rect: PixelRect,
    ctx: &[f64],
    target: &[bool],
) -> Result<TargetTemplate> {
    let map = map_rgb_to_labels(frame, rect, palette);
    let mut weights = Vec::with_capacity(rect.area());
    for y in rect.y..rect.bottom() {
        for x in rect.x..rect.right() {
            let l = map.labels[(y - rect.y) * rect.w + (x - rect.x)] as usize;
            weights.push(if mask.get(x, y) && target[l] { ctx[l] } else { 0.0 });
        }
    }
    let mut components = Vec::new();
    for &m in &group.members {
        if let Some(r) = grid.blocks[m].rect.intersect(&rect) {
            components.push(Component {
                rect: PixelRect::new(r.x - rect.x, r.y - rect.y, r.w, r.h),
                priority: gray_density(m, group, grid)?.clamp(0.0, 1.0),
            });
        }
    }
    if components.is_empty() {
        components.push(Component {
            rect: PixelRect::new(0, 0, rect.w, rect.h),
            priority: 1.0,
        });
    }
    TargetTemplate::new(
        (rect.x as i64, rect.y as i64),
        rect.w,
        rect.h,
        map.labels,
        weights,
        components,
        palette.len(),
    )
}

/// One output row: a track state on a 0-based frame index.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackRecord {
    pub frame: usize,
    pub state: TrackState,
}

/// Run the full pipeline over an in-memory sequence.
pub fn track_frames(config: &TrackerConfig, frames: &[Frame]) -> Result<Vec<TrackRecord>> {
    let mut tracker = Tracker::bootstrap(config.clone(), frames)?;
    let mut out = Vec::new();
    for (i, f) in frames.iter().enumerate().skip(config.init_frames) {
        for state in tracker.step(f)? {
            out.push(TrackRecord { frame: i, state });
        }
    }
    Ok(out)
}

/// Push-style wrapper: buffers frames until the bootstrap set is complete,
/// then steps on every further frame.
#[derive(Debug)]
pub struct StreamTracker {
    config: TrackerConfig,
    pending: Vec<Frame>,
    tracker: Option<Tracker>,
    last: Vec<TrackState>,
}

impl StreamTracker {
    pub fn new(config: TrackerConfig) -> Result<Self> {
        config.validate()?;
        Ok(StreamTracker {
            config,
            pending: Vec::new(),
            tracker: None,
            last: Vec::new(),
        })
    }

    pub fn is_bootstrapped(&self) -> bool {
        self.tracker.is_some()
    }

    /// Feed one frame; returns the live tracks after it (empty while
    /// bootstrapping).
    pub fn push(&mut self, frame: Frame) -> Result<&[TrackState]> {
        match &mut self.tracker {
            Some(t) => {
                self.last = t.step(&frame)?;
            }
            None => {
                if let Some(first) = self.pending.first() {
                    if (first.width, first.height) != (frame.width, frame.height) {
                        return Err(Error::DimensionMismatch(format!(
                            "frame is {}x{}, expected {}x{}",
                            frame.width, frame.height, first.width, first.height
                        )));
                    }
                }
                self.pending.push(frame);
                if self.pending.len() >= self.config.init_frames {
                    let frames = std::mem::take(&mut self.pending);
                    self.tracker = Some(Tracker::bootstrap(self.config.clone(), &frames)?);
                }
                self.last.clear();
            }
        }
        Ok(&self.last)
    }

    pub fn tracks(&self) -> &[TrackState] {
        &self.last
    }
}
