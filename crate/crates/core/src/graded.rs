//! Template confidence and the graded (per-component) fallback match.
//!
//! When the whole-template confidence drops, the template is matched piece
//! by piece: each block component searches independently for its best
//! displacement inside a box predicted from the track's motion, components
//! that no longer match are treated as occluded, and the survivors vote on
//! the final displacement.

use std::collections::HashMap;

use crate::color_names::{LabelHistogram, LabelMap};
use crate::error::{Error, Result};
use crate::geometry::{Offset, PixelRect, Vec2};

/// One block-shaped piece of a template.
#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    /// Rectangle relative to the template's top-left corner.
    pub rect: PixelRect,
    /// Matching priority in `[0, 1]` (the block's gray density).
    pub priority: f64,
}

/// Label patch of a target, anchored at the target's last known position.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetTemplate {
    /// Frame coordinates of the top-left template pixel. May move off-frame.
    pub anchor: (i64, i64),
    pub width: usize,
    pub height: usize,
    pub labels: Vec<u8>,
    pub weights: Vec<f64>,
    pub components: Vec<Component>,
    pub histogram: LabelHistogram,
}

impl TargetTemplate {
    pub fn new(
        anchor: (i64, i64),
        width: usize,
        height: usize,
        labels: Vec<u8>,
        weights: Vec<f64>,
        components: Vec<Component>,
        n_labels: usize,
    ) -> Result<Self> {
        let n = width * height;
        if n == 0 || labels.len() != n || weights.len() != n {
            return Err(Error::InvalidArgument(format!(
                "template {width}x{height} with {} labels and {} weights",
                labels.len(),
                weights.len()
            )));
        }
        if weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::InvalidArgument("template weights must be non-negative".into()));
        }
        if !(weights.iter().sum::<f64>() > 0.0) {
            return Err(Error::ZeroWeight);
        }
        let bounds = PixelRect::new(0, 0, width, height);
        for c in &components {
            if c.rect.area() == 0 || c.rect.intersect(&bounds) != Some(c.rect) {
                return Err(Error::InvalidArgument(format!("component {:?} outside template", c.rect)));
            }
            if !(0.0..=1.0).contains(&c.priority) {
                return Err(Error::InvalidArgument(format!("component priority {} outside [0, 1]", c.priority)));
            }
        }
        if labels.iter().any(|&l| l as usize >= n_labels) {
            return Err(Error::InvalidArgument("template label outside palette".into()));
        }
        let histogram = LabelHistogram::from_labels(labels.iter().copied(), n_labels);
        Ok(TargetTemplate {
            anchor,
            width,
            height,
            labels,
            weights,
            components,
            histogram,
        })
    }

    pub fn full_rect(&self) -> PixelRect {
        PixelRect::new(0, 0, self.width, self.height)
    }
}

/// Weighted share of template pixels inside `part` whose label reappears
/// at the displaced position. Pixels displaced outside `labels` count as
/// mismatches.
pub fn partial_confidence(template: &TargetTemplate, part: &PixelRect, labels: &LabelMap, delta: Offset) -> Result<f64> {
    let (ax, ay) = template.anchor;
    let (mut hit, mut total) = (0.0, 0.0);
    for j in part.y..part.bottom() {
        let row = j * template.width;
        let fy = ay + j as i64 + delta.dy as i64;
        for i in part.x..part.right() {
            let w = template.weights[row + i];
            total += w;
            if w > 0.0 && labels.get(ax + i as i64 + delta.dx as i64, fy) == Some(template.labels[row + i]) {
                hit += w;
            }
        }
    }
    if !(total > 0.0) {
        return Err(Error::ZeroWeight);
    }
    Ok((hit / total).clamp(0.0, 1.0))
}

/// Confidence degree of the whole template at displacement `delta`.
pub fn confidence(template: &TargetTemplate, labels: &LabelMap, delta: Offset) -> Result<f64> {
    partial_confidence(template, &template.full_rect(), labels, delta)
}

/// Closed per-axis intervals of admissible displacement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchConstraint {
    pub dx: (f64, f64),
    pub dy: (f64, f64),
}

fn int_range((lo, hi): (f64, f64)) -> (i32, i32) {
    let (a, b) = (lo.ceil() as i32, hi.floor() as i32);
    if a <= b {
        (a, b)
    } else {
        // No integer inside; fall back to the nearest one to the midpoint.
        let m = ((lo + hi) / 2.0).round() as i32;
        (m, m)
    }
}

impl SearchConstraint {
    pub fn new(dx: (f64, f64), dy: (f64, f64)) -> Result<Self> {
        if !(dx.0 <= dx.1 && dy.0 <= dy.1) {
            return Err(Error::InvalidArgument(format!("empty constraint {dx:?} x {dy:?}")));
        }
        Ok(SearchConstraint { dx, dy })
    }

    /// Integer box `(x_lo, x_hi, y_lo, y_hi)` of feasible offsets.
    pub fn int_box(&self) -> (i32, i32, i32, i32) {
        let (xl, xh) = int_range(self.dx);
        let (yl, yh) = int_range(self.dy);
        (xl, xh, yl, yh)
    }

    pub fn contains(&self, o: Offset) -> bool {
        let (xl, xh, yl, yh) = self.int_box();
        (xl..=xh).contains(&o.dx) && (yl..=yh).contains(&o.dy)
    }

    pub fn project(&self, o: Offset) -> Offset {
        let (xl, xh, yl, yh) = self.int_box();
        Offset::new(o.dx.clamp(xl, xh), o.dy.clamp(yl, yh))
    }
}

/// Per-axis feasible range around a predicted displacement: between
/// `lambda_min` and `lambda_max` times the estimate. An axis whose estimate
/// is smaller than `min_radius` is widened to cover `±min_radius` as well.
pub fn displacement_bounds(delta_hat: Vec2, lambda_min: f64, lambda_max: f64, min_radius: f64) -> Result<SearchConstraint> {
    if !(lambda_min < lambda_max) {
        return Err(Error::InvalidArgument(format!(
            "lambda_min ({lambda_min}) must be below lambda_max ({lambda_max})"
        )));
    }
    let axis = |d: f64| {
        let (a, b) = (lambda_min * d, lambda_max * d);
        let (lo, hi) = (a.min(b), a.max(b));
        if d.abs() >= min_radius {
            (lo, hi)
        } else {
            // Small estimates still search locally, but never exclude the
            // scaled estimate itself.
            (lo.min(-min_radius), hi.max(min_radius))
        }
    };
    SearchConstraint::new(axis(delta_hat.x), axis(delta_hat.y))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchOutcome {
    pub offset: Offset,
    pub score: f64,
    pub evaluations: usize,
}

const DIRECTIONS: [(i32, i32); 8] = [(-1, -1), (0, -1), (1, -1), (-1, 0), (1, 0), (-1, 1), (0, 1), (1, 1)];

/// Projected hill climbing over integer offsets.
///
/// At each step the eight neighbors at the current step length are scored,
/// each projected back into the box first; the search moves to the best
/// strictly improving neighbor, and halves the step when none improves. It
/// stops once the step drops below one pixel or `max_evals` distinct offsets
/// have been scored. Every scored and returned offset lies in the box.
pub fn feasible_direction_search<F>(
    mut score: F,
    constraint: &SearchConstraint,
    start: Offset,
    step0: u32,
    max_evals: usize,
) -> SearchOutcome
where
    F: FnMut(Offset) -> f64,
{
    let mut seen: HashMap<Offset, f64> = HashMap::new();
    let mut x = constraint.project(start);
    let mut fx = score(x);
    seen.insert(x, fx);
    let mut step = step0.max(1) as i32;

    'outer: while step >= 1 {
        let mut best: Option<(Offset, f64)> = None;
        for (dx, dy) in DIRECTIONS {
            let cand = constraint.project(Offset::new(x.dx + dx * step, x.dy + dy * step));
            if cand == x {
                continue;
            }
            let s = match seen.get(&cand) {
                Some(&s) => s,
                None => {
                    if seen.len() >= max_evals {
                        if let Some((b, bs)) = best {
                            x = b;
                            fx = bs;
                        }
                        break 'outer;
                    }
                    let s = score(cand);
                    seen.insert(cand, s);
                    s
                }
            };
            if s > fx && best.is_none_or(|(_, bs)| s > bs) {
                best = Some((cand, s));
            }
        }
        match best {
            Some((b, bs)) => {
                x = b;
                fx = bs;
            }
            None => step /= 2,
        }
    }
    SearchOutcome {
        offset: x,
        score: fx,
        evaluations: seen.len(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatchMode {
    Normal,
    Graded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComponentMatch {
    pub index: usize,
    pub offset: Offset,
    pub score: f64,
    pub occluded: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    pub offset: Vec2,
    pub score: f64,
    /// In processing order (descending priority).
    pub components: Vec<ComponentMatch>,
    pub mode: MatchMode,
    /// Every component was occluded; `offset` is the prior prediction.
    pub coasting: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradedParams {
    pub component_floor: f64,
    pub step0: u32,
    pub max_evals: usize,
}

impl Default for GradedParams {
    fn default() -> Self {
        GradedParams {
            component_floor: 0.3,
            step0: 2,
            max_evals: 200,
        }
    }
}

/// Match each component separately inside `constraint` and fuse the
/// survivors' offsets, weighted by priority times score.
pub fn graded_match(
    template: &TargetTemplate,
    labels: &LabelMap,
    constraint: &SearchConstraint,
    prior_delta: Vec2,
    params: &GradedParams,
) -> Result<MatchResult> {
    if template.components.is_empty() {
        return Err(Error::InvalidArgument("template has no components".into()));
    }
    let mut order: Vec<usize> = (0..template.components.len()).collect();
    order.sort_by(|&a, &b| {
        template.components[b]
            .priority
            .total_cmp(&template.components[a].priority)
            .then(a.cmp(&b))
    });

    let start = prior_delta.round();
    let mut matches = Vec::with_capacity(order.len());
    for idx in order {
        let comp = &template.components[idx];
        // A component whose pixels all carry zero weight cannot be matched.
        if partial_confidence(template, &comp.rect, labels, Offset::ZERO).is_err() {
            matches.push(ComponentMatch {
                index: idx,
                offset: constraint.project(start),
                score: 0.0,
                occluded: true,
            });
            continue;
        }
        let out = feasible_direction_search(
            |d| partial_confidence(template, &comp.rect, labels, d).unwrap_or(0.0),
            constraint,
            start,
            params.step0,
            params.max_evals,
        );
        matches.push(ComponentMatch {
            index: idx,
            offset: out.offset,
            score: out.score,
            occluded: out.score < params.component_floor,
        });
    }

    let survivors: Vec<&ComponentMatch> = matches.iter().filter(|m| !m.occluded).collect();
    if survivors.is_empty() {
        let score = confidence(template, labels, start)?;
        return Ok(MatchResult {
            offset: prior_delta,
            score,
            components: matches,
            mode: MatchMode::Graded,
            coasting: true,
        });
    }

    let fuse = |weight: &dyn Fn(&ComponentMatch) -> f64| {
        let mut acc = Vec2::ZERO;
        let mut total = 0.0;
        for m in &survivors {
            let w = weight(m);
            acc = acc + m.offset.to_vec2() * w;
            total += w;
        }
        (total > 0.0).then(|| acc * (1.0 / total))
    };
    let offset = fuse(&|m| template.components[m.index].priority * m.score)
        .or_else(|| fuse(&|m| m.score))
        .or_else(|| fuse(&|_| 1.0))
        .expect("at least one survivor");
    let score = confidence(template, labels, offset.round())?;
    Ok(MatchResult {
        offset,
        score,
        components: matches,
        mode: MatchMode::Graded,
        coasting: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform_template(labels: Vec<u8>, w: usize, h: usize, k: usize) -> TargetTemplate {
        TargetTemplate::new((0, 0), w, h, labels, vec![1.0; w * h], vec![], k).unwrap()
    }

    fn label_map(rect: PixelRect, labels: Vec<u8>) -> LabelMap {
        LabelMap { rect, labels }
    }

    #[test]
    fn confidence_full_empty_and_half() {
        let t = uniform_template(vec![0, 1, 0, 1], 2, 2, 2);
        let same = label_map(PixelRect::new(0, 0, 2, 2), vec![0, 1, 0, 1]);
        assert_eq!(confidence(&t, &same, Offset::ZERO).unwrap(), 1.0);
        let none = label_map(PixelRect::new(0, 0, 2, 2), vec![1, 0, 1, 0]);
        assert_eq!(confidence(&t, &none, Offset::ZERO).unwrap(), 0.0);
        let half = label_map(PixelRect::new(0, 0, 2, 2), vec![0, 1, 1, 0]);
        assert_eq!(confidence(&t, &half, Offset::ZERO).unwrap(), 0.5);
    }

    #[test]
    fn confidence_out_of_map_counts_as_mismatch() {
        let t = uniform_template(vec![0; 4], 2, 2, 1);
        let m = label_map(PixelRect::new(0, 0, 2, 2), vec![0; 4]);
        assert_eq!(confidence(&t, &m, Offset::new(1, 0)).unwrap(), 0.5);
        assert_eq!(confidence(&t, &m, Offset::new(5, 5)).unwrap(), 0.0);
    }

    #[test]
    fn zero_weight_template_is_rejected() {
        let err = TargetTemplate::new((0, 0), 1, 1, vec![0], vec![0.0], vec![], 1).unwrap_err();
        assert!(matches!(err, Error::ZeroWeight));
    }

    #[test]
    fn bounds_examples() {
        let c = displacement_bounds(Vec2::new(10.0, 0.0), 0.5, 2.0, 3.0).unwrap();
        assert_eq!(c.dx, (5.0, 20.0));
        assert_eq!(c.dy, (-3.0, 3.0));
        let c = displacement_bounds(Vec2::new(-10.0, 0.0), 0.5, 2.0, 3.0).unwrap();
        assert_eq!(c.dx, (-20.0, -5.0));
        let c = displacement_bounds(Vec2::ZERO, 0.5, 2.0, 3.0).unwrap();
        assert_eq!((c.dx, c.dy), ((-3.0, 3.0), (-3.0, 3.0)));
        assert!(displacement_bounds(Vec2::ZERO, 2.0, 0.5, 3.0).is_err());
    }

    #[test]
    fn search_at_optimum_stays() {
        let c = SearchConstraint::new((-10.0, 10.0), (-10.0, 10.0)).unwrap();
        let f = |o: Offset| -((o.dx - 2).pow(2) + (o.dy + 1).pow(2)) as f64;
        let out = feasible_direction_search(f, &c, Offset::new(2, -1), 2, 200);
        assert_eq!(out.offset, Offset::new(2, -1));
    }

    #[test]
    fn search_clamps_start_and_stays_feasible() {
        let c = SearchConstraint::new((0.0, 4.0), (0.0, 4.0)).unwrap();
        let mut visited = Vec::new();
        let out = feasible_direction_search(
            |o| {
                visited.push(o);
                -((o.dx - 30).pow(2) + (o.dy - 30).pow(2)) as f64
            },
            &c,
            Offset::new(-9, 50),
            2,
            200,
        );
        assert!(visited.iter().all(|&o| c.contains(o)));
        assert_eq!(out.offset, Offset::new(4, 4));
    }

    #[test]
    fn search_respects_budget() {
        let c = SearchConstraint::new((-50.0, 50.0), (-50.0, 50.0)).unwrap();
        let out = feasible_direction_search(|o| (o.dx + o.dy) as f64, &c, Offset::ZERO, 2, 10);
        assert!(out.evaluations <= 10);
    }

    fn textured_labels(w: usize, h: usize) -> Vec<u8> {
        // Deterministic 4x4-cell pattern over 3 labels, aperiodic enough
        // for unique matches.
        (0..w * h)
            .map(|i| {
                let (x, y) = (i % w / 4, i / w / 4);
                ((x * 7 + y * 3 + (x * y) % 5) % 3) as u8
            })
            .collect()
    }

    fn scene_with(template_labels: &[u8], tw: usize, th: usize, at: (usize, usize), occlude_left: bool) -> LabelMap {
        let (w, h) = (80, 60);
        let mut labels = vec![3u8; w * h];
        for j in 0..th {
            for i in 0..tw {
                let v = if occlude_left && i < tw / 2 { 4 } else { template_labels[j * tw + i] };
                labels[(at.1 + j) * w + at.0 + i] = v;
            }
        }
        label_map(PixelRect::new(0, 0, w, h), labels)
    }

    fn component_template(tw: usize, th: usize) -> TargetTemplate {
        let labels = textured_labels(tw, th);
        let mut comps = Vec::new();
        for by in (0..th).step_by(8) {
            for bx in (0..tw).step_by(8) {
                comps.push(Component {
                    rect: PixelRect::new(bx, by, 8, 8),
                    priority: 0.5,
                });
            }
        }
        TargetTemplate::new((20, 20), tw, th, labels, vec![1.0; tw * th], comps, 5).unwrap()
    }

    #[test]
    fn graded_unoccluded_recovers_shift() {
        let t = component_template(24, 16);
        let frame = scene_with(&t.labels, 24, 16, (25, 20), false);
        let c = displacement_bounds(Vec2::new(4.0, 0.0), 0.5, 2.0, 3.0).unwrap();
        let r = graded_match(&t, &frame, &c, Vec2::new(4.0, 0.0), &GradedParams::default()).unwrap();
        assert!(!r.coasting);
        assert!((r.offset - Vec2::new(5.0, 0.0)).norm() < 1e-9, "{:?}", r.offset);
        assert_eq!(r.score, 1.0);
        assert!(c.contains(r.offset.round()));
    }

    #[test]
    fn graded_left_half_occluded() {
        let t = component_template(24, 16);
        let frame = scene_with(&t.labels, 24, 16, (25, 20), true);
        let c = displacement_bounds(Vec2::new(4.0, 0.0), 0.5, 2.0, 3.0).unwrap();
        let r = graded_match(&t, &frame, &c, Vec2::new(4.0, 0.0), &GradedParams::default()).unwrap();
        for m in &r.components {
            let comp = &t.components[m.index];
            if comp.rect.right() <= 12 {
                assert!(m.occluded, "left component {:?} should be occluded", comp.rect);
            }
        }
        assert!((r.offset - Vec2::new(5.0, 0.0)).norm() <= 1.0, "{:?}", r.offset);
    }

    #[test]
    fn graded_all_occluded_coasts() {
        let t = component_template(24, 16);
        let frame = label_map(PixelRect::new(0, 0, 80, 60), vec![4u8; 80 * 60]);
        let c = displacement_bounds(Vec2::new(4.0, 0.0), 0.5, 2.0, 3.0).unwrap();
        let prior = Vec2::new(4.0, 0.5);
        let r = graded_match(&t, &frame, &c, prior, &GradedParams::default()).unwrap();
        assert!(r.coasting);
        assert_eq!(r.offset, prior);
        assert_eq!(r.mode, MatchMode::Graded);
    }

    #[test]
    fn graded_needs_components() {
        let t = uniform_template(vec![0; 4], 2, 2, 1);
        let m = label_map(PixelRect::new(0, 0, 2, 2), vec![0; 4]);
        let c = SearchConstraint::new((-1.0, 1.0), (-1.0, 1.0)).unwrap();
        assert!(graded_match(&t, &m, &c, Vec2::ZERO, &GradedParams::default()).is_err());
    }
}
