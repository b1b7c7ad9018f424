use cntrack::background::{refine_by_gray_histogram, ForegroundMask, GaussianBackground, LearningRates};
use cntrack::blocks::{gray_density, group_blocks, partition_blocks, GroupingParams};
use cntrack::color_names::{
    entropy_weights, map_rgb_to_labels, select_labels, ColorPalette, LabelHistogram, BASE_PROTOTYPES,
};
use cntrack::geometry::{iou, BoundingBox, Offset, PixelRect, Vec2};
use cntrack::graded::{
    confidence, displacement_bounds, feasible_direction_search, graded_match, Component, GradedParams,
    SearchConstraint, TargetTemplate,
};
use cntrack::meanshift::{meanshift_vector, KernelProfile, KernelSpec, WeightField};
use cntrack::records::OutputRecord;
use cntrack::sequence_io::{format_mot, parse_mot_str, to_gray_normalized, Annotation, Frame, GrayFrame, GroundTruth};
use cntrack::synth::{evaluate, generate, EvalOptions, ScenarioSpec};
use cntrack::TrackMode;
use proptest::prelude::*;
use std::path::Path;

fn gray(w: usize, h: usize, vals: Vec<f64>) -> GrayFrame {
    GrayFrame::new(w, h, vals, 0).unwrap()
}

fn mask_from(w: usize, h: usize, flags: Vec<bool>) -> ForegroundMask {
    ForegroundMask { width: w, height: h, flags }
}

prop_compose! {
    fn small_gray()(w in 2usize..12, h in 2usize..12)
        (vals in prop::collection::vec(0.0f64..=1.0, w * h), w in Just(w), h in Just(h)) -> GrayFrame {
        gray(w, h, vals)
    }
}

// ---- background

proptest! {
    #[test]
    fn update_keeps_model_in_range(
        frames in prop::collection::vec(prop::collection::vec(0.0f64..=1.0, 30), 2..5),
        next in prop::collection::vec(0.0f64..=1.0, 30),
        moving in prop::collection::vec(any::<bool>(), 30),
        a_fg in 0.0f64..=1.0,
        extra in 0.0f64..=1.0,
    ) {
        let grays: Vec<GrayFrame> = frames.into_iter().map(|v| gray(6, 5, v)).collect();
        let mut bg = GaussianBackground::init_model(&grays).unwrap();
        let rates = LearningRates::new((a_fg + extra).min(1.0), a_fg).unwrap();
        bg.update_model(&gray(6, 5, next), &moving, rates).unwrap();
        prop_assert!(bg.mu.iter().all(|m| (0.0..=1.0).contains(m)));
        prop_assert!(bg.sigma2.iter().all(|&s| s >= 0.0));
    }

    #[test]
    fn uniform_update_commutes_with_pixel_permutation(
        a in prop::collection::vec(0.0f64..=1.0, 12),
        b in prop::collection::vec(0.0f64..=1.0, 12),
        c in prop::collection::vec(0.0f64..=1.0, 12),
        alpha in 0.0f64..=1.0,
        rot in 0usize..12,
    ) {
        let perm = |v: &[f64]| { let mut v = v.to_vec(); v.rotate_left(rot); v };
        let rates = LearningRates::uniform(alpha).unwrap();
        let none = vec![false; 12];
        let mut plain = GaussianBackground::init_model(&[gray(12, 1, a.clone()), gray(12, 1, b.clone())]).unwrap();
        plain.update_model(&gray(12, 1, c.clone()), &none, rates).unwrap();
        let mut permuted = GaussianBackground::init_model(&[gray(12, 1, perm(&a)), gray(12, 1, perm(&b))]).unwrap();
        permuted.update_model(&gray(12, 1, perm(&c)), &none, rates).unwrap();
        prop_assert_eq!(perm(&plain.mu), permuted.mu);
        prop_assert_eq!(perm(&plain.sigma2), permuted.sigma2);
    }

    #[test]
    fn histogram_refinement_grows_locally(g in small_gray(), seed in any::<u64>(), bins in 1usize..40) {
        let (w, h) = (g.width, g.height);
        let flags: Vec<bool> = (0..w * h).map(|i| (seed >> (i % 64)) & 1 == 1).collect();
        let mask = mask_from(w, h, flags);
        let bg = GaussianBackground::init_model(&[g.clone(), g.clone()]).unwrap();
        let out = refine_by_gray_histogram(&mask, &g, &bg, bins).unwrap();
        for y in 0..h {
            for x in 0..w {
                if !out.get(x, y) {
                    continue;
                }
                let near = (y.saturating_sub(1)..=(y + 1).min(h - 1))
                    .any(|yy| (x.saturating_sub(1)..=(x + 1).min(w - 1)).any(|xx| mask.get(xx, yy)));
                prop_assert!(near, "pixel ({x},{y}) flagged away from the input mask");
            }
        }
    }
}

// ---- blocks

proptest! {
    #[test]
    fn groups_partition_moving_blocks(
        flags in prop::collection::vec(prop::bool::weighted(0.3), 64 * 48),
        motions in prop::collection::vec(prop::option::weighted(0.8, (-3i32..=3, -3i32..=3)), 12),
        theta in 0.05f64..0.6,
        tol in 0.0f64..3.0,
    ) {
        let mut grid = partition_blocks(&mask_from(64, 48, flags), 16).unwrap();
        grid.classify_moving(theta).unwrap();
        for (b, m) in grid.blocks.iter_mut().zip(&motions) {
            b.motion = if b.moving { m.map(|(dx, dy)| Offset::new(dx, dy)) } else { None };
        }
        let groups = group_blocks(&grid, GroupingParams { motion_tol: tol, min_group_blocks: 1 });
        let mut owner = vec![None; grid.blocks.len()];
        for (gi, g) in groups.iter().enumerate() {
            let known: Vec<Vec2> = g.members.iter().filter_map(|&m| grid.blocks[m].motion).map(|o| o.to_vec2()).collect();
            if !known.is_empty() {
                let n = known.len() as f64;
                let mean = known.iter().fold(Vec2::ZERO, |a, &v| a + v) * (1.0 / n);
                prop_assert!((mean - g.velocity).norm() < 1e-9);
            }
            for &m in &g.members {
                prop_assert!(grid.blocks[m].moving);
                prop_assert!(owner[m].is_none(), "block {m} in two groups");
                owner[m] = Some(gi);
                let d = gray_density(m, g, &grid).unwrap();
                prop_assert!((0.0..=1.0).contains(&d));
            }
        }
        // With min_group_blocks = 1 every moving block is kept.
        for (i, b) in grid.blocks.iter().enumerate() {
            prop_assert_eq!(b.moving, owner[i].is_some());
        }
    }
}

// ---- color names

fn random_frame(w: usize, h: usize, px: Vec<u8>) -> Frame {
    Frame::new(w, h, px, 0).unwrap()
}

proptest! {
    #[test]
    fn histogram_probabilities_sum_to_one(labels in prop::collection::vec(0u8..11, 1..200)) {
        let h = LabelHistogram::from_labels(labels, 11);
        let s: f64 = (0..11).map(|l| h.probability(l)).sum();
        prop_assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn entropy_weights_order_and_scale(labels in prop::collection::vec(0u8..11, 1..200), c in 0.01f64..50.0) {
        let h = LabelHistogram::from_labels(labels, 11);
        let w1 = entropy_weights(&h, 1.0).unwrap();
        let wc = entropy_weights(&h, c).unwrap();
        for i in 0..11 {
            prop_assert!((wc[i] - c * w1[i]).abs() <= 1e-9 * (1.0 + wc[i].abs()));
            for j in 0..11 {
                if h.counts[i] > 0 && h.counts[j] > 0 && h.counts[i] <= h.counts[j] {
                    prop_assert!(w1[i] >= w1[j]);
                }
            }
        }
    }

    #[test]
    fn labels_depend_only_on_the_pixel(px in prop::collection::vec(any::<u8>(), 5 * 4 * 3)) {
        // Transposing the image transposes the label map.
        let f = random_frame(5, 4, px.clone());
        let mut t = vec![0u8; px.len()];
        for y in 0..4 {
            for x in 0..5 {
                let (s, d) = (3 * (y * 5 + x), 3 * (x * 4 + y));
                t[d..d + 3].copy_from_slice(&px[s..s + 3]);
            }
        }
        let ft = random_frame(4, 5, t);
        let pal = ColorPalette::full(BASE_PROTOTYPES);
        let a = map_rgb_to_labels(&f, PixelRect::new(0, 0, 5, 4), &pal);
        let b = map_rgb_to_labels(&ft, PixelRect::new(0, 0, 4, 5), &pal);
        for y in 0..4 {
            for x in 0..5 {
                prop_assert_eq!(a.labels[y * 5 + x], b.labels[x * 4 + y]);
            }
        }
    }

    #[test]
    fn label_selection_is_repeatable(px in prop::collection::vec(any::<u8>(), 8 * 8 * 3), k in 1usize..=11) {
        let f = random_frame(8, 8, px);
        let r = PixelRect::new(0, 0, 8, 8);
        let a = select_labels(&f, r, k, &BASE_PROTOTYPES).unwrap();
        let b = select_labels(&f, r, k, &BASE_PROTOTYPES).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(a.selected.len(), k);
        prop_assert!(a.label_weights.iter().all(|&w| w >= 0.0));
        let mut s = a.selected.clone();
        s.sort_unstable();
        s.dedup();
        prop_assert_eq!(s.len(), k);
    }
}

// ---- meanshift

prop_compose! {
    fn field()(w in 3usize..15, h in 3usize..15, x0 in 0usize..20, y0 in 0usize..20)
        (weights in prop::collection::vec(prop_oneof![2 => Just(0.0), 3 => 0.0f64..5.0], w * h),
         w in Just(w), h in Just(h), x0 in Just(x0), y0 in Just(y0)) -> WeightField {
        WeightField::new(PixelRect::new(x0, y0, w, h), weights).unwrap()
    }
}

fn epanechnikov_density(x: Vec2, f: &WeightField, h: f64) -> f64 {
    f.support().map(|(p, w)| w * (1.0 - (p - x).norm_sq() / (h * h)).max(0.0)).sum()
}

proptest! {
    #[test]
    fn shift_stays_in_support_hull_and_ignores_scale(
        f in field(),
        px in 0.0f64..40.0, py in 0.0f64..40.0,
        bw in 1.0f64..30.0,
        gaussian in any::<bool>(),
        c in 0.001f64..1000.0,
    ) {
        let profile = if gaussian { KernelProfile::Gaussian } else { KernelProfile::Epanechnikov };
        let k = KernelSpec::new(profile, bw).unwrap();
        let x = Vec2::new(px, py);
        let Ok(m) = meanshift_vector(x, &f, &k) else { return Ok(()); };
        let y = x + m;
        let pts: Vec<Vec2> = f.support().map(|(p, _)| p).collect();
        let (lx, hx) = pts.iter().fold((f64::MAX, f64::MIN), |a, p| (a.0.min(p.x), a.1.max(p.x)));
        let (ly, hy) = pts.iter().fold((f64::MAX, f64::MIN), |a, p| (a.0.min(p.y), a.1.max(p.y)));
        prop_assert!(y.x >= lx - 1e-9 && y.x <= hx + 1e-9 && y.y >= ly - 1e-9 && y.y <= hy + 1e-9);

        let scaled = WeightField::new(f.window, f.weights.iter().map(|w| w * c).collect()).unwrap();
        let ms = meanshift_vector(x, &scaled, &k).unwrap();
        prop_assert!((ms - m).norm() <= 1e-9 * (1.0 + m.norm()));
    }

    #[test]
    fn flat_profile_climbs_the_epanechnikov_density(f in field(), px in 0.0f64..40.0, py in 0.0f64..40.0, bw in 1.0f64..30.0) {
        let k = KernelSpec::new(KernelProfile::Epanechnikov, bw).unwrap();
        let mut x = Vec2::new(px, py);
        for _ in 0..10 {
            let Ok(m) = meanshift_vector(x, &f, &k) else { break; };
            let before = epanechnikov_density(x, &f, bw);
            x = x + m;
            let after = epanechnikov_density(x, &f, bw);
            prop_assert!(after >= before - 1e-9 * (1.0 + before), "{before} -> {after}");
        }
    }
}

// ---- graded matching

prop_compose! {
    fn template_and_labels()(tw in 2usize..10, th in 2usize..10, fw in 12usize..30, fh in 12usize..30)
        (tl in prop::collection::vec(0u8..4, tw * th),
         tweights in prop::collection::vec(prop_oneof![1 => Just(0.0), 3 => 0.01f64..3.0], tw * th),
         fl in prop::collection::vec(0u8..4, fw * fh),
         ax in 0i64..(fw - tw) as i64, ay in 0i64..(fh - th) as i64,
         tw in Just(tw), th in Just(th), fw in Just(fw), fh in Just(fh))
        -> (usize, usize, Vec<u8>, Vec<f64>, (i64, i64), cntrack::color_names::LabelMap) {
        (tw, th, tl, tweights, (ax, ay), cntrack::color_names::LabelMap { rect: PixelRect::new(0, 0, fw, fh), labels: fl })
    }
}

fn halves(tw: usize, th: usize) -> Vec<Component> {
    if tw >= 2 {
        let l = tw / 2;
        vec![
            Component { rect: PixelRect::new(0, 0, l, th), priority: 0.8 },
            Component { rect: PixelRect::new(l, 0, tw - l, th), priority: 0.4 },
        ]
    } else {
        vec![Component { rect: PixelRect::new(0, 0, tw, th), priority: 1.0 }]
    }
}

proptest! {
    #[test]
    fn confidence_bounded_and_scale_free(
        (tw, th, tl, tweights, anchor, labels) in template_and_labels(),
        dx in -6i32..=6, dy in -6i32..=6,
        c in 0.001f64..1000.0,
    ) {
        let Ok(t) = TargetTemplate::new(anchor, tw, th, tl.clone(), tweights.clone(), halves(tw, th), 4) else {
            return Ok(());
        };
        let d = confidence(&t, &labels, Offset::new(dx, dy)).unwrap();
        prop_assert!((0.0..=1.0).contains(&d));
        let scaled = TargetTemplate::new(anchor, tw, th, tl, tweights.iter().map(|w| w * c).collect(), halves(tw, th), 4).unwrap();
        let ds = confidence(&scaled, &labels, Offset::new(dx, dy)).unwrap();
        prop_assert!((d - ds).abs() < 1e-9);
    }

    #[test]
    fn bounds_hold_every_scaled_estimate(
        dx in -30.0f64..30.0, dy in -30.0f64..30.0,
        lmin in 0.1f64..1.0, span in 0.1f64..2.0, r in 0.5f64..5.0,
        t in 0.0f64..=1.0,
    ) {
        let lmax = lmin + span;
        let b = displacement_bounds(Vec2::new(dx, dy), lmin, lmax, r).unwrap();
        let l = lmin + t * (lmax - lmin);
        let p = Vec2::new(dx, dy) * l;
        prop_assert!(b.dx.0 <= p.x + 1e-9 && p.x <= b.dx.1 + 1e-9);
        prop_assert!(b.dy.0 <= p.y + 1e-9 && p.y <= b.dy.1 + 1e-9);
    }

    #[test]
    fn search_stays_in_the_box(
        xl in -10i32..5, xw in 0i32..12, yl in -10i32..5, yh in 0i32..12,
        sx in -20i32..20, sy in -20i32..20,
        step in 1u32..6, budget in 1usize..300,
        coef in prop::collection::vec(-3.0f64..3.0, 6),
    ) {
        let b = SearchConstraint::new((xl as f64, (xl + xw) as f64), (yl as f64, (yl + yh) as f64)).unwrap();
        let mut evals = 0;
        let mut outside = 0;
        // Arbitrary (not necessarily unimodal) field.
        let out = feasible_direction_search(|o| {
            evals += 1;
            if !b.contains(o) { outside += 1; }
            let (x, y) = (o.dx as f64, o.dy as f64);
            coef[0] * x + coef[1] * y + coef[2] * x * y + coef[3] * (x * 0.7).sin() + coef[4] * (y * 1.3).cos() - coef[5].abs() * (x * x + y * y) * 0.01
        }, &b, Offset::new(sx, sy), step, budget);
        prop_assert_eq!(outside, 0);
        prop_assert!(b.contains(out.offset));
        prop_assert!(evals <= budget.max(1));
    }

    #[test]
    fn fused_offset_lies_among_survivors(
        (tw, th, tl, tweights, anchor, labels) in template_and_labels(),
        px in -3.0f64..3.0, py in -3.0f64..3.0,
        floor in 0.0f64..1.0,
    ) {
        let Ok(t) = TargetTemplate::new(anchor, tw, th, tl, tweights, halves(tw, th), 4) else {
            return Ok(());
        };
        let prior = Vec2::new(px, py);
        let bounds = displacement_bounds(prior, 0.5, 2.0, 3.0).unwrap();
        let params = GradedParams { component_floor: floor, ..GradedParams::default() };
        let m = graded_match(&t, &labels, &bounds, prior, &params).unwrap();
        let alive: Vec<Vec2> = m.components.iter().filter(|c| !c.occluded).map(|c| c.offset.to_vec2()).collect();
        if alive.is_empty() {
            prop_assert!(m.coasting);
            prop_assert_eq!(m.offset, prior);
        } else {
            prop_assert!(!m.coasting);
            let lo = alive.iter().fold(Vec2::new(f64::MAX, f64::MAX), |a, v| Vec2::new(a.x.min(v.x), a.y.min(v.y)));
            let hi = alive.iter().fold(Vec2::new(f64::MIN, f64::MIN), |a, v| Vec2::new(a.x.max(v.x), a.y.max(v.y)));
            prop_assert!(m.offset.x >= lo.x - 1e-9 && m.offset.x <= hi.x + 1e-9);
            prop_assert!(m.offset.y >= lo.y - 1e-9 && m.offset.y <= hi.y + 1e-9);
            prop_assert!((0.0..=1.0).contains(&m.score));
        }
    }
}

// ---- geometry, io, evaluation

prop_compose! {
    fn bbox()(x in -50.0f64..300.0, y in -50.0f64..300.0, w in 0.5f64..120.0, h in 0.5f64..120.0) -> BoundingBox {
        BoundingBox::new(x, y, w, h)
    }
}

proptest! {
    #[test]
    fn iou_symmetric_and_bounded(a in bbox(), b in bbox()) {
        let (ab, ba) = (iou(&a, &b), iou(&b, &a));
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert!((ab - ba).abs() < 1e-12);
        prop_assert!((iou(&a, &a) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gray_of_equal_channels_is_the_value(v in any::<u8>(), w in 1usize..6, h in 1usize..6) {
        let g = to_gray_normalized(&Frame::filled(w, h, [v, v, v], 0));
        prop_assert!(g.values.iter().all(|&x| (x - v as f64 / 255.0).abs() < 1e-12));
    }

    #[test]
    fn ground_truth_round_trips(
        rows in prop::collection::btree_map(0usize..40, prop::collection::vec((1u64..9, -20i32..300, -20i32..300, 1i32..90, 1i32..90), 1..4), 1..10)
    ) {
        let gt: GroundTruth = rows.into_iter().map(|(f, v)| {
            (f, v.into_iter().map(|(id, x, y, w, h)| Annotation { id, bbox: BoundingBox::new(x as f64, y as f64, w as f64, h as f64) }).collect())
        }).collect();
        let text = format_mot(&gt);
        let back = parse_mot_str(&text, Path::new("gt.csv")).unwrap();
        prop_assert_eq!(format_mot(&back), text);
    }

    #[test]
    fn evaluation_ignores_record_order(
        boxes in prop::collection::vec((0usize..6, 1u64..4, bbox()), 1..25),
        truths in prop::collection::vec((0usize..6, 1u64..4, bbox()), 1..15),
        rot in 0usize..25,
    ) {
        let mut gt = GroundTruth::new();
        for (f, id, b) in truths {
            gt.entry(f).or_default().push(Annotation { id, bbox: b });
        }
        let mut outs: Vec<OutputRecord> = boxes.into_iter().map(|(frame, id, bbox)| OutputRecord {
            frame, id, bbox, confidence: 1.0, mode: TrackMode::Normal,
        }).collect();
        let a = evaluate(&outs, &gt, &EvalOptions::default()).unwrap();
        let n = outs.len();
        outs.rotate_left(rot % n);
        outs.reverse();
        let b = evaluate(&outs, &gt, &EvalOptions::default()).unwrap();
        prop_assert_eq!(a, b);
    }
}

// ---- synthesis and the full pipeline

fn scenario(seed: u64, x: f64, y: f64, vx: f64, vy: f64, color: &str) -> ScenarioSpec {
    ScenarioSpec::from_json_str(&format!(
        r#"{{"width": 160, "height": 120, "n_frames": 30,
            "background": {{"kind": "noise", "mean": 120, "sigma": 4}},
            "targets": [{{"bbox": [{x}, {y}, 28, 24], "velocity": [{vx}, {vy}], "colors": ["{color}"]}}],
            "rng_seed": {seed}}}"#
    ))
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, ..ProptestConfig::default() })]

    #[test]
    fn generation_is_pure(seed in any::<u64>(), x in 10.0f64..60.0, vx in -1.0f64..3.0) {
        let spec = scenario(seed, x, 40.0, vx, 0.5, "red");
        let (f1, g1) = generate(&spec).unwrap();
        let (f2, g2) = generate(&spec).unwrap();
        prop_assert_eq!(f1, f2);
        prop_assert_eq!(g1, g2);
    }

    #[test]
    fn pipeline_invariants(
        seed in any::<u64>(),
        x in 5.0f64..100.0, y in 5.0f64..80.0,
        vx in -3.0f64..3.0, vy in -2.0f64..2.0,
        color in prop::sample::select(vec!["red", "blue", "green", "yellow", "purple"]),
    ) {
        let spec = scenario(seed, x, y, vx, vy, color);
        let (frames, _) = generate(&spec).unwrap();
        let config = cntrack::TrackerConfig::default();
        let recs = cntrack::track_frames(&config, &frames).unwrap();
        prop_assert_eq!(&recs, &cntrack::track_frames(&config, &frames).unwrap());
        let mut last_seen: std::collections::BTreeMap<u64, usize> = Default::default();
        let mut max_id = 0;
        for r in &recs {
            let s = &r.state;
            prop_assert!(s.bbox.intersects_frame(160, 120), "{s:?}");
            prop_assert!((0.0..=1.0).contains(&s.confidence));
            if s.mode == TrackMode::Normal {
                prop_assert_eq!(s.misses, 0);
            }
            // An id, once gone, never comes back; new ids only grow.
            match last_seen.get(&s.id) {
                Some(&f) => prop_assert_eq!(f + 1, r.frame, "id {} reused", s.id),
                None => {
                    prop_assert!(s.id > max_id);
                    max_id = s.id;
                }
            }
            last_seen.insert(s.id, r.frame);
        }
    }
}
