//! Color-name quantization, discriminative palette reduction, and
//! label-rarity weights.
//!
//! RGB values are mapped onto eleven named prototypes. For a given region a
//! reduced palette of `K` labels is chosen greedily: the most frequent label
//! first, then repeatedly the label whose Fisher-projected separation from the
//! already chosen labels, times its frequency, is largest. Pixel weights come
//! from the self-information of each label.

use std::path::Path;

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::geometry::PixelRect;
use crate::sequence_io::Frame;

pub const BASE_LABELS: usize = 11;

pub const BASE_NAMES: [&str; BASE_LABELS] = [
    "black", "blue", "brown", "gray", "green", "orange", "pink", "purple", "red", "white", "yellow",
];

pub const BASE_PROTOTYPES: [[u8; 3]; BASE_LABELS] = [
    [0, 0, 0],
    [0, 0, 255],
    [139, 69, 19],
    [128, 128, 128],
    [0, 128, 0],
    [255, 165, 0],
    [255, 192, 203],
    [128, 0, 128],
    [255, 0, 0],
    [255, 255, 255],
    [255, 255, 0],
];

pub fn base_index(name: &str) -> Option<usize> {
    BASE_NAMES.iter().position(|n| n.eq_ignore_ascii_case(name.trim()))
}

/// Eleven base prototypes plus the selected sub-palette.
#[derive(Debug, Clone, PartialEq)]
pub struct ColorPalette {
    pub base: [[u8; 3]; BASE_LABELS],
    /// Base indices of the selected labels, in selection order.
    pub selected: Vec<usize>,
    /// Selection weight of each selected label (same order as `selected`).
    pub label_weights: Vec<f64>,
    /// True when fewer labels occurred than were requested and the palette
    /// was padded with unused base labels.
    pub padded: bool,
}

impl Default for ColorPalette {
    fn default() -> Self {
        Self::full(BASE_PROTOTYPES)
    }
}

impl ColorPalette {
    /// Every base label selected, in base order.
    pub fn full(base: [[u8; 3]; BASE_LABELS]) -> Self {
        ColorPalette {
            base,
            selected: (0..BASE_LABELS).collect(),
            label_weights: vec![1.0; BASE_LABELS],
            padded: false,
        }
    }

    pub fn len(&self) -> usize {
        self.selected.len()
    }

    pub fn is_empty(&self) -> bool {
        self.selected.is_empty()
    }

    pub fn name(&self, label: u8) -> &'static str {
        BASE_NAMES[self.selected[label as usize]]
    }

    /// Index into `selected` of the prototype nearest to `rgb`; ties go to
    /// the lower index.
    #[inline]
    pub fn nearest(&self, rgb: [u8; 3]) -> u8 {
        let mut best = (u32::MAX, 0u8);
        for (k, &b) in self.selected.iter().enumerate() {
            let p = self.base[b];
            let d = sq(rgb[0], p[0]) + sq(rgb[1], p[1]) + sq(rgb[2], p[2]);
            if d < best.0 {
                best = (d, k as u8);
            }
        }
        best.1
    }
}

#[inline]
fn sq(a: u8, b: u8) -> u32 {
    let d = a as i32 - b as i32;
    (d * d) as u32
}

/// Read `name,R,G,B` lines overriding the base prototypes.
pub fn load_palette_file(path: &Path) -> Result<[[u8; 3]; BASE_LABELS]> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_palette(&text, path)
}

pub fn parse_palette(text: &str, path: &Path) -> Result<[[u8; 3]; BASE_LABELS]> {
    let mut base = BASE_PROTOTYPES;
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: n + 1,
            message,
        };
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        if cols.len() != 4 {
            return Err(err(format!("expected name,R,G,B, found {} fields", cols.len())));
        }
        let idx = base_index(cols[0]).ok_or_else(|| err(format!("unknown color name `{}`", cols[0])))?;
        for c in 0..3 {
            base[idx][c] = cols[c + 1]
                .parse()
                .map_err(|_| err(format!("bad channel value `{}`", cols[c + 1])))?;
        }
    }
    Ok(base)
}

/// Per-pixel label indices into a palette's selection, covering `rect` of
/// the source frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    pub rect: PixelRect,
    pub labels: Vec<u8>,
}

impl LabelMap {
    /// Label at absolute frame coordinates, `None` outside the map.
    #[inline]
    pub fn get(&self, x: i64, y: i64) -> Option<u8> {
        if self.rect.contains(x, y) {
            let (lx, ly) = (x as usize - self.rect.x, y as usize - self.rect.y);
            Some(self.labels[ly * self.rect.w + lx])
        } else {
            None
        }
    }

    pub fn histogram(&self, k: usize) -> LabelHistogram {
        LabelHistogram::from_labels(self.labels.iter().copied(), k)
    }
}

pub fn map_rgb_to_labels(frame: &Frame, rect: PixelRect, palette: &ColorPalette) -> LabelMap {
    let mut labels = Vec::with_capacity(rect.area());
    for y in rect.y..rect.bottom() {
        for x in rect.x..rect.right() {
            labels.push(palette.nearest(frame.rgb(x, y)));
        }
    }
    LabelMap { rect, labels }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelHistogram {
    pub counts: Vec<usize>,
    pub total: usize,
}

impl LabelHistogram {
    pub fn from_labels(labels: impl IntoIterator<Item = u8>, k: usize) -> Self {
        let mut counts = vec![0usize; k];
        let mut total = 0;
        for l in labels {
            counts[l as usize] += 1;
            total += 1;
        }
        LabelHistogram { counts, total }
    }

    pub fn probability(&self, label: usize) -> f64 {
        self.counts[label] as f64 / self.total as f64
    }
}

/// Per-label weight `-C ln p` (zero for absent labels).
pub fn entropy_weights(h: &LabelHistogram, c: f64) -> Result<Vec<f64>> {
    if h.total == 0 {
        return Err(Error::InvalidArgument("empty label histogram".into()));
    }
    Ok(h.counts
        .iter()
        .map(|&n| {
            if n == 0 {
                0.0
            } else {
                // `0.0 - x` rather than `-x` so a certain label gets +0, not -0.
                0.0 - c * (n as f64 / h.total as f64).ln()
            }
        })
        .collect())
}

/// Two-class sample statistics for the Fisher direction.
#[derive(Debug, Clone, PartialEq)]
pub struct FisherSample {
    pub m1: Vector3<f64>,
    pub m2: Vector3<f64>,
    /// Pooled within-class scatter.
    pub sw: Matrix3<f64>,
    pub n1: usize,
    pub n2: usize,
}

/// Running first and second moments of a class of RGB observations in
/// `[0, 1]^3`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassStats {
    pub n: usize,
    pub sum: Vector3<f64>,
    pub outer: Matrix3<f64>,
}

impl Default for ClassStats {
    fn default() -> Self {
        ClassStats {
            n: 0,
            sum: Vector3::zeros(),
            outer: Matrix3::zeros(),
        }
    }
}

impl ClassStats {
    pub fn push(&mut self, x: Vector3<f64>) {
        self.n += 1;
        self.sum += x;
        self.outer += x * x.transpose();
    }

    pub fn mean(&self) -> Vector3<f64> {
        self.sum / self.n as f64
    }

    /// Σ (x - m)(x - m)ᵀ
    pub fn scatter(&self) -> Matrix3<f64> {
        let m = self.mean();
        let s = self.outer - self.sum * m.transpose();
        // Symmetrize away rounding.
        (s + s.transpose()) * 0.5
    }
}

impl FisherSample {
    pub fn from_rows(class1: &[[f64; 3]], class2: &[[f64; 3]]) -> Result<Self> {
        let collect = |rows: &[[f64; 3]]| {
            let mut s = ClassStats::default();
            for r in rows {
                s.push(Vector3::new(r[0], r[1], r[2]));
            }
            s
        };
        Self::from_stats(&collect(class1), &collect(class2))
    }

    pub fn from_stats(c1: &ClassStats, c2: &ClassStats) -> Result<Self> {
        if c1.n < 2 || c2.n < 2 {
            return Err(Error::InvalidArgument("each class needs at least two samples".into()));
        }
        Ok(FisherSample {
            m1: c1.mean(),
            m2: c2.mean(),
            sw: c1.scatter() + c2.scatter(),
            n1: c1.n,
            n2: c2.n,
        })
    }
}

/// Unit direction `(S_w + reg·I)⁻¹ (m1 - m2)`.
pub fn fisher_projection(s: &FisherSample, reg: f64) -> Result<Vector3<f64>> {
    let diff = s.m1 - s.m2;
    if diff.norm() == 0.0 {
        return Err(Error::DegenerateClasses);
    }
    let a = s.sw + Matrix3::identity() * reg;
    let dir = match a.cholesky() {
        Some(ch) => ch.solve(&diff),
        None => a.lu().solve(&diff).ok_or(Error::DegenerateClasses)?,
    };
    let norm = dir.norm();
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(Error::DegenerateClasses);
    }
    Ok(dir / norm)
}

pub const FISHER_REG: f64 = 1e-6;

/// Region samples split by base label (nearest of all eleven prototypes).
#[derive(Debug, Clone)]
pub struct LabelPopulations {
    pub stats: Vec<ClassStats>,
    pub total: usize,
}

impl LabelPopulations {
    pub fn from_region(frame: &Frame, rect: PixelRect, base: &[[u8; 3]; BASE_LABELS]) -> Self {
        let full = ColorPalette::full(*base);
        let mut stats = vec![ClassStats::default(); BASE_LABELS];
        for y in rect.y..rect.bottom() {
            for x in rect.x..rect.right() {
                let rgb = frame.rgb(x, y);
                let l = full.nearest(rgb) as usize;
                stats[l].push(Vector3::new(rgb[0] as f64, rgb[1] as f64, rgb[2] as f64) / 255.0);
            }
        }
        LabelPopulations {
            stats,
            total: rect.area(),
        }
    }

    pub fn frequency(&self, label: usize) -> f64 {
        self.stats[label].n as f64 / self.total as f64
    }
}

fn prototype_vec(base: &[[u8; 3]; BASE_LABELS], i: usize) -> Vector3<f64> {
    let p = base[i];
    Vector3::new(p[0] as f64, p[1] as f64, p[2] as f64) / 255.0
}

/// Separation between two label populations: distance of their means along
/// the Fisher direction, or the prototype distance when either population is
/// too small to estimate a direction.
pub fn pair_separation(base: &[[u8; 3]; BASE_LABELS], pops: &LabelPopulations, i: usize, c: usize) -> f64 {
    if i == c {
        return 0.0;
    }
    let (si, sc) = (&pops.stats[i], &pops.stats[c]);
    if si.n < 2 || sc.n < 2 {
        return (prototype_vec(base, i) - prototype_vec(base, c)).norm();
    }
    match FisherSample::from_stats(si, sc).and_then(|s| fisher_projection(&s, FISHER_REG).map(|a| (a, s))) {
        Ok((a, s)) => a.dot(&(s.m1 - s.m2)).abs(),
        Err(_) => 0.0,
    }
}

/// Minimum separation of label `i` from every label in `chosen`.
pub fn label_separation(
    base: &[[u8; 3]; BASE_LABELS],
    pops: &LabelPopulations,
    i: usize,
    chosen: &[usize],
) -> Result<f64> {
    if chosen.is_empty() {
        return Err(Error::InvalidArgument("no labels chosen yet".into()));
    }
    Ok(chosen
        .iter()
        .map(|&c| pair_separation(base, pops, i, c))
        .fold(f64::INFINITY, f64::min))
}

/// Greedy selection of `k` labels for the pixels of `rect`.
pub fn select_labels(frame: &Frame, rect: PixelRect, k: usize, base: &[[u8; 3]; BASE_LABELS]) -> Result<ColorPalette> {
    if !(1..=BASE_LABELS).contains(&k) {
        return Err(Error::InvalidArgument(format!("k_labels must lie in 1..=11, got {k}")));
    }
    if rect.area() == 0 {
        return Err(Error::InvalidArgument("empty region".into()));
    }
    let pops = LabelPopulations::from_region(frame, rect, base);
    Ok(select_from_populations(base, &pops, k))
}

pub(crate) fn select_from_populations(base: &[[u8; 3]; BASE_LABELS], pops: &LabelPopulations, k: usize) -> ColorPalette {
    let occurring: Vec<usize> = (0..BASE_LABELS).filter(|&l| pops.stats[l].n > 0).collect();
    let mut selected = Vec::with_capacity(k);
    let mut weights = Vec::with_capacity(k);

    // First pick: the most frequent label, lowest index on ties.
    if let Some(&first) = occurring.iter().max_by(|&&a, &&b| {
        pops.stats[a].n.cmp(&pops.stats[b].n).then(b.cmp(&a))
    }) {
        selected.push(first);
        weights.push(pops.frequency(first));
    }

    while selected.len() < k {
        let mut best: Option<(f64, usize)> = None;
        for &l in &occurring {
            if selected.contains(&l) {
                continue;
            }
            let sep = selected
                .iter()
                .map(|&c| pair_separation(base, pops, l, c))
                .fold(f64::INFINITY, f64::min);
            let w = sep * pops.frequency(l);
            if best.is_none_or(|(bw, _)| w > bw) {
                best = Some((w, l));
            }
        }
        match best {
            Some((w, l)) => {
                selected.push(l);
                weights.push(w);
            }
            None => break,
        }
    }

    let padded = selected.len() < k;
    for l in 0..BASE_LABELS {
        if selected.len() >= k {
            break;
        }
        if !selected.contains(&l) {
            selected.push(l);
            weights.push(0.0);
        }
    }

    ColorPalette {
        base: *base,
        selected,
        label_weights: weights,
        padded,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prototypes_map_to_themselves() {
        let p = ColorPalette::default();
        for (i, &rgb) in BASE_PROTOTYPES.iter().enumerate() {
            assert_eq!(p.nearest(rgb) as usize, i);
        }
        assert_eq!(p.name(p.nearest([255, 0, 0])), "red");
        assert_eq!(p.name(p.nearest([0, 0, 0])), "black");
    }

    #[test]
    fn near_white_maps_to_white() {
        let p = ColorPalette::default();
        // Oracle: squared distances to all eleven prototypes.
        let rgb = [250u8, 250, 250];
        let dists: Vec<u32> = BASE_PROTOTYPES
            .iter()
            .map(|q| (0..3).map(|c| sq(rgb[c], q[c])).sum())
            .collect();
        let argmin = (0..11).min_by_key(|&i| (dists[i], i)).unwrap();
        assert_eq!(BASE_NAMES[argmin], "white");
        assert_eq!(p.name(p.nearest(rgb)), "white");
    }

    #[test]
    fn ties_go_to_lower_label() {
        let p = ColorPalette {
            base: [[0, 0, 0]; BASE_LABELS],
            ..ColorPalette::default()
        };
        assert_eq!(p.nearest([9, 9, 9]), 0);
    }

    #[test]
    fn entropy_weight_values() {
        let h = LabelHistogram {
            counts: vec![4],
            total: 4,
        };
        assert_eq!(entropy_weights(&h, 1.0).unwrap(), vec![0.0]);
        let h = LabelHistogram {
            counts: vec![1, 3, 0],
            total: 4,
        };
        let w = entropy_weights(&h, 1.0).unwrap();
        assert!((w[0] - 1.3862943611198906).abs() < 1e-12);
        assert_eq!(w[2], 0.0);
        let w2 = entropy_weights(&h, 2.0).unwrap();
        for (a, b) in w.iter().zip(&w2) {
            assert!((2.0 * a - b).abs() < 1e-12);
        }
        assert!(entropy_weights(&LabelHistogram { counts: vec![0], total: 0 }, 1.0).is_err());
    }

    #[test]
    fn fisher_identity_covariance_axis() {
        // Symmetric clouds around (0,0,0) and (1,0,0).
        let offsets = [
            [0.1, 0.0, 0.0],
            [-0.1, 0.0, 0.0],
            [0.0, 0.1, 0.0],
            [0.0, -0.1, 0.0],
            [0.0, 0.0, 0.1],
            [0.0, 0.0, -0.1],
        ];
        let c1: Vec<[f64; 3]> = offsets.iter().map(|o| [o[0], o[1], o[2]]).collect();
        let c2: Vec<[f64; 3]> = offsets.iter().map(|o| [1.0 + o[0], o[1], o[2]]).collect();
        let s = FisherSample::from_rows(&c1, &c2).unwrap();
        let a = fisher_projection(&s, FISHER_REG).unwrap();
        assert!((a.x + 1.0).abs() < 1e-9, "{a:?}"); // m1 - m2 = (-1, 0, 0)
        let s_swapped = FisherSample::from_rows(&c2, &c1).unwrap();
        let b = fisher_projection(&s_swapped, FISHER_REG).unwrap();
        assert!((a + b).norm() < 1e-12);
    }

    #[test]
    fn fisher_degenerate_and_small_classes() {
        let c = vec![[0.2, 0.2, 0.2], [0.4, 0.4, 0.4]];
        let s = FisherSample::from_rows(&c, &c).unwrap();
        assert!(matches!(fisher_projection(&s, FISHER_REG), Err(Error::DegenerateClasses)));
        assert!(FisherSample::from_rows(&c[..1], &c).is_err());
    }

    fn striped(colors: &[([u8; 3], usize)]) -> Frame {
        // One column per pixel, `count` columns of each color, 4 rows.
        let w: usize = colors.iter().map(|c| c.1).sum();
        let mut f = Frame::filled(w, 4, [0, 0, 0], 0);
        let mut x = 0;
        for &(rgb, n) in colors {
            for _ in 0..n {
                for y in 0..4 {
                    f.set_rgb(x, y, rgb);
                }
                x += 1;
            }
        }
        f
    }

    #[test]
    fn select_first_pick_by_frequency() {
        let f = striped(&[([255, 0, 0], 90), ([0, 0, 255], 10)]);
        let p = select_labels(&f, PixelRect::new(0, 0, f.width, 4), 1, &BASE_PROTOTYPES).unwrap();
        assert_eq!(p.selected, vec![base_index("red").unwrap()]);
        assert!(!p.padded);
    }

    #[test]
    fn select_all_eleven() {
        let colors: Vec<([u8; 3], usize)> = BASE_PROTOTYPES.iter().map(|&c| (c, 3)).collect();
        let f = striped(&colors);
        let p = select_labels(&f, PixelRect::new(0, 0, f.width, 4), 11, &BASE_PROTOTYPES).unwrap();
        let mut s = p.selected.clone();
        s.sort_unstable();
        assert_eq!(s, (0..11).collect::<Vec<_>>());
        assert!(p.label_weights.iter().all(|&w| w >= 0.0));
    }

    #[test]
    fn select_pads_when_labels_run_out() {
        let f = striped(&[([255, 0, 0], 5), ([0, 0, 255], 5)]);
        let p = select_labels(&f, PixelRect::new(0, 0, f.width, 4), 4, &BASE_PROTOTYPES).unwrap();
        assert!(p.padded);
        assert_eq!(p.len(), 4);
        assert_eq!(p.label_weights[2..], [0.0, 0.0]);
        // padding uses the lowest unused base labels
        assert_eq!(p.selected[2..], [0, 2]);
    }

    #[test]
    fn select_rejects_bad_k() {
        let f = striped(&[([255, 0, 0], 5)]);
        let r = PixelRect::new(0, 0, 5, 4);
        assert!(select_labels(&f, r, 0, &BASE_PROTOTYPES).is_err());
        assert!(select_labels(&f, r, 12, &BASE_PROTOTYPES).is_err());
    }

    #[test]
    fn separation_to_self_is_zero_and_positive_otherwise() {
        let f = striped(&[([0, 0, 0], 20), ([255, 255, 255], 20)]);
        let pops = LabelPopulations::from_region(&f, PixelRect::new(0, 0, 40, 4), &BASE_PROTOTYPES);
        let black = base_index("black").unwrap();
        let white = base_index("white").unwrap();
        assert_eq!(label_separation(&BASE_PROTOTYPES, &pops, black, &[black]).unwrap(), 0.0);
        assert!(label_separation(&BASE_PROTOTYPES, &pops, white, &[black]).unwrap() > 0.0);
        assert!(label_separation(&BASE_PROTOTYPES, &pops, white, &[]).is_err());
    }

    #[test]
    fn palette_file_overrides_by_name() {
        let base = parse_palette("# custom\nred,200,10,10\n\nBlue, 1, 2, 250\n", Path::new("p.txt")).unwrap();
        assert_eq!(base[base_index("red").unwrap()], [200, 10, 10]);
        assert_eq!(base[base_index("blue").unwrap()], [1, 2, 250]);
        assert_eq!(base[0], BASE_PROTOTYPES[0]);
        assert!(parse_palette("teal,0,1,2\n", Path::new("p.txt")).is_err());
        assert!(matches!(
            parse_palette("red,1,2\n", Path::new("p.txt")),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn label_map_lookup_respects_rect() {
        let f = striped(&[([255, 0, 0], 2), ([0, 0, 255], 2)]);
        let p = ColorPalette::default();
        let lm = map_rgb_to_labels(&f, PixelRect::new(1, 1, 2, 2), &p);
        assert_eq!(lm.get(1, 1).map(|l| p.name(l)), Some("red"));
        assert_eq!(lm.get(2, 2).map(|l| p.name(l)), Some("blue"));
        assert_eq!(lm.get(0, 0), None);
        assert_eq!(lm.get(3, 1), None);
    }
}
