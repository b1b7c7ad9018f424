//! Block partition of the foreground mask, moving-block classification,
//! block motion, and grouping of coherent moving blocks into candidate
//! targets.

use crate::background::ForegroundMask;
use crate::error::{Error, Result};
use crate::geometry::{BoundingBox, Offset, PixelRect, Vec2};
use crate::sequence_io::GrayFrame;

/// Per-pixel SAD slack under which two offsets count as tied.
const SAD_TIE_PER_PIXEL: f64 = 0.002;
/// A block whose near-minimal SAD offsets cover more than this share of the
/// search window has no usable texture; its motion is reported unknown.
const AMBIGUOUS_SHARE: f64 = 0.25;

#[derive(Debug, Clone, PartialEq)]
pub struct BlockStats {
    pub rect: PixelRect,
    /// Flagged pixels inside the block (n_i).
    pub moving_count: usize,
    /// Pixels in the block (n); smaller for blocks cut by the frame border.
    pub total_count: usize,
    pub moving: bool,
    /// Displacement since the previous frame, `None` when unknown.
    pub motion: Option<Offset>,
    sum_x: f64,
    sum_y: f64,
    extent: Option<(usize, usize, usize, usize)>,
}

impl BlockStats {
    pub fn center(&self) -> Vec2 {
        Vec2::new(
            self.rect.x as f64 + self.rect.w as f64 / 2.0,
            self.rect.y as f64 + self.rect.h as f64 / 2.0,
        )
    }

    pub fn moving_fraction(&self) -> f64 {
        self.moving_count as f64 / self.total_count as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockGrid {
    pub block_size: usize,
    pub cols: usize,
    pub rows: usize,
    pub width: usize,
    pub height: usize,
    pub blocks: Vec<BlockStats>,
}

pub fn partition_blocks(mask: &ForegroundMask, block_size: usize) -> Result<BlockGrid> {
    if block_size < 4 {
        return Err(Error::InvalidArgument(format!("block_size must be at least 4, got {block_size}")));
    }
    let (w, h) = (mask.width, mask.height);
    let cols = w.div_ceil(block_size);
    let rows = h.div_ceil(block_size);
    let mut blocks = Vec::with_capacity(cols * rows);
    for r in 0..rows {
        for c in 0..cols {
            let x = c * block_size;
            let y = r * block_size;
            let rect = PixelRect::new(x, y, block_size.min(w - x), block_size.min(h - y));
            blocks.push(BlockStats {
                rect,
                moving_count: 0,
                total_count: rect.area(),
                moving: false,
                motion: None,
                sum_x: 0.0,
                sum_y: 0.0,
                extent: None,
            });
        }
    }
    for y in 0..h {
        let row = &mask.flags[y * w..(y + 1) * w];
        let r = y / block_size;
        for (x, _) in row.iter().enumerate().filter(|(_, &f)| f) {
            let b = &mut blocks[r * cols + x / block_size];
            b.moving_count += 1;
            b.sum_x += x as f64 + 0.5;
            b.sum_y += y as f64 + 0.5;
            b.extent = Some(match b.extent {
                None => (x, y, x, y),
                Some((x0, y0, x1, y1)) => (x0.min(x), y0.min(y), x1.max(x), y1.max(y)),
            });
        }
    }
    Ok(BlockGrid {
        block_size,
        cols,
        rows,
        width: w,
        height: h,
        blocks,
    })
}

impl BlockGrid {
    /// Mark blocks whose flagged share strictly exceeds `theta`.
    pub fn classify_moving(&mut self, theta: f64) -> Result<()> {
        if !(theta > 0.0 && theta < 1.0) {
            return Err(Error::InvalidArgument(format!("theta must lie in (0, 1), got {theta}")));
        }
        for b in &mut self.blocks {
            b.moving = b.moving_count as f64 > theta * b.total_count as f64;
            if !b.moving {
                b.motion = None;
            }
        }
        Ok(())
    }

    pub fn moving_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.blocks.iter().enumerate().filter(|(_, b)| b.moving).map(|(i, _)| i)
    }

    /// 4-neighbors of block `i` in the grid.
    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> {
        let (r, c) = (i / self.cols, i % self.cols);
        let (rows, cols) = (self.rows, self.cols);
        [
            (r > 0).then(|| i - cols),
            (c > 0).then(|| i - 1),
            (c + 1 < cols).then(|| i + 1),
            (r + 1 < rows).then(|| i + cols),
        ]
        .into_iter()
        .flatten()
    }

    /// Per-pixel flags: true inside any block for which `pred` holds.
    pub fn region_mask(&self, mut pred: impl FnMut(usize, &BlockStats) -> bool) -> Vec<bool> {
        let mut out = vec![false; self.width * self.height];
        for (i, b) in self.blocks.iter().enumerate() {
            if pred(i, b) {
                for y in b.rect.y..b.rect.bottom() {
                    out[y * self.width + b.rect.x..y * self.width + b.rect.right()].fill(true);
                }
            }
        }
        out
    }

    fn congruent(&self, o: &BlockGrid) -> bool {
        (self.block_size, self.cols, self.rows, self.width, self.height)
            == (o.block_size, o.cols, o.rows, o.width, o.height)
    }
}

/// Sum of absolute differences between the block at its current position
/// and the previous frame displaced back by `d`. Coordinates outside the
/// previous frame are clamped to its border.
pub fn block_sad(prev: &GrayFrame, cur: &GrayFrame, rect: &PixelRect, d: Offset) -> f64 {
    let (w, h) = (prev.width as i64, prev.height as i64);
    let mut sad = 0.0;
    for y in rect.y..rect.bottom() {
        let py = (y as i64 - d.dy as i64).clamp(0, h - 1) as usize;
        let cur_row = &cur.values[y * cur.width + rect.x..y * cur.width + rect.right()];
        let prev_row = &prev.values[py * prev.width..(py + 1) * prev.width];
        for (x, c) in (rect.x..).zip(cur_row) {
            let px = (x as i64 - d.dx as i64).clamp(0, w - 1) as usize;
            sad += (c - prev_row[px]).abs();
        }
    }
    sad
}

/// Orders offsets by magnitude, then lexicographically by `(dx, dy)`.
fn offset_rank(o: &Offset) -> (i64, i32, i32) {
    (o.norm_sq(), o.dx, o.dy)
}

/// Exhaustive SAD block matching for every moving block of `cur`.
///
/// A block gets `None` when the previous mask has no flagged pixel within
/// `search_radius` of it, or when its SAD surface is too flat to pick an
/// offset. Otherwise the offset with minimal SAD wins; offsets within a small
/// per-pixel slack of the minimum count as tied and are resolved toward the
/// smallest displacement.
pub fn estimate_block_motion(
    prev: &BlockGrid,
    cur: &mut BlockGrid,
    prev_gray: &GrayFrame,
    cur_gray: &GrayFrame,
    prev_mask: &ForegroundMask,
    search_radius: usize,
) -> Result<()> {
    if !prev.congruent(cur) {
        return Err(Error::DimensionMismatch("block grids are not congruent".into()));
    }
    if (prev_gray.width, prev_gray.height) != (cur.width, cur.height)
        || (cur_gray.width, cur_gray.height) != (cur.width, cur.height)
        || (prev_mask.width, prev_mask.height) != (cur.width, cur.height)
    {
        return Err(Error::DimensionMismatch("frames do not match the block grid".into()));
    }
    let r = search_radius as i32;
    let n_offsets = ((2 * r + 1) * (2 * r + 1)) as f64;
    let mut sads = Vec::with_capacity(n_offsets as usize);
    for b in cur.blocks.iter_mut() {
        if !b.moving {
            b.motion = None;
            continue;
        }
        let window = b.rect.expand(search_radius, cur_gray.width, cur_gray.height);
        let had_foreground =
            (window.y..window.bottom()).any(|y| (window.x..window.right()).any(|x| prev_mask.get(x, y)));
        if !had_foreground {
            b.motion = None;
            continue;
        }
        sads.clear();
        let mut best = f64::INFINITY;
        for dy in -r..=r {
            for dx in -r..=r {
                let d = Offset::new(dx, dy);
                let s = block_sad(prev_gray, cur_gray, &b.rect, d);
                best = best.min(s);
                sads.push((d, s));
            }
        }
        let tol = SAD_TIE_PER_PIXEL * b.total_count as f64;
        let tied: Vec<Offset> = sads.iter().filter(|(_, s)| *s <= best + tol).map(|(d, _)| *d).collect();
        b.motion = if tied.len() as f64 > AMBIGUOUS_SHARE * n_offsets {
            None
        } else {
            tied.into_iter().min_by_key(offset_rank)
        };
    }
    Ok(())
}

/// Coherent, 4-connected set of moving blocks forming one candidate target.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockGroup {
    /// Grid indices, ascending.
    pub members: Vec<usize>,
    /// Centroid of the flagged pixels of the members.
    pub centroid: Vec2,
    /// Tight box around the flagged pixels of the members.
    pub bbox: BoundingBox,
    /// Mean of the known member motions; zero when none is known.
    pub velocity: Vec2,
    pub velocity_known: bool,
    /// Largest distance from the centroid to a member block center.
    pub radius: f64,
}

impl BlockGroup {
    pub fn contains(&self, block: usize) -> bool {
        self.members.binary_search(&block).is_ok()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupingParams {
    pub motion_tol: f64,
    pub min_group_blocks: usize,
}

impl Default for GroupingParams {
    fn default() -> Self {
        GroupingParams {
            motion_tol: 2.0,
            min_group_blocks: 2,
        }
    }
}

struct DisjointSet {
    parent: Vec<usize>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        DisjointSet {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut i: usize) -> usize {
        while self.parent[i] != i {
            self.parent[i] = self.parent[self.parent[i]];
            i = self.parent[i];
        }
        i
    }

    // Root is always the smaller index so roots do not depend on merge order.
    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = (ra.min(rb), ra.max(rb));
            self.parent[hi] = lo;
        }
    }
}

fn coherent(a: Offset, b: Offset, tol: f64) -> bool {
    (a.to_vec2() - b.to_vec2()).norm() <= tol
}

/// Group moving blocks.
///
/// Adjacent blocks with known motions join when the motions differ by at most
/// `motion_tol`. A connected patch of blocks with unknown motion joins the
/// largest known group it touches (ties to the group containing the lowest
/// block index), or stands alone when it touches none. Groups with fewer than
/// `min_group_blocks` members are dropped.
pub fn group_blocks(grid: &BlockGrid, params: GroupingParams) -> Vec<BlockGroup> {
    let order: Vec<usize> = (0..grid.blocks.len()).collect();
    group_blocks_in_order(grid, params, &order)
}

pub(crate) fn group_blocks_in_order(grid: &BlockGrid, params: GroupingParams, order: &[usize]) -> Vec<BlockGroup> {
    let n = grid.blocks.len();
    let mut known = DisjointSet::new(n);
    let mut unknown = DisjointSet::new(n);
    for &i in order {
        let bi = &grid.blocks[i];
        if !bi.moving {
            continue;
        }
        for j in grid.neighbors(i) {
            let bj = &grid.blocks[j];
            if !bj.moving {
                continue;
            }
            match (bi.motion, bj.motion) {
                (Some(a), Some(b)) if coherent(a, b, params.motion_tol) => known.union(i, j),
                (None, None) => unknown.union(i, j),
                _ => {}
            }
        }
    }

    // Sizes of known groups, taken before any unknown patch is attached.
    let mut known_size = vec![0usize; n];
    for i in grid.moving_indices() {
        if grid.blocks[i].motion.is_some() {
            known_size[known.find(i)] += 1;
        }
    }

    // For each unknown patch, find the known group it attaches to.
    let mut patch_target: Vec<Option<usize>> = vec![None; n];
    let mut visited_patch = vec![false; n];
    for i in grid.moving_indices() {
        if grid.blocks[i].motion.is_some() {
            continue;
        }
        let root = unknown.find(i);
        if visited_patch[root] {
            continue;
        }
        visited_patch[root] = true;
        let mut best: Option<(usize, usize)> = None; // (size, root)
        for k in grid.moving_indices() {
            if grid.blocks[k].motion.is_some() || unknown.find(k) != root {
                continue;
            }
            for j in grid.neighbors(k) {
                let bj = &grid.blocks[j];
                if bj.moving && bj.motion.is_some() {
                    let kr = known.find(j);
                    let cand = (known_size[kr], kr);
                    best = Some(match best {
                        None => cand,
                        Some(b) if cand.0 > b.0 || (cand.0 == b.0 && cand.1 < b.1) => cand,
                        Some(b) => b,
                    });
                }
            }
        }
        patch_target[root] = best.map(|(_, r)| r);
    }

    // Label every moving block with its final group key.
    let mut by_key: std::collections::BTreeMap<usize, Vec<usize>> = std::collections::BTreeMap::new();
    for i in grid.moving_indices() {
        let key = if grid.blocks[i].motion.is_some() {
            known.find(i)
        } else {
            let root = unknown.find(i);
            match patch_target[root] {
                Some(k) => k,
                // Keys for standalone unknown patches are offset past the
                // known keys so the two never collide.
                None => n + root,
            }
        };
        by_key.entry(key).or_default().push(i);
    }

    let mut groups: Vec<BlockGroup> = by_key
        .into_values()
        .filter(|m| m.len() >= params.min_group_blocks.max(1))
        .map(|mut members| {
            members.sort_unstable();
            build_group(grid, members)
        })
        .collect();
    groups.sort_by_key(|g| g.members[0]);
    groups
}

fn build_group(grid: &BlockGrid, members: Vec<usize>) -> BlockGroup {
    let mut count = 0usize;
    let (mut sx, mut sy) = (0.0, 0.0);
    let mut extent: Option<(usize, usize, usize, usize)> = None;
    let mut vel = Vec2::ZERO;
    let mut n_known = 0usize;
    for &i in &members {
        let b = &grid.blocks[i];
        count += b.moving_count;
        sx += b.sum_x;
        sy += b.sum_y;
        if let Some((x0, y0, x1, y1)) = b.extent {
            extent = Some(match extent {
                None => (x0, y0, x1, y1),
                Some((a0, b0, a1, b1)) => (a0.min(x0), b0.min(y0), a1.max(x1), b1.max(y1)),
            });
        }
        if let Some(m) = b.motion {
            vel = vel + m.to_vec2();
            n_known += 1;
        }
    }
    let centroid = if count > 0 {
        Vec2::new(sx / count as f64, sy / count as f64)
    } else {
        let c = members.iter().fold(Vec2::ZERO, |acc, &i| acc + grid.blocks[i].center());
        c * (1.0 / members.len() as f64)
    };
    let bbox = match extent {
        Some((x0, y0, x1, y1)) => BoundingBox::new(x0 as f64, y0 as f64, (x1 - x0 + 1) as f64, (y1 - y0 + 1) as f64),
        None => members
            .iter()
            .map(|&i| grid.blocks[i].rect.to_bbox())
            .reduce(|a, b| {
                let x0 = a.x.min(b.x);
                let y0 = a.y.min(b.y);
                BoundingBox::new(x0, y0, (a.x + a.w).max(b.x + b.w) - x0, (a.y + a.h).max(b.y + b.h) - y0)
            })
            .expect("group has members"),
    };
    let radius = members
        .iter()
        .map(|&i| (grid.blocks[i].center() - centroid).norm())
        .fold(0.0, f64::max);
    BlockGroup {
        centroid,
        bbox,
        velocity: if n_known > 0 { vel * (1.0 / n_known as f64) } else { Vec2::ZERO },
        velocity_known: n_known > 0,
        radius,
        members,
    }
}

/// Gray density of a member block: its flagged share, scaled down linearly
/// with its distance from the group centroid. Clamped at zero; with a zero
/// group radius the distance factor is taken as one.
pub fn gray_density(block: usize, group: &BlockGroup, grid: &BlockGrid) -> Result<f64> {
    if !group.contains(block) {
        return Err(Error::InvalidArgument(format!("block {block} is not a member of the group")));
    }
    let b = grid
        .blocks
        .get(block)
        .ok_or_else(|| Error::InvalidArgument(format!("block {block} is outside the grid")))?;
    let h_eps = (b.center() - group.centroid).norm();
    Ok(density_formula(b.moving_count, b.total_count, group.radius, h_eps))
}

pub(crate) fn density_formula(n_moving: usize, n_total: usize, h: f64, h_eps: f64) -> f64 {
    let share = n_moving as f64 / n_total as f64;
    if h <= 0.0 {
        return share;
    }
    (share * (h - h_eps) / h).max(0.0)
}
