//! Recurring pattern detection inside one search region.
//!
//! A recurring pattern is a word-by-object feature-assignment matrix: each
//! row is a visual word (features with near-identical descriptors, one per
//! object), each column a visual object (one product instance). Detection
//! maximizes matrix coverage (`rows * cols`) subject to two feasibility
//! constraints:
//!
//! * appearance: within a word, the maximum pairwise descriptor distance
//!   stays below the appearance tolerance;
//! * geometry: each object's point layout aligns to the pattern's mean
//!   layout by translation and uniform scale with a relative residual below
//!   the geometry tolerance;
//! * separation: the pattern's own object circles stay pairwise disjoint.
//!   Overlapping circles would collapse during merging, so a pattern whose
//!   columns straddle two physical products is never viable.
//!
//! The search is a GRASP: seeds are drawn from a restricted candidate list
//! of near-best descriptor pairs, grown greedily word by word and object by
//! object, then polished by local moves (hole filling, entry modification,
//! delete-and-regrow). Restarts adapt by excluding keypoints already claimed
//! by accepted patterns.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geom::{fit_translation_scale, object_circle, Circle, Point};
use crate::partition::SearchRegion;
use crate::scene::FeatureScene;

/// Tuning knobs for the GRASP search.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraspConfig {
    /// Max intra-word descriptor distance.
    pub appearance_tol: f64,
    /// Max relative geometric residual per object.
    pub geometry_tol: f64,
    /// Number of randomized restarts.
    pub restarts: usize,
    /// Width of the restricted candidate list relative to the best pair.
    pub rcl_alpha: f64,
    /// Cap on accepted local-search moves per restart.
    pub max_local_moves: usize,
    /// Minimum objects for a viable pattern (also the per-word fill floor).
    pub min_objects: usize,
    /// Minimum words for a viable pattern (also the per-object fill floor).
    pub min_words: usize,
    pub seed: u64,
}

impl Default for GraspConfig {
    fn default() -> Self {
        Self {
            appearance_tol: 0.35,
            geometry_tol: 0.15,
            restarts: 30,
            rcl_alpha: 0.3,
            max_local_moves: 200,
            min_objects: 2,
            min_words: 3,
            seed: 0,
        }
    }
}

/// Word-by-object assignment matrix over scene keypoint indices.
#[derive(Debug, Clone, PartialEq)]
pub struct AssignmentMatrix {
    /// `cells[word][object]` holds a scene keypoint index or nothing.
    pub cells: Vec<Vec<Option<usize>>>,
}

impl AssignmentMatrix {
    pub fn n_words(&self) -> usize {
        self.cells.len()
    }

    pub fn n_objects(&self) -> usize {
        self.cells.first().map_or(0, |r| r.len())
    }

    /// Optimization objective: total cell count, holes included.
    pub fn coverage(&self) -> usize {
        self.n_words() * self.n_objects()
    }

    pub fn filled(&self) -> usize {
        self.cells.iter().flatten().filter(|c| c.is_some()).count()
    }

    /// `(object, keypoint)` pairs of one word.
    pub fn word_members(&self, w: usize) -> Vec<(usize, usize)> {
        self.cells[w]
            .iter()
            .enumerate()
            .filter_map(|(c, k)| k.map(|id| (c, id)))
            .collect()
    }

    /// `(word, keypoint)` pairs of one object.
    pub fn object_members(&self, c: usize) -> Vec<(usize, usize)> {
        self.cells
            .iter()
            .enumerate()
            .filter_map(|(w, row)| row[c].map(|id| (w, id)))
            .collect()
    }

    /// All keypoint ids in the matrix, ascending.
    pub fn keypoint_ids(&self) -> Vec<usize> {
        let mut ids: Vec<usize> = self.cells.iter().flatten().flatten().copied().collect();
        ids.sort_unstable();
        ids
    }

    /// Mean descriptor of one word.
    pub fn word_mean_descriptor(&self, w: usize, scene: &FeatureScene) -> Vec<f64> {
        let members = self.word_members(w);
        let mut mean = vec![0.0; scene.descriptor_dim];
        for &(_, id) in &members {
            for (m, d) in mean.iter_mut().zip(&scene.keypoints[id].descriptor) {
                *m += d;
            }
        }
        let n = members.len().max(1) as f64;
        mean.iter_mut().for_each(|m| *m /= n);
        mean
    }
}

/// Where a pattern was detected.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegionRef {
    pub type_id: String,
    pub region_index: usize,
}

/// A detected recurring pattern: the assignment matrix plus one circular
/// region per object.
#[derive(Debug, Clone, PartialEq)]
pub struct RecurringPattern {
    pub matrix: AssignmentMatrix,
    pub circles: Vec<Circle>,
    pub source_region: RegionRef,
}

impl RecurringPattern {
    pub fn coverage(&self) -> usize {
        self.matrix.coverage()
    }
}

/// Circular region per object: center is the mean member position, radius
/// follows the halved bounding-box rule with 1 px side floor.
pub fn circles_of(matrix: &AssignmentMatrix, scene: &FeatureScene) -> Vec<Circle> {
    (0..matrix.n_objects())
        .map(|c| {
            let pts: Vec<Point> = matrix
                .object_members(c)
                .iter()
                .map(|&(_, id)| scene.keypoints[id].pos)
                .collect();
            object_circle(&pts)
        })
        .collect()
}

/// Independent feasibility checker for an emitted pattern. Returns all
/// violations; an empty list means the pattern is feasible. Kept free of the
/// optimizer's incremental bookkeeping so tests can trust it directly.
pub fn feasibility_violations(
    matrix: &AssignmentMatrix,
    scene: &FeatureScene,
    cfg: &GraspConfig,
) -> Vec<String> {
    let mut out = Vec::new();
    let (n_w, n_c) = (matrix.n_words(), matrix.n_objects());
    if n_w < cfg.min_words {
        out.push(format!("only {n_w} words, need {}", cfg.min_words));
    }
    if n_c < cfg.min_objects {
        out.push(format!("only {n_c} objects, need {}", cfg.min_objects));
    }

    let mut seen = std::collections::HashSet::new();
    for id in matrix.cells.iter().flatten().flatten() {
        if !seen.insert(*id) {
            out.push(format!("keypoint {id} appears in more than one cell"));
        }
    }

    for w in 0..n_w {
        let members = matrix.word_members(w);
        if members.len() < cfg.min_objects {
            out.push(format!("word {w} has {} filled cells", members.len()));
        }
        let mut worst = 0.0f64;
        for (i, &(_, a)) in members.iter().enumerate() {
            for &(_, b) in &members[i + 1..] {
                worst = worst.max(scene.keypoints[a].desc_dist(&scene.keypoints[b]));
            }
        }
        if worst > cfg.appearance_tol {
            out.push(format!("word {w} appearance spread {worst:.4} over tolerance"));
        }
    }
    for w1 in 0..n_w {
        let m1 = matrix.word_mean_descriptor(w1, scene);
        for w2 in (w1 + 1)..n_w {
            let m2 = matrix.word_mean_descriptor(w2, scene);
            let dist: f64 =
                m1.iter().zip(&m2).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
            if dist <= cfg.appearance_tol {
                out.push(format!(
                    "words {w1} and {w2} are not distinguishable (mean distance {dist:.4})"
                ));
            }
        }
    }

    // geometry: mean layout in per-object centroid frames
    let centroids: Vec<Option<Point>> = (0..n_c)
        .map(|c| {
            let pts: Vec<Point> = matrix
                .object_members(c)
                .iter()
                .map(|&(_, id)| scene.keypoints[id].pos)
                .collect();
            if pts.is_empty() {
                None
            } else {
                let n = pts.len() as f64;
                Some(Point::new(
                    pts.iter().map(|p| p.x).sum::<f64>() / n,
                    pts.iter().map(|p| p.y).sum::<f64>() / n,
                ))
            }
        })
        .collect();

    let mut mean_layout = vec![Point::new(0.0, 0.0); n_w];
    for (w, slot) in mean_layout.iter_mut().enumerate() {
        let mut count = 0.0;
        for (c, id) in matrix.word_members(w) {
            let mu = centroids[c].expect("member implies centroid");
            let p = scene.keypoints[id].pos;
            slot.x += p.x - mu.x;
            slot.y += p.y - mu.y;
            count += 1.0;
        }
        if count > 0.0 {
            slot.x /= count;
            slot.y /= count;
        }
    }

    // radius floor: a quarter of the median inter-object spacing, guarding
    // the ratio against sparse objects whose few points span a tiny box
    let present_centers: Vec<Point> = centroids.iter().flatten().copied().collect();
    let r_floor = if present_centers.len() < 2 {
        0.0
    } else {
        let mut nn: Vec<f64> = present_centers
            .iter()
            .enumerate()
            .map(|(i, a)| {
                present_centers
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| j != i)
                    .map(|(_, b)| a.dist(b))
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        nn.sort_by(|a, b| a.total_cmp(b));
        nn[nn.len() / 2] / 4.0
    };
    for c in 0..n_c {
        let members = matrix.object_members(c);
        if members.len() < cfg.min_words {
            out.push(format!("object {c} has {} filled cells", members.len()));
        }
        if members.len() < 2 {
            continue;
        }
        let src: Vec<Point> = members.iter().map(|&(_, id)| scene.keypoints[id].pos).collect();
        let dst: Vec<Point> = members.iter().map(|&(w, _)| mean_layout[w]).collect();
        let radius = object_circle(&src).r.max(r_floor);
        match fit_translation_scale(&src, &dst) {
            Some((_, _, rms)) => {
                let rel = rms / radius;
                if rel > cfg.geometry_tol {
                    out.push(format!("object {c} geometric residual {rel:.4} over tolerance"));
                }
            }
            None => out.push(format!("object {c} alignment degenerate")),
        }
    }

    let circles: Vec<Option<crate::geom::Circle>> = (0..n_c)
        .map(|c| {
            let pts: Vec<Point> = matrix
                .object_members(c)
                .iter()
                .map(|&(_, id)| scene.keypoints[id].pos)
                .collect();
            if pts.is_empty() {
                None
            } else {
                Some(object_circle(&pts))
            }
        })
        .collect();
    // separation rules use shrunk radii: bounding-box-derived radii plus
    // centroid wobble overshoot the true object extent
    const SHRINK: f64 = 0.75;
    for (a, ca) in circles.iter().enumerate() {
        for (b, cb) in circles.iter().enumerate().skip(a + 1) {
            if let (Some(ca), Some(cb)) = (ca, cb) {
                if ca.center().dist(&cb.center()) < SHRINK * (ca.r + cb.r) {
                    out.push(format!("object circles {a} and {b} overlap"));
                }
            }
        }
    }
    for c in 0..n_c {
        for (w, id) in matrix.object_members(c) {
            let pos = scene.keypoints[id].pos;
            for (c2, circle) in circles.iter().enumerate() {
                if c2 == c {
                    continue;
                }
                if let Some(circle) = circle {
                    if circle.center().dist(&pos) <= SHRINK * circle.r {
                        out.push(format!(
                            "cell ({w}, {c}) keypoint lies inside object {c2}'s circle"
                        ));
                    }
                }
            }
        }
    }
    out
}

/// Stable FNV-1a mix of the run seed with the region identity, so regions
/// can be processed concurrently with scheduling-independent results.
fn region_seed(seed: u64, type_id: &str, region_index: usize) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut eat = |b: u8| {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    };
    seed.to_le_bytes().iter().for_each(|&b| eat(b));
    type_id.as_bytes().iter().for_each(|&b| eat(b));
    (region_index as u64).to_le_bytes().iter().for_each(|&b| eat(b));
    h
}

/// Immutable per-region search context.
struct Ctx<'a> {
    scene: &'a FeatureScene,
    cfg: &'a GraspConfig,
    /// Local index -> scene keypoint index, ascending.
    ids: Vec<usize>,
    pos: Vec<Point>,
    /// Dense pairwise descriptor distances over local indices.
    dist: Vec<f32>,
    /// Per keypoint: local ids within appearance tolerance, ascending.
    nbrs: Vec<Vec<u32>>,
    /// Minimum spatial separation between members of one word.
    sep_min: f64,
    n: usize,
}

impl<'a> Ctx<'a> {
    fn new(region: &SearchRegion, scene: &'a FeatureScene, cfg: &'a GraspConfig) -> Self {
        let ids: Vec<usize> = scene
            .keypoints
            .iter()
            .enumerate()
            .filter(|(_, k)| region.rect.contains(&k.pos))
            .map(|(i, _)| i)
            .collect();
        let n = ids.len();
        let pos: Vec<Point> = ids.iter().map(|&i| scene.keypoints[i].pos).collect();

        let mut dist = vec![0.0f32; n * n];
        for a in 0..n {
            for b in (a + 1)..n {
                let d = scene.keypoints[ids[a]].desc_dist(&scene.keypoints[ids[b]]) as f32;
                dist[a * n + b] = d;
                dist[b * n + a] = d;
            }
        }
        let tol = cfg.appearance_tol as f32;
        let nbrs: Vec<Vec<u32>> = (0..n)
            .map(|a| {
                (0..n)
                    .filter(|&b| b != a && dist[a * n + b] <= tol)
                    .map(|b| b as u32)
                    .collect()
            })
            .collect();

        let mut scales: Vec<f64> = ids.iter().map(|&i| scene.keypoints[i].scale).collect();
        scales.sort_by(|a, b| a.total_cmp(b));
        let median_scale = if scales.is_empty() { 1.0 } else { scales[scales.len() / 2] };

        Self { scene, cfg, ids, pos, dist, nbrs, sep_min: 2.0 * median_scale, n }
    }

    fn d(&self, a: usize, b: usize) -> f64 {
        self.dist[a * self.n + b] as f64
    }

    fn compatible_with_all(&self, u: usize, members: &[usize]) -> bool {
        members.iter().all(|&m| self.d(u, m) <= self.cfg.appearance_tol)
    }

    fn separated_from_all(&self, u: usize, members: &[usize]) -> bool {
        members.iter().all(|&m| self.pos[u].dist(&self.pos[m]) > self.sep_min)
    }
}

/// Mutable matrix state over local keypoint indices.
#[derive(Clone)]
struct State {
    rows: Vec<Vec<Option<u32>>>,
    used: Vec<bool>,
}

impl State {
    fn new(n: usize) -> Self {
        Self { rows: Vec::new(), used: vec![false; n] }
    }

    fn n_words(&self) -> usize {
        self.rows.len()
    }

    fn n_cols(&self) -> usize {
        self.rows.first().map_or(0, |r| r.len())
    }

    fn coverage(&self) -> usize {
        self.n_words() * self.n_cols()
    }

    fn fills(&self) -> usize {
        self.rows.iter().flatten().filter(|c| c.is_some()).count()
    }

    fn set(&mut self, w: usize, c: usize, v: Option<u32>) {
        if let Some(old) = self.rows[w][c] {
            self.used[old as usize] = false;
        }
        if let Some(new) = v {
            self.used[new as usize] = true;
        }
        self.rows[w][c] = v;
    }

    fn word_member_ids(&self, w: usize) -> Vec<usize> {
        self.rows[w].iter().flatten().map(|&u| u as usize).collect()
    }

    fn col_members(&self, c: usize) -> Vec<(usize, usize)> {
        self.rows
            .iter()
            .enumerate()
            .filter_map(|(w, row)| row[c].map(|u| (w, u as usize)))
            .collect()
    }

    fn centroids(&self, ctx: &Ctx) -> Vec<Point> {
        (0..self.n_cols())
            .map(|c| {
                let members = self.col_members(c);
                let n = members.len().max(1) as f64;
                let (mut x, mut y) = (0.0, 0.0);
                for &(_, u) in &members {
                    x += ctx.pos[u].x;
                    y += ctx.pos[u].y;
                }
                Point::new(x / n, y / n)
            })
            .collect()
    }

    fn mean_layout(&self, ctx: &Ctx, centroids: &[Point]) -> Vec<Point> {
        (0..self.n_words())
            .map(|w| {
                let (mut x, mut y, mut k) = (0.0, 0.0, 0.0);
                for (c, cell) in self.rows[w].iter().enumerate() {
                    if let Some(u) = cell {
                        let p = ctx.pos[*u as usize];
                        x += p.x - centroids[c].x;
                        y += p.y - centroids[c].y;
                        k += 1.0;
                    }
                }
                if k > 0.0 {
                    Point::new(x / k, y / k)
                } else {
                    Point::new(0.0, 0.0)
                }
            })
            .collect()
    }

    /// Max pairwise descriptor distance within a word.
    fn word_spread(&self, ctx: &Ctx, w: usize) -> f64 {
        let members = self.word_member_ids(w);
        let mut worst = 0.0f64;
        for (i, &a) in members.iter().enumerate() {
            for &b in &members[i + 1..] {
                worst = worst.max(ctx.d(a, b));
            }
        }
        worst
    }

    /// Mean descriptor of one word.
    fn word_mean(&self, ctx: &Ctx, w: usize) -> Vec<f64> {
        let members = self.word_member_ids(w);
        let dim = ctx.scene.descriptor_dim;
        let mut mean = vec![0.0; dim];
        for &u in &members {
            let desc = &ctx.scene.keypoints[ctx.ids[u]].descriptor;
            for (m, d) in mean.iter_mut().zip(desc) {
                *m += d;
            }
        }
        let n = members.len().max(1) as f64;
        mean.iter_mut().for_each(|m| *m /= n);
        mean
    }

    /// Two words whose mean descriptors sit within the appearance tolerance
    /// are the same visual word; a matrix holding both is invalid.
    fn words_distinguishable(&self, ctx: &Ctx) -> bool {
        let means: Vec<Vec<f64>> = (0..self.n_words())
            .filter(|&w| !self.word_member_ids(w).is_empty())
            .map(|w| self.word_mean(ctx, w))
            .collect();
        for (i, a) in means.iter().enumerate() {
            for b in &means[i + 1..] {
                let dist: f64 =
                    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
                if dist <= ctx.cfg.appearance_tol {
                    return false;
                }
            }
        }
        true
    }

    /// Relative alignment residual of one object column. `r_floor` guards
    /// against sparse columns whose few points span a tiny box and make the
    /// radius-relative residual meaningless; the emitted pattern is held to
    /// the unfloored rule by `repair`.
    fn col_residual(&self, ctx: &Ctx, c: usize, mean_layout: &[Point], r_floor: f64) -> f64 {
        let members = self.col_members(c);
        if members.len() < 2 {
            return 0.0;
        }
        let src: Vec<Point> = members.iter().map(|&(_, u)| ctx.pos[u]).collect();
        let dst: Vec<Point> = members.iter().map(|&(w, _)| mean_layout[w]).collect();
        let radius = object_circle(&src).r.max(r_floor);
        match fit_translation_scale(&src, &dst) {
            Some((_, _, rms)) => rms / radius,
            None => f64::INFINITY,
        }
    }

    fn is_feasible(&self, ctx: &Ctx) -> bool {
        for w in 0..self.n_words() {
            if self.word_spread(ctx, w) > ctx.cfg.appearance_tol {
                return false;
            }
        }
        if !self.words_distinguishable(ctx) {
            return false;
        }
        let centroids = self.centroids(ctx);
        let gate = position_gate(&centroids);
        let ml = self.mean_layout(ctx, &centroids);
        // all word offsets must fit within one object extent, bounded by
        // the object pitch: farther words are riders from another object
        if gate.is_finite() {
            let cap = 2.0 * gate;
            for (i, a) in ml.iter().enumerate() {
                if self.word_member_ids(i).is_empty() {
                    continue;
                }
                for (j, b) in ml.iter().enumerate().skip(i + 1) {
                    if self.word_member_ids(j).is_empty() {
                        continue;
                    }
                    if a.dist(b) >= cap {
                        return false;
                    }
                }
            }
        }
        let r_floor = if gate.is_finite() { gate / 2.0 } else { 0.0 };
        for c in 0..self.n_cols() {
            // provisional columns (below the fill floor) have too few
            // points for a meaningful radius-relative residual; they are
            // vetted once a third word lands or trimmed by repair
            if self.col_members(c).len() < ctx.cfg.min_words.min(3) {
                continue;
            }
            if self.col_residual(ctx, c, &ml, r_floor) > ctx.cfg.geometry_tol {
                return false;
            }
        }
        let circles: Vec<Option<crate::geom::Circle>> = (0..self.n_cols())
            .map(|c| {
                let pts: Vec<Point> =
                    self.col_members(c).iter().map(|&(_, u)| ctx.pos[u]).collect();
                if pts.is_empty() {
                    None
                } else {
                    Some(object_circle(&pts))
                }
            })
            .collect();
        for (a, ca) in circles.iter().enumerate() {
            let Some(ca) = ca else { continue };
            for cb in circles.iter().skip(a + 1).flatten() {
                if ca.center().dist(&cb.center()) < CIRCLE_SHRINK * (ca.r + cb.r) {
                    return false;
                }
            }
        }
        // a member keypoint inside a different object's circle means a word
        // stole a feature from a neighboring instance; provisional columns
        // (under the fill floor) have unstable circles and are skipped
        let floor = ctx.cfg.min_words.min(3);
        let vetted: Vec<Option<crate::geom::Circle>> = (0..self.n_cols())
            .map(|c| {
                if self.col_members(c).len() >= floor {
                    circles[c]
                } else {
                    None
                }
            })
            .collect();
        for c in 0..self.n_cols() {
            for &(_, u) in &self.col_members(c) {
                for (c2, circle) in vetted.iter().enumerate() {
                    if c2 == c {
                        continue;
                    }
                    if let Some(circle) = circle {
                        if circle.center().dist(&ctx.pos[u]) <= CIRCLE_SHRINK * circle.r {
                            return false;
                        }
                    }
                }
            }
        }
        true
    }

    /// Secondary objective for local search: total intra-word descriptor
    /// distance plus total relative geometric residual. Lower is better.
    fn secondary(&self, ctx: &Ctx) -> f64 {
        let mut total = 0.0;
        for w in 0..self.n_words() {
            let members = self.word_member_ids(w);
            for (i, &a) in members.iter().enumerate() {
                for &b in &members[i + 1..] {
                    total += ctx.d(a, b);
                }
            }
        }
        let centroids = self.centroids(ctx);
        let ml = self.mean_layout(ctx, &centroids);
        for c in 0..self.n_cols() {
            total += self.col_residual(ctx, c, &ml, 0.0);
        }
        total
    }

    fn total_intra_word_dist(&self, ctx: &Ctx) -> f64 {
        let mut total = 0.0;
        for w in 0..self.n_words() {
            let members = self.word_member_ids(w);
            for (i, &a) in members.iter().enumerate() {
                for &b in &members[i + 1..] {
                    total += ctx.d(a, b);
                }
            }
        }
        total
    }
}

/// Half the median nearest-neighbor distance between object centroids: the
/// search gate around an expected member position. The median makes the
/// pitch estimate robust to individual centroids wobbling while their
/// columns are still sparsely filled.
fn position_gate(centroids: &[Point]) -> f64 {
    if centroids.len() < 2 {
        return f64::INFINITY;
    }
    let mut nn: Vec<f64> = centroids
        .iter()
        .enumerate()
        .map(|(i, a)| {
            centroids
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, b)| a.dist(b))
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    nn.sort_by(|a, b| a.total_cmp(b));
    nn[nn.len() / 2] / 2.0
}

/// Eligible seed pairs: descriptor-compatible, spatially separated, both
/// unused. The restricted candidate list keeps those within
/// `(1 + rcl_alpha)` of the best distance.
fn rcl_pairs(
    ctx: &Ctx,
    excluded: &[bool],
    tried: &std::collections::HashSet<(u32, u32)>,
) -> Vec<(u32, u32)> {
    let mut eligible: Vec<(u32, u32, f64)> = Vec::new();
    let mut best = f64::INFINITY;
    for a in 0..ctx.n {
        if excluded[a] {
            continue;
        }
        for &b in &ctx.nbrs[a] {
            let b = b as usize;
            if b <= a || excluded[b] {
                continue;
            }
            if tried.contains(&(a as u32, b as u32)) {
                continue;
            }
            if ctx.pos[a].dist(&ctx.pos[b]) <= ctx.sep_min {
                continue;
            }
            let d = ctx.d(a, b);
            best = best.min(d);
            eligible.push((a as u32, b as u32, d));
        }
    }
    if eligible.is_empty() {
        return Vec::new();
    }
    let cut = best * (1.0 + ctx.cfg.rcl_alpha);
    eligible.retain(|&(_, _, d)| d <= cut);
    eligible.into_iter().map(|(a, b, _)| (a, b)).collect()
}

/// Grow a maximal word from a seed pair: repeatedly absorb the unused
/// keypoint with the smallest max-distance to current members, subject to
/// appearance compatibility and spatial separation.
fn grow_seed_word(ctx: &Ctx, state: &State, i: usize, j: usize) -> Vec<usize> {
    let mut members = vec![i, j];
    loop {
        let mut best: Option<(f64, usize)> = None;
        for &u in &ctx.nbrs[members[0]] {
            let u = u as usize;
            if state.used[u] || members.contains(&u) {
                continue;
            }
            if !ctx.compatible_with_all(u, &members) || !ctx.separated_from_all(u, &members) {
                continue;
            }
            let worst = members.iter().map(|&m| ctx.d(u, m)).fold(0.0f64, f64::max);
            if best.is_none_or(|(bw, bu)| worst < bw || (worst == bw && u < bu)) {
                best = Some((worst, u));
            }
        }
        match best {
            Some((_, u)) => members.push(u),
            None => break,
        }
    }
    // column order: left-to-right, then top-to-bottom
    members.sort_by(|&a, &b| {
        ctx.pos[a]
            .x
            .total_cmp(&ctx.pos[b].x)
            .then(ctx.pos[a].y.total_cmp(&ctx.pos[b].y))
            .then(a.cmp(&b))
    });
    members
}

/// Candidate row for the add-word move, with its quality key.
struct RowCandidate {
    row: Vec<Option<u32>>,
    fills: usize,
    /// Mean deviation of member offsets from the row's median offset.
    geo_cost: f64,
    desc_cost: f64,
    anchor: usize,
}

/// Build a candidate row from `anchor` under the hypothesis that it belongs
/// to column `c_a`.
fn build_row_hypothesis(
    ctx: &Ctx,
    state: &State,
    centroids: &[Point],
    gate: f64,
    anchor: usize,
    c_a: usize,
) -> RowCandidate {
    let n_cols = state.n_cols();
    let offset = Point::new(
        ctx.pos[anchor].x - centroids[c_a].x,
        ctx.pos[anchor].y - centroids[c_a].y,
    );
    let mut row: Vec<Option<u32>> = vec![None; n_cols];
    row[c_a] = Some(anchor as u32);
    let mut members = vec![anchor];
    let mut desc_cost = 0.0;
    for c in 0..n_cols {
        if c == c_a {
            continue;
        }
        let expected = Point::new(centroids[c].x + offset.x, centroids[c].y + offset.y);
        let mut best: Option<(f64, usize)> = None;
        for &u in &ctx.nbrs[anchor] {
            let u = u as usize;
            if state.used[u] || members.contains(&u) {
                continue;
            }
            let gap = ctx.pos[u].dist(&expected);
            if gap >= gate {
                continue;
            }
            if !ctx.compatible_with_all(u, &members) || !ctx.separated_from_all(u, &members) {
                continue;
            }
            if best.is_none_or(|(bg, bu)| gap < bg || (gap == bg && u < bu)) {
                best = Some((gap, u));
            }
        }
        if let Some((_, u)) = best {
            row[c] = Some(u as u32);
            desc_cost += members.iter().map(|&m| ctx.d(u, m)).sum::<f64>();
            members.push(u);
        }
    }
    // copies of one word sit at one consistent offset from their columns;
    // drop members that disagree with the row's median offset, so a row
    // can never mix two lattice phases
    let offsets: Vec<(usize, Point)> = row
        .iter()
        .enumerate()
        .filter_map(|(c, cell)| {
            cell.map(|u| {
                let p = ctx.pos[u as usize];
                (c, Point::new(p.x - centroids[c].x, p.y - centroids[c].y))
            })
        })
        .collect();
    let mut geo_cost = 0.0;
    if offsets.len() >= 2 {
        let mut xs: Vec<f64> = offsets.iter().map(|(_, o)| o.x).collect();
        let mut ys: Vec<f64> = offsets.iter().map(|(_, o)| o.y).collect();
        xs.sort_by(|a, b| a.total_cmp(b));
        ys.sort_by(|a, b| a.total_cmp(b));
        let med = Point::new(xs[xs.len() / 2], ys[ys.len() / 2]);
        let tol = gate * 0.75;
        let mut kept_dev = Vec::new();
        for (c, off) in offsets {
            let dev = off.dist(&med);
            if dev > tol {
                if let Some(u) = row[c] {
                    row[c] = None;
                    members.retain(|&m| m != u as usize);
                }
            } else {
                kept_dev.push(dev);
            }
        }
        if !kept_dev.is_empty() {
            geo_cost = kept_dev.iter().sum::<f64>() / kept_dev.len() as f64;
        }
    }
    RowCandidate { row, fills: members.len(), geo_cost, desc_cost, anchor }
}

/// Column hypotheses tried per anchor; early centroid estimates are single
/// features, so the nearest column is not always the right one.
const ANCHOR_HYPOTHESES: usize = 4;

/// Shrink factor for circle-based separation rules. Bounding-box-derived
/// radii plus centroid wobble of partially filled columns overshoot the
/// true object extent, so only gross violations count.
const CIRCLE_SHRINK: f64 = 0.75;


fn best_add_word(ctx: &Ctx, state: &State) -> Option<Vec<Option<u32>>> {
    let n_cols = state.n_cols();
    if n_cols == 0 {
        return None;
    }
    let centroids = state.centroids(ctx);
    let gate = position_gate(&centroids);
    let mut candidates: Vec<RowCandidate> = Vec::new();

    // anchors matching an existing word belong to that word's holes, not to
    // a new row; hole filling handles them
    let word_means: Vec<Vec<f64>> =
        (0..state.n_words()).map(|w| state.word_mean(ctx, w)).collect();
    let matches_existing_word = |u: usize| -> bool {
        let desc = &ctx.scene.keypoints[ctx.ids[u]].descriptor;
        word_means.iter().any(|mean| {
            let dist: f64 =
                desc.iter().zip(mean).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
            dist <= ctx.cfg.appearance_tol
        })
    };

    for anchor in 0..ctx.n {
        if state.used[anchor] || ctx.nbrs[anchor].is_empty() {
            continue;
        }
        if matches_existing_word(anchor) {
            continue;
        }
        let mut order: Vec<usize> = (0..n_cols).collect();
        order.sort_by(|&a, &b| {
            ctx.pos[anchor]
                .dist(&centroids[a])
                .total_cmp(&ctx.pos[anchor].dist(&centroids[b]))
                .then(a.cmp(&b))
        });
        // keep every hypothesis row: a misassigned ("sheared") hypothesis
        // can fill as completely as the true one, and only the feasibility
        // verification below can tell them apart
        for &c_a in order.iter().take(ANCHOR_HYPOTHESES) {
            let cand = build_row_hypothesis(ctx, state, &centroids, gate, anchor, c_a);
            if cand.fills >= ctx.cfg.min_objects.max(2) {
                candidates.push(cand);
            }
        }
    }

    candidates.sort_by(|a, b| {
        b.fills
            .cmp(&a.fills)
            .then(a.geo_cost.total_cmp(&b.geo_cost))
            .then(a.desc_cost.total_cmp(&b.desc_cost))
            .then(a.anchor.cmp(&b.anchor))
    });

    for cand in candidates {
        let mut trial = state.clone();
        trial.rows.push(cand.row.clone());
        for u in cand.row.iter().flatten() {
            trial.used[*u as usize] = true;
        }
        if trial.is_feasible(ctx) {
            return Some(cand.row);
        }
    }
    None
}

/// Candidate column for the add-object move.
struct ColCandidate {
    col: Vec<Option<u32>>,
    fills: usize,
    /// Mean distance of members from their expected positions.
    geo_cost: f64,
    desc_cost: f64,
    anchor: usize,
}

fn best_add_object(ctx: &Ctx, state: &State) -> Option<Vec<Option<u32>>> {
    let n_words = state.n_words();
    if n_words == 0 {
        return None;
    }
    let centroids = state.centroids(ctx);
    let gate = position_gate(&centroids);
    let ml = state.mean_layout(ctx, &centroids);
    let min_fill = ctx.cfg.min_words.min(n_words).max(2);
    let mut candidates: Vec<ColCandidate> = Vec::new();

    for w in 0..n_words {
        let word_members = state.word_member_ids(w);
        let Some(&first) = word_members.first() else { continue };
        for &g in &ctx.nbrs[first] {
            let g = g as usize;
            if state.used[g] {
                continue;
            }
            if !ctx.compatible_with_all(g, &word_members)
                || !ctx.separated_from_all(g, &word_members)
            {
                continue;
            }
            let center = Point::new(ctx.pos[g].x - ml[w].x, ctx.pos[g].y - ml[w].y);
            // reject duplicates of an existing object
            if centroids.iter().any(|mu| mu.dist(&center) < gate) {
                continue;
            }
            let mut col: Vec<Option<u32>> = vec![None; n_words];
            col[w] = Some(g as u32);
            let mut chosen = vec![g];
            let mut desc_cost = 0.0;
            let mut gap_sum = 0.0;
            for w2 in 0..n_words {
                if w2 == w {
                    continue;
                }
                let members2 = state.word_member_ids(w2);
                let Some(&first2) = members2.first() else { continue };
                let expected = Point::new(center.x + ml[w2].x, center.y + ml[w2].y);
                let mut best: Option<(f64, usize)> = None;
                for cand in ctx.nbrs[first2].iter().map(|&u| u as usize).chain([first2]) {
                    if state.used[cand] || chosen.contains(&cand) {
                        continue;
                    }
                    let gap = ctx.pos[cand].dist(&expected);
                    if gap >= gate {
                        continue;
                    }
                    if !ctx.compatible_with_all(cand, &members2)
                        || !ctx.separated_from_all(cand, &members2)
                    {
                        continue;
                    }
                    if best.is_none_or(|(bg, bu)| gap < bg || (gap == bg && cand < bu)) {
                        best = Some((gap, cand));
                    }
                }
                if let Some((gap, u)) = best {
                    col[w2] = Some(u as u32);
                    desc_cost += members2.iter().map(|&m| ctx.d(u, m)).sum::<f64>();
                    gap_sum += gap;
                    chosen.push(u);
                }
            }
            let fills = chosen.len();
            if fills >= min_fill {
                let geo_cost = gap_sum / fills as f64;
                candidates.push(ColCandidate { col, fills, geo_cost, desc_cost, anchor: g });
            }
        }
    }

    candidates.sort_by(|a, b| {
        b.fills
            .cmp(&a.fills)
            .then(a.geo_cost.total_cmp(&b.geo_cost))
            .then(a.desc_cost.total_cmp(&b.desc_cost))
            .then(a.anchor.cmp(&b.anchor))
    });

    for cand in candidates {
        let mut trial = state.clone();
        for (w, cell) in cand.col.iter().enumerate() {
            trial.rows[w].push(*cell);
            if let Some(u) = cell {
                trial.used[*u as usize] = true;
            }
        }
        if trial.is_feasible(ctx) {
            return Some(cand.col);
        }
    }
    None
}

/// Alternate best add-word / add-object moves, preferring the larger
/// coverage gain, until neither applies.
fn grow(ctx: &Ctx, state: &mut State) {
    fn try_word(ctx: &Ctx, state: &mut State) -> bool {
        if let Some(row) = best_add_word(ctx, state) {
            for u in row.iter().flatten() {
                state.used[*u as usize] = true;
            }
            state.rows.push(row);
            true
        } else {
            false
        }
    }
    fn try_obj(ctx: &Ctx, state: &mut State) -> bool {
        if let Some(col) = best_add_object(ctx, state) {
            for (w, cell) in col.iter().enumerate() {
                state.rows[w].push(*cell);
                if let Some(u) = cell {
                    state.used[*u as usize] = true;
                }
            }
            true
        } else {
            false
        }
    }

    loop {
        let word_gain = state.n_cols();
        let obj_gain = state.n_words();
        // both calls mutate state, so the order of attempts matters
        #[allow(clippy::if_same_then_else)]
        let applied = if word_gain >= obj_gain {
            try_word(ctx, state) || try_obj(ctx, state)
        } else {
            try_obj(ctx, state) || try_word(ctx, state)
        };
        if !applied {
            break;
        }
    }
}

/// Fill one empty cell if a compatible keypoint sits near its expected
/// position. Returns true when a fill was applied.
#[allow(clippy::needless_range_loop)]
fn fill_one_hole(ctx: &Ctx, state: &mut State) -> bool {
    let centroids = state.centroids(ctx);
    let gate = position_gate(&centroids);
    let ml = state.mean_layout(ctx, &centroids);
    for w in 0..state.n_words() {
        let members = state.word_member_ids(w);
        if members.is_empty() {
            continue;
        }
        for c in 0..state.n_cols() {
            if state.rows[w][c].is_some() {
                continue;
            }
            let expected = Point::new(centroids[c].x + ml[w].x, centroids[c].y + ml[w].y);
            let mut best: Option<(f64, usize)> = None;
            for &u in &ctx.nbrs[members[0]] {
                let u = u as usize;
                if state.used[u] {
                    continue;
                }
                let gap = ctx.pos[u].dist(&expected);
                if gap >= gate {
                    continue;
                }
                if !ctx.compatible_with_all(u, &members) || !ctx.separated_from_all(u, &members) {
                    continue;
                }
                if best.is_none_or(|(bg, bu)| gap < bg || (gap == bg && u < bu)) {
                    best = Some((gap, u));
                }
            }
            if let Some((_, u)) = best {
                let mut trial = state.clone();
                trial.set(w, c, Some(u as u32));
                if trial.is_feasible(ctx) {
                    *state = trial;
                    return true;
                }
            }
        }
    }
    false
}

/// Replace one entry with an unused alternative that strictly improves the
/// secondary objective. Returns true when a swap was applied.
fn modify_one_entry(ctx: &Ctx, state: &mut State) -> bool {
    let baseline = state.secondary(ctx);
    for w in 0..state.n_words() {
        for c in 0..state.n_cols() {
            let Some(current) = state.rows[w][c] else { continue };
            let members: Vec<usize> = state
                .word_member_ids(w)
                .into_iter()
                .filter(|&m| m != current as usize)
                .collect();
            if members.is_empty() {
                continue;
            }
            for &u in &ctx.nbrs[members[0]] {
                let u = u as usize;
                if state.used[u] || u == current as usize {
                    continue;
                }
                if !ctx.compatible_with_all(u, &members) || !ctx.separated_from_all(u, &members) {
                    continue;
                }
                let mut trial = state.clone();
                trial.set(w, c, Some(u as u32));
                if trial.is_feasible(ctx) && trial.secondary(ctx) < baseline - 1e-12 {
                    *state = trial;
                    return true;
                }
            }
        }
    }
    false
}

/// Delete the weakest word or object, regrow, and keep the result only when
/// it does not lose coverage and improves `(coverage, fills, -secondary)`.
fn delete_and_regrow(ctx: &Ctx, state: &mut State) -> bool {
    let before = (state.coverage(), state.fills());
    let before_sec = state.secondary(ctx);

    let mut attempts: Vec<State> = Vec::new();
    if state.n_words() > 1 {
        let worst_w = (0..state.n_words())
            .max_by(|&a, &b| state.word_spread(ctx, a).total_cmp(&state.word_spread(ctx, b)))
            .unwrap();
        let mut trial = state.clone();
        for c in 0..trial.n_cols() {
            trial.set(worst_w, c, None);
        }
        trial.rows.remove(worst_w);
        grow(ctx, &mut trial);
        attempts.push(trial);
    }
    if state.n_cols() > 1 {
        let centroids = state.centroids(ctx);
        let ml = state.mean_layout(ctx, &centroids);
        let worst_c = (0..state.n_cols())
            .max_by(|&a, &b| {
                state
                    .col_residual(ctx, a, &ml, 0.0)
                    .total_cmp(&state.col_residual(ctx, b, &ml, 0.0))
            })
            .unwrap();
        let mut trial = state.clone();
        for w in 0..trial.n_words() {
            trial.set(w, worst_c, None);
        }
        for row in &mut trial.rows {
            row.remove(worst_c);
        }
        grow(ctx, &mut trial);
        attempts.push(trial);
    }

    for trial in attempts {
        let after = (trial.coverage(), trial.fills());
        let improved = after > before
            || (after == before && trial.secondary(ctx) < before_sec - 1e-12);
        if improved && after.0 >= before.0 && trial.is_feasible(ctx) {
            *state = trial;
            return true;
        }
    }
    false
}

fn local_search(ctx: &Ctx, state: &mut State) {
    let mut moves = 0;
    while moves < ctx.cfg.max_local_moves {
        if fill_one_hole(ctx, state) {
            moves += 1;
            continue;
        }
        if modify_one_entry(ctx, state) {
            moves += 1;
            continue;
        }
        if delete_and_regrow(ctx, state) {
            moves += 1;
            continue;
        }
        break;
    }
}

/// Drop structurally unviable rows/columns and any column whose geometry
/// cannot meet the tolerance, until the matrix is stable. Returns false if
/// the matrix falls below the minimum pattern size.
fn repair(ctx: &Ctx, state: &mut State) -> bool {
    loop {
        if state.n_words() < ctx.cfg.min_words || state.n_cols() < ctx.cfg.min_objects {
            return false;
        }
        // structural floors
        if let Some(w) = (0..state.n_words())
            .find(|&w| state.word_member_ids(w).len() < ctx.cfg.min_objects)
        {
            for c in 0..state.n_cols() {
                state.set(w, c, None);
            }
            state.rows.remove(w);
            continue;
        }
        if let Some(c) =
            (0..state.n_cols()).find(|&c| state.col_members(c).len() < ctx.cfg.min_words)
        {
            for w in 0..state.n_words() {
                state.set(w, c, None);
            }
            for row in &mut state.rows {
                row.remove(c);
            }
            continue;
        }
        // feasibility floors
        if let Some(w) = (0..state.n_words())
            .find(|&w| state.word_spread(ctx, w) > ctx.cfg.appearance_tol)
        {
            for c in 0..state.n_cols() {
                state.set(w, c, None);
            }
            state.rows.remove(w);
            continue;
        }
        // indistinguishable word pairs: merge when their filled columns are
        // disjoint (a split word), otherwise drop the smaller row
        let mut duplicate: Option<(usize, usize)> = None;
        'dup: for w1 in 0..state.n_words() {
            let m1 = state.word_mean(ctx, w1);
            for w2 in (w1 + 1)..state.n_words() {
                let m2 = state.word_mean(ctx, w2);
                let dist: f64 =
                    m1.iter().zip(&m2).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
                if dist <= ctx.cfg.appearance_tol {
                    duplicate = Some((w1, w2));
                    break 'dup;
                }
            }
        }
        if let Some((w1, w2)) = duplicate {
            let disjoint = (0..state.n_cols())
                .all(|c| state.rows[w1][c].is_none() || state.rows[w2][c].is_none());
            if disjoint {
                for c in 0..state.n_cols() {
                    if let Some(u) = state.rows[w2][c] {
                        state.rows[w2][c] = None;
                        state.rows[w1][c] = Some(u);
                    }
                }
                state.rows.remove(w2);
            } else {
                let (f1, f2) =
                    (state.word_member_ids(w1).len(), state.word_member_ids(w2).len());
                let drop = if f2 <= f1 { w2 } else { w1 };
                for c in 0..state.n_cols() {
                    state.set(drop, c, None);
                }
                state.rows.remove(drop);
            }
            continue;
        }
        let centroids = state.centroids(ctx);
        let ml = state.mean_layout(ctx, &centroids);
        let gate0 = position_gate(&centroids);
        let r_floor = if gate0.is_finite() { gate0 / 2.0 } else { 0.0 };
        if let Some(c) = (0..state.n_cols())
            .find(|&c| state.col_residual(ctx, c, &ml, r_floor) > ctx.cfg.geometry_tol)
        {
            for w in 0..state.n_words() {
                state.set(w, c, None);
            }
            for row in &mut state.rows {
                row.remove(c);
            }
            continue;
        }
        // trimming words can drift column centers into overlap; drop the
        // weaker of an overlapping circle pair
        let circles: Vec<crate::geom::Circle> = (0..state.n_cols())
            .map(|c| {
                let pts: Vec<Point> =
                    state.col_members(c).iter().map(|&(_, u)| ctx.pos[u]).collect();
                object_circle(&pts)
            })
            .collect();
        let mut overlap: Option<usize> = None;
        'outer: for a in 0..circles.len() {
            for b in (a + 1)..circles.len() {
                let close = circles[a].center().dist(&circles[b].center())
                    < CIRCLE_SHRINK * (circles[a].r + circles[b].r);
                if close {
                    let (fa, fb) =
                        (state.col_members(a).len(), state.col_members(b).len());
                    overlap = Some(if fa < fb { a } else { b });
                    break 'outer;
                }
            }
        }
        if let Some(c) = overlap {
            for w in 0..state.n_words() {
                state.set(w, c, None);
            }
            for row in &mut state.rows {
                row.remove(c);
            }
            continue;
        }
        // word-offset spread cap: drop the weaker word of a too-distant pair
        {
            let centroids = state.centroids(ctx);
            let gate0 = position_gate(&centroids);
            if gate0.is_finite() {
                let cap = 2.0 * gate0;
                let ml = state.mean_layout(ctx, &centroids);
                let mut worst: Option<(usize, usize)> = None;
                for i in 0..state.n_words() {
                    for j in (i + 1)..state.n_words() {
                        if ml[i].dist(&ml[j]) >= cap {
                            worst = Some((i, j));
                        }
                    }
                }
                if let Some((i, j)) = worst {
                    let (fi, fj) =
                        (state.word_member_ids(i).len(), state.word_member_ids(j).len());
                    let drop = if fj <= fi { j } else { i };
                    for c in 0..state.n_cols() {
                        state.set(drop, c, None);
                    }
                    state.rows.remove(drop);
                    continue;
                }
            }
        }
        // clear cells whose keypoint sits inside a foreign object's circle
        let floor = ctx.cfg.min_words.min(3);
        let mut stolen: Option<(usize, usize)> = None;
        'steal: for c in 0..state.n_cols() {
            for (w, u) in state.col_members(c) {
                for (c2, circle) in circles.iter().enumerate() {
                    if c2 == c || state.col_members(c2).len() < floor {
                        continue;
                    }
                    if circle.center().dist(&ctx.pos[u]) <= CIRCLE_SHRINK * circle.r {
                        stolen = Some((w, c));
                        break 'steal;
                    }
                }
            }
        }
        if let Some((w, c)) = stolen {
            state.set(w, c, None);
            continue;
        }
        return true;
    }
}

/// Canonicalize column order by circle center, then convert to scene ids.
fn emit(ctx: &Ctx, state: &State, region: &SearchRegion) -> RecurringPattern {
    let centroids = state.centroids(ctx);
    let mut order: Vec<usize> = (0..state.n_cols()).collect();
    order.sort_by(|&a, &b| {
        centroids[a]
            .x
            .total_cmp(&centroids[b].x)
            .then(centroids[a].y.total_cmp(&centroids[b].y))
            .then(a.cmp(&b))
    });
    let cells: Vec<Vec<Option<usize>>> = state
        .rows
        .iter()
        .map(|row| order.iter().map(|&c| row[c].map(|u| ctx.ids[u as usize])).collect())
        .collect();
    let matrix = AssignmentMatrix { cells };
    let circles = circles_of(&matrix, ctx.scene);
    RecurringPattern {
        matrix,
        circles,
        source_region: RegionRef {
            type_id: region.type_id.clone(),
            region_index: region.region_index,
        },
    }
}

/// Keypoint-set overlap used for in-region pattern dedup: shared fraction
/// of the smaller pattern.
fn overlap_frac(a: &[usize], b: &[usize]) -> f64 {
    let set: std::collections::HashSet<usize> = a.iter().copied().collect();
    let shared = b.iter().filter(|id| set.contains(id)).count();
    shared as f64 / a.len().min(b.len()).max(1) as f64
}

/// Detect recurring patterns in one search region.
///
/// Deterministic given `(cfg.seed, region identity)`; regions may be
/// processed concurrently. Too few keypoints is not an error: the result is
/// simply empty.
pub fn detect(region: &SearchRegion, scene: &FeatureScene, cfg: &GraspConfig) -> Vec<RecurringPattern> {
    let ctx = Ctx::new(region, scene, cfg);
    if ctx.n < cfg.min_words * cfg.min_objects {
        return Vec::new();
    }
    let mut rng =
        ChaCha8Rng::seed_from_u64(region_seed(cfg.seed, &region.type_id, region.region_index));

    // (pattern, (coverage, fills), total intra-word dist, keypoint ids)
    let mut kept: Vec<(State, (usize, usize), f64, Vec<usize>)> = Vec::new();

    // once something is found, stop after several consecutive restarts
    // leave the kept set unchanged; failed seed pairs are never redrawn
    const STAGNATION_LIMIT: usize = 5;
    let mut stagnant = 0;
    let mut tried: std::collections::HashSet<(u32, u32)> = std::collections::HashSet::new();

    for _ in 0..cfg.restarts {
        if !kept.is_empty() && stagnant >= STAGNATION_LIMIT {
            break;
        }
        let mut excluded = vec![false; ctx.n];
        for (_, _, _, ids) in &kept {
            for &id in ids {
                excluded[id] = true;
            }
        }
        let rcl = rcl_pairs(&ctx, &excluded, &tried);
        if rcl.is_empty() {
            break;
        }
        let (i, j) = rcl[rng.gen_range(0..rcl.len())];
        tried.insert((i, j));

        let mut state = State::new(ctx.n);
        let seed_word = grow_seed_word(&ctx, &state, i as usize, j as usize);
        state.rows.push(seed_word.iter().map(|&u| Some(u as u32)).collect());
        for &u in &seed_word {
            state.used[u] = true;
        }
        grow(&ctx, &mut state);
        local_search(&ctx, &mut state);
        if !repair(&ctx, &mut state) {
            stagnant += 1;
            continue;
        }
        debug_assert!(state.is_feasible(&ctx));

        let mut ids: Vec<usize> =
            state.rows.iter().flatten().flatten().map(|&u| u as usize).collect();
        ids.sort_unstable();
        let coverage = (state.coverage(), state.fills());
        let intra = state.total_intra_word_dist(&ctx);

        let overlapping: Vec<usize> = kept
            .iter()
            .enumerate()
            .filter(|(_, (_, _, _, k_ids))| overlap_frac(&ids, k_ids) > 0.5)
            .map(|(idx, _)| idx)
            .collect();
        if overlapping.is_empty() {
            kept.push((state, coverage, intra, ids));
            stagnant = 0;
        } else {
            let beats_all = overlapping.iter().all(|&idx| {
                let (_, k_cov, k_intra, _) = &kept[idx];
                coverage > *k_cov || (coverage == *k_cov && intra < *k_intra)
            });
            if beats_all {
                for idx in overlapping.into_iter().rev() {
                    kept.remove(idx);
                }
                kept.push((state, coverage, intra, ids));
                stagnant = 0;
            } else {
                stagnant += 1;
            }
        }
    }

    kept.sort_by(|a, b| {
        b.1.cmp(&a.1)
            .then(a.2.total_cmp(&b.2))
            .then(a.3.first().cmp(&b.3.first()))
    });
    kept.iter().map(|(state, _, _, _)| emit(&ctx, state, region)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Rect;
    use crate::planogram::planogram_from_rows;
    use crate::scene::{synthesize, SynthSpec};

    fn whole_scene_region(scene: &FeatureScene, type_id: &str, expected: usize) -> SearchRegion {
        SearchRegion {
            type_id: type_id.to_string(),
            rect: Rect::new(0.0, 0.0, scene.width as f64, scene.height as f64),
            expected_count: expected,
            region_index: 0,
            slots: Vec::new(),
        }
    }

    #[test]
    fn noiseless_three_copies_recovered_exactly() {
        let p = planogram_from_rows(&[vec!["A".into(); 3]]).unwrap();
        let spec = SynthSpec { features_per_instance: 5, seed: 1, ..SynthSpec::default() };
        let (scene, truth) = synthesize(&p, &spec).unwrap();
        let region = whole_scene_region(&scene, "A", 3);
        let cfg = GraspConfig::default();
        let patterns = detect(&region, &scene, &cfg);
        assert_eq!(patterns.len(), 1, "expected exactly one deduped pattern");
        let pat = &patterns[0];
        assert_eq!(pat.matrix.n_words(), 5);
        assert_eq!(pat.matrix.n_objects(), 3);
        assert_eq!(pat.matrix.filled(), 15);
        assert!(feasibility_violations(&pat.matrix, &scene, &cfg).is_empty());

        // circles centered on the ground-truth instance centroids
        for inst in &truth.instances {
            let closest = pat
                .circles
                .iter()
                .map(|c| c.center().dist(&inst.center))
                .fold(f64::INFINITY, f64::min);
            assert!(closest < 1e-6, "instance at {:?} unmatched", inst.center);
        }
    }

    #[test]
    fn single_instance_yields_nothing() {
        let p = planogram_from_rows(&[vec!["A".into()]]).unwrap();
        let spec = SynthSpec { features_per_instance: 6, seed: 2, ..SynthSpec::default() };
        let (scene, _) = synthesize(&p, &spec).unwrap();
        let region = whole_scene_region(&scene, "A", 1);
        assert!(detect(&region, &scene, &GraspConfig::default()).is_empty());
    }

    #[test]
    fn too_few_keypoints_is_empty_not_error() {
        let scene = FeatureScene { width: 100, height: 100, descriptor_dim: 4, keypoints: vec![] };
        let region = whole_scene_region(&scene, "A", 1);
        assert!(detect(&region, &scene, &GraspConfig::default()).is_empty());
    }

    #[test]
    fn two_types_give_two_pure_patterns() {
        // 3 instances of each type in one region; B occupies slots {0,1,3}
        // of a 4-slot row, so no cross-type translational lattice exists
        let p = planogram_from_rows(&[
            vec!["A".into(), "A".into(), "A".into()],
            vec!["B".into(), "B".into(), "B".into(), "B".into()],
        ])
        .unwrap();
        let spec = SynthSpec {
            features_per_instance: 5,
            seed: 3,
            missing: vec![("B".into(), 2)],
            ..SynthSpec::default()
        };
        let (scene, _) = synthesize(&p, &spec).unwrap();
        let region = whole_scene_region(&scene, "A", 6);
        let cfg = GraspConfig { geometry_tol: 0.05, ..GraspConfig::default() };
        let patterns = detect(&region, &scene, &cfg);
        assert!(patterns.len() >= 2, "found {} patterns", patterns.len());
        // no word mixes ground-truth types
        for pat in &patterns {
            for w in 0..pat.matrix.n_words() {
                let types: std::collections::BTreeSet<&str> = pat
                    .matrix
                    .word_members(w)
                    .iter()
                    .filter_map(|&(_, id)| scene.keypoints[id].gt_label.as_ref())
                    .map(|(t, _)| t.as_str())
                    .collect();
                assert!(types.len() <= 1, "word {w} mixes types {types:?}");
            }
        }
    }

    #[test]
    fn detection_is_deterministic() {
        let p = planogram_from_rows(&[vec!["A".into(); 4]]).unwrap();
        let spec = SynthSpec {
            features_per_instance: 6,
            descriptor_noise: 0.05,
            position_jitter: 2.0,
            clutter: 20,
            seed: 9,
            ..SynthSpec::default()
        };
        let (scene, _) = synthesize(&p, &spec).unwrap();
        let region = whole_scene_region(&scene, "A", 4);
        let cfg = GraspConfig { seed: 42, ..GraspConfig::default() };
        let a = detect(&region, &scene, &cfg);
        let b = detect(&region, &scene, &cfg);
        assert_eq!(a, b);
    }

    #[test]
    fn noisy_scene_patterns_stay_feasible() {
        let p = planogram_from_rows(&[vec!["A".into(); 6]]).unwrap();
        let spec = SynthSpec {
            features_per_instance: 6,
            descriptor_noise: 0.05,
            position_jitter: 2.4,
            clutter: 30,
            seed: 17,
            ..SynthSpec::default()
        };
        let (scene, truth) = synthesize(&p, &spec).unwrap();
        let region = whole_scene_region(&scene, "A", 6);
        let cfg = GraspConfig::default();
        let patterns = detect(&region, &scene, &cfg);
        assert!(!patterns.is_empty());
        for pat in &patterns {
            let violations = feasibility_violations(&pat.matrix, &scene, &cfg);
            assert!(violations.is_empty(), "{violations:?}");
        }
        // the top pattern covers all six instances
        assert_eq!(patterns[0].matrix.n_objects(), truth.instances.len());
        // no keypoint reuse
        let ids = patterns[0].matrix.keypoint_ids();
        let mut dedup = ids.clone();
        dedup.dedup();
        assert_eq!(ids.len(), dedup.len());
    }

    #[test]
    fn circles_follow_object_rule() {
        let p = planogram_from_rows(&[vec!["A".into(); 3]]).unwrap();
        let spec = SynthSpec { features_per_instance: 4, seed: 4, ..SynthSpec::default() };
        let (scene, _) = synthesize(&p, &spec).unwrap();
        let region = whole_scene_region(&scene, "A", 3);
        let patterns = detect(&region, &scene, &GraspConfig::default());
        let pat = &patterns[0];
        let recomputed = circles_of(&pat.matrix, &scene);
        assert_eq!(pat.circles, recomputed);
    }
}
