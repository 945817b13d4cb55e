//! Cross-region pattern merging and detected-layout normalization.
//!
//! Patterns detected in different regions of the same product type are
//! unioned whenever any pair of their circular regions overlaps; overlapping
//! circles collapse into one (they are the same physical product seen from
//! two regions). All surviving object centers are then normalized into the
//! unit square of their common bounding box.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::geom::{Circle, Point, Rect};
use crate::pattern::RecurringPattern;

/// One merged pattern: combined circles plus the keypoint sets behind them.
#[derive(Debug, Clone)]
pub struct MergedPattern {
    /// Type attribution inherited from the source regions.
    pub type_id: String,
    /// One circle per detected object, sorted by center `(x, y)`.
    pub circles: Vec<Circle>,
    /// Scene keypoint ids per circle, aligned with `circles`.
    pub members: Vec<Vec<usize>>,
    /// Coverage sum of the source patterns.
    pub coverage: usize,
    /// Source patterns folded into this one.
    pub sources: usize,
}

impl MergedPattern {
    /// Append one object (used by redetection) and restore canonical order.
    pub fn push_object(&mut self, circle: Circle, members: Vec<usize>) {
        self.circles.push(circle);
        self.members.push(members);
        let mut order: Vec<usize> = (0..self.circles.len()).collect();
        order.sort_by(|&a, &b| {
            self.circles[a]
                .cx
                .total_cmp(&self.circles[b].cx)
                .then(self.circles[a].cy.total_cmp(&self.circles[b].cy))
        });
        self.circles = order.iter().map(|&i| self.circles[i]).collect();
        self.members = order.iter().map(|&i| self.members[i].clone()).collect();
    }
}

/// Normalized detected layout: one point set per merged pattern, all centers
/// mapped into the unit square of their common bounding box.
#[derive(Debug, Clone)]
pub struct DetectedLayout {
    /// Normalized object centers, one list per merged pattern.
    pub point_sets: Vec<Vec<Point>>,
    /// Pixel bounding box of all object centers.
    pub bbox: Rect,
    pub width_box: f64,
    pub height_box: f64,
    /// `(pattern index, object index)` provenance per normalized point.
    pub provenance: Vec<Vec<(usize, usize)>>,
}

impl DetectedLayout {
    /// Total detected products.
    pub fn total_points(&self) -> usize {
        self.point_sets.iter().map(|s| s.len()).sum()
    }
}

/// Union-find over pattern indices.
struct Groups {
    parent: Vec<usize>,
}

impl Groups {
    fn new(n: usize) -> Self {
        Self { parent: (0..n).collect() }
    }
    fn find(&mut self, i: usize) -> usize {
        if self.parent[i] != i {
            let root = self.find(self.parent[i]);
            self.parent[i] = root;
        }
        self.parent[i]
    }
    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// One object candidate during circle combination.
#[derive(Debug, Clone)]
struct ObjectEntry {
    circle: Circle,
    members: Vec<usize>,
}

fn any_circle_overlap(a: &RecurringPattern, b: &RecurringPattern) -> bool {
    a.circles.iter().any(|ca| b.circles.iter().any(|cb| ca.overlaps(cb)))
}

/// Merge patterns of the same type across regions by circular-region
/// overlap (transitive closure), then combine overlapping circles within
/// each merged pattern into one circle each: center is the member mean,
/// radius the member max. Patterns of different types never merge.
pub fn merge_patterns(patterns: &[RecurringPattern]) -> Vec<MergedPattern> {
    // group pattern indices by type; BTreeMap keeps type order deterministic
    let mut by_type: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, p) in patterns.iter().enumerate() {
        by_type.entry(p.source_region.type_id.as_str()).or_default().push(i);
    }

    let mut out = Vec::new();
    for (type_id, idxs) in by_type {
        let mut groups = Groups::new(idxs.len());
        for a in 0..idxs.len() {
            for b in (a + 1)..idxs.len() {
                if any_circle_overlap(&patterns[idxs[a]], &patterns[idxs[b]]) {
                    groups.union(a, b);
                }
            }
        }
        let mut grouped: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for local in 0..idxs.len() {
            grouped.entry(groups.find(local)).or_default().push(local);
        }

        for (_, locals) in grouped {
            // collect all objects of the group
            let mut objects: Vec<ObjectEntry> = Vec::new();
            let mut coverage = 0;
            for &local in &locals {
                let p = &patterns[idxs[local]];
                coverage += p.coverage();
                for (c, circle) in p.circles.iter().enumerate() {
                    let members: Vec<usize> =
                        p.matrix.object_members(c).iter().map(|&(_, id)| id).collect();
                    objects.push(ObjectEntry { circle: *circle, members });
                }
            }
            // combine overlapping circles: connected components, one pass
            let mut cgroups = Groups::new(objects.len());
            for a in 0..objects.len() {
                for b in (a + 1)..objects.len() {
                    if objects[a].circle.overlaps(&objects[b].circle) {
                        cgroups.union(a, b);
                    }
                }
            }
            let mut combined: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
            for i in 0..objects.len() {
                combined.entry(cgroups.find(i)).or_default().push(i);
            }

            let mut circles = Vec::new();
            let mut members = Vec::new();
            for (_, group) in combined {
                let n = group.len() as f64;
                let cx = group.iter().map(|&i| objects[i].circle.cx).sum::<f64>() / n;
                let cy = group.iter().map(|&i| objects[i].circle.cy).sum::<f64>() / n;
                let r = group
                    .iter()
                    .map(|&i| objects[i].circle.r)
                    .fold(f64::NEG_INFINITY, f64::max);
                let mut ids: Vec<usize> =
                    group.iter().flat_map(|&i| objects[i].members.iter().copied()).collect();
                ids.sort_unstable();
                ids.dedup();
                circles.push(Circle::new(cx, cy, r));
                members.push(ids);
            }

            // canonical object order by center
            let mut order: Vec<usize> = (0..circles.len()).collect();
            order.sort_by(|&a, &b| {
                circles[a]
                    .cx
                    .total_cmp(&circles[b].cx)
                    .then(circles[a].cy.total_cmp(&circles[b].cy))
            });
            out.push(MergedPattern {
                type_id: type_id.to_string(),
                circles: order.iter().map(|&i| circles[i]).collect(),
                members: order.iter().map(|&i| members[i].clone()).collect(),
                coverage,
                sources: locals.len(),
            });
        }
    }

    // canonical pattern order: type, then first circle center, then size
    out.sort_by(|a, b| {
        a.type_id
            .cmp(&b.type_id)
            .then_with(|| {
                let ca = a.circles.first().map(|c| (c.cx, c.cy)).unwrap_or((0.0, 0.0));
                let cb = b.circles.first().map(|c| (c.cx, c.cy)).unwrap_or((0.0, 0.0));
                ca.0.total_cmp(&cb.0).then(ca.1.total_cmp(&cb.1))
            })
            .then(b.circles.len().cmp(&a.circles.len()))
    });
    out
}

/// Normalize all object centers into the unit square of their common
/// bounding box. Degenerate box sides are expanded to one pixel centered on
/// the data; zero detections signal [`Error::EmptyDetection`].
pub fn normalize(merged: &[MergedPattern]) -> Result<DetectedLayout> {
    let centers: Vec<Point> =
        merged.iter().flat_map(|m| m.circles.iter().map(|c| c.center())).collect();
    if centers.is_empty() {
        return Err(Error::EmptyDetection);
    }
    let bbox = Rect::covering(centers.iter()).unwrap().with_min_side(1.0);
    let (w, h) = (bbox.width(), bbox.height());

    let mut point_sets = Vec::with_capacity(merged.len());
    let mut provenance = Vec::with_capacity(merged.len());
    for (j, m) in merged.iter().enumerate() {
        let mut pts = Vec::with_capacity(m.circles.len());
        let mut prov = Vec::with_capacity(m.circles.len());
        for (c, circle) in m.circles.iter().enumerate() {
            pts.push(Point::new((circle.cx - bbox.x0) / w, (circle.cy - bbox.y0) / h));
            prov.push((j, c));
        }
        point_sets.push(pts);
        provenance.push(prov);
    }
    Ok(DetectedLayout { point_sets, bbox, width_box: w, height_box: h, provenance })
}
