//! Divide and conquer: project planogram product boxes onto the scene and
//! carve out one or more search regions per product type, capping the number
//! of instances a region may hold.

use serde::{Deserialize, Serialize};

use crate::geom::Rect;
use crate::planogram::{ExpectedLayout, Planogram, SlotId};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PartitionConfig {
    /// Maximum product instances per search region.
    pub max_per_region: usize,
    /// Margin added to each region side, as a fraction of its own size.
    pub margin_frac: f64,
}

impl Default for PartitionConfig {
    fn default() -> Self {
        Self { max_per_region: 25, margin_frac: 0.25 }
    }
}

/// A rectangular search region for one product type.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchRegion {
    pub type_id: String,
    /// Pixel rectangle, margin included, clipped to the scene.
    pub rect: Rect,
    /// Number of planogram instances assigned to this region.
    pub expected_count: usize,
    /// Index of this region within its type, 0-based.
    pub region_index: usize,
    /// Slots assigned to this region, row-major.
    pub slots: Vec<SlotId>,
}

/// Split `count` items into `groups` contiguous runs of near-equal size.
fn balanced_runs(count: usize, groups: usize) -> Vec<usize> {
    let base = count / groups;
    let extra = count % groups;
    (0..groups).map(|g| base + usize::from(g < extra)).collect()
}

/// Compute per-type search regions.
///
/// When a type's box count exceeds the cap, its boxes are split into
/// `ceil(count / cap)` contiguous runs of near-equal size along the longer
/// axis of their covering rectangle (ties in the split coordinate fall back
/// to row-major order, which the axis order equals for single-row shelves).
/// Each region is the covering rectangle of its run, expanded by the margin
/// fraction of its own width and height per side, then clipped to the
/// scene. Output is sorted by `(type_id, region_index)`.
pub fn partition(
    layout: &ExpectedLayout,
    planogram: &Planogram,
    scene_dims: (u32, u32),
    cfg: &PartitionConfig,
) -> Vec<SearchRegion> {
    let cap = cfg.max_per_region.max(2);
    let (w, h) = (scene_dims.0 as f64, scene_dims.1 as f64);
    let bounds = Rect::new(0.0, 0.0, w, h);

    let mut type_ids: Vec<&str> = layout.sets.iter().map(|s| s.type_id.as_str()).collect();
    type_ids.sort_unstable();

    let mut out = Vec::new();
    for type_id in type_ids {
        let boxes = planogram.boxes_of(type_id);
        if boxes.is_empty() {
            continue;
        }
        let mut pixel_boxes: Vec<(SlotId, Rect)> = boxes
            .iter()
            .map(|(slot, r)| {
                let px = Rect::new(r.x0 * w, r.y0 * h, r.x1 * w, r.y1 * h).with_min_side(1.0);
                (*slot, px)
            })
            .collect();

        let groups = pixel_boxes.len().div_ceil(cap);
        if groups > 1 {
            let mut cover = pixel_boxes[0].1;
            for (_, r) in &pixel_boxes[1..] {
                cover = cover.union(r);
            }
            if cover.width() >= cover.height() {
                pixel_boxes.sort_by(|(sa, ra), (sb, rb)| {
                    ra.center()
                        .x
                        .total_cmp(&rb.center().x)
                        .then(sa.row.cmp(&sb.row))
                        .then(sa.col.cmp(&sb.col))
                });
            } else {
                pixel_boxes.sort_by(|(sa, ra), (sb, rb)| {
                    ra.center()
                        .y
                        .total_cmp(&rb.center().y)
                        .then(sa.row.cmp(&sb.row))
                        .then(sa.col.cmp(&sb.col))
                });
            }
        }
        let sizes = balanced_runs(pixel_boxes.len(), groups);
        let mut start = 0;
        for (region_index, size) in sizes.into_iter().enumerate() {
            let run = &pixel_boxes[start..start + size];
            start += size;
            let mut cover = run[0].1;
            for (_, r) in &run[1..] {
                cover = cover.union(r);
            }
            let rect = cover
                .expand_frac(cfg.margin_frac, cfg.margin_frac)
                .clip_to(&bounds);
            out.push(SearchRegion {
                type_id: type_id.to_string(),
                rect,
                expected_count: size,
                region_index,
                slots: run.iter().map(|(s, _)| *s).collect(),
            });
        }
    }
    out
}
