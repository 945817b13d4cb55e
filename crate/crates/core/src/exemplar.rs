//! Product exemplar extraction and re-detection of missed products.
//!
//! The most feature-rich object of a matched pattern represents its product
//! type. Its features are then matched against keypoints outside the already
//! detected circles: a group that covers enough exemplar features and aligns
//! geometrically is accepted as a product instance the region partition
//! missed.

use serde::Serialize;

use crate::geom::{fit_translation_scale, object_circle, Circle, Point, Rect};
use crate::merging::MergedPattern;
use crate::pattern::GraspConfig;
use crate::scene::FeatureScene;

/// The representative product instance of one type.
#[derive(Debug, Clone, Serialize)]
pub struct ProductExemplar {
    pub type_id: String,
    /// Pixel bounding box covering the chosen object's keypoints.
    pub bbox: Rect,
    pub positions: Vec<Point>,
    pub descriptors: Vec<Vec<f64>>,
    pub feature_count: usize,
}

/// Pick the exemplar object of a pattern: most features, ties broken by
/// smaller bounding-box area, then by lowest keypoint id.
pub fn extract_exemplar(
    pattern: &MergedPattern,
    scene: &FeatureScene,
    type_id: &str,
) -> ProductExemplar {
    assert!(!pattern.members.is_empty(), "pattern must have objects");
    let mut best: Option<(usize, Rect, f64)> = None; // (object, bbox, area)
    for (c, members) in pattern.members.iter().enumerate() {
        let pts: Vec<Point> = members.iter().map(|&id| scene.keypoints[id].pos).collect();
        let bbox = Rect::covering(pts.iter()).unwrap();
        let area = bbox.area();
        let better = match &best {
            None => true,
            Some((bc, _, barea)) => {
                let (n, bn) = (members.len(), pattern.members[*bc].len());
                n > bn
                    || (n == bn && area < *barea)
                    || (n == bn
                        && area == *barea
                        && members.iter().min() < pattern.members[*bc].iter().min())
            }
        };
        if better {
            best = Some((c, bbox, area));
        }
    }
    let (c, bbox, _) = best.unwrap();
    let members = &pattern.members[c];
    ProductExemplar {
        type_id: type_id.to_string(),
        bbox,
        positions: members.iter().map(|&id| scene.keypoints[id].pos).collect(),
        descriptors: members.iter().map(|&id| scene.keypoints[id].descriptor.clone()).collect(),
        feature_count: members.len(),
    }
}

/// A product instance found by re-detection.
#[derive(Debug, Clone)]
pub struct Redetection {
    pub circle: Circle,
    pub keypoints: Vec<usize>,
}

fn desc_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Scan the scene for unclaimed copies of the exemplar.
///
/// Only keypoints outside every excluded circle are considered. A candidate
/// group is accepted when at least `coverage_frac` of the exemplar features
/// find a descriptor match and the matched layout aligns to the exemplar by
/// translation and uniform scale within the geometry tolerance. Accepted
/// circles never overlap the excluded ones.
pub fn redetect(
    exemplar: &ProductExemplar,
    scene: &FeatureScene,
    exclude: &[Circle],
    cfg: &GraspConfig,
    coverage_frac: f64,
) -> Vec<Redetection> {
    let f = exemplar.feature_count;
    if f < cfg.min_words {
        return Vec::new();
    }
    let eligible: Vec<usize> = scene
        .keypoints
        .iter()
        .enumerate()
        .filter(|(_, k)| !exclude.iter().any(|c| c.contains(&k.pos)))
        .map(|(i, _)| i)
        .collect();
    if eligible.is_empty() {
        return Vec::new();
    }

    // descriptor matches per (keypoint, exemplar feature)
    let mut matches: Vec<(f64, usize, usize)> = Vec::new(); // (dist, kp, feature)
    for &id in &eligible {
        for (k, desc) in exemplar.descriptors.iter().enumerate() {
            let d = desc_dist(&scene.keypoints[id].descriptor, desc);
            if d <= cfg.appearance_tol {
                matches.push((d, id, k));
            }
        }
    }
    matches.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let exemplar_radius = object_circle(&exemplar.positions).r;
    let gate = exemplar_radius.max(1.0);
    let min_features = ((coverage_frac * f as f64).ceil() as usize).max(cfg.min_words);

    let mut used = vec![false; scene.keypoints.len()];
    let mut live_exclude: Vec<Circle> = exclude.to_vec();
    let mut out = Vec::new();

    for &(_, seed_kp, seed_feat) in &matches {
        if used[seed_kp] {
            continue;
        }
        let t = Point::new(
            scene.keypoints[seed_kp].pos.x - exemplar.positions[seed_feat].x,
            scene.keypoints[seed_kp].pos.y - exemplar.positions[seed_feat].y,
        );
        let mut group: Vec<(usize, usize)> = vec![(seed_feat, seed_kp)]; // (feature, kp)
        for k in 0..f {
            if k == seed_feat {
                continue;
            }
            let expected =
                Point::new(exemplar.positions[k].x + t.x, exemplar.positions[k].y + t.y);
            let mut best: Option<(f64, usize)> = None;
            for &(d, id, feat) in &matches {
                if feat != k || used[id] || group.iter().any(|&(_, g)| g == id) {
                    continue;
                }
                let gap = scene.keypoints[id].pos.dist(&expected);
                if gap >= gate {
                    continue;
                }
                let key = gap + d;
                if best.is_none_or(|(bk, bi)| key < bk || (key == bk && id < bi)) {
                    best = Some((key, id));
                }
            }
            if let Some((_, id)) = best {
                group.push((k, id));
            }
        }
        if group.len() < min_features {
            continue;
        }
        let src: Vec<Point> = group.iter().map(|&(k, _)| exemplar.positions[k]).collect();
        let dst: Vec<Point> = group.iter().map(|&(_, id)| scene.keypoints[id].pos).collect();
        let circle = object_circle(&dst);
        let ok = match fit_translation_scale(&src, &dst) {
            Some((_, _, rms)) => rms / circle.r <= cfg.geometry_tol,
            None => false,
        };
        if !ok {
            continue;
        }
        if live_exclude.iter().any(|c| c.overlaps(&circle)) {
            continue;
        }
        let mut ids: Vec<usize> = group.iter().map(|&(_, id)| id).collect();
        ids.sort_unstable();
        for &id in &ids {
            used[id] = true;
        }
        live_exclude.push(circle);
        out.push(Redetection { circle, keypoints: ids });
    }

    out.sort_by(|a, b| {
        a.circle.cx.total_cmp(&b.circle.cx).then(a.circle.cy.total_cmp(&b.circle.cy))
    });
    out
}
