//! End-to-end compliance pipeline: partition, detect, merge, match, report.

use serde::{Deserialize, Serialize};

use crate::compliance::{report, report_all_missing, run_indexed, score_all, ComplianceReport};
use crate::error::Result;
use crate::exemplar::{extract_exemplar, redetect, ProductExemplar};
use crate::geom::Circle;
use crate::merging::{merge_patterns, normalize, MergedPattern};
use crate::partition::{partition, PartitionConfig};
use crate::pattern::{detect, GraspConfig, RecurringPattern};
use crate::planogram::{expected_layout, Planogram};
use crate::scene::FeatureScene;

/// Everything the pipeline needs to run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub grasp: GraspConfig,
    pub partition: PartitionConfig,
    /// Fraction of exemplar features a re-detected instance must cover.
    pub redetect_coverage: f64,
    /// Run exemplar-based re-detection of missed products.
    pub refine: bool,
    /// Worker threads for per-region detection and per-cell scoring.
    pub jobs: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            grasp: GraspConfig::default(),
            partition: PartitionConfig::default(),
            redetect_coverage: 0.6,
            refine: false,
            jobs: 1,
        }
    }
}

/// One detected product drawn in overlays and exported in the report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Detection {
    /// Selected type via graph matching; none for unmatched patterns.
    #[serde(rename = "type")]
    pub type_id: Option<String>,
    pub x: f64,
    pub y: f64,
    pub r: f64,
    pub pattern: usize,
    pub redetected: bool,
}

/// Exported exemplar bounding box.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExemplarExport {
    #[serde(rename = "type")]
    pub type_id: String,
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
    pub features: usize,
}

/// Full pipeline result.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineOutput {
    pub overall_accuracy: f64,
    pub scene_width: u32,
    pub scene_height: u32,
    pub types: Vec<crate::compliance::TypeReport>,
    pub detections: Vec<Detection>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub exemplars: Vec<ExemplarExport>,
}

impl PipelineOutput {
    pub fn compliant(&self) -> bool {
        self.overall_accuracy == 1.0
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    fn from_parts(
        rep: ComplianceReport,
        scene: &FeatureScene,
        detections: Vec<Detection>,
        exemplars: Vec<ExemplarExport>,
    ) -> Self {
        Self {
            overall_accuracy: rep.overall_accuracy,
            scene_width: scene.width,
            scene_height: scene.height,
            types: rep.types,
            detections,
            exemplars,
        }
    }
}

/// Detect recurring patterns in all regions, possibly in parallel; result
/// order is canonical (region order) regardless of scheduling.
pub fn detect_all(
    planogram: &Planogram,
    scene: &FeatureScene,
    cfg: &PipelineConfig,
) -> Vec<RecurringPattern> {
    let layout = expected_layout(planogram);
    let regions = partition(&layout, planogram, (scene.width, scene.height), &cfg.partition);
    run_indexed(cfg.jobs, &regions, |region| detect(region, scene, &cfg.grasp))
        .into_iter()
        .flatten()
        .collect()
}

/// Run the full compliance check.
pub fn run_check(
    planogram: &Planogram,
    scene: &FeatureScene,
    cfg: &PipelineConfig,
) -> Result<PipelineOutput> {
    let layout = expected_layout(planogram);
    let patterns = detect_all(planogram, scene, cfg);
    let mut merged = merge_patterns(&patterns);

    let Ok(mut detected) = normalize(&merged) else {
        return Ok(PipelineOutput::from_parts(
            report_all_missing(&layout),
            scene,
            Vec::new(),
            Vec::new(),
        ));
    };

    let mut sm = score_all(&layout, &detected, cfg.jobs);
    let mut selection = crate::compliance::select_matches(&sm);

    let mut exemplars: Vec<ExemplarExport> = Vec::new();
    let mut redetected_circles: Vec<Circle> = Vec::new();
    if cfg.refine {
        // collect exemplars for the selected (type, pattern) pairs, then
        // sweep the scene for instances the partition missed
        let mut ordered = selection.clone();
        ordered.sort_unstable();
        let mut additions: Vec<(usize, Vec<(Circle, Vec<usize>)>)> = Vec::new();
        let mut exclude: Vec<Circle> =
            merged.iter().flat_map(|m| m.circles.iter().copied()).collect();
        for (type_idx, pattern_idx) in ordered {
            let type_id = layout.sets[type_idx].type_id.clone();
            let ex: ProductExemplar = extract_exemplar(&merged[pattern_idx], scene, &type_id);
            let found = redetect(&ex, scene, &exclude, &cfg.grasp, cfg.redetect_coverage);
            exemplars.push(ExemplarExport {
                type_id,
                x: ex.bbox.x0,
                y: ex.bbox.y0,
                w: ex.bbox.width(),
                h: ex.bbox.height(),
                features: ex.feature_count,
            });
            if !found.is_empty() {
                exclude.extend(found.iter().map(|r| r.circle));
                redetected_circles.extend(found.iter().map(|r| r.circle));
                additions
                    .push((pattern_idx, found.into_iter().map(|r| (r.circle, r.keypoints)).collect()));
            }
        }
        if !additions.is_empty() {
            for (pattern_idx, found) in additions {
                for (circle, members) in found {
                    merged[pattern_idx].push_object(circle, members);
                }
            }
            detected = normalize(&merged)?;
            sm = score_all(&layout, &detected, cfg.jobs);
            selection = crate::compliance::select_matches(&sm);
        }
    }

    let rep = report(&layout, Some(&detected), &selection, Some(&sm));

    let mut detections = Vec::new();
    for (j, m) in merged.iter().enumerate() {
        let type_id = selection
            .iter()
            .find(|&&(_, pj)| pj == j)
            .map(|&(ti, _)| layout.sets[ti].type_id.clone());
        for c in &m.circles {
            let redet = redetected_circles.iter().any(|rc| {
                rc.cx == c.cx && rc.cy == c.cy && rc.r == c.r
            });
            detections.push(Detection {
                type_id: type_id.clone(),
                x: c.cx,
                y: c.cy,
                r: c.r,
                pattern: j,
                redetected: redet,
            });
        }
    }

    Ok(PipelineOutput::from_parts(rep, scene, detections, exemplars))
}

/// Convenience wrapper around [`run_check`] retaining the merged patterns,
/// for tests and tooling that inspect intermediate results.
pub fn run_check_with_patterns(
    planogram: &Planogram,
    scene: &FeatureScene,
    cfg: &PipelineConfig,
) -> Result<(PipelineOutput, Vec<MergedPattern>)> {
    let patterns = detect_all(planogram, scene, cfg);
    let merged = merge_patterns(&patterns);
    let out = run_check(planogram, scene, cfg)?;
    Ok((out, merged))
}
