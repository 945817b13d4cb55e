//! Feature scenes: keypoints with unit-norm descriptors, JSON persistence,
//! and a seeded synthetic shelf generator with ground truth.
//!
//! Scenes stand in for real images: downstream stages only ever consume
//! keypoint positions, scales and descriptors, never pixels.

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{object_circle, Point};
use crate::planogram::{Planogram, SlotId};

/// Keypoint scale range used by the generator, in pixels.
const SCALE_RANGE: (f64, f64) = (2.0, 6.0);
/// Feature disc radius as a fraction of the smaller slot side.
const TEMPLATE_DISC_FRAC: f64 = 0.4;
/// Default descriptor dimension for synthetic scenes.
pub const DEFAULT_DESCRIPTOR_DIM: usize = 16;

/// One detected feature: position, scale, orientation and a unit-norm
/// descriptor. Synthetic scenes optionally carry a `(type, instance)` label.
#[derive(Debug, Clone, PartialEq)]
pub struct Keypoint {
    pub pos: Point,
    pub scale: f64,
    pub orientation: f64,
    pub descriptor: Vec<f64>,
    pub gt_label: Option<(String, u32)>,
}

impl Keypoint {
    /// Euclidean distance between descriptors.
    pub fn desc_dist(&self, other: &Keypoint) -> f64 {
        debug_assert_eq!(self.descriptor.len(), other.descriptor.len());
        self.descriptor
            .iter()
            .zip(&other.descriptor)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

/// A full scene: image dimensions plus its keypoints.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureScene {
    pub width: u32,
    pub height: u32,
    pub descriptor_dim: usize,
    pub keypoints: Vec<Keypoint>,
}

// Wire records matching the scene JSON layout.
#[derive(Serialize, Deserialize)]
struct KeypointRecord {
    x: f64,
    y: f64,
    scale: f64,
    ori: f64,
    desc: Vec<f64>,
    gt: Option<(String, u32)>,
}

#[derive(Serialize, Deserialize)]
struct SceneRecord {
    width: u32,
    height: u32,
    descriptor_dim: usize,
    keypoints: Vec<KeypointRecord>,
}

impl FeatureScene {
    pub fn to_json(&self) -> Result<String> {
        let rec = SceneRecord {
            width: self.width,
            height: self.height,
            descriptor_dim: self.descriptor_dim,
            keypoints: self
                .keypoints
                .iter()
                .map(|k| KeypointRecord {
                    x: k.pos.x,
                    y: k.pos.y,
                    scale: k.scale,
                    ori: k.orientation,
                    desc: k.descriptor.clone(),
                    gt: k.gt_label.clone(),
                })
                .collect(),
        };
        Ok(serde_json::to_string(&rec)?)
    }

    pub fn from_json(text: &str) -> Result<FeatureScene> {
        let rec: SceneRecord = serde_json::from_str(text)?;
        let scene = FeatureScene {
            width: rec.width,
            height: rec.height,
            descriptor_dim: rec.descriptor_dim,
            keypoints: rec
                .keypoints
                .into_iter()
                .map(|k| Keypoint {
                    pos: Point::new(k.x, k.y),
                    scale: k.scale,
                    orientation: k.ori,
                    descriptor: k.desc,
                    gt_label: k.gt,
                })
                .collect(),
        };
        scene.validate()?;
        Ok(scene)
    }

    fn validate(&self) -> Result<()> {
        for (i, k) in self.keypoints.iter().enumerate() {
            if k.descriptor.len() != self.descriptor_dim {
                return Err(Error::Format(format!(
                    "keypoint {i}: descriptor has {} elements, header declares {}",
                    k.descriptor.len(),
                    self.descriptor_dim
                )));
            }
            let norm = k.descriptor.iter().map(|v| v * v).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > 1e-6 {
                return Err(Error::Format(format!(
                    "keypoint {i}: descriptor norm {norm} is not unit"
                )));
            }
            if !k.scale.is_finite() || k.scale <= 0.0 {
                return Err(Error::Format(format!("keypoint {i}: non-positive scale")));
            }
            let (x, y) = (k.pos.x, k.pos.y);
            if !(x >= 0.0 && x <= self.width as f64 && y >= 0.0 && y <= self.height as f64) {
                return Err(Error::Format(format!(
                    "keypoint {i}: position ({x}, {y}) outside {}x{} scene",
                    self.width, self.height
                )));
            }
        }
        Ok(())
    }
}

pub fn save_scene(scene: &FeatureScene, path: &Path) -> Result<()> {
    std::fs::write(path, scene.to_json()?)?;
    Ok(())
}

pub fn load_scene(path: &Path) -> Result<FeatureScene> {
    let text = std::fs::read_to_string(path)?;
    FeatureScene::from_json(&text)
}

/// Parameters for the synthetic shelf generator.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthSpec {
    /// Instances to place per type; defaults to every slot of every type.
    #[serde(default)]
    pub instances_per_type: Option<BTreeMap<String, usize>>,
    /// Nominal slot pitch in pixels; fixes the scene dimensions.
    #[serde(default = "default_grid_spacing")]
    pub grid_spacing: f64,
    /// Features per product instance, 3..=12.
    #[serde(default = "default_features")]
    pub features_per_instance: usize,
    /// Std-dev of per-component descriptor perturbation (renormalized after).
    #[serde(default)]
    pub descriptor_noise: f64,
    /// Std-dev of per-feature position jitter, in pixels.
    #[serde(default)]
    pub position_jitter: f64,
    /// Slots deliberately left empty: `(type_id, slot index within type)`.
    #[serde(default)]
    pub missing: Vec<(String, usize)>,
    /// Number of uniformly scattered clutter keypoints.
    #[serde(default)]
    pub clutter: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_descriptor_dim")]
    pub descriptor_dim: usize,
}

fn default_grid_spacing() -> f64 {
    120.0
}
fn default_features() -> usize {
    6
}
fn default_descriptor_dim() -> usize {
    DEFAULT_DESCRIPTOR_DIM
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            instances_per_type: None,
            grid_spacing: default_grid_spacing(),
            features_per_instance: default_features(),
            descriptor_noise: 0.0,
            position_jitter: 0.0,
            missing: Vec::new(),
            clutter: 0,
            seed: 0,
            descriptor_dim: default_descriptor_dim(),
        }
    }
}

/// One generated product instance.
#[derive(Debug, Clone, PartialEq)]
pub struct GtInstance {
    pub type_id: String,
    /// Slot index within the type's row-major slot list.
    pub slot: usize,
    pub slot_id: SlotId,
    pub center: Point,
    pub radius: f64,
    /// Indices into `FeatureScene::keypoints`.
    pub keypoints: Vec<usize>,
}

/// Everything the generator knows about what it placed.
#[derive(Debug, Clone, Default)]
pub struct GroundTruth {
    pub instances: Vec<GtInstance>,
    /// Indices of clutter keypoints.
    pub clutter: Vec<usize>,
}

impl GroundTruth {
    pub fn instances_of(&self, type_id: &str) -> Vec<&GtInstance> {
        self.instances.iter().filter(|i| i.type_id == type_id).collect()
    }
}

fn unit_sphere_sample(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-9 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

fn renormalize(mut v: Vec<f64>) -> Vec<f64> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 1e-12 {
        for x in &mut v {
            *x /= norm;
        }
    }
    v
}

struct TypeTemplate {
    offsets: Vec<Point>,
    descriptors: Vec<Vec<f64>>,
    scales: Vec<f64>,
    orientations: Vec<f64>,
}

fn validate_spec(planogram: &Planogram, spec: &SynthSpec) -> Result<()> {
    if !(spec.descriptor_noise.is_finite() && spec.descriptor_noise >= 0.0) {
        return Err(Error::Spec("descriptor_noise must be finite and >= 0".into()));
    }
    if !(spec.position_jitter.is_finite() && spec.position_jitter >= 0.0) {
        return Err(Error::Spec("position_jitter must be finite and >= 0".into()));
    }
    if !(spec.grid_spacing.is_finite() && spec.grid_spacing > 0.0) {
        return Err(Error::Spec("grid_spacing must be finite and > 0".into()));
    }
    if !(3..=12).contains(&spec.features_per_instance) {
        return Err(Error::Spec("features_per_instance must be in 3..=12".into()));
    }
    if spec.descriptor_dim < 2 {
        return Err(Error::Spec("descriptor_dim must be at least 2".into()));
    }
    if let Some(counts) = &spec.instances_per_type {
        for (t, n) in counts {
            let slots = planogram.boxes_of(t).len();
            if slots == 0 {
                return Err(Error::Spec(format!("unknown type {t:?} in instances_per_type")));
            }
            if *n > slots {
                return Err(Error::Spec(format!(
                    "type {t:?}: requested {n} instances but planogram has {slots} slots"
                )));
            }
        }
    }
    for (t, idx) in &spec.missing {
        let slots = planogram.boxes_of(t).len();
        if slots == 0 {
            return Err(Error::Spec(format!("unknown type {t:?} in missing set")));
        }
        if *idx >= slots {
            return Err(Error::Spec(format!(
                "missing slot index {idx} out of range for type {t:?} ({slots} slots)"
            )));
        }
    }
    Ok(())
}

/// Generate a synthetic shelf scene from a planogram.
///
/// Every non-missing slot receives one rigid copy of its type's feature
/// template, translated to the slot center, with optional Gaussian position
/// jitter and descriptor perturbation. Clutter keypoints are scattered
/// uniformly with independent random descriptors. Deterministic in the spec,
/// including its seed.
pub fn synthesize(planogram: &Planogram, spec: &SynthSpec) -> Result<(FeatureScene, GroundTruth)> {
    validate_spec(planogram, spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let max_row = planogram.rows.iter().map(|r| r.products.len()).max().unwrap_or(1);
    let width = (spec.grid_spacing * max_row as f64).ceil() as u32;
    let height = (spec.grid_spacing * planogram.rows.len() as f64).ceil() as u32;
    let (wf, hf) = (width as f64, height as f64);

    // Per-type base templates, sampled once in declared type order.
    let mut templates: BTreeMap<&str, TypeTemplate> = BTreeMap::new();
    for type_id in &planogram.product_types {
        let first_box = planogram.boxes_of(type_id)[0].1;
        let slot_w = first_box.width() * wf;
        let slot_h = first_box.height() * hf;
        let disc_r = TEMPLATE_DISC_FRAC * slot_w.min(slot_h);
        let f = spec.features_per_instance;
        let mut offsets = Vec::with_capacity(f);
        let mut descriptors = Vec::with_capacity(f);
        let mut scales = Vec::with_capacity(f);
        let mut orientations = Vec::with_capacity(f);
        for _ in 0..f {
            let angle = rng.gen_range(0.0..std::f64::consts::TAU);
            let radius = disc_r * rng.gen_range(0.0f64..1.0).sqrt();
            offsets.push(Point::new(radius * angle.cos(), radius * angle.sin()));
            descriptors.push(unit_sphere_sample(&mut rng, spec.descriptor_dim));
            scales.push(rng.gen_range(SCALE_RANGE.0..SCALE_RANGE.1));
            orientations.push(rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI));
        }
        templates.insert(type_id, TypeTemplate { offsets, descriptors, scales, orientations });
    }

    let jitter = if spec.position_jitter > 0.0 {
        Some(Normal::new(0.0, spec.position_jitter).expect("validated"))
    } else {
        None
    };
    let desc_noise = if spec.descriptor_noise > 0.0 {
        Some(Normal::new(0.0, spec.descriptor_noise).expect("validated"))
    } else {
        None
    };

    let mut keypoints: Vec<Keypoint> = Vec::new();
    let mut truth = GroundTruth::default();

    for type_id in &planogram.product_types {
        let boxes = planogram.boxes_of(type_id);
        let n = spec
            .instances_per_type
            .as_ref()
            .and_then(|m| m.get(type_id).copied())
            .unwrap_or(boxes.len());
        let template = &templates[type_id.as_str()];
        for (slot, (slot_id, rect)) in boxes.iter().enumerate().take(n) {
            if spec.missing.iter().any(|(t, i)| t == type_id && *i == slot) {
                continue;
            }
            let center = Point::new(rect.center().x * wf, rect.center().y * hf);
            let mut member_ids = Vec::with_capacity(template.offsets.len());
            let mut member_pts = Vec::with_capacity(template.offsets.len());
            for (k, off) in template.offsets.iter().enumerate() {
                let mut pos = Point::new(center.x + off.x, center.y + off.y);
                if let Some(j) = &jitter {
                    pos.x += j.sample(&mut rng);
                    pos.y += j.sample(&mut rng);
                }
                pos.x = pos.x.clamp(0.0, wf);
                pos.y = pos.y.clamp(0.0, hf);
                let descriptor = match &desc_noise {
                    Some(nd) => renormalize(
                        template.descriptors[k]
                            .iter()
                            .map(|v| v + nd.sample(&mut rng))
                            .collect(),
                    ),
                    None => template.descriptors[k].clone(),
                };
                member_ids.push(keypoints.len());
                member_pts.push(pos);
                keypoints.push(Keypoint {
                    pos,
                    scale: template.scales[k],
                    orientation: template.orientations[k],
                    descriptor,
                    gt_label: Some((type_id.clone(), slot as u32)),
                });
            }
            let circle = object_circle(&member_pts);
            truth.instances.push(GtInstance {
                type_id: type_id.clone(),
                slot,
                slot_id: *slot_id,
                center: circle.center(),
                radius: circle.r,
                keypoints: member_ids,
            });
        }
    }

    for _ in 0..spec.clutter {
        let pos = Point::new(rng.gen_range(0.0..=wf), rng.gen_range(0.0..=hf));
        truth.clutter.push(keypoints.len());
        keypoints.push(Keypoint {
            pos,
            scale: rng.gen_range(SCALE_RANGE.0..SCALE_RANGE.1),
            orientation: rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI),
            descriptor: unit_sphere_sample(&mut rng, spec.descriptor_dim),
            gt_label: None,
        });
    }

    let scene = FeatureScene { width, height, descriptor_dim: spec.descriptor_dim, keypoints };
    debug_assert!(scene.validate().is_ok());
    Ok((scene, truth))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::planogram::planogram_from_rows;

    fn one_type_planogram(n: usize) -> Planogram {
        planogram_from_rows(&[vec!["A".into(); n]]).unwrap()
    }

    #[test]
    fn noiseless_generator_contract() {
        let p = one_type_planogram(3);
        let spec = SynthSpec { features_per_instance: 4, ..SynthSpec::default() };
        let (scene, truth) = synthesize(&p, &spec).unwrap();
        assert_eq!(scene.keypoints.len(), 12);
        assert_eq!(truth.instances.len(), 3);

        // descriptor sets identical across instances, layouts exact translates
        let a = &truth.instances[0];
        let b = &truth.instances[1];
        for k in 0..4 {
            let ka = &scene.keypoints[a.keypoints[k]];
            let kb = &scene.keypoints[b.keypoints[k]];
            assert_eq!(ka.descriptor, kb.descriptor);
            let dx = kb.pos.x - ka.pos.x;
            let dy = kb.pos.y - ka.pos.y;
            let dx0 = scene.keypoints[b.keypoints[0]].pos.x - scene.keypoints[a.keypoints[0]].pos.x;
            let dy0 = scene.keypoints[b.keypoints[0]].pos.y - scene.keypoints[a.keypoints[0]].pos.y;
            assert!((dx - dx0).abs() < 1e-9 && (dy - dy0).abs() < 1e-9);
        }
    }

    #[test]
    fn seeded_generation_is_byte_identical() {
        let p = planogram_from_rows(&[vec!["A".into(), "B".into()], vec!["B".into(), "A".into()]])
            .unwrap();
        let spec = SynthSpec {
            descriptor_noise: 0.05,
            position_jitter: 2.0,
            clutter: 10,
            seed: 7,
            ..SynthSpec::default()
        };
        let (s1, _) = synthesize(&p, &spec).unwrap();
        let (s2, _) = synthesize(&p, &spec).unwrap();
        assert_eq!(s1.to_json().unwrap().into_bytes(), s2.to_json().unwrap().into_bytes());
    }

    #[test]
    fn missing_slot_reduces_ground_truth() {
        let p = one_type_planogram(4);
        let spec = SynthSpec { missing: vec![("A".into(), 1)], ..SynthSpec::default() };
        let (_, truth) = synthesize(&p, &spec).unwrap();
        assert_eq!(truth.instances_of("A").len(), 3);
        assert!(truth.instances.iter().all(|i| i.slot != 1));
    }

    #[test]
    fn missing_out_of_range_is_spec_error() {
        let p = one_type_planogram(2);
        let spec = SynthSpec { missing: vec![("A".into(), 5)], ..SynthSpec::default() };
        assert!(matches!(synthesize(&p, &spec), Err(Error::Spec(_))));
    }

    #[test]
    fn roundtrip_empty_and_full_scene() {
        let empty = FeatureScene { width: 10, height: 10, descriptor_dim: 8, keypoints: vec![] };
        let back = FeatureScene::from_json(&empty.to_json().unwrap()).unwrap();
        assert_eq!(back.keypoints.len(), 0);
        assert_eq!(back.descriptor_dim, 8);

        let p = one_type_planogram(5);
        let spec = SynthSpec {
            descriptor_noise: 0.02,
            position_jitter: 1.0,
            clutter: 80,
            seed: 3,
            features_per_instance: 4,
            ..SynthSpec::default()
        };
        let (scene, _) = synthesize(&p, &spec).unwrap();
        assert_eq!(scene.keypoints.len(), 100);
        let back = FeatureScene::from_json(&scene.to_json().unwrap()).unwrap();
        assert_eq!(scene, back);
    }

    #[test]
    fn short_descriptor_is_format_error() {
        let text = r#"{"width":10,"height":10,"descriptor_dim":8,
            "keypoints":[{"x":1.0,"y":1.0,"scale":2.0,"ori":0.0,
            "desc":[1.0,0.0,0.0,0.0,0.0,0.0,0.0],"gt":null}]}"#;
        assert!(matches!(FeatureScene::from_json(text), Err(Error::Format(_))));
    }

    #[test]
    fn descriptors_unit_norm_after_perturbation() {
        let p = one_type_planogram(3);
        let spec = SynthSpec { descriptor_noise: 0.3, seed: 11, ..SynthSpec::default() };
        let (scene, _) = synthesize(&p, &spec).unwrap();
        for k in &scene.keypoints {
            let norm = k.descriptor.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn inter_type_separation_over_seeds() {
        // noiseless inter-type descriptor distance > 0.5 in >= 99 of 100 seeds
        let p = planogram_from_rows(&[vec!["A".into(), "B".into()]]).unwrap();
        let mut failures = 0;
        for seed in 0..100 {
            let spec = SynthSpec { seed, features_per_instance: 3, ..SynthSpec::default() };
            let (scene, truth) = synthesize(&p, &spec).unwrap();
            let a = truth.instances_of("A")[0].keypoints.clone();
            let b = truth.instances_of("B")[0].keypoints.clone();
            let min = a
                .iter()
                .flat_map(|&i| {
                    b.iter().map(move |&j| (i, j))
                })
                .map(|(i, j)| scene.keypoints[i].desc_dist(&scene.keypoints[j]))
                .fold(f64::INFINITY, f64::min);
            if min <= 0.5 {
                failures += 1;
            }
        }
        assert!(failures <= 1, "{failures} of 100 seeds below separation bound");
    }
}
