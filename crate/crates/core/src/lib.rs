//! Template-free planogram compliance checking.
//!
//! The pipeline estimates a shelf's product layout from a feature scene by
//! detecting recurring patterns (groups of near-identical visual objects),
//! then matches the estimated layout against the planogram's expected layout
//! with spectral graph matching:
//!
//! 1. **planogram** – parse the planogram XML into a box hierarchy and the
//!    expected layout point sets.
//! 2. **partition** – project product boxes onto the scene and carve
//!    per-type search regions, capped at a maximum instance count.
//! 3. **pattern** – GRASP detection of recurring patterns per region.
//! 4. **merging** – merge per-region patterns of one type by circle overlap
//!    and normalize object centers into detected point sets.
//! 5. **spectral** – affinity matrix, principal eigenvector, greedy
//!    binarization, matching score.
//! 6. **compliance** – score all (type, pattern) pairs, select matches
//!    greedily, mark compliant / missing / unexpected products.
//! 7. **exemplar** – extract the most feature-rich instance per type and
//!    re-detect products the region partition missed.

pub mod compliance;
pub mod error;
pub mod exemplar;
pub mod geom;
pub mod merging;
pub mod partition;
pub mod pattern;
pub mod pipeline;
pub mod planogram;
pub mod scene;
pub mod spectral;

pub use compliance::{ComplianceReport, ScoreMatrix};
pub use error::{Error, Result};
pub use geom::{Circle, Point, Rect};
pub use merging::DetectedLayout;
pub use partition::{PartitionConfig, SearchRegion};
pub use pattern::{AssignmentMatrix, GraspConfig, RecurringPattern};
pub use pipeline::{PipelineConfig, PipelineOutput};
pub use planogram::{ExpectedLayout, Planogram};
pub use scene::{FeatureScene, GroundTruth, Keypoint, SynthSpec};
pub use spectral::{AffinityMatrix, MatchSolution};
