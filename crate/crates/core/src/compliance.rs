//! Compliance checking: score every (expected type, detected pattern) pair
//! by spectral matching, pick the optimal pairing greedily, and mark each
//! planogram slot compliant or missing and each stray detection unexpected.

use serde::{Deserialize, Serialize};

use crate::geom::Point;
use crate::merging::DetectedLayout;
use crate::planogram::ExpectedLayout;
use crate::spectral::{match_sets, MatchSolution};

/// Matching scores and solutions over all (type, pattern) pairs.
#[derive(Debug, Clone)]
pub struct ScoreMatrix {
    /// `scores[i][j]` for expected type `i` against detected pattern `j`.
    pub scores: Vec<Vec<f64>>,
    pub solutions: Vec<Vec<Option<MatchSolution>>>,
    /// Per-cell diagnostics for cells that failed numerically.
    pub diagnostics: Vec<Vec<Option<String>>>,
}

impl ScoreMatrix {
    pub fn n_types(&self) -> usize {
        self.scores.len()
    }
    pub fn n_patterns(&self) -> usize {
        self.scores.first().map_or(0, |r| r.len())
    }
}

/// Score all M x N (type, pattern) pairs. Cells are independent; `jobs`
/// bounds the worker threads. A numerically failed cell scores zero and
/// keeps its diagnostic.
pub fn score_all(expected: &ExpectedLayout, detected: &DetectedLayout, jobs: usize) -> ScoreMatrix {
    let m = expected.sets.len();
    let n = detected.point_sets.len();
    let cells: Vec<(usize, usize)> =
        (0..m).flat_map(|i| (0..n).map(move |j| (i, j))).collect();

    let results = run_indexed(jobs, &cells, |&(i, j)| {
        match match_sets(
            &expected.sets[i].points,
            &detected.point_sets[j],
            detected.height_box,
            detected.width_box,
        ) {
            Ok(sol) => (sol.score, Some(sol), None),
            Err(e) => (0.0, None, Some(e.to_string())),
        }
    });

    let mut scores = vec![vec![0.0; n]; m];
    let mut solutions: Vec<Vec<Option<MatchSolution>>> = vec![vec![None; n]; m];
    let mut diagnostics: Vec<Vec<Option<String>>> = vec![vec![None; n]; m];
    for (&(i, j), (score, sol, diag)) in cells.iter().zip(results) {
        scores[i][j] = score;
        solutions[i][j] = sol;
        diagnostics[i][j] = diag;
    }
    ScoreMatrix { scores, solutions, diagnostics }
}

/// Run `f` over `items` on up to `jobs` threads, returning results in input
/// order regardless of scheduling.
pub(crate) fn run_indexed<T: Sync, R: Send>(
    jobs: usize,
    items: &[T],
    f: impl Fn(&T) -> R + Sync,
) -> Vec<R> {
    let jobs = jobs.max(1).min(items.len().max(1));
    if jobs == 1 || items.len() < 2 {
        return items.iter().map(&f).collect();
    }
    let mut slots: Vec<Option<R>> = (0..items.len()).map(|_| None).collect();
    let next = std::sync::atomic::AtomicUsize::new(0);
    let slots_ptr = std::sync::Mutex::new(&mut slots);
    std::thread::scope(|scope| {
        for _ in 0..jobs {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                let mut guard = slots_ptr.lock().unwrap();
                guard[i] = Some(r);
            });
        }
    });
    slots.into_iter().map(|s| s.expect("worker filled slot")).collect()
}

/// Greedy selection on the score matrix: repeatedly accept the maximum
/// remaining cell (ties to the lowest `(type, pattern)` index), then strike
/// its row and column. Returns accepted `(type, pattern)` pairs in
/// acceptance order.
#[allow(clippy::needless_range_loop)]
pub fn select_matches(sm: &ScoreMatrix) -> Vec<(usize, usize)> {
    let m = sm.n_types();
    let n = sm.n_patterns();
    let mut row_done = vec![false; m];
    let mut col_done = vec![false; n];
    let mut out = Vec::new();
    for _ in 0..m.min(n) {
        let mut best: Option<(f64, usize, usize)> = None;
        for i in 0..m {
            if row_done[i] {
                continue;
            }
            for j in 0..n {
                if col_done[j] {
                    continue;
                }
                let s = sm.scores[i][j];
                if best.is_none_or(|(bs, _, _)| s > bs) {
                    best = Some((s, i, j));
                }
            }
        }
        let Some((_, i, j)) = best else { break };
        row_done[i] = true;
        col_done[j] = true;
        out.push((i, j));
    }
    out
}

/// One marked planogram slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotMark {
    /// Index within the type's row-major slot list.
    pub slot: usize,
    pub row: usize,
    pub col: usize,
    /// Expected center in normalized shelf coordinates.
    pub x: f64,
    pub y: f64,
}

/// Compliance summary for one product type.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TypeReport {
    #[serde(rename = "type")]
    pub type_id: String,
    pub expected: usize,
    pub matched: usize,
    pub accuracy: f64,
    pub matched_pattern: Option<usize>,
    pub compliant_slots: Vec<SlotMark>,
    pub missing_slots: Vec<SlotMark>,
    /// Detected points attributed to this type but unmatched, normalized.
    pub unexpected: Vec<Point>,
}

/// Full compliance report.
#[derive(Debug, Clone, Serialize)]
pub struct ComplianceReport {
    pub overall_accuracy: f64,
    pub types: Vec<TypeReport>,
}

impl ComplianceReport {
    pub fn compliant(&self) -> bool {
        self.overall_accuracy == 1.0
    }
}

fn slot_mark(expected: &ExpectedLayout, type_idx: usize, point_idx: usize) -> SlotMark {
    let set = &expected.sets[type_idx];
    let sid = set.slots[point_idx];
    let p = set.points[point_idx];
    SlotMark { slot: point_idx, row: sid.row, col: sid.col, x: p.x, y: p.y }
}

/// Build the compliance report from a selection over the score matrix.
///
/// Per selected `(type, pattern)`: expected points inside the accepted
/// cluster are compliant, the rest are missing; detected points of the
/// pattern outside the cluster are unexpected. Unselected types are fully
/// missing. Per-type accuracy is `max(0, 1 - |matched - expected| /
/// expected)`; the overall accuracy is the mean over types.
pub fn report(
    expected: &ExpectedLayout,
    detected: Option<&DetectedLayout>,
    selection: &[(usize, usize)],
    sm: Option<&ScoreMatrix>,
) -> ComplianceReport {
    let mut types = Vec::with_capacity(expected.sets.len());
    for (i, set) in expected.sets.iter().enumerate() {
        let n_expected = set.points.len();
        let selected = selection.iter().find(|&&(ti, _)| ti == i).map(|&(_, j)| j);
        let solution = selected.and_then(|j| {
            sm.and_then(|sm| sm.solutions[i][j].as_ref())
        });

        let (matched, compliant_slots, missing_slots, unexpected) = match (selected, solution) {
            (Some(j), Some(sol)) => {
                let matched_expected: Vec<usize> = sol.cluster.iter().map(|&(pi, _)| pi).collect();
                let matched_detected: Vec<usize> = sol.cluster.iter().map(|&(_, rj)| rj).collect();
                let compliant: Vec<SlotMark> = (0..n_expected)
                    .filter(|pi| matched_expected.contains(pi))
                    .map(|pi| slot_mark(expected, i, pi))
                    .collect();
                let missing: Vec<SlotMark> = (0..n_expected)
                    .filter(|pi| !matched_expected.contains(pi))
                    .map(|pi| slot_mark(expected, i, pi))
                    .collect();
                let unexpected: Vec<Point> = detected
                    .map(|d| {
                        d.point_sets[j]
                            .iter()
                            .enumerate()
                            .filter(|(rj, _)| !matched_detected.contains(rj))
                            .map(|(_, p)| *p)
                            .collect()
                    })
                    .unwrap_or_default();
                (sol.cluster.len(), compliant, missing, unexpected)
            }
            _ => {
                let missing: Vec<SlotMark> =
                    (0..n_expected).map(|pi| slot_mark(expected, i, pi)).collect();
                (0, Vec::new(), missing, Vec::new())
            }
        };

        let accuracy = (1.0
            - (matched as f64 - n_expected as f64).abs() / n_expected as f64)
            .max(0.0);
        types.push(TypeReport {
            type_id: set.type_id.clone(),
            expected: n_expected,
            matched,
            accuracy,
            matched_pattern: selected,
            compliant_slots,
            missing_slots,
            unexpected,
        });
    }
    let overall_accuracy = if types.is_empty() {
        0.0
    } else {
        types.iter().map(|t| t.accuracy).sum::<f64>() / types.len() as f64
    };
    ComplianceReport { overall_accuracy, types }
}

/// Short-circuit report when nothing was detected: every type fully missing.
pub fn report_all_missing(expected: &ExpectedLayout) -> ComplianceReport {
    report(expected, None, &[], None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Rect;
    use crate::merging::DetectedLayout;
    use crate::planogram::{expected_layout, planogram_from_rows};

    fn layout_of(rows: &[Vec<String>]) -> ExpectedLayout {
        expected_layout(&planogram_from_rows(rows).unwrap())
    }

    fn detected_from_sets(sets: Vec<Vec<Point>>) -> DetectedLayout {
        let provenance = sets
            .iter()
            .enumerate()
            .map(|(j, s)| (0..s.len()).map(|c| (j, c)).collect())
            .collect();
        DetectedLayout {
            point_sets: sets,
            bbox: Rect::new(0.0, 0.0, 100.0, 100.0),
            width_box: 100.0,
            height_box: 100.0,
            provenance,
        }
    }

    fn matrix_of(scores: Vec<Vec<f64>>) -> ScoreMatrix {
        let m = scores.len();
        let n = scores[0].len();
        ScoreMatrix {
            scores,
            solutions: vec![vec![None; n]; m],
            diagnostics: vec![vec![None; n]; m],
        }
    }

    #[test]
    fn greedy_selection_diagonal_dominant() {
        let sm = matrix_of(vec![vec![5.0, 1.0], vec![1.0, 4.0]]);
        assert_eq!(select_matches(&sm), vec![(0, 0), (1, 1)]);
    }

    #[test]
    fn greedy_selection_conflict() {
        let sm = matrix_of(vec![vec![5.0, 6.0], vec![7.0, 1.0]]);
        assert_eq!(select_matches(&sm), vec![(1, 0), (0, 1)]);
    }

    #[test]
    fn greedy_selection_singleton() {
        let sm = matrix_of(vec![vec![2.5]]);
        assert_eq!(select_matches(&sm), vec![(0, 0)]);
    }

    #[test]
    fn identity_detection_scores_m_squared() {
        let expected = layout_of(&[vec!["A".into(); 4]]);
        let detected = detected_from_sets(vec![expected.sets[0].points.clone()]);
        let sm = score_all(&expected, &detected, 1);
        assert_eq!(sm.n_types(), 1);
        assert_eq!(sm.n_patterns(), 1);
        assert!((sm.scores[0][0] - 16.0).abs() < 1e-9);
        let selection = select_matches(&sm);
        let rep = report(&expected, Some(&detected), &selection, Some(&sm));
        assert_eq!(rep.types[0].matched, 4);
        assert_eq!(rep.types[0].accuracy, 1.0);
        assert_eq!(rep.overall_accuracy, 1.0);
        assert!(rep.compliant());
    }

    #[test]
    fn three_of_four_gives_three_quarters() {
        let expected = layout_of(&[vec!["A".into(); 4]]);
        // drop the last expected point from the detection
        let pts: Vec<Point> = expected.sets[0].points[..3].to_vec();
        let detected = detected_from_sets(vec![pts]);
        let sm = score_all(&expected, &detected, 1);
        let selection = select_matches(&sm);
        let rep = report(&expected, Some(&detected), &selection, Some(&sm));
        assert_eq!(rep.types[0].matched, 3);
        assert!((rep.types[0].accuracy - 0.75).abs() < 1e-12);
        assert_eq!(rep.types[0].missing_slots.len(), 1);
        assert_eq!(rep.types[0].compliant_slots.len(), 3);
    }

    #[test]
    fn no_detection_reports_all_missing() {
        let expected = layout_of(&[vec!["A".into(), "B".into()]]);
        let rep = report_all_missing(&expected);
        assert_eq!(rep.overall_accuracy, 0.0);
        for t in &rep.types {
            assert_eq!(t.matched, 0);
            assert_eq!(t.missing_slots.len(), t.expected);
        }
    }

    #[test]
    fn conservation_laws() {
        let expected = layout_of(&[vec!["A".into(); 5], vec!["B".into(); 3]]);
        // detection: A complete, B with one extra stray point
        let mut b_pts = expected.sets[1].points.clone();
        b_pts.push(Point::new(0.95, 0.95));
        let detected =
            detected_from_sets(vec![expected.sets[0].points.clone(), b_pts.clone()]);
        let sm = score_all(&expected, &detected, 2);
        let selection = select_matches(&sm);
        let rep = report(&expected, Some(&detected), &selection, Some(&sm));
        for t in &rep.types {
            assert_eq!(t.compliant_slots.len() + t.missing_slots.len(), t.expected);
            if let Some(j) = t.matched_pattern {
                assert_eq!(
                    t.compliant_slots.len() + t.unexpected.len(),
                    detected.point_sets[j].len()
                );
            }
        }
    }

    #[test]
    fn pattern_order_permutation_only_relabels() {
        let expected = layout_of(&[vec!["A".into(); 4], vec!["B".into(); 4]]);
        let sets = vec![expected.sets[0].points.clone(), expected.sets[1].points.clone()];
        let rep1 = {
            let d = detected_from_sets(sets.clone());
            let sm = score_all(&expected, &d, 1);
            let sel = select_matches(&sm);
            report(&expected, Some(&d), &sel, Some(&sm))
        };
        let rep2 = {
            let d = detected_from_sets(vec![sets[1].clone(), sets[0].clone()]);
            let sm = score_all(&expected, &d, 1);
            let sel = select_matches(&sm);
            report(&expected, Some(&d), &sel, Some(&sm))
        };
        assert_eq!(rep1.overall_accuracy, rep2.overall_accuracy);
        for (a, b) in rep1.types.iter().zip(&rep2.types) {
            assert_eq!(a.type_id, b.type_id);
            assert_eq!(a.matched, b.matched);
            assert_eq!(a.accuracy, b.accuracy);
            assert_ne!(a.matched_pattern, b.matched_pattern);
        }
    }
}
