//! Spectral point-set matching between an expected layout and a detected one.
//!
//! Candidate assignments pair one expected point with one detected point. The
//! affinity between two assignments decays with the larger of their horizontal
//! and vertical displacement, weighted by the detected bounding-box aspect.
//! The principal eigenvector of the affinity matrix ranks assignments, and a
//! greedy pass binarizes it into a conflict-free one-to-one cluster.

use crate::error::{Error, Result};
use crate::geom::Point;

/// Entries below this magnitude are dropped from sparse affinity storage.
const SPARSE_DROP: f64 = 1e-12;
/// Dense storage is used up to this assignment count.
const DENSE_LIMIT: usize = 4096;
/// Power-iteration stop threshold on the relative residual.
const POWER_TOL: f64 = 1e-10;
const POWER_MAX_ITER: usize = 10_000;

enum Storage {
    Dense(Vec<f64>),
    Sparse { col_idx: Vec<Vec<u32>>, values: Vec<Vec<f64>> },
}

/// Pairwise-assignment affinity matrix for one `(P, R)` point-set pair.
pub struct AffinityMatrix {
    k: usize,
    n_detected: usize,
    storage: Storage,
    /// Horizontal displacement weight `(W / (H + W))^2`.
    pub delta_h: f64,
    /// Vertical displacement weight `(H / (H + W))^2`.
    pub delta_v: f64,
}

impl AffinityMatrix {
    /// Wrap an arbitrary symmetric nonnegative dense matrix (row major,
    /// `k * k` entries) so it can drive the eigensolver directly.
    pub fn from_dense(values: Vec<f64>, k: usize) -> Self {
        assert_eq!(values.len(), k * k);
        debug_assert!((0..k).all(|a| (a..k).all(|b| values[a * k + b] == values[b * k + a])));
        debug_assert!(values.iter().all(|v| *v >= 0.0));
        Self { k, n_detected: k.max(1), storage: Storage::Dense(values), delta_h: 0.25, delta_v: 0.25 }
    }

    /// The same matrix with every entry multiplied by `c > 0`. Scaling
    /// leaves the principal eigenvector direction and the greedy cluster
    /// unchanged and scales the match score linearly.
    pub fn scale(&self, c: f64) -> AffinityMatrix {
        assert!(c > 0.0);
        let storage = match &self.storage {
            Storage::Dense(v) => Storage::Dense(v.iter().map(|x| x * c).collect()),
            Storage::Sparse { col_idx, values } => Storage::Sparse {
                col_idx: col_idx.clone(),
                values: values.iter().map(|row| row.iter().map(|x| x * c).collect()).collect(),
            },
        };
        AffinityMatrix {
            k: self.k,
            n_detected: self.n_detected,
            storage,
            delta_h: self.delta_h,
            delta_v: self.delta_v,
        }
    }

    /// Number of candidate assignments (`|P| * |R|`).
    pub fn dim(&self) -> usize {
        self.k
    }

    /// Assignment index for the pair `(expected i, detected j)`.
    pub fn index_of(&self, i: usize, j: usize) -> usize {
        i * self.n_detected + j
    }

    /// Inverse of [`index_of`](Self::index_of).
    pub fn pair_of(&self, a: usize) -> (usize, usize) {
        (a / self.n_detected, a % self.n_detected)
    }

    pub fn get(&self, a: usize, b: usize) -> f64 {
        match &self.storage {
            Storage::Dense(v) => v[a * self.k + b],
            Storage::Sparse { col_idx, values } => {
                match col_idx[a].binary_search(&(b as u32)) {
                    Ok(pos) => values[a][pos],
                    Err(_) => 0.0,
                }
            }
        }
    }

    fn matvec(&self, x: &[f64], y: &mut [f64]) {
        match &self.storage {
            Storage::Dense(v) => {
                for (a, ya) in y.iter_mut().enumerate() {
                    let row = &v[a * self.k..(a + 1) * self.k];
                    *ya = row.iter().zip(x).map(|(u, xv)| u * xv).sum();
                }
            }
            Storage::Sparse { col_idx, values } => {
                for (a, ya) in y.iter_mut().enumerate() {
                    *ya = col_idx[a]
                        .iter()
                        .zip(&values[a])
                        .map(|(&b, &u)| u * x[b as usize])
                        .sum();
                }
            }
        }
    }
}

/// A binarized matching: accepted assignment cluster and its score.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchSolution {
    /// Accepted `(expected index, detected index)` pairs, in acceptance order.
    pub cluster: Vec<(usize, usize)>,
    /// Indicator vector over assignments, 1.0 where accepted.
    pub indicator: Vec<f64>,
    /// Total intra-cluster affinity, diagonal terms included.
    pub score: f64,
}

impl MatchSolution {
    pub fn empty(k: usize) -> Self {
        Self { cluster: Vec::new(), indicator: vec![0.0; k], score: 0.0 }
    }

    /// Detected indices that made it into the cluster.
    pub fn matched_detected(&self) -> Vec<usize> {
        self.cluster.iter().map(|&(_, j)| j).collect()
    }
}

/// Build the affinity matrix between expected points `P` and detected points
/// `R`, both in normalized coordinates. `h_box` and `w_box` are the pixel
/// dimensions of the detected bounding box and fix the displacement weights.
pub fn build_affinity(p: &[Point], r: &[Point], h_box: f64, w_box: f64) -> AffinityMatrix {
    assert!(!p.is_empty() && !r.is_empty(), "point sets must be non-empty");
    assert!(h_box > 0.0 && w_box > 0.0, "box dimensions must be positive");
    let m = p.len();
    let n = r.len();
    let k = m * n;
    let delta_h = (w_box / (h_box + w_box)).powi(2);
    let delta_v = (h_box / (h_box + w_box)).powi(2);

    // Per-assignment displacement components.
    let mut dh = Vec::with_capacity(k);
    let mut dv = Vec::with_capacity(k);
    for pi in p {
        for rj in r {
            dh.push((pi.x - rj.x).abs());
            dv.push((pi.y - rj.y).abs());
        }
    }

    let entry = |a: usize, b: usize| -> f64 {
        let ddh = dh[a].max(dh[b]);
        let ddv = dv[a].max(dv[b]);
        (-(ddh * ddh) / delta_h - (ddv * ddv) / delta_v).exp()
    };

    let storage = if k <= DENSE_LIMIT {
        let mut v = vec![0.0; k * k];
        for a in 0..k {
            for b in a..k {
                let u = entry(a, b);
                v[a * k + b] = u;
                v[b * k + a] = u;
            }
        }
        Storage::Dense(v)
    } else {
        let mut col_idx: Vec<Vec<u32>> = vec![Vec::new(); k];
        let mut values: Vec<Vec<f64>> = vec![Vec::new(); k];
        for a in 0..k {
            for b in 0..k {
                let u = entry(a, b);
                if u >= SPARSE_DROP {
                    col_idx[a].push(b as u32);
                    values[a].push(u);
                }
            }
        }
        Storage::Sparse { col_idx, values }
    };

    AffinityMatrix { k, n_detected: n, storage, delta_h, delta_v }
}

/// Principal eigenvector by power iteration from the canonical all-ones
/// start vector. The result is entrywise nonnegative and unit norm.
pub fn principal_eigenvector(u: &AffinityMatrix) -> Result<Vec<f64>> {
    let k = u.dim();
    let mut v = vec![1.0 / (k as f64).sqrt(); k];
    let mut y = vec![0.0; k];
    let mut residual = f64::INFINITY;
    for iter in 0..POWER_MAX_ITER {
        u.matvec(&v, &mut y);
        let lambda = dot(&v, &y);
        let y_norm = dot(&y, &y).sqrt();
        if y_norm == 0.0 {
            // zero matrix: the start vector is a valid eigenvector
            return Ok(v);
        }
        // residual computed componentwise; the algebraic shortcut
        // ||Uv||^2 - lambda^2 cancels catastrophically near convergence
        residual = y
            .iter()
            .zip(&v)
            .map(|(yi, vi)| (yi - lambda * vi) * (yi - lambda * vi))
            .sum::<f64>()
            .sqrt();
        let mut stationary = true;
        for (vi, yi) in v.iter_mut().zip(&y) {
            let next = yi / y_norm;
            if next != *vi {
                stationary = false;
            }
            *vi = next;
        }
        if lambda > 0.0 && residual <= POWER_TOL * lambda {
            return Ok(v);
        }
        if stationary {
            if lambda <= 0.0 || residual <= 1e-8 * lambda {
                return Ok(v);
            }
            return Err(Error::Numerical { residual: residual / lambda, iterations: iter + 1 });
        }
    }
    let lambda = {
        u.matvec(&v, &mut y);
        dot(&v, &y)
    };
    Err(Error::Numerical {
        residual: if lambda > 0.0 { residual / lambda } else { residual },
        iterations: POWER_MAX_ITER,
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Binarize an eigenvector greedily: repeatedly accept the assignment with
/// the largest remaining entry (ties to the lowest index), then zero every
/// assignment that reuses either of its points. The score is `x^T U x` over
/// the accepted set.
pub fn greedy_binarize(v: &[f64], u: &AffinityMatrix) -> MatchSolution {
    let k = u.dim();
    assert_eq!(v.len(), k);
    let mut remaining = v.to_vec();
    let mut solution = MatchSolution::empty(k);

    loop {
        let mut best = 0.0;
        let mut best_a = None;
        for (a, &val) in remaining.iter().enumerate() {
            if val > best {
                best = val;
                best_a = Some(a);
            }
        }
        let Some(a) = best_a else { break };
        let (pi, rj) = u.pair_of(a);
        solution.cluster.push((pi, rj));
        solution.indicator[a] = 1.0;
        for (b, val) in remaining.iter_mut().enumerate() {
            let (pb, rb) = u.pair_of(b);
            if pb == pi || rb == rj {
                *val = 0.0;
            }
        }
    }

    let accepted: Vec<usize> = solution
        .cluster
        .iter()
        .map(|&(i, j)| u.index_of(i, j))
        .collect();
    let mut score = 0.0;
    for &a in &accepted {
        for &b in &accepted {
            score += u.get(a, b);
        }
    }
    solution.score = score;
    solution
}

/// Full spectral match of one expected point set against one detected set.
pub fn match_sets(p: &[Point], r: &[Point], h_box: f64, w_box: f64) -> Result<MatchSolution> {
    let u = build_affinity(p, r, h_box, w_box);
    let v = principal_eigenvector(&u)?;
    Ok(greedy_binarize(&v, &u))
}
