//! Input-size levels and the importance-weighted cost features.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::universe::{CostAttributes, ToolUniverse};

/// Ratio `I(k) / I(k-1)` below which adding the k-th cluster counts as
/// capturing real structure.
pub const ELBOW_RATIO: f64 = 0.15;
const MAX_ITERS: usize = 100;
const TOL: f64 = 1e-9;
const RESTARTS: usize = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ContextError {
    #[error("need at least {needed} sizes, got {got}")]
    TooFewSizes { needed: usize, got: usize },
    #[error("k must be at least 1")]
    ZeroK,
    #[error("only {distinct} distinct sizes, cannot form {k} levels")]
    TooFewDistinct { distinct: usize, k: usize },
    #[error("size {0} is not finite")]
    NonFinite(f64),
    #[error("level {level} outside 1..={k}")]
    LevelOutOfRange { level: usize, k: usize },
    #[error("no cost attributes for tool `{0}`")]
    MissingAttributes(String),
    #[error("tool `{tool}` has {found} cost attributes, expected {expected}")]
    AttributeLength { tool: String, expected: usize, found: usize },
}

/// Size buckets found by 1-D k-means.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SizeLevels {
    pub k: usize,
    /// Strictly increasing.
    pub centroids: Vec<f64>,
}

impl SizeLevels {
    /// 1-based level of the nearest centroid; ties go to the lower level.
    pub fn level_of(&self, size: f64) -> usize {
        let mut best = 0;
        for (i, c) in self.centroids.iter().enumerate() {
            if (size - c).abs() < (size - self.centroids[best]).abs() {
                best = i;
            }
        }
        best + 1
    }
}

/// Sorted centroids and within-cluster sum of squares.
#[derive(Clone, Debug, PartialEq)]
pub struct KMeansFit {
    pub centroids: Vec<f64>,
    pub inertia: f64,
}

fn nearest(centroids: &[f64], x: f64) -> usize {
    let mut best = 0;
    for (i, c) in centroids.iter().enumerate() {
        if (x - c).abs() < (x - centroids[best]).abs() {
            best = i;
        }
    }
    best
}

fn inertia(xs: &[f64], centroids: &[f64]) -> f64 {
    xs.iter().map(|&x| (x - centroids[nearest(centroids, x)]).powi(2)).sum()
}

fn plus_plus_init<R: Rng + ?Sized>(xs: &[f64], k: usize, rng: &mut R) -> Vec<f64> {
    let mut cs = vec![xs[rng.random_range(0..xs.len())]];
    while cs.len() < k {
        let d2: Vec<f64> = xs.iter().map(|&x| cs.iter().map(|c| (x - c).powi(2)).fold(f64::INFINITY, f64::min)).collect();
        let total: f64 = d2.iter().sum();
        if total <= 0.0 {
            break;
        }
        let mut r = rng.random::<f64>() * total;
        let mut pick = xs.len() - 1;
        for (i, d) in d2.iter().enumerate() {
            if r < *d {
                pick = i;
                break;
            }
            r -= d;
        }
        cs.push(xs[pick]);
    }
    cs
}

fn lloyd(xs: &[f64], mut cs: Vec<f64>) -> Vec<f64> {
    for _ in 0..MAX_ITERS {
        let mut sum = vec![0.0; cs.len()];
        let mut cnt = vec![0usize; cs.len()];
        for &x in xs {
            let j = nearest(&cs, x);
            sum[j] += x;
            cnt[j] += 1;
        }
        let mut shift = 0.0f64;
        for j in 0..cs.len() {
            if cnt[j] > 0 {
                let c = sum[j] / cnt[j] as f64;
                shift = shift.max((c - cs[j]).abs());
                cs[j] = c;
            }
        }
        if shift <= TOL {
            break;
        }
    }
    cs
}

/// 1-D k-means with k-means++ seeding, best of several restarts.
pub fn kmeans<R: Rng + ?Sized>(xs: &[f64], k: usize, rng: &mut R) -> Result<KMeansFit, ContextError> {
    if k == 0 {
        return Err(ContextError::ZeroK);
    }
    if let Some(&bad) = xs.iter().find(|x| !x.is_finite()) {
        return Err(ContextError::NonFinite(bad));
    }
    let distinct = count_distinct(xs);
    if distinct < k {
        return Err(ContextError::TooFewDistinct { distinct, k });
    }
    let mut best: Option<KMeansFit> = None;
    for _ in 0..RESTARTS {
        let mut cs = lloyd(xs, plus_plus_init(xs, k, rng));
        cs.sort_by(f64::total_cmp);
        cs.dedup();
        let fit = KMeansFit { inertia: inertia(xs, &cs), centroids: cs };
        if fit.centroids.len() == k && best.as_ref().is_none_or(|b| fit.inertia < b.inertia) {
            best = Some(fit);
        }
    }
    // Every restart collapsing a centroid is only possible on pathological
    // inputs; fall back to evenly spaced quantiles.
    Ok(best.unwrap_or_else(|| {
        let mut sorted = xs.to_vec();
        sorted.sort_by(f64::total_cmp);
        sorted.dedup();
        let cs: Vec<f64> = (0..k).map(|j| sorted[j * (sorted.len() - 1) / (k - 1).max(1)]).collect();
        let cs = lloyd(xs, cs);
        KMeansFit { inertia: inertia(xs, &cs), centroids: cs }
    }))
}

fn count_distinct(xs: &[f64]) -> usize {
    let mut s = xs.to_vec();
    s.sort_by(f64::total_cmp);
    s.dedup();
    s.len()
}

/// Inertia for `k = 1..=k_max` (index `k - 1`), capped at the number of
/// distinct sizes.
pub fn inertia_curve<R: Rng + ?Sized>(sizes: &[f64], k_max: usize, rng: &mut R) -> Result<Vec<KMeansFit>, ContextError> {
    let top = k_max.min(count_distinct(sizes));
    (1..=top).map(|k| kmeans(sizes, k, rng)).collect()
}

/// Picks `k` from an inertia curve: the largest `k` with
/// `I(k) / I(k-1) < ELBOW_RATIO`, stopping once the inertia is zero.
pub fn elbow(inertias: &[f64]) -> usize {
    let Some(&first) = inertias.first() else { return 1 };
    let eps = first.abs() * 1e-12;
    let mut k = 1;
    for j in 1..inertias.len() {
        let (prev, cur) = (inertias[j - 1], inertias[j]);
        if prev <= eps {
            break;
        }
        if cur / prev < ELBOW_RATIO {
            k = j + 1;
        }
    }
    k
}

/// Clusters sizes into levels, choosing `k <= k_max` by the elbow rule.
pub fn fit_size_levels<R: Rng + ?Sized>(sizes: &[f64], k_max: usize, rng: &mut R) -> Result<SizeLevels, ContextError> {
    if k_max == 0 {
        return Err(ContextError::ZeroK);
    }
    if sizes.len() < k_max {
        return Err(ContextError::TooFewSizes { needed: k_max, got: sizes.len() });
    }
    let curve = inertia_curve(sizes, k_max, rng)?;
    let k = elbow(&curve.iter().map(|f| f.inertia).collect::<Vec<_>>());
    Ok(SizeLevels { k, centroids: curve[k - 1].centroids.clone() })
}

/// Clusters sizes into exactly `k` levels.
pub fn fit_k<R: Rng + ?Sized>(sizes: &[f64], k: usize, rng: &mut R) -> Result<SizeLevels, ContextError> {
    if sizes.len() < k {
        return Err(ContextError::TooFewSizes { needed: k, got: sizes.len() });
    }
    let fit = kmeans(sizes, k, rng)?;
    Ok(SizeLevels { k, centroids: fit.centroids })
}

/// `v[i-1] = cos(pi * (i - l) / (2k))` for `i = 1..=k`.
pub fn importance_vector(level: usize, k: usize) -> Result<Vec<f64>, ContextError> {
    if k == 0 {
        return Err(ContextError::ZeroK);
    }
    if level == 0 || level > k {
        return Err(ContextError::LevelOutOfRange { level, k });
    }
    Ok((1..=k)
        .map(|i| (PI * (i as f64 - level as f64) / (2.0 * k as f64)).cos())
        .collect())
}

/// Per-tool cost attributes weighted by their relevance to the current level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostContext {
    pub level: usize,
    /// `|tools| x k`, entries in `[0, 1]`.
    pub matrix: Vec<Vec<f64>>,
}

/// `entry(t, i) = c_i(t) * v_{i-1}(level) / max_{t', j} c_j(t')`.
pub fn build_cost_context(
    universe: &ToolUniverse,
    attrs: &[CostAttributes],
    level: usize,
) -> Result<CostContext, ContextError> {
    let k = universe.k;
    let v = importance_vector(level, k)?;
    let mut rows = Vec::with_capacity(universe.n_tools());
    for tool in universe.tools() {
        let a = attrs
            .iter()
            .find(|a| a.tool_id == tool.id)
            .ok_or_else(|| ContextError::MissingAttributes(tool.id.clone()))?;
        if a.levels.len() != k {
            return Err(ContextError::AttributeLength { tool: tool.id.clone(), expected: k, found: a.levels.len() });
        }
        rows.push(&a.levels);
    }
    let max = rows.iter().flat_map(|r| r.iter().copied()).fold(0.0f64, f64::max);
    let scale = if max > 0.0 { 1.0 / max } else { 0.0 };
    let matrix = rows
        .into_iter()
        .map(|r| r.iter().zip(&v).map(|(c, w)| c * w * scale).collect())
        .collect();
    Ok(CostContext { level, matrix })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;

    #[test]
    fn importance_hand_values() {
        let v = importance_vector(2, 4).unwrap();
        assert!((v[0] - 0.923_879_532_511_286_7).abs() < 1e-12);
        assert_eq!(v[1], 1.0);
        assert!(importance_vector(0, 4).is_err());
        assert!(importance_vector(5, 4).is_err());
    }

    #[test]
    fn importance_entries_are_in_unit_interval_and_decrease() {
        for k in 1..=16 {
            for l in 1..=k {
                let v = importance_vector(l, k).unwrap();
                for i in 1..=k {
                    assert!(v[i - 1] > 0.0 && v[i - 1] <= 1.0);
                    for j in 1..=k {
                        let (di, dj) = ((i as i64 - l as i64).abs(), (j as i64 - l as i64).abs());
                        if di < dj {
                            assert!(v[i - 1] > v[j - 1]);
                        } else if di == dj {
                            assert!((v[i - 1] - v[j - 1]).abs() < 1e-15);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn four_clumps_give_four_levels() {
        let mut rng = seed::rng(3);
        let mut sizes = Vec::new();
        for side in [256.0f64, 512.0, 768.0, 1024.0] {
            for _ in 0..50 {
                sizes.push(side * side * (1.0 + rng.random_range(-0.04..0.04)));
            }
        }
        let levels = fit_size_levels(&sizes, 8, &mut seed::rng(1)).unwrap();
        assert_eq!(levels.k, 4);
        assert!(levels.centroids.windows(2).all(|w| w[0] < w[1]));
        for &s in &sizes {
            let l = levels.level_of(s);
            let d = (s - levels.centroids[l - 1]).abs();
            assert!(levels.centroids.iter().all(|c| d <= (s - c).abs()));
        }
    }

    #[test]
    fn equal_sizes_give_one_level() {
        let levels = fit_size_levels(&[5.0; 10], 4, &mut seed::rng(0)).unwrap();
        assert_eq!(levels, SizeLevels { k: 1, centroids: vec![5.0] });
    }

    #[test]
    fn uniform_sizes_give_sorted_centroids() {
        let sizes: Vec<f64> = (1..=100).map(f64::from).collect();
        let levels = fit_k(&sizes, 4, &mut seed::rng(0)).unwrap();
        assert!(levels.centroids.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn clustering_is_deterministic() {
        let sizes: Vec<f64> = (0..60).map(|i| ((i * 37) % 17) as f64).collect();
        let a = fit_size_levels(&sizes, 5, &mut seed::rng(9)).unwrap();
        let b = fit_size_levels(&sizes, 5, &mut seed::rng(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn too_few_sizes_and_distinct_values() {
        assert!(matches!(fit_size_levels(&[1.0], 2, &mut seed::rng(0)), Err(ContextError::TooFewSizes { .. })));
        assert!(matches!(fit_k(&[1.0, 1.0, 1.0], 2, &mut seed::rng(0)), Err(ContextError::TooFewDistinct { .. })));
    }

    #[test]
    fn elbow_rule_on_synthetic_curves() {
        assert_eq!(elbow(&[100.0, 10.0, 1.0, 0.1, 0.08]), 4);
        assert_eq!(elbow(&[100.0, 60.0, 30.0]), 1);
        assert_eq!(elbow(&[0.0, 0.0]), 1);
        assert_eq!(elbow(&[100.0, 0.0, 0.0]), 2);
    }
}
