//! Grouping of invocation patterns: an 8-descriptor feature space per
//! function, min-max normalization, DBSCAN over Euclidean distance, and
//! nearest-to-centroid representative selection per cluster.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::trace::InvocationSeries;

pub const FEATURE_DIM: usize = 8;

#[derive(Debug, Error)]
pub enum ClusterError {
    #[error("point {index} has dimension {got}, expected {expected}")]
    DimensionMismatch {
        index: usize,
        got: usize,
        expected: usize,
    },
}

/// Fixed 8-dimensional descriptor of one function's invocation pattern:
/// log1p(total), nonzero-minute fraction, mean gap, gap coefficient of
/// variation, lag-1440 and lag-60 autocorrelation, peak-to-mean ratio, and
/// entropy of the hour-of-day histogram.
#[derive(Debug, Clone, PartialEq)]
pub struct PatternFeatures {
    pub function_id: String,
    pub vector: Vec<f64>,
    pub normalized: bool,
}

/// Sample autocorrelation at `lag`; 0 for zero-variance or too-short series.
fn autocorrelation(values: &[f64], lag: usize) -> f64 {
    if values.len() <= lag {
        return 0.0;
    }
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let denom: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    if denom == 0.0 {
        return 0.0;
    }
    let num: f64 = (0..n - lag)
        .map(|i| (values[i] - mean) * (values[i + lag] - mean))
        .sum();
    num / denom
}

/// Compute the feature vector for one minute-granularity series. Degenerate
/// series (fewer than 2 events) yield sentinels instead of failing: mean gap =
/// series length, gap CV = 0, autocorrelations = 0.
pub fn compute_features(series: &InvocationSeries) -> PatternFeatures {
    let values: Vec<f64> = series.values.iter().map(|&v| v as f64).collect();
    let n = values.len();
    let total: f64 = values.iter().sum();
    let nonzero: Vec<usize> = series
        .values
        .iter()
        .enumerate()
        .filter(|(_, &v)| v > 0)
        .map(|(i, _)| i)
        .collect();
    let nonzero_fraction = if n == 0 { 0.0 } else { nonzero.len() as f64 / n as f64 };

    let (mean_gap, gap_cv) = if nonzero.len() < 2 {
        (n as f64, 0.0)
    } else {
        let gaps: Vec<f64> = nonzero.windows(2).map(|w| (w[1] - w[0]) as f64).collect();
        let mean = gaps.iter().sum::<f64>() / gaps.len() as f64;
        let var = gaps.iter().map(|g| (g - mean) * (g - mean)).sum::<f64>() / gaps.len() as f64;
        let cv = if mean == 0.0 { 0.0 } else { var.sqrt() / mean };
        (mean, cv)
    };

    let (ac_daily, ac_hourly) = if nonzero.len() < 2 {
        (0.0, 0.0)
    } else {
        (autocorrelation(&values, 1440), autocorrelation(&values, 60))
    };

    let mean = if n == 0 { 0.0 } else { total / n as f64 };
    let peak = values.iter().cloned().fold(0.0, f64::max);
    let peak_to_mean = if mean == 0.0 { 0.0 } else { peak / mean };

    let mut hour_hist = [0.0f64; 24];
    for (i, &v) in values.iter().enumerate() {
        hour_hist[(i / 60) % 24] += v;
    }
    let entropy = if total == 0.0 {
        0.0
    } else {
        -hour_hist
            .iter()
            .filter(|&&c| c > 0.0)
            .map(|&c| {
                let p = c / total;
                p * p.ln()
            })
            .sum::<f64>()
    };

    PatternFeatures {
        function_id: series.function_id.clone(),
        vector: vec![
            total.ln_1p(),
            nonzero_fraction,
            mean_gap,
            gap_cv,
            ac_daily,
            ac_hourly,
            peak_to_mean,
            entropy,
        ],
        normalized: false,
    }
}

/// Per-coordinate `(x - min) / (max - min)` over the population; coordinates
/// with zero range map to 0.
pub fn minmax_normalize(features: &[PatternFeatures]) -> Vec<PatternFeatures> {
    if features.is_empty() {
        return Vec::new();
    }
    let dim = features[0].vector.len();
    let mut lo = vec![f64::INFINITY; dim];
    let mut hi = vec![f64::NEG_INFINITY; dim];
    for f in features {
        for (i, &v) in f.vector.iter().enumerate() {
            lo[i] = lo[i].min(v);
            hi[i] = hi[i].max(v);
        }
    }
    features
        .iter()
        .map(|f| PatternFeatures {
            function_id: f.function_id.clone(),
            vector: f
                .vector
                .iter()
                .enumerate()
                .map(|(i, &v)| {
                    let range = hi[i] - lo[i];
                    if range == 0.0 {
                        0.0
                    } else {
                        (v - lo[i]) / range
                    }
                })
                .collect(),
            normalized: true,
        })
        .collect()
}

pub const NOISE: i64 = -1;

/// Labels aligned with the input order; `-1` marks noise, cluster ids are
/// contiguous from 0.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterAssignment {
    pub labels: Vec<i64>,
    pub eps: f64,
    pub min_pts: usize,
}

impl ClusterAssignment {
    pub fn num_clusters(&self) -> usize {
        self.labels
            .iter()
            .filter(|&&l| l >= 0)
            .map(|&l| l as usize + 1)
            .max()
            .unwrap_or(0)
    }

    pub fn members(&self, cluster: usize) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == cluster as i64)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn noise(&self) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == NOISE)
            .map(|(i, _)| i)
            .collect()
    }
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Classic DBSCAN over Euclidean distance. The eps-neighborhood is inclusive
/// (`d <= eps`) and counts the point itself; border points join the first
/// cluster that reaches them in scan order.
pub fn dbscan(points: &[Vec<f64>], eps: f64, min_pts: usize) -> Result<ClusterAssignment, ClusterError> {
    assert!(eps > 0.0, "eps must be positive");
    assert!(min_pts >= 1, "min_pts must be at least 1");
    if let Some(first) = points.first() {
        let expected = first.len();
        for (index, p) in points.iter().enumerate() {
            if p.len() != expected {
                return Err(ClusterError::DimensionMismatch {
                    index,
                    got: p.len(),
                    expected,
                });
            }
        }
    }
    let n = points.len();
    let neighbors = |i: usize| -> Vec<usize> {
        (0..n).filter(|&j| euclidean(&points[i], &points[j]) <= eps).collect()
    };

    let mut labels = vec![NOISE; n];
    let mut visited = vec![false; n];
    let mut next_cluster: i64 = 0;
    for p in 0..n {
        if visited[p] {
            continue;
        }
        visited[p] = true;
        let seeds = neighbors(p);
        if seeds.len() < min_pts {
            continue; // stays noise unless a later cluster reaches it
        }
        let cluster = next_cluster;
        next_cluster += 1;
        labels[p] = cluster;
        let mut queue: std::collections::VecDeque<usize> = seeds.into();
        while let Some(q) = queue.pop_front() {
            if labels[q] == NOISE {
                labels[q] = cluster; // border point
            }
            if visited[q] {
                continue;
            }
            visited[q] = true;
            let reach = neighbors(q);
            if reach.len() >= min_pts {
                labels[q] = cluster; // core point
                queue.extend(reach);
            }
        }
    }
    Ok(ClusterAssignment {
        labels,
        eps,
        min_pts,
    })
}

/// Per cluster, the member nearest (Euclidean) to the cluster centroid; ties
/// break to the lexicographically smallest function id.
pub fn select_representatives(
    assignment: &ClusterAssignment,
    features: &[PatternFeatures],
) -> BTreeMap<usize, String> {
    assert_eq!(assignment.labels.len(), features.len());
    let mut reps = BTreeMap::new();
    for cluster in 0..assignment.num_clusters() {
        let members = assignment.members(cluster);
        if members.is_empty() {
            continue;
        }
        let dim = features[members[0]].vector.len();
        let mut centroid = vec![0.0; dim];
        for &m in &members {
            for (i, &v) in features[m].vector.iter().enumerate() {
                centroid[i] += v;
            }
        }
        for c in &mut centroid {
            *c /= members.len() as f64;
        }
        let best = members
            .iter()
            .map(|&m| (euclidean(&features[m].vector, &centroid), &features[m].function_id))
            .min_by(|(da, ia), (db, ib)| {
                da.partial_cmp(db)
                    .expect("finite distances")
                    .then_with(|| ia.cmp(ib))
            })
            .expect("non-empty cluster");
        reps.insert(cluster, best.1.clone());
    }
    reps
}

/// The JSON shape of a clustering run.
#[derive(Debug, Serialize)]
pub struct ClusterReport {
    pub eps: f64,
    #[serde(rename = "minPts")]
    pub min_pts: usize,
    pub clusters: Vec<ClusterEntry>,
    pub noise: Vec<String>,
}

#[derive(Debug, Serialize)]
pub struct ClusterEntry {
    pub id: usize,
    #[serde(rename = "memberIds")]
    pub member_ids: Vec<String>,
    #[serde(rename = "representativeId")]
    pub representative_id: String,
}

pub fn cluster_report(
    assignment: &ClusterAssignment,
    features: &[PatternFeatures],
) -> ClusterReport {
    let reps = select_representatives(assignment, features);
    let clusters = (0..assignment.num_clusters())
        .map(|id| ClusterEntry {
            id,
            member_ids: assignment
                .members(id)
                .iter()
                .map(|&m| features[m].function_id.clone())
                .collect(),
            representative_id: reps[&id].clone(),
        })
        .collect();
    ClusterReport {
        eps: assignment.eps,
        min_pts: assignment.min_pts,
        clusters,
        noise: assignment
            .noise()
            .iter()
            .map(|&i| features[i].function_id.clone())
            .collect(),
    }
}
