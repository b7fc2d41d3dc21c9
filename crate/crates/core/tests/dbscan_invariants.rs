//! DBSCAN semantics against a brute-force density-reachability reference on
//! small instances.

use coldstart_core::clustering::{dbscan, euclidean, ClusterAssignment, NOISE};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_points(rng: &mut ChaCha8Rng, n: usize, dim: usize, spread: f64) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..dim).map(|_| rng.random_range(0.0..spread)).collect())
        .collect()
}

/// Brute-force reference: core points by neighbor count, clusters as
/// connected components of the core-to-core reachability graph, border points
/// attached to any reachable core.
struct Reference {
    core: Vec<bool>,
    /// component id per core point, usize::MAX elsewhere
    component: Vec<usize>,
    /// clusters each border point could belong to
    border_options: Vec<Vec<usize>>,
}

fn reference_dbscan(points: &[Vec<f64>], eps: f64, min_pts: usize) -> Reference {
    let n = points.len();
    let neighbors = |i: usize| -> Vec<usize> {
        (0..n)
            .filter(|&j| euclidean(&points[i], &points[j]) <= eps)
            .collect()
    };
    let core: Vec<bool> = (0..n).map(|i| neighbors(i).len() >= min_pts).collect();

    // connected components over core points, edges between cores within eps
    let mut component = vec![usize::MAX; n];
    let mut next = 0;
    for i in 0..n {
        if !core[i] || component[i] != usize::MAX {
            continue;
        }
        let mut stack = vec![i];
        component[i] = next;
        while let Some(p) = stack.pop() {
            for q in neighbors(p) {
                if core[q] && component[q] == usize::MAX {
                    component[q] = next;
                    stack.push(q);
                }
            }
        }
        next += 1;
    }

    let border_options: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            if core[i] {
                return Vec::new();
            }
            let mut options: Vec<usize> = neighbors(i)
                .into_iter()
                .filter(|&j| core[j])
                .map(|j| component[j])
                .collect();
            options.sort_unstable();
            options.dedup();
            options
        })
        .collect();

    Reference {
        core,
        component,
        border_options,
    }
}

/// Check one assignment against the reference, modulo cluster relabeling and
/// ambiguous border points.
fn check_against_reference(points: &[Vec<f64>], assignment: &ClusterAssignment) {
    let reference = reference_dbscan(points, assignment.eps, assignment.min_pts);
    let n = points.len();

    // map implementation labels to reference components via core points
    let mut label_to_component = std::collections::BTreeMap::new();
    for i in 0..n {
        if reference.core[i] {
            let label = assignment.labels[i];
            assert!(label >= 0, "core point {i} labeled noise");
            let entry = label_to_component
                .entry(label)
                .or_insert(reference.component[i]);
            assert_eq!(
                *entry, reference.component[i],
                "core point {i} merges two reference components"
            );
        }
    }
    // the mapping must be a bijection over observed components
    let mut seen = std::collections::BTreeSet::new();
    for (_, comp) in label_to_component.iter() {
        assert!(seen.insert(*comp), "two labels map to one component");
    }

    for i in 0..n {
        if reference.core[i] {
            continue;
        }
        let label = assignment.labels[i];
        if reference.border_options[i].is_empty() {
            assert_eq!(label, NOISE, "point {i} should be noise");
        } else {
            // border: must be one of the reachable components
            assert!(label >= 0, "border point {i} labeled noise");
            let component = label_to_component[&label];
            assert!(
                reference.border_options[i].contains(&component),
                "border point {i} joined an unreachable cluster"
            );
        }
    }
}

#[test]
fn matches_reference_on_random_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for case in 0..60 {
        let n = rng.random_range(2..120);
        let dim = rng.random_range(1..5);
        let spread = rng.random_range(1.0..4.0);
        let points = random_points(&mut rng, n, dim, spread);
        let eps = rng.random_range(0.05..0.8);
        let min_pts = rng.random_range(1..8);
        let assignment = dbscan(&points, eps, min_pts).unwrap();
        check_against_reference(&points, &assignment);
        let _ = case;
    }
}

#[test]
fn partition_invariant_under_permutation() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..20 {
        let n = rng.random_range(5..80);
        let points = random_points(&mut rng, n, 2, 2.0);
        let eps = rng.random_range(0.1..0.6);
        let min_pts = rng.random_range(2..6);

        let forward = dbscan(&points, eps, min_pts).unwrap();

        // reversed input order
        let reversed: Vec<Vec<f64>> = points.iter().rev().cloned().collect();
        let backward = dbscan(&reversed, eps, min_pts).unwrap();

        // compare partitions over unambiguous points (core points and
        // single-option borders); ambiguous borders may legitimately differ
        let reference = reference_dbscan(&points, eps, min_pts);
        let canonical = |labels: &[i64], reorder: &dyn Fn(usize) -> usize| {
            let mut groups: std::collections::BTreeMap<i64, Vec<usize>> = Default::default();
            for original in 0..n {
                let unambiguous = reference.core[original]
                    || reference.border_options[original].len() <= 1;
                if !unambiguous {
                    continue;
                }
                groups
                    .entry(labels[reorder(original)])
                    .or_default()
                    .push(original);
            }
            let mut partition: Vec<Vec<usize>> = groups
                .into_iter()
                .filter(|(label, _)| *label != NOISE)
                .map(|(_, mut v)| {
                    v.sort_unstable();
                    v
                })
                .collect();
            partition.sort();
            partition
        };
        let a = canonical(&forward.labels, &|i| i);
        let b = canonical(&backward.labels, &|i| n - 1 - i);
        assert_eq!(a, b, "partition changed under permutation");
    }
}

#[test]
fn density_reachability_closure_holds() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let n = rng.random_range(10..200);
        let points = random_points(&mut rng, n, 3, 2.5);
        let eps = rng.random_range(0.2..0.9);
        let min_pts = rng.random_range(2..6);
        let assignment = dbscan(&points, eps, min_pts).unwrap();
        let reference = reference_dbscan(&points, eps, min_pts);

        // every pair of density-connected core points shares a cluster
        for i in 0..n {
            for j in 0..n {
                if reference.core[i]
                    && reference.core[j]
                    && reference.component[i] == reference.component[j]
                {
                    assert_eq!(
                        assignment.labels[i], assignment.labels[j],
                        "core points {i},{j} in one component but different clusters"
                    );
                }
            }
        }
    }
}
