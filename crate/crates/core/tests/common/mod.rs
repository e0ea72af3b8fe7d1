#![allow(dead_code, clippy::needless_range_loop)]

use std::collections::{BTreeSet, HashMap};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vapc::cluster::{dbscan, DbscanParams};
use vapc::memory::{repelled_loss, FeatureMemory};
use vapc::metric::{
    jaccard_distance, k_reciprocal_expand, knn, pairwise_sq_euclidean, reweight, DistanceMatrix,
    MetricTag,
};
use vapc::{EmbeddingSet, NOISE};

pub fn random_points(rng: &mut ChaCha8Rng, n: usize, d: usize) -> EmbeddingSet {
    let data = (0..n * d).map(|_| rng.random_range(-1.0..1.0)).collect();
    EmbeddingSet::new(d, data).unwrap().normalized()
}

/// Self first, then everything else sorted by (distance, index).
pub fn naive_knn(dist: &DistanceMatrix, i: usize, k: usize) -> Vec<usize> {
    let mut others: Vec<usize> = (0..dist.n()).filter(|&j| j != i).collect();
    others.sort_by(|&a, &b| {
        dist.get(i, a)
            .partial_cmp(&dist.get(i, b))
            .unwrap()
            .then(a.cmp(&b))
    });
    let mut out = vec![i];
    out.extend(others.into_iter().take(k - 1));
    out
}

pub fn naive_expansion(dist: &DistanceMatrix, k: usize) -> Vec<BTreeSet<usize>> {
    let n = dist.n();
    let half = k / 2;
    (0..n)
        .map(|i| {
            let base: BTreeSet<usize> = naive_knn(dist, i, k).into_iter().collect();
            let mut set = base.clone();
            for &ind in &base {
                let cand: BTreeSet<usize> = if half == 0 {
                    BTreeSet::new()
                } else {
                    naive_knn(dist, ind, half).into_iter().collect()
                };
                let shared = cand.intersection(&base).count() as f64;
                if shared >= 2.0 / 3.0 * cand.len() as f64 {
                    set.extend(cand);
                }
            }
            set
        })
        .collect()
}

/// Dense weighted Jaccard over full weight vectors.
pub fn naive_jaccard(dist: &DistanceMatrix, sets: &[BTreeSet<usize>]) -> Vec<Vec<f64>> {
    let n = dist.n();
    let dense: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    if sets[i].contains(&j) {
                        (-dist.get(i, j)).exp()
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect();
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    if i == j {
                        return 0.0;
                    }
                    let (mut lo, mut hi) = (0.0, 0.0);
                    for l in 0..n {
                        lo += dense[i][l].min(dense[j][l]);
                        hi += dense[i][l].max(dense[j][l]);
                    }
                    if hi == 0.0 {
                        1.0
                    } else {
                        1.0 - lo / hi
                    }
                })
                .collect()
        })
        .collect()
}

/// Expansion sets and Jaccard distances against the exhaustive oracles.
pub fn check_k_reciprocal(instances: usize, seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for case in 0..instances {
        let n = rng.random_range(2..=50);
        let k = rng.random_range(2..=10usize.min(n));
        let d = rng.random_range(1..=6);
        // Coarse grids make distance ties common.
        let pts = if case % 4 == 0 {
            let data = (0..n * d)
                .map(|_| rng.random_range(-2..=2) as f64)
                .collect();
            EmbeddingSet::new(d, data).unwrap()
        } else {
            random_points(&mut rng, n, d)
        };
        let dist = pairwise_sq_euclidean(&pts, &pts).unwrap();
        let sets = k_reciprocal_expand(&knn(&dist, k).unwrap());
        let expected = naive_expansion(&dist, k);
        for i in 0..n {
            let got: BTreeSet<usize> = sets.set(i).iter().copied().collect();
            if got != expected[i] {
                return Err(format!(
                    "case {case}, sample {i}, n={n}, k={k}: sets differ"
                ));
            }
        }
        let jac = jaccard_distance(&reweight(&dist, &sets));
        let oracle = naive_jaccard(&dist, &expected);
        for i in 0..n {
            for j in 0..n {
                if (jac.get(i, j) - oracle[i][j]).abs() >= 1e-9 {
                    return Err(format!(
                        "case {case} ({i},{j}): {} vs {}",
                        jac.get(i, j),
                        oracle[i][j]
                    ));
                }
            }
        }
    }
    Ok(())
}

/// Core points grouped into connected components of the eps-graph; each
/// border point goes to the adjacent component with the smallest core index.
pub fn naive_dbscan(dist: &DistanceMatrix, eps: f64, min_pts: usize) -> Vec<i64> {
    let n = dist.n();
    let near = |i: usize, j: usize| dist.get(i, j) <= eps;
    let core: Vec<bool> = (0..n)
        .map(|i| (0..n).filter(|&j| near(i, j)).count() >= min_pts)
        .collect();

    // Component id = smallest core index in the component (repeated relaxation).
    let mut comp: Vec<usize> = (0..n).collect();
    loop {
        let mut changed = false;
        for i in (0..n).filter(|&i| core[i]) {
            for j in (0..n).filter(|&j| core[j] && near(i, j)) {
                if comp[j] < comp[i] {
                    comp[i] = comp[j];
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }

    let mut owner = vec![None; n];
    for i in 0..n {
        owner[i] = if core[i] {
            Some(comp[i])
        } else {
            (0..n)
                .filter(|&j| core[j] && near(i, j))
                .map(|j| comp[j])
                .min()
        };
    }
    let mut roots: Vec<usize> = owner.iter().flatten().copied().collect();
    roots.sort_unstable();
    roots.dedup();
    owner
        .iter()
        .map(|o| o.map_or(NOISE, |r| roots.binary_search(&r).unwrap() as i64))
        .collect()
}

pub fn same_partition(a: &[i64], b: &[i64]) -> bool {
    let mut fwd: HashMap<i64, i64> = HashMap::new();
    let mut back: HashMap<i64, i64> = HashMap::new();
    a.iter().zip(b).all(|(&x, &y)| {
        if (x == NOISE) != (y == NOISE) {
            return false;
        }
        *fwd.entry(x).or_insert(y) == y && *back.entry(y).or_insert(x) == x
    })
}

/// Random instances against the naive reference; returns elapsed seconds.
pub fn check_dbscan(instances: usize, seed: u64) -> Result<f64, String> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for case in 0..instances {
        let n = rng.random_range(1..=60);
        let dims = rng.random_range(1..=3);
        let pts: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..dims).map(|_| rng.random_range(0.0..10.0)).collect())
            .collect();
        let dist = DistanceMatrix::from_fn(n, MetricTag::SqEuclidean, |i, j| {
            pts[i]
                .iter()
                .zip(&pts[j])
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt()
        });
        let eps = rng.random_range(0.2..4.0);
        let min_pts = rng.random_range(2..=8);
        let got = dbscan(&dist, DbscanParams::new(eps, min_pts).unwrap());
        let want = naive_dbscan(&dist, eps, min_pts);
        if !same_partition(&got, &want) {
            return Err(format!("case {case}: n={n} eps={eps} min_pts={min_pts}"));
        }
        // The discovery-order labelling is itself deterministic.
        if got != want {
            return Err(format!("case {case}: labels renamed"));
        }
    }
    Ok(start.elapsed().as_secs_f64())
}

pub fn random_set(rng: &mut ChaCha8Rng, n: usize, d: usize) -> EmbeddingSet {
    let data = (0..n * d).map(|_| rng.random_range(-1.0..1.0)).collect();
    EmbeddingSet::new(d, data).unwrap().normalized()
}

pub fn loss_at(memory: &FeatureMemory, f: &[f64], y: usize) -> f64 {
    repelled_loss(&memory.predict_prob(f).unwrap(), y)
        .unwrap()
        .value
}

/// Largest relative deviation between analytic and central-difference
/// gradients over random memories.
pub fn max_gradient_error(cases: usize, seed: u64) -> f64 {
    let h = 1e-5;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let d = rng.random_range(1..=16);
        let c = rng.random_range(1..=32);
        let beta = rng.random_range(0.1..1.0);
        let memory = FeatureMemory::from_embeddings(&random_set(&mut rng, c, d), beta);
        let f: Vec<f64> = random_set(&mut rng, 1, d).row(0).to_vec();
        let y = rng.random_range(0..c);
        let analytic = memory.loss_gradient(&f, y).unwrap();
        let numeric: Vec<f64> = (0..d)
            .map(|i| {
                let mut plus = f.clone();
                let mut minus = f.clone();
                plus[i] += h;
                minus[i] -= h;
                (loss_at(&memory, &plus, y) - loss_at(&memory, &minus, y)) / (2.0 * h)
            })
            .collect();
        let diff: f64 = analytic
            .iter()
            .zip(&numeric)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        let scale = analytic
            .iter()
            .map(|a| a * a)
            .sum::<f64>()
            .sqrt()
            .max(numeric.iter().map(|a| a * a).sum::<f64>().sqrt())
            .max(1e-8);
        worst = worst.max(diff / scale);
    }
    worst
}
