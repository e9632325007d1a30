//! Clustering checked against direct, definition-level recomputation.

use chainflow::cluster::{
    adjusted_rand_index, calinski_harabasz, davies_bouldin, elbow, kmeans, kmeans_restarts, silhouette,
    AlgorithmRegistry, ClusterConfig, ClusterError, KMeansParams,
};
use ndarray::Array2;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

fn rows(d: &Array2<f64>) -> Vec<Vec<f64>> {
    d.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn mean_of(points: &[&Vec<f64>]) -> Vec<f64> {
    let mut m = vec![0.0; points[0].len()];
    for p in points {
        for (a, b) in m.iter_mut().zip(p.iter()) {
            *a += b;
        }
    }
    m.iter().map(|v| v / points.len() as f64).collect()
}

fn oracle_silhouette(x: &[Vec<f64>], labels: &[usize], k: usize) -> f64 {
    let n = x.len();
    let mut s = Vec::new();
    for i in 0..n {
        let same: Vec<usize> = (0..n).filter(|&j| j != i && labels[j] == labels[i]).collect();
        if same.is_empty() {
            s.push(0.0);
            continue;
        }
        let a = same.iter().map(|&j| dist(&x[i], &x[j])).sum::<f64>() / same.len() as f64;
        let mut b = f64::INFINITY;
        for c in (0..k).filter(|&c| c != labels[i]) {
            let other: Vec<usize> = (0..n).filter(|&j| labels[j] == c).collect();
            b = b.min(other.iter().map(|&j| dist(&x[i], &x[j])).sum::<f64>() / other.len() as f64);
        }
        s.push(if a.max(b) > 0.0 { (b - a) / a.max(b) } else { 0.0 });
    }
    s.iter().sum::<f64>() / n as f64
}

fn groups<'a>(x: &'a [Vec<f64>], labels: &[usize], k: usize) -> Vec<Vec<&'a Vec<f64>>> {
    (0..k)
        .map(|c| x.iter().zip(labels).filter(|(_, l)| **l == c).map(|(p, _)| p).collect())
        .collect()
}

fn oracle_dbi(x: &[Vec<f64>], labels: &[usize], k: usize) -> f64 {
    let g = groups(x, labels, k);
    let c: Vec<Vec<f64>> = g.iter().map(|m| mean_of(m)).collect();
    let s: Vec<f64> = (0..k)
        .map(|i| g[i].iter().map(|p| dist(p, &c[i])).sum::<f64>() / g[i].len() as f64)
        .collect();
    (0..k)
        .map(|i| {
            (0..k)
                .filter(|&j| j != i)
                .map(|j| (s[i] + s[j]) / dist(&c[i], &c[j]))
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .sum::<f64>()
        / k as f64
}

fn oracle_chi(x: &[Vec<f64>], labels: &[usize], k: usize) -> f64 {
    let n = x.len();
    let all: Vec<&Vec<f64>> = x.iter().collect();
    let centre = mean_of(&all);
    let g = groups(x, labels, k);
    let mut between = 0.0;
    let mut within = 0.0;
    for members in &g {
        let c = mean_of(members);
        between += members.len() as f64 * dist(&c, &centre).powi(2);
        within += members.iter().map(|p| dist(p, &c).powi(2)).sum::<f64>();
    }
    (between / (k - 1) as f64) / (within / (n - k) as f64)
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    let u: f64 = 1.0 - rng.random::<f64>();
    let v: f64 = rng.random();
    (-2.0 * u.ln()).sqrt() * (std::f64::consts::TAU * v).cos()
}

/// Random dataset with labels that use every id in 0..k.
fn random_case(rng: &mut ChaCha8Rng) -> (Array2<f64>, Vec<usize>, usize) {
    let k = rng.random_range(2..=5);
    let n = rng.random_range(k + 1..=50);
    let d = rng.random_range(1..=6);
    let mut labels: Vec<usize> = (0..n).map(|i| if i < k { i } else { rng.random_range(0..k) }).collect();
    for i in (1..n).rev() {
        labels.swap(i, rng.random_range(0..=i));
    }
    let data = Array2::from_shape_fn((n, d), |(i, _)| labels[i] as f64 * 1.5 + gaussian(rng));
    (data, labels, k)
}

#[test]
fn scores_match_definitions_on_random_data() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for case in 0..20 {
        let (data, labels, k) = random_case(&mut rng);
        let x = rows(&data);
        let sc = silhouette(data.view(), &labels).unwrap();
        let dbi = davies_bouldin(data.view(), &labels).unwrap();
        let chi = calinski_harabasz(data.view(), &labels).unwrap();
        assert!((sc - oracle_silhouette(&x, &labels, k)).abs() < 1e-9, "case {case} sc");
        assert!((dbi - oracle_dbi(&x, &labels, k)).abs() < 1e-9, "case {case} dbi");
        let o = oracle_chi(&x, &labels, k);
        assert!((chi - o).abs() < 1e-9 * o.max(1.0), "case {case} chi");
        assert!((-1.0..=1.0).contains(&sc) && dbi >= 0.0 && chi >= 0.0);
    }
}

#[test]
fn scores_ignore_label_names_and_sc_ignores_scale() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..10 {
        let (data, labels, k) = random_case(&mut rng);
        let relabel: Vec<usize> = labels.iter().map(|l| k - 1 - l).collect();
        let scaled = &data * 3.5;
        let sc = silhouette(data.view(), &labels).unwrap();
        assert!((sc - silhouette(data.view(), &relabel).unwrap()).abs() < 1e-12);
        assert!((sc - silhouette(scaled.view(), &labels).unwrap()).abs() < 1e-12);
        let dbi = davies_bouldin(data.view(), &labels).unwrap();
        assert!((dbi - davies_bouldin(data.view(), &relabel).unwrap()).abs() < 1e-12);
        let chi = calinski_harabasz(data.view(), &labels).unwrap();
        assert!((chi - calinski_harabasz(data.view(), &relabel).unwrap()).abs() < 1e-9 * chi);
    }
}

#[test]
fn kmeans_exact_line_and_scale_invariance() {
    let d = Array2::from_shape_vec((4, 1), vec![0.0, 1.0, 10.0, 11.0]).unwrap();
    assert_eq!(kmeans(d.view(), 2, 3, &KMeansParams::default()).unwrap().inertia, 1.0);

    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let (data, _, _) = random_case(&mut rng);
    let p = KMeansParams::default();
    let a = kmeans(data.view(), 3, 5, &p).unwrap();
    let b = kmeans((&data * 8.0).view(), 3, 5, &p).unwrap();
    assert_eq!(adjusted_rand_index(&a.labels, &b.labels), 1.0);
}

#[test]
fn lloyd_inertia_never_rises_and_best_restart_wins() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..10 {
        let (data, _, k) = random_case(&mut rng);
        let p = KMeansParams::default();
        let runs = kmeans_restarts(data.view(), k, 11, &p).unwrap();
        for r in &runs {
            for w in r.inertia_history.windows(2) {
                assert!(w[1] <= w[0] + 1e-9 * w[0].max(1.0), "{:?}", r.inertia_history);
            }
        }
        let best = kmeans(data.view(), k, 11, &p).unwrap();
        assert!(runs.iter().all(|r| best.inertia <= r.inertia));
    }
}

fn blobs(centres: &[Vec<f64>], per: usize, spread: f64, rng: &mut ChaCha8Rng) -> (Array2<f64>, Vec<usize>) {
    let d = centres[0].len();
    let n = centres.len() * per;
    let truth: Vec<usize> = (0..n).map(|i| i / per).collect();
    let data = Array2::from_shape_fn((n, d), |(i, j)| centres[truth[i]][j] + spread * gaussian(rng));
    (data, truth)
}

#[test]
fn every_algorithm_recovers_two_blobs() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let (data, truth) = blobs(&[vec![0.0, 0.0], vec![12.0, 9.0]], 25, 0.6, &mut rng);
    let registry = AlgorithmRegistry::with_defaults(&ClusterConfig::default()).unwrap();
    for alg in registry.select("all").unwrap() {
        let a = alg.fit(data.view(), Some(2), 8).unwrap_or_else(|e| panic!("{}: {e}", alg.name()));
        assert_eq!(adjusted_rand_index(&a.labels, &truth), 1.0, "{}", alg.name());
        assert_eq!(a.k, 2, "{}", alg.name());
    }
}

fn planted_centres(k: usize, d: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::new();
    while out.len() < k {
        let c: Vec<f64> = (0..d).map(|_| rng.random_range(-20.0..20.0)).collect();
        if out.iter().all(|o| dist(o, &c) > 8.0) {
            out.push(c);
        }
    }
    out
}

/// Blobs in the default embedding width with the default k range. In very
/// low dimensions random centres are far from equidistant and the chord rule
/// tends to stop early.
#[test]
fn elbow_finds_planted_k() {
    for k in [3usize, 6] {
        let mut hits = 0;
        for seed in 0..10u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
            let centres = planted_centres(k, 32, &mut rng);
            let (data, _) = blobs(&centres, 20, 0.8, &mut rng);
            let e = elbow(data.view(), 12, seed, &KMeansParams::default()).unwrap();
            hits += usize::from(e.k == k);
        }
        assert!(hits >= 9, "k = {k}: {hits}/10");
    }
}

#[test]
fn identical_points_are_degenerate_for_elbow() {
    let d = Array2::from_elem((8, 2), 1.5);
    assert!(matches!(
        elbow(d.view(), 4, 0, &KMeansParams::default()),
        Err(ClusterError::DegenerateInput(_))
    ));
}
