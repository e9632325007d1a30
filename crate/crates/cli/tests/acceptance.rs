//! End-to-end acceptance checks. Each criterion prints one PASS or FAIL line;
//! the binary exits non-zero if any fails.
//!
//! Reference values come from small oracles written here, independent of the
//! library code they check.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use chainflow::action::{
    behaviour_graph_for, form_actions, load_bgraph, match_pattern, save_bgraph, ActionConfig, ActionId, ActionType,
    Formation, KindSelection, PatternKind,
};
use chainflow::cluster::{
    calinski_harabasz, davies_bouldin, elbow, elbow_from_inertias, kmeans, read_clusters, silhouette,
    write_clusters, ClusterTable, KMeansParams,
};
use chainflow::config::PipelineConfig;
use chainflow::embed::{
    block_mut, embed_tensor, embed_users, read_embeddings, to_graph_tensor, write_embeddings, Dims, EmbedConfig,
    FeatureScaling, GraphTensor, ModelParams, Objective, ParamBlock, ReconstructionHead, D_IN_EDGE, D_IN_NODE,
};
use chainflow::flow::{eligible_users, extract_flow};
use chainflow::ingest::{load_graph, parse_dataset, save_graph, IngestOptions, PropertyGraph};
use chainflow::profile::{
    label_cluster, phi, profile_clusters, rho, ActivityLabel, LabelFacts, Phi, ProfileParams, TimeBand,
};
use chainflow::synthgen::{default_archetypes, generate, Synthetic};
use ndarray::Array2;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

fn ensure(ok: bool, what: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(what())
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    ensure(elapsed < limit, || format!("took {elapsed:.2?}, limit {limit:?}"))
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    let u: f64 = 1.0 - rng.random::<f64>();
    let v: f64 = rng.random();
    (-2.0 * u.ln()).sqrt() * (std::f64::consts::TAU * v).cos()
}

fn synth_graph(users_per: usize, seed: u64) -> (Synthetic, PropertyGraph) {
    let synth = generate(&default_archetypes(), users_per, seed).expect("generate");
    let graph = parse_dataset(&synth.text(), &IngestOptions::default()).expect("parse").graph;
    (synth, graph)
}

// ---------------------------------------------------------------------------
// 1. pattern classifier

/// The classification rules applied to name counts, in rule order.
fn oracle_pattern(counts: &[usize], r: usize) -> PatternKind {
    let counts: Vec<usize> = counts.iter().copied().filter(|&c| c > 0).collect();
    if counts.iter().all(|&c| c == 1) {
        return PatternKind::UniqueEvents;
    }
    if counts[0] >= 2 && counts.iter().all(|&c| c == counts[0]) {
        return PatternKind::AllRepeatK;
    }
    let ones = counts.iter().filter(|&&c| c == 1).count();
    let others: Vec<usize> = counts.iter().copied().filter(|&c| c != 1).collect();
    if ones == 1 && !others.is_empty() && others.iter().all(|&c| c == others[0] && c >= 2) {
        return PatternKind::AllRepeatKPlusBulk;
    }
    if others.len() == 1 && others[0] >= r && ones == counts.len() - 1 {
        return PatternKind::OneRepeatsRestOnce;
    }
    PatternKind::Mixed
}

/// Every distinct ordering of `a` copies of "A" and `b` copies of "B".
fn arrangements(a: usize, b: usize) -> Vec<Vec<&'static str>> {
    let n = a + b;
    (0u32..1 << n)
        .filter(|m| m.count_ones() as usize == b)
        .map(|m| (0..n).map(|i| if m >> i & 1 == 1 { "B" } else { "A" }).collect())
        .collect()
}

fn pattern_classifier() -> Check {
    use PatternKind::*;
    let start = Instant::now();
    let fixtures: [(&[&str], PatternKind); 5] = [
        (&["A", "B", "C"], UniqueEvents),
        (&["A", "A", "B", "B"], AllRepeatK),
        (&["A", "A", "B", "B", "C"], AllRepeatKPlusBulk),
        (&["A", "A", "A", "A", "B", "C"], OneRepeatsRestOnce),
        (&["A", "A", "A", "B", "B", "C"], Mixed),
    ];
    for (names, want) in fixtures {
        let got = match_pattern(names, 3).map_err(|e| e.to_string())?;
        ensure(got == want, || format!("{names:?}: {got:?}, expected {want:?}"))?;
    }
    let mut cases = 0;
    for a in 0..=6 {
        for b in 0..=6 - a {
            if a + b == 0 {
                continue;
            }
            let want = oracle_pattern(&[a, b], 3);
            for names in arrangements(a, b) {
                let got = match_pattern(&names, 3).map_err(|e| e.to_string())?;
                ensure(got == want, || format!("{names:?}: {got:?}, oracle {want:?}"))?;
                cases += 1;
            }
        }
    }
    ensure(match_pattern::<&str>(&[], 3).is_err(), || "empty multiset accepted".into())?;
    let elapsed = start.elapsed();
    within(elapsed, Duration::from_secs(1))?;
    Ok(format!("5 fixtures, {cases} orderings agree with the oracle, {elapsed:.1?}"))
}

// ---------------------------------------------------------------------------
// 2. action formation

const ADDR_A: &str = "0xa1a1a1a1a1a1a1a1a1a1a1a1a1a1a1a1a1a1a1a1";
const ADDR_B: &str = "0xb2b2b2b2b2b2b2b2b2b2b2b2b2b2b2b2b2b2b2b2";
const ADDR_C: &str = "0xc3c3c3c3c3c3c3c3c3c3c3c3c3c3c3c3c3c3c3c3";
const CONTRACT: &str = "0xd4d4d4d4d4d4d4d4d4d4d4d4d4d4d4d4d4d4d4d4";

fn fixture_tx(n: u64, from: &str, events: &[(&str, serde_json::Value)]) -> String {
    let events: Vec<serde_json::Value> = events
        .iter()
        .enumerate()
        .map(|(i, (name, props))| serde_json::json!({"log_index": i, "name": name, "properties": props}))
        .collect();
    serde_json::json!({
        "tx_hash": format!("0x{n:064x}"),
        "block_number": 100 + n,
        "tx_index": 0,
        "from": from,
        "to": CONTRACT,
        "value": "0",
        "timestamp": 1_700_000_000 + 60 * n,
        "events": events,
    })
    .to_string()
}

/// A mints twice in one transaction, then stakes with a bulk fee; B mints
/// once and gifts to C; C repeats gifts with a note and a seal.
fn formation_fixture() -> Vec<String> {
    let none = serde_json::json!({});
    vec![
        fixture_tx(1, ADDR_A, &[("Mint", none.clone()), ("Mint", none.clone())]),
        fixture_tx(
            2,
            ADDR_A,
            &[
                ("Stake", none.clone()),
                ("Fee", none.clone()),
                ("Stake", none.clone()),
                ("Fee", none.clone()),
                ("Bonus", none.clone()),
            ],
        ),
        fixture_tx(3, ADDR_B, &[("Mint", none.clone())]),
        fixture_tx(4, ADDR_B, &[("Gift", serde_json::json!({"to": ADDR_C}))]),
        fixture_tx(
            5,
            ADDR_C,
            &[
                ("Gift", none.clone()),
                ("Gift", none.clone()),
                ("Gift", none.clone()),
                ("Note", none.clone()),
                ("Seal", none.clone()),
            ],
        ),
    ]
}

fn formation_of(lines: &[String], addresses: &[String]) -> Result<Formation, String> {
    let g = parse_dataset(&lines.join("\n"), &IngestOptions::default())
        .map_err(|e| e.to_string())?
        .graph;
    form_actions(&g, KindSelection::All, addresses, &ActionConfig::default()).map_err(|e| e.to_string())
}

fn permutations(items: &[String]) -> Vec<Vec<String>> {
    if items.len() <= 1 {
        return vec![items.to_vec()];
    }
    let mut out = Vec::new();
    for i in 0..items.len() {
        let mut rest = items.to_vec();
        let head = rest.remove(i);
        for mut p in permutations(&rest) {
            p.insert(0, head.clone());
            out.push(p);
        }
    }
    out
}

fn action_formation() -> Check {
    use PatternKind::*;
    let lines = formation_fixture();
    let addresses: Vec<String> = [ADDR_A, ADDR_B, ADDR_C, CONTRACT].map(String::from).to_vec();
    let f = formation_of(&lines, &addresses)?;

    let id = |names: &[&str]| ActionId::for_events(names);
    let mint = id(&["Mint"]);
    let stake = id(&["Stake", "Fee", "Bonus"]);
    let gift = id(&["Gift"]);
    let note = id(&["Gift", "Note", "Seal"]);

    let catalogue: BTreeMap<ActionId, (ActionType, Vec<String>, u64)> = f
        .catalogue
        .iter()
        .map(|a| (a.uuid.clone(), (a.action_type, a.events.clone(), a.stats.total_count)))
        .collect();
    let owned = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
    let expected: BTreeMap<ActionId, (ActionType, Vec<String>, u64)> = [
        (mint.clone(), (ActionType::Primary, owned(&["Mint"]), 2)),
        (stake.clone(), (ActionType::Primary, owned(&["Stake", "Fee", "Bonus"]), 1)),
        (gift.clone(), (ActionType::Both, owned(&["Gift"]), 2)),
        (note.clone(), (ActionType::Primary, owned(&["Gift", "Note", "Seal"]), 1)),
    ]
    .into_iter()
    .collect();
    ensure(catalogue == expected, || format!("catalogue {catalogue:?}"))?;

    let steps: Vec<(&str, u64, ActionId, Option<ActionId>, PatternKind)> = f
        .steps
        .iter()
        .map(|s| (s.address.as_str(), s.order, s.uuid.clone(), s.prev_uuid.clone(), s.pattern))
        .collect();
    let want = vec![
        (ADDR_A, 0, mint.clone(), None, AllRepeatK),
        (ADDR_A, 1, stake.clone(), Some(mint.clone()), AllRepeatKPlusBulk),
        (ADDR_B, 0, mint.clone(), None, UniqueEvents),
        (ADDR_B, 1, gift.clone(), Some(mint.clone()), UniqueEvents),
        (ADDR_C, 0, gift.clone(), None, UniqueEvents),
        (ADDR_C, 1, note.clone(), Some(gift.clone()), OneRepeatsRestOnce),
    ];
    ensure(steps == want, || format!("steps {steps:?}"))?;

    let mut permuted = 0;
    for order in permutations(&addresses) {
        ensure(formation_of(&lines, &order)? == f, || format!("address order {order:?} changes the result"))?;
        permuted += 1;
    }
    let mut reversed = lines.clone();
    reversed.reverse();
    ensure(formation_of(&reversed, &addresses)? == f, || "input line order changes the result".into())?;
    Ok(format!("4 actions incl. one Both, 6 chained steps, {permuted} address orders identical"))
}

// ---------------------------------------------------------------------------
// 3. encoder numerics

fn random_flow(rng: &mut ChaCha8Rng) -> GraphTensor {
    let n = rng.random_range(5..=12);
    let m = rng.random_range(n - 1..=2 * n);
    let x = Array2::from_shape_fn((n, D_IN_NODE), |_| gaussian(rng));
    let edges: Vec<(usize, usize)> = (0..m).map(|_| (rng.random_range(0..n), rng.random_range(0..n))).collect();
    let attr = Array2::from_shape_fn((m, D_IN_EDGE), |(i, j)| if j == 0 { i as f64 } else { rng.random::<f64>() });
    GraphTensor::new(x, edges, attr).expect("valid tensor")
}

/// Largest relative gap between analytic gradients and central differences.
fn gradient_gap(objective: &Objective, dims: Dims, seed: u64) -> f64 {
    let mut p = ModelParams::init(dims, seed);
    let mut head = ReconstructionHead::init(dims, seed);
    p.b_sage.iter_mut().enumerate().for_each(|(i, b)| *b = 0.03 * (i % 5) as f64 - 0.06);
    p.b_linear.fill(0.02);
    let (_, grad) = objective.gradient(&p, &head).expect("gradient");
    let h = 1e-6;
    let mut worst = 0.0f64;
    for block in ParamBlock::ALL {
        for (i, analytic) in grad.block(block).to_vec().into_iter().enumerate() {
            let orig = block_mut(&mut p, &mut head, block)[i];
            block_mut(&mut p, &mut head, block)[i] = orig + h;
            let up = objective.loss(&p, &head).expect("loss");
            block_mut(&mut p, &mut head, block)[i] = orig - h;
            let down = objective.loss(&p, &head).expect("loss");
            block_mut(&mut p, &mut head, block)[i] = orig;
            let numeric = (up - down) / (2.0 * h);
            worst = worst.max((analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6));
        }
    }
    worst
}

fn bits(z: &Array2<f64>) -> Vec<u64> {
    z.iter().map(|v| v.to_bits()).collect()
}

fn encoder_numerics() -> Check {
    let start = Instant::now();
    let (_, graph) = synth_graph(2, 3);
    let (_, bg) = behaviour_graph_for(&graph, &ActionConfig::default()).map_err(|e| e.to_string())?;
    let scaling = FeatureScaling::for_graph(&bg);
    let params = ModelParams::init(Dims::new(64, 32), 11);
    let mut rng = ChaCha8Rng::seed_from_u64(17);

    let mut worst_perm = 0.0f64;
    for user in eligible_users(&bg, 2) {
        let flow = extract_flow(&bg, &user, true).map_err(|e| e.to_string())?;
        let t = to_graph_tensor(&bg, &flow, &scaling).map_err(|e| e.to_string())?;
        let mut perm: Vec<usize> = (0..t.num_nodes()).collect();
        for i in (1..perm.len()).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        let a = embed_tensor(&params, &t).map_err(|e| e.to_string())?;
        let b = embed_tensor(&params, &t.permuted(&perm)).map_err(|e| e.to_string())?;
        worst_perm = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(worst_perm, f64::max);
    }
    ensure(worst_perm <= 1e-9, || format!("permutation moved an embedding by {worst_perm:e}"))?;

    let zeros = GraphTensor::new(
        Array2::zeros((4, D_IN_NODE)),
        vec![(0, 1), (1, 2), (2, 3)],
        Array2::zeros((3, D_IN_EDGE)),
    )
    .map_err(|e| e.to_string())?;
    let z = embed_tensor(&params, &zeros).map_err(|e| e.to_string())?;
    ensure(z.iter().all(|&v| v == 0.0), || format!("zero input gave {z}"))?;

    let mut worst_grad = 0.0f64;
    for case in 0..3u64 {
        let objective = Objective::new(vec![random_flow(&mut rng)], 0.3, case);
        worst_grad = worst_grad.max(gradient_gap(&objective, Dims::new(8, 4), 40 + case));
    }
    ensure(worst_grad < 1e-4, || format!("finite-difference gap {worst_grad:e}"))?;

    let (_, small) = synth_graph(5, 8);
    let (_, small_bg) = behaviour_graph_for(&small, &ActionConfig::default()).map_err(|e| e.to_string())?;
    let users = eligible_users(&small_bg, 2);
    let cfg = EmbedConfig::default();
    let in_pool = |threads: usize| -> Result<Vec<u64>, String> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| e.to_string())?;
        let run = pool
            .install(|| embed_users(&small_bg, &users, &cfg, 5))
            .map_err(|e| e.to_string())?;
        Ok(bits(&run.z))
    };
    let first = in_pool(4)?;
    ensure(in_pool(4)? == first, || "two 4-thread runs differ".into())?;
    ensure(in_pool(1)? == first, || "1-thread and 4-thread runs differ".into())?;

    let elapsed = start.elapsed();
    within(elapsed, Duration::from_secs(30))?;
    Ok(format!(
        "perm gap {worst_perm:.1e}, zero input exact, grad gap {worst_grad:.1e}, bit-stable over {} users, {elapsed:.1?}",
        users.len()
    ))
}

// ---------------------------------------------------------------------------
// 4. clustering scores

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn centroid(points: &[&[f64]]) -> Vec<f64> {
    let mut c = vec![0.0; points[0].len()];
    for p in points {
        c.iter_mut().zip(p.iter()).for_each(|(a, b)| *a += b);
    }
    c.iter().map(|v| v / points.len() as f64).collect()
}

fn members<'a>(x: &'a [Vec<f64>], labels: &[usize], c: usize) -> Vec<&'a [f64]> {
    x.iter().zip(labels).filter(|(_, &l)| l == c).map(|(p, _)| p.as_slice()).collect()
}

fn oracle_sc(x: &[Vec<f64>], labels: &[usize], k: usize) -> f64 {
    let mut total = 0.0;
    for (i, p) in x.iter().enumerate() {
        let own: Vec<f64> = (0..x.len())
            .filter(|&j| j != i && labels[j] == labels[i])
            .map(|j| dist(p, &x[j]))
            .collect();
        if own.is_empty() {
            continue;
        }
        let a = own.iter().sum::<f64>() / own.len() as f64;
        let b = (0..k)
            .filter(|&c| c != labels[i])
            .map(|c| {
                let m = members(x, labels, c);
                m.iter().map(|q| dist(p, q)).sum::<f64>() / m.len() as f64
            })
            .fold(f64::INFINITY, f64::min);
        let denom = a.max(b);
        if denom > 0.0 {
            total += (b - a) / denom;
        }
    }
    total / x.len() as f64
}

fn oracle_dbi(x: &[Vec<f64>], labels: &[usize], k: usize) -> f64 {
    let cents: Vec<Vec<f64>> = (0..k).map(|c| centroid(&members(x, labels, c))).collect();
    let scatter: Vec<f64> = (0..k)
        .map(|c| {
            let m = members(x, labels, c);
            m.iter().map(|p| dist(p, &cents[c])).sum::<f64>() / m.len() as f64
        })
        .collect();
    let mut sum = 0.0;
    for i in 0..k {
        let mut worst = f64::NEG_INFINITY;
        for j in (0..k).filter(|&j| j != i) {
            worst = worst.max((scatter[i] + scatter[j]) / dist(&cents[i], &cents[j]));
        }
        sum += worst;
    }
    sum / k as f64
}

fn oracle_chi(x: &[Vec<f64>], labels: &[usize], k: usize) -> f64 {
    let all: Vec<&[f64]> = x.iter().map(Vec::as_slice).collect();
    let overall = centroid(&all);
    let (mut between, mut within) = (0.0, 0.0);
    for c in 0..k {
        let m = members(x, labels, c);
        let cent = centroid(&m);
        between += m.len() as f64 * dist(&cent, &overall).powi(2);
        within += m.iter().map(|p| dist(p, &cent).powi(2)).sum::<f64>();
    }
    between / (k - 1) as f64 / (within / (x.len() - k) as f64)
}

fn clustering_scores() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut worst = 0.0f64;
    for case in 0..20 {
        let k = rng.random_range(2..=5);
        let n = rng.random_range(k + 2..=50);
        let d = rng.random_range(1..=5);
        let mut labels: Vec<usize> = (0..n).map(|i| i % k).collect();
        for i in (1..n).rev() {
            labels.swap(i, rng.random_range(0..=i));
        }
        let x: Vec<Vec<f64>> = labels
            .iter()
            .map(|&l| (0..d).map(|_| 2.0 * l as f64 + gaussian(&mut rng)).collect())
            .collect();
        let data = Array2::from_shape_fn((n, d), |(i, j)| x[i][j]);
        let pairs = [
            (silhouette(data.view(), &labels), oracle_sc(&x, &labels, k), "SC"),
            (davies_bouldin(data.view(), &labels), oracle_dbi(&x, &labels, k), "DBI"),
            (calinski_harabasz(data.view(), &labels), oracle_chi(&x, &labels, k), "CHI"),
        ];
        for (got, want, name) in pairs {
            let got = got.map_err(|e| format!("case {case} {name}: {e}"))?;
            let gap = (got - want).abs() / want.abs().max(1.0);
            ensure(gap <= 1e-9, || format!("case {case} {name}: {got} vs oracle {want}"))?;
            worst = worst.max(gap);
        }
    }

    let pairs = Array2::from_shape_vec((4, 1), vec![0.0, 0.1, 10.0, 10.1]).map_err(|e| e.to_string())?;
    let sc = silhouette(pairs.view(), &[0, 0, 1, 1]).map_err(|e| e.to_string())?;
    ensure((sc - 0.990).abs() <= 0.001, || format!("two-pair SC {sc}"))?;

    let line = Array2::from_shape_vec((4, 1), vec![0.0, 1.0, 10.0, 11.0]).map_err(|e| e.to_string())?;
    let fit = kmeans(line.view(), 2, 0, &KMeansParams::default()).map_err(|e| e.to_string())?;
    ensure(fit.inertia == 1.0, || format!("k-means inertia {}", fit.inertia))?;
    Ok(format!("20 datasets within {worst:.1e}, two-pair SC {sc:.4}, inertia {}", fit.inertia))
}

// ---------------------------------------------------------------------------
// 5. elbow

fn elbow_selection() -> Check {
    let k = elbow_from_inertias(&[100.0, 50.0, 20.0, 18.0, 17.0, 16.0]).map_err(|e| e.to_string())?;
    ensure(k == 3, || format!("profile gave k = {k}"))?;
    let mut summary = Vec::new();
    for planted in [3usize, 6] {
        let mut hits = 0;
        for seed in 0..10u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(7_000 + seed);
            let mut centres: Vec<Vec<f64>> = Vec::new();
            while centres.len() < planted {
                let c: Vec<f64> = (0..32).map(|_| rng.random_range(-20.0..20.0)).collect();
                if centres.iter().all(|o| dist(o, &c) > 8.0) {
                    centres.push(c);
                }
            }
            let per = 20;
            let data =
                Array2::from_shape_fn((planted * per, 32), |(i, j)| centres[i / per][j] + 0.8 * gaussian(&mut rng));
            let found = elbow(data.view(), 12, seed, &KMeansParams::default()).map_err(|e| e.to_string())?;
            hits += usize::from(found.k == planted);
        }
        ensure(hits >= 9, || format!("planted k = {planted} recovered on {hits}/10 seeds"))?;
        summary.push(format!("k={planted}: {hits}/10"));
    }
    Ok(format!("profile knee 3, blobs {}", summary.join(", ")))
}

// ---------------------------------------------------------------------------
// 6. recovery of planted archetypes

fn contingency_ari(a: &[usize], b: &[usize]) -> f64 {
    let pairs = |n: usize| (n * n.saturating_sub(1) / 2) as f64;
    let mut table: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut rows: BTreeMap<usize, usize> = BTreeMap::new();
    let mut cols: BTreeMap<usize, usize> = BTreeMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1;
        *rows.entry(x).or_default() += 1;
        *cols.entry(y).or_default() += 1;
    }
    let index: f64 = table.values().map(|&c| pairs(c)).sum();
    let row: f64 = rows.values().map(|&c| pairs(c)).sum();
    let col: f64 = cols.values().map(|&c| pairs(c)).sum();
    let expected = row * col / pairs(a.len());
    let max = (row + col) / 2.0;
    if max == expected {
        return 1.0;
    }
    (index - expected) / (max - expected)
}

fn archetype_recovery() -> Check {
    let start = Instant::now();
    let (synth, graph) = synth_graph(30, 42);
    let (_, bg) = behaviour_graph_for(&graph, &ActionConfig::default()).map_err(|e| e.to_string())?;
    let users = eligible_users(&bg, 2);
    ensure(users.len() == 180, || format!("{} eligible users", users.len()))?;
    let run = embed_users(&bg, &users, &EmbedConfig::default(), 42).map_err(|e| e.to_string())?;
    let params = KMeansParams::default();
    let k = elbow(run.z.view(), 12, 42, &params).map_err(|e| e.to_string())?.k;
    let labels = kmeans(run.z.view(), k, 42, &params).map_err(|e| e.to_string())?.labels;
    let truth: Vec<usize> = users.iter().map(|u| synth.truth.assignment[u]).collect();
    let ari = contingency_ari(&labels, &truth);

    let report = profile_clusters(&bg, &users, &labels, &ProfileParams::default()).map_err(|e| e.to_string())?;
    let label_of: BTreeMap<usize, ActivityLabel> = report.profiles.iter().map(|p| (p.cluster_id, p.label)).collect();
    let mut recovered = 0;
    for (archetype, planted) in synth.truth.labels.iter().enumerate() {
        let mut votes: BTreeMap<usize, usize> = BTreeMap::new();
        for (l, t) in labels.iter().zip(&truth) {
            if *t == archetype {
                *votes.entry(*l).or_default() += 1;
            }
        }
        let home = votes.iter().max_by_key(|(c, n)| (**n, std::cmp::Reverse(**c))).map(|(c, _)| *c);
        recovered += usize::from(home.is_some() && planted.is_some() && label_of.get(&home.unwrap()) == planted.as_ref());
    }
    let elapsed = start.elapsed();
    ensure(ari >= 0.8, || format!("ARI {ari:.3} with k = {k}"))?;
    ensure(recovered >= 4, || format!("{recovered}/6 planted labels with k = {k}"))?;
    within(elapsed, Duration::from_secs(120))?;
    Ok(format!("k = {k}, ARI {ari:.3}, {recovered}/6 planted labels, {elapsed:.1?}"))
}

// ---------------------------------------------------------------------------
// 7. asset usage and NFT distribution

/// Fewest nodes whose combined usage reaches `beta` of the total, found by
/// trying every subset.
fn oracle_phi(x: &[usize], beta: f64) -> usize {
    let total: usize = x.iter().sum();
    let mut best = x.len();
    for mask in 1u32..1 << x.len() {
        let sum: usize = (0..x.len()).filter(|i| mask >> i & 1 == 1).map(|i| x[i]).sum();
        if sum as f64 >= beta * total as f64 {
            best = best.min(mask.count_ones() as usize);
        }
    }
    best
}

fn usage_measures() -> Check {
    let exact = |got: f64, want: f64, what: &str| ensure(got == want, || format!("{what}: {got}, expected {want}"));
    exact(rho(&[2, 0, 1, 0]).map_err(|e| e.to_string())?, 0.5, "rho [2,0,1,0]")?;
    exact(rho(&[0, 0, 0]).map_err(|e| e.to_string())?, 0.0, "rho without usage")?;
    ensure(phi(&[5, 3, 2], 0.6).value == 2, || "phi [5,3,2]".into())?;
    ensure(phi(&[0, 9, 0, 0], 0.6).value == 1, || "phi on one node".into())?;
    ensure(phi(&[0, 0], 0.6).no_usage, || "phi without usage is not flagged".into())?;
    for m in 1..=20usize {
        let want = (6 * m).div_ceil(10);
        for c in [1usize, 3, 7] {
            let got = phi(&vec![c; m], 0.6).value;
            ensure(got == want, || format!("uniform x = {c} over {m} nodes: {got}, expected {want}"))?;
        }
    }

    let p = ProfileParams::default();
    let facts = |rho: f64, phi: usize, time: TimeBand, most_tickets: bool| LabelFacts {
        rho,
        phi: Phi { value: phi, no_usage: false },
        time,
        most_tickets,
    };
    let examples = [
        (facts(0.50, 3, TimeBand::High, false), ActivityLabel::Active),
        (facts(0.33, 1, TimeBand::Low, true), ActivityLabel::InactiveWithInterest),
        (facts(0.50, 2, TimeBand::Low, false), ActivityLabel::Dropout),
    ];
    for (f, want) in examples {
        let got = label_cluster(&f, &p);
        ensure(got == want, || format!("{f:?}: {got}, expected {want}"))?;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(200);
    for case in 0..200 {
        let m = rng.random_range(1..=9);
        let mut x: Vec<usize> = (0..m).map(|_| rng.random_range(0..8)).collect();
        if x.iter().all(|&v| v == 0) {
            x[0] = 1;
        }
        let (b1, b2): (f64, f64) = (rng.random_range(0.01..1.0), rng.random_range(0.01..1.0));
        let (lo, hi) = (b1.min(b2), b1.max(b2));
        let (p_lo, p_hi) = (phi(&x, lo).value, phi(&x, hi).value);
        ensure(p_lo == oracle_phi(&x, lo) && p_hi == oracle_phi(&x, hi), || {
            format!("case {case}: x = {x:?}, phi({lo}) = {p_lo}, phi({hi}) = {p_hi}")
        })?;
        ensure(p_lo <= p_hi, || format!("case {case}: phi not monotone in beta for {x:?}"))?;
    }
    Ok("worked examples exact, 200 random cases agree and are monotone".into())
}

// ---------------------------------------------------------------------------
// 8. persistence and command line

fn run_cli(args: &[&str]) -> Result<i32, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_chainflow"))
        .args(args)
        .env_remove(chainflow::config::SEED_ENV)
        .output()
        .map_err(|e| e.to_string())?;
    out.status.code().ok_or_else(|| "terminated by signal".to_string())
}

fn path(p: &Path) -> &str {
    p.to_str().expect("utf-8 temp path")
}

fn persistence_and_cli() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let root = dir.path();
    let (synth, graph) = synth_graph(5, 21);

    save_graph(&graph, &root.join("g")).map_err(|e| e.to_string())?;
    let back = load_graph(&root.join("g")).map_err(|e| e.to_string())?;
    ensure(back.transactions() == graph.transactions(), || "transactions differ after reload".into())?;
    ensure(back.counts() == graph.counts() && back.nodes() == graph.nodes(), || "graph shape differs after reload".into())?;
    let links = |g: &PropertyGraph| g.same_value_links().collect::<BTreeSet<_>>();
    ensure(links(&back) == links(&graph), || "SAME_VALUE links differ after reload".into())?;

    let (_, bg) = behaviour_graph_for(&graph, &ActionConfig::default()).map_err(|e| e.to_string())?;
    save_bgraph(&bg, &root.join("bg")).map_err(|e| e.to_string())?;
    let bg2 = load_bgraph(&root.join("bg")).map_err(|e| e.to_string())?;
    ensure(
        bg2.users() == bg.users()
            && bg2.actions() == bg.actions()
            && bg2.nfts() == bg.nfts()
            && bg2.next_step_edges() == bg.next_step_edges()
            && bg2.used_by_edges() == bg.used_by_edges(),
        || "behaviour graph differs after reload".into(),
    )?;

    let users = eligible_users(&bg, 2);
    let cfg = EmbedConfig {
        untrained: true,
        ..Default::default()
    };
    let run = embed_users(&bg, &users, &cfg, 1).map_err(|e| e.to_string())?;
    write_embeddings(&root.join("e.csv"), &run.addresses, &run.z).map_err(|e| e.to_string())?;
    let (addrs, z) = read_embeddings(&root.join("e.csv")).map_err(|e| e.to_string())?;
    ensure(addrs == run.addresses && bits(&z) == bits(&run.z), || "embeddings differ after reload".into())?;

    let table = ClusterTable {
        addresses: users.clone(),
        columns: vec![("kmeans".into(), (0..users.len()).map(|i| i % 3).collect())],
    };
    write_clusters(&root.join("c.csv"), &table).map_err(|e| e.to_string())?;
    ensure(read_clusters(&root.join("c.csv")).map_err(|e| e.to_string())? == table, || "clusters differ after reload".into())?;

    let mut pc = PipelineConfig::default();
    pc.set("cluster.k = 4").map_err(|e| e.to_string())?;
    ensure(PipelineConfig::from_toml(&pc.to_toml()).map_err(|e| e.to_string())? == pc, || "config differs after reload".into())?;

    let data = root.join("synth.jsonl");
    synth.write(&data).map_err(|e| e.to_string())?;
    let (a, b) = (root.join("run_a"), root.join("run_b"));
    for out in [&a, &b] {
        let code = run_cli(&["pipeline", "--input", path(&data), "--out", path(out), "--seed", "9"])?;
        ensure(code == 0, || format!("pipeline exited {code}"))?;
    }
    let manifest = |d: &Path| std::fs::read(d.join("manifest.json")).map_err(|e| e.to_string());
    ensure(manifest(&a)? == manifest(&b)?, || "reruns wrote different manifests".into())?;

    let missing = run_cli(&["pipeline", "--input", path(&root.join("absent.jsonl")), "--out", path(&root.join("x"))])?;
    let bad_config = run_cli(&["--set", "embed.width=3", "pipeline", "--input", path(&data), "--out", path(&root.join("y"))])?;
    let blocked = run_cli(&["pipeline", "--input", path(&data), "--out", path(&data.join("under_a_file"))])?;
    ensure((missing, bad_config, blocked) == (1, 2, 3), || {
        format!("exit codes {missing}/{bad_config}/{blocked}, expected 1/2/3")
    })?;
    Ok("graph, behaviour graph, embeddings, clusters and config round-trip; reruns identical; exits 1/2/3".into())
}

fn main() {
    let criteria: [(&str, fn() -> Check); 8] = [
        ("pattern classifier", pattern_classifier),
        ("action formation", action_formation),
        ("encoder numerics", encoder_numerics),
        ("clustering scores", clustering_scores),
        ("elbow selection", elbow_selection),
        ("archetype recovery", archetype_recovery),
        ("usage measures", usage_measures),
        ("persistence and cli", persistence_and_cli),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        match std::panic::catch_unwind(check) {
            Ok(Ok(detail)) => println!("acceptance {} {name}: PASS ({detail})", i + 1),
            Ok(Err(why)) => {
                failed += 1;
                println!("acceptance {} {name}: FAIL ({why})", i + 1);
            }
            Err(_) => {
                failed += 1;
                println!("acceptance {} {name}: FAIL (panicked)", i + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} of {} acceptance criteria failed", criteria.len());
        std::process::exit(1);
    }
    println!("all {} acceptance criteria passed", criteria.len());
}
