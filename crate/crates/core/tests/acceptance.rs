//! Acceptance criteria. Each test prints one PASS/FAIL line straight to
//! stdout (bypassing capture) and then asserts the same condition.

mod common;

use std::io::Write;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, Matrix3, Rotation3, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use segmatch_core::alignment::{
    align_maps, densest_consistent_set, exact_consistent_oracle, AlignmentHypothesis, AlignmentParams,
    ConsistencyProblem, PutativeAssociation,
};
use segmatch_core::evaluation::{bench_search, precision_recall, BenchRow, PRCurve};
use segmatch_core::geometry::{project, Pose};
use segmatch_core::persistence::map_file::header_len;
use segmatch_core::persistence::{decode_map, encode_map};
use segmatch_core::reconstruction::{triangulate, MapObject, ReconstructionParams, ReprojectionCost, VehicleMap, View};
use segmatch_core::simulator::SeasonModel;
use segmatch_core::tracker::assignment::hungarian;
use segmatch_core::tracker::scoring::size_score_from_difference;
use segmatch_core::tracker::{
    feature_score, relative_size_difference, similarity, size_score, vio_shift_gate, ScoreMatrix,
};

const SEED: u64 = 5;
/// Thresholds swept to trace the precision/recall curve.
const SWEEP: std::ops::RangeInclusive<usize> = 0..=50;

fn report(n: u32, title: &str, pass: bool, detail: &str) -> bool {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let line = format!("criterion {n:>2} [{title}]: {verdict} ({detail})\n");
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(line.as_bytes());
    let _ = out.flush();
    pass
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12
}

#[test]
fn criterion_01_formula_fidelity() {
    let start = Instant::now();
    let origin = Vector2::new(100.0, 50.0);
    let along = |d: f64| origin + Vector2::new(0.6, 0.8) * d;
    let (mu, sigma) = (12.0, 2.0);
    let mut failures = Vec::new();
    let mut check = |name: &str, ok: bool| {
        if !ok {
            failures.push(name.to_owned());
        }
    };

    check("shift equal to mean passes", vio_shift_gate(&origin, &along(mu), mu, sigma, 4.0));
    check("shift 4.1 sigma above fails", !vio_shift_gate(&origin, &along(mu + 4.1 * sigma), mu, sigma, 4.0));
    check("shift 3.9 sigma below passes", vio_shift_gate(&origin, &along(mu - 3.9 * sigma), mu, sigma, 4.0));

    check("equal sizes differ by 0", close(relative_size_difference(7.5, 7.5).unwrap(), 0.0));
    check("sizes 1 and 3 differ by 1", close(relative_size_difference(1.0, 3.0).unwrap(), 1.0));
    for k in [0.5, 3.0, 1e3] {
        let base = relative_size_difference(2.0, 5.0).unwrap();
        check("scale invariance", close(relative_size_difference(2.0 * k, 5.0 * k).unwrap(), base));
    }
    check("non-positive sizes rejected", relative_size_difference(0.0, 0.0).is_err());

    let h_lim = 0.2;
    check("size score at r = 0", close(size_score(4.0, 4.0, h_lim).unwrap(), 2.0));
    check("size score at r = h_lim/2", close(size_score_from_difference(h_lim / 2.0, h_lim), 1.0));
    check("size score at r = h_lim", size_score_from_difference(h_lim, h_lim) == 0.0);
    // Sizes 1 and 21/19 differ by 0.1 up to rounding.
    check("size score from sizes", close(size_score(1.0, 21.0 / 19.0, h_lim).unwrap(), 1.0));

    check("similarity (2, 0.5)", close(similarity(2.0, 0.5), 1.0));
    check("similarity (0, x)", similarity(0.0, 0.7) == 0.0);
    check("similarity (2, 1)", close(similarity(2.0, 1.0), 2f64.sqrt()));

    let basis: Vec<Vec<f64>> = (0..4).map(|k| (0..4).map(|d| if d == k { 10.0 } else { 0.0 }).collect()).collect();
    check("identical separated descriptors", close(feature_score(&basis, &basis, 0.75).unwrap(), 1.0));
    check("empty descriptor sets", close(feature_score(&[], &[], 0.75).unwrap(), 1.0));
    // Two distinct queries, and two whose nearest pair sits at equal
    // distance: half of the smaller set passes.
    let pool = vec![vec![0.0, 0.0], vec![10.0, 0.0], vec![0.0, 10.0], vec![0.0, 10.2]];
    let queries = vec![vec![0.1, 0.0], vec![9.9, 0.0], vec![0.0, 10.1], vec![0.05, 10.1]];
    check("half the queries pass", close(feature_score(&queries, &pool, 0.75).unwrap(), 0.5));

    let elapsed = start.elapsed();
    let pass = failures.is_empty() && elapsed < Duration::from_secs(1);
    let detail = format!("{} failed checks {:?}, {:.3} s", failures.len(), failures, elapsed.as_secs_f64());
    assert!(report(1, "formula fidelity", pass, &detail), "{detail}");
}

/// Best total over every partial matching, by enumeration.
fn assignment_oracle(m: &ScoreMatrix) -> f64 {
    fn rec(m: &ScoreMatrix, row: usize, used: &mut Vec<bool>, acc: f64, best: &mut f64) {
        if row == m.rows() {
            *best = best.max(acc);
            return;
        }
        rec(m, row + 1, used, acc, best);
        for c in 0..m.cols() {
            if !used[c] && m.get(row, c) > f64::NEG_INFINITY {
                used[c] = true;
                rec(m, row + 1, used, acc + m.get(row, c), best);
                used[c] = false;
            }
        }
    }
    let mut best = 0.0;
    rec(m, 0, &mut vec![false; m.cols()], 0.0, &mut best);
    best
}

#[test]
fn criterion_02_assignment_oracle() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut mismatches = 0;
    for _ in 0..1000 {
        let (rows, cols) = (rng.random_range(1..=6), rng.random_range(1..=6));
        let mut m = ScoreMatrix::infeasible(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                if rng.random_bool(0.8) {
                    // Multiples of 1/64 add exactly, so totals compare bit for bit.
                    m.set(r, c, rng.random_range(0..=128) as f64 / 64.0);
                }
            }
        }
        let pairs = hungarian(&m);
        let mut cols_used = vec![false; cols];
        let valid = pairs.iter().all(|&(r, c)| m.is_feasible(r, c) && !std::mem::replace(&mut cols_used[c], true));
        if !valid || m.total(&pairs) != assignment_oracle(&m) {
            mismatches += 1;
        }
    }
    let elapsed = start.elapsed();
    let pass = mismatches == 0 && elapsed < Duration::from_secs(10);
    let detail = format!("{mismatches} of 1000 matrices differ from enumeration, {:.2} s", elapsed.as_secs_f64());
    assert!(report(2, "assignment oracle", pass, &detail), "{detail}");
}

/// A camera at `center` looking at `target` with a random roll.
fn looking_at(center: Vector3<f64>, target: Vector3<f64>, roll: f64) -> Pose {
    let z = (target - center).normalize();
    let helper = if z.z.abs() < 0.9 { Vector3::z() } else { Vector3::x() };
    let x = helper.cross(&z).normalize();
    let y = z.cross(&x);
    let base = Matrix3::from_columns(&[x, y, z]);
    let spin = Rotation3::from_axis_angle(&Vector3::z_axis(), roll).into_inner();
    Pose::new(base * spin, center).unwrap()
}

#[test]
fn criterion_03_triangulation() {
    let start = Instant::now();
    let intr = common::intrinsics();
    let params = ReconstructionParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut worst_err: f64 = 0.0;
    let mut worst_rel: f64 = 0.0;
    let mut failures = 0;
    for _ in 0..100 {
        let landmark = Vector3::new(rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0), rng.random_range(0.0..10.0));
        let n = rng.random_range(5..=12);
        let altitude = rng.random_range(40.0..120.0);
        let views: Vec<View> = (0..n)
            .map(|k| {
                let center = landmark
                    + Vector3::new(-30.0 + 60.0 * k as f64 / n as f64, rng.random_range(-10.0..10.0), altitude);
                let pose = looking_at(center, landmark + Vector3::new(rng.random_range(-5.0..5.0), 0.0, 0.0), rng.random_range(-0.3..0.3));
                View { pose, centroid: project(&pose, &intr, &landmark).unwrap() }
            })
            .collect();
        match triangulate(&views, &intr, &params) {
            Ok(p) => worst_err = worst_err.max((p - landmark).norm()),
            Err(_) => failures += 1,
        }

        // Gradient at a point away from the optimum, against noisy centroids.
        let noisy: Vec<View> = views
            .iter()
            .map(|v| View { centroid: v.centroid + Vector2::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)), ..*v })
            .collect();
        let cost = ReprojectionCost { views: &noisy, intr: &intr, sigma_px: params.sigma_px };
        let at = landmark + Vector3::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
        let g = cost.gradient(&at).unwrap();
        let h = 1e-5;
        let fd = Vector3::from_fn(|k, _| {
            let mut step = Vector3::zeros();
            step[k] = h;
            (cost.cost(&(at + step)).unwrap() - cost.cost(&(at - step)).unwrap()) / (2.0 * h)
        });
        worst_rel = worst_rel.max((g - fd).norm() / g.norm());
    }
    let elapsed = start.elapsed();
    let pass = failures == 0 && worst_err < 1e-6 && worst_rel < 1e-4 && elapsed < Duration::from_secs(10);
    let detail = format!(
        "max landmark error {worst_err:.2e} m, {failures} failed solves, max gradient relative error {worst_rel:.2e}, {:.2} s",
        elapsed.as_secs_f64()
    );
    assert!(report(3, "triangulation", pass, &detail), "{detail}");
}

fn problem(weights: &[f64], edges: &[(usize, usize, f64)]) -> ConsistencyProblem {
    let n = weights.len();
    let mut m = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(weights));
    for &(a, b, v) in edges {
        m[(a, b)] = v;
        m[(b, a)] = v;
    }
    let assocs = (0..n).map(|k| PutativeAssociation { idx_i: k, idx_j: k, weight: weights[k] }).collect();
    ConsistencyProblem::from_dense(assocs, &m)
}

/// Highest `xᵀMx / xᵀx` over compatible subsets, by enumerating bitmasks.
fn densest_by_enumeration(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut best: f64 = 0.0;
    'mask: for mask in 1u32..(1 << n) {
        let nodes: Vec<usize> = (0..n).filter(|&k| mask & (1 << k) != 0).collect();
        let mut total = 0.0;
        for &a in &nodes {
            for &b in &nodes {
                if a != b && m[(a, b)] <= 0.0 {
                    continue 'mask;
                }
                total += m[(a, b)];
            }
        }
        best = best.max(total / nodes.len() as f64);
    }
    best
}

#[test]
fn criterion_04_association_oracle() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut worst_ratio: f64 = 1.0;
    let mut below = 0;
    for _ in 0..500 {
        let n = rng.random_range(1..=12);
        let weights: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..=2.0)).collect();
        let density = rng.random_range(0.2..0.9);
        let mut edges = Vec::new();
        for a in 0..n {
            for b in a + 1..n {
                if rng.random_bool(density) {
                    edges.push((a, b, rng.random_range(0.01..=1.0)));
                }
            }
        }
        let p = problem(&weights, &edges);
        let got = densest_consistent_set(&p, 1000, 1e-9);
        let optimum = densest_by_enumeration(&p.to_dense());
        let ratio = if p.is_compatible(&got) { p.objective(&got) / optimum } else { 0.0 };
        worst_ratio = worst_ratio.min(ratio);
        if ratio < 0.9 {
            below += 1;
        }
    }

    let mut clique_mismatch = 0;
    for _ in 0..200 {
        let n = rng.random_range(2..=12);
        let k = rng.random_range(2..=n);
        let mut nodes: Vec<usize> = (0..n).collect();
        for i in 0..n {
            nodes.swap(i, rng.random_range(i..n));
        }
        let mut members = nodes[..k].to_vec();
        members.sort_unstable();
        let weights: Vec<f64> = (0..n).map(|v| if members.contains(&v) { 1.0 } else { rng.random_range(0.05..=1.0) }).collect();
        let mut edges = Vec::new();
        for (x, &a) in members.iter().enumerate() {
            for &b in &members[x + 1..] {
                edges.push((a, b, 1.0));
            }
        }
        let p = problem(&weights, &edges);
        let got = densest_consistent_set(&p, 1000, 1e-9);
        if got != members || exact_consistent_oracle(&p).unwrap() != members {
            clique_mismatch += 1;
        }
    }
    let elapsed = start.elapsed();
    let pass = below == 0 && clique_mismatch == 0 && elapsed < Duration::from_secs(60);
    let detail = format!(
        "worst objective ratio {worst_ratio:.4} ({below} of 500 below 0.9), {clique_mismatch} of 200 single-clique mismatches, {:.2} s",
        elapsed.as_secs_f64()
    );
    assert!(report(4, "association oracle", pass, &detail), "{detail}");
}

struct Run {
    a: VehicleMap,
    b: VehicleMap,
    hyps: Vec<AlignmentHypothesis>,
    curve: PRCurve,
    elapsed: Duration,
}

fn run(season: Option<SeasonModel>) -> Run {
    let start = Instant::now();
    let sc = common::same_world(SEED, season);
    let hyps = align_maps(&sc.a.map, &sc.b.map, &AlignmentParams::default()).unwrap();
    let thresholds: Vec<usize> = SWEEP.collect();
    let curve = precision_recall(&common::scored(&hyps), &sc.labels, &thresholds).unwrap();
    Run { a: sc.a.map, b: sc.b.map, hyps, curve, elapsed: start.elapsed() }
}

fn same_world_run() -> &'static Run {
    static RUN: OnceLock<Run> = OnceLock::new();
    RUN.get_or_init(|| run(None))
}

#[test]
fn criterion_05_same_world_localization() {
    let r = same_world_run();
    let recall = r.curve.recall_at_precision(0.95);
    let pass = recall >= 0.9 && r.elapsed < Duration::from_secs(300);
    let detail = format!(
        "recall {recall:.3} at precision >= 0.95 (target >= 0.9), average F1 {:.3}, {} window pairs, {:.1} s",
        r.curve.average_f1(),
        r.hyps.len(),
        r.elapsed.as_secs_f64()
    );
    assert!(report(5, "same-world localization", pass, &detail), "{detail}");
}

#[test]
fn criterion_06_seasonal_robustness() {
    let base = same_world_run().curve.recall_at_precision(0.95);
    let season = SeasonModel { dropout_frac: 0.3, size_scale_sigma: 0.1, spawn_frac: 0.0 };
    let r = run(Some(season));
    let recall = r.curve.recall_at_precision(0.95);
    let degradation = if base > 0.0 { 1.0 - recall / base } else { 1.0 };
    let pass = base > 0.0 && degradation < 0.5;
    let detail = format!(
        "recall {recall:.3} vs {base:.3} without season change, relative degradation {:.1}% (limit 50%), {:.1} s",
        100.0 * degradation,
        r.elapsed.as_secs_f64()
    );
    assert!(report(6, "seasonal robustness", pass, &detail), "{detail}");
}

#[test]
fn criterion_07_negative_control() {
    let start = Instant::now();
    let params = AlignmentParams { s_lim: 5, ..AlignmentParams::default() };
    let mut accepted = Vec::new();
    let mut pairs = 0;
    for k in 0..10u64 {
        let (a, b) = common::different_worlds(100 + 17 * k);
        let hyps = align_maps(&a.map, &b.map, &params).unwrap();
        pairs += hyps.len();
        accepted.push(hyps.iter().filter(|h| h.accepted).count());
    }
    let total: usize = accepted.iter().sum();
    let detail = format!(
        "{total} accepted of {pairs} window pairs over 10 seeds (per seed {accepted:?}), {:.1} s",
        start.elapsed().as_secs_f64()
    );
    assert!(report(7, "negative control", total == 0, &detail), "{detail}");
}

#[test]
fn criterion_08_compactness() {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let objects: Vec<MapObject> = (0..1000u64)
        .map(|k| MapObject {
            position: Vector3::new(5.0 * k as f64, rng.random_range(-35.0..35.0), rng.random_range(-1.0..1.0)),
            size_m: rng.random_range(1.0..10.0),
            track_len: rng.random_range(5..60),
            source_keyframes: (2 * k, 2 * k + 30),
        })
        .collect();
    let map = VehicleMap::new("odom_a", objects);
    let bytes = encode_map(&map).unwrap();
    let expected = header_len("odom_a".len()) + 26 * 1000 + 4;
    let round_trip = decode_map(&bytes).map(|m| m.len() == 1000).unwrap_or(false);
    let pass = bytes.len() == expected && (bytes.len() as f64) < 0.03e6 && round_trip;
    let detail = format!("{} bytes for 1000 objects (expected {expected}, limit 30000)", bytes.len());
    assert!(report(8, "compactness", pass, &detail), "{detail}");
}

fn bench_maps() -> (VehicleMap, VehicleMap) {
    let sc = common::same_world(SEED + 1, None);
    let first = |m: &VehicleMap| VehicleMap::new(m.frame_id.clone(), m.objects[..1000].to_vec());
    (first(&sc.a.map), first(&sc.b.map))
}

#[test]
fn criterion_09_search_time_scaling() {
    let start = Instant::now();
    let (a, b) = bench_maps();
    let base = AlignmentParams::default();
    let stride = bench_search(&a, &b, &[50], &[10, 20], 5, 1, &base).unwrap();
    let length = bench_search(&a, &b, &[25, 100], &[20], 5, 1, &base).unwrap();
    let find = |rows: &[BenchRow], wl: usize, sl: usize| rows.iter().find(|r| r.wl == wl && r.sl == sl).unwrap().mean_s;
    let ratio = find(&stride, 50, 20) / find(&stride, 50, 10);
    let by_wl = [find(&length, 25, 20), find(&stride, 50, 20), find(&length, 100, 20)];
    let increasing = by_wl.windows(2).all(|w| w[1] > w[0]);
    let elapsed = start.elapsed();
    let pass = (0.2..=0.35).contains(&ratio) && increasing && elapsed < Duration::from_secs(600);
    let detail = format!(
        "SL 10 -> 20 time ratio {ratio:.3} (target 0.2..0.35); WL 25/50/100 at SL 20: {:.3}/{:.3}/{:.3} s; {:.0} s total",
        by_wl[0],
        by_wl[1],
        by_wl[2],
        elapsed.as_secs_f64()
    );
    assert!(report(9, "search-time scaling", pass, &detail), "{detail}");
}

#[test]
fn criterion_10_nested_acceptance() {
    let r = same_world_run();
    let accepted = |s: usize| -> Vec<(usize, usize)> {
        r.hyps.iter().filter(|h| h.accepted_at(s)).map(|h| (h.offset_i, h.offset_j)).collect()
    };
    let mut violations = 0;
    for s in SWEEP.take(SWEEP.count() - 1) {
        let (loose, strict) = (accepted(s), accepted(s + 1));
        if !strict.iter().all(|p| loose.binary_search(p).is_ok()) {
            violations += 1;
        }
    }
    // The flag set inside the search follows the same rule for any s_lim.
    let prefix = |m: &VehicleMap| VehicleMap::new(m.frame_id.clone(), m.objects[..300].to_vec());
    let (a, b) = (prefix(&r.a), prefix(&r.b));
    let flags_agree = [3, 7].iter().all(|&s_lim| {
        let params = AlignmentParams { s_lim, ..AlignmentParams::default() };
        align_maps(&a, &b, &params).unwrap().iter().all(|h| h.accepted == h.accepted_at(s_lim))
    });
    let pass = violations == 0 && flags_agree;
    let detail = format!("{violations} subset violations over thresholds {}..{}", SWEEP.start(), SWEEP.end());
    assert!(report(10, "nested acceptance", pass, &detail), "{detail}");
}
