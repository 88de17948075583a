//! Oracle-equivalence suites: each production solver in a registry is run
//! against the exhaustive solver registered next to it on random problems.

use anyhow::anyhow;
use nalgebra::{DMatrix, DVector, Matrix3, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use segmatch_core::alignment::{builtin_consistency_solvers, ConsistencyProblem, PutativeAssociation};
use segmatch_core::geometry::{project, CameraIntrinsics, Pose};
use segmatch_core::reconstruction::{ReprojectionCost, View};
use segmatch_core::tracker::assignment::builtin_assignment_solvers;
use segmatch_core::tracker::ScoreMatrix;

use crate::Failure;

type Suite = fn(&mut ChaCha8Rng) -> anyhow::Result<Outcome>;

struct Outcome {
    failures: usize,
    detail: String,
}

/// Hungarian against enumeration of every partial matching.
fn assignment(rng: &mut ChaCha8Rng) -> anyhow::Result<Outcome> {
    let reg = builtin_assignment_solvers();
    let (fast, oracle) = (reg.get("hungarian")?, reg.get("brute-force")?);
    let mut failures = 0;
    for _ in 0..1000 {
        let (rows, cols) = (rng.random_range(1..=6), rng.random_range(1..=6));
        let mut m = ScoreMatrix::infeasible(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                if rng.random_bool(0.8) {
                    // Dyadic scores sum exactly, so totals compare bit for bit.
                    m.set(r, c, rng.random_range(0..=128) as f64 / 64.0);
                }
            }
        }
        if m.total(&fast.solve(&m)?) != m.total(&oracle.solve(&m)?) {
            failures += 1;
        }
    }
    Ok(Outcome { failures, detail: format!("{failures} of 1000 matrices differ") })
}

/// Spectral solver against branch-and-bound: within 0.9 of the optimum on
/// random graphs, identical on single cliques.
fn consistency(rng: &mut ChaCha8Rng) -> anyhow::Result<Outcome> {
    let reg = builtin_consistency_solvers(1000, 1e-9);
    let (fast, oracle) = (reg.get("spectral")?, reg.get("exact")?);
    let mut below = 0;
    let mut worst: f64 = 1.0;
    for _ in 0..500 {
        let n = rng.random_range(1..=12);
        let density = rng.random_range(0.2..0.9);
        let p = random_problem(rng, n, |rng, _, _| rng.random_bool(density).then(|| rng.random_range(0.01..=1.0)));
        let got = fast.solve(&p)?;
        let best = oracle.solve(&p)?;
        let ratio = if p.is_compatible(&got) { p.objective(&got) / p.objective(&best) } else { 0.0 };
        worst = worst.min(ratio);
        if ratio < 0.9 {
            below += 1;
        }
    }
    let mut mismatched = 0;
    for _ in 0..200 {
        let n = rng.random_range(3..=12);
        let clique: Vec<bool> = (0..n).map(|_| rng.random_bool(0.6)).collect();
        let p = random_problem(rng, n, |rng, a, b| (clique[a] && clique[b]).then(|| rng.random_range(0.5..=1.0)));
        let mut got = fast.solve(&p)?;
        let mut best = oracle.solve(&p)?;
        got.sort_unstable();
        best.sort_unstable();
        if got != best {
            mismatched += 1;
        }
    }
    Ok(Outcome {
        failures: below + mismatched,
        detail: format!("worst ratio {worst:.4}, {below} of 500 below 0.9, {mismatched} of 200 cliques differ"),
    })
}

fn random_problem(
    rng: &mut ChaCha8Rng,
    n: usize,
    mut edge: impl FnMut(&mut ChaCha8Rng, usize, usize) -> Option<f64>,
) -> ConsistencyProblem {
    let weights: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..=2.0)).collect();
    let mut m = DMatrix::from_diagonal(&DVector::from_column_slice(&weights));
    for a in 0..n {
        for b in a + 1..n {
            if let Some(v) = edge(rng, a, b) {
                m[(a, b)] = v;
                m[(b, a)] = v;
            }
        }
    }
    let assocs = (0..n).map(|k| PutativeAssociation { idx_i: k, idx_j: k, weight: weights[k] }).collect();
    ConsistencyProblem::from_dense(assocs, &m)
}

/// Analytic reprojection gradient against central differences.
fn gradient(rng: &mut ChaCha8Rng) -> anyhow::Result<Outcome> {
    let intr = CameraIntrinsics::new(400.0, 400.0, 320.0, 240.0, 640, 480)?;
    let down = Matrix3::new(1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, -1.0);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let landmark = Vector3::new(rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0), rng.random_range(0.0..5.0));
        let views: Vec<View> = (0..rng.random_range(3..=10))
            .map(|k| {
                let center = Vector3::new(-20.0 + 5.0 * k as f64, rng.random_range(-5.0..5.0), rng.random_range(40.0..80.0));
                let pose = Pose::new(down, center)?;
                let px = project(&pose, &intr, &landmark).ok_or_else(|| anyhow!("landmark behind camera"))?;
                let noise = Vector2::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
                Ok(View { pose, centroid: px + noise })
            })
            .collect::<anyhow::Result<_>>()?;
        let cost = ReprojectionCost { views: &views, intr: &intr, sigma_px: 3.0 };
        let at = landmark + Vector3::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
        let g = cost.gradient(&at).ok_or_else(|| anyhow!("point behind camera"))?;
        let h = 1e-5;
        let mut fd = Vector3::zeros();
        for k in 0..3 {
            let mut step = Vector3::zeros();
            step[k] = h;
            let plus = cost.cost(&(at + step)).ok_or_else(|| anyhow!("point behind camera"))?;
            let minus = cost.cost(&(at - step)).ok_or_else(|| anyhow!("point behind camera"))?;
            fd[k] = (plus - minus) / (2.0 * h);
        }
        worst = worst.max((g - fd).norm() / g.norm().max(1e-12));
    }
    let failures = usize::from(worst >= 1e-4);
    Ok(Outcome { failures, detail: format!("max relative error {worst:.2e} over 100 points") })
}

pub fn run(seed: u64) -> Result<(), Failure> {
    let suites: [(&str, Suite); 3] =
        [("assignment", assignment), ("consistency", consistency), ("reprojection-gradient", gradient)];
    let mut failed = 0;
    for (name, suite) in suites {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let outcome = suite(&mut rng)?;
        let verdict = if outcome.failures == 0 { "PASS" } else { "FAIL" };
        println!("{name}: {verdict} ({})", outcome.detail);
        failed += usize::from(outcome.failures > 0);
    }
    if failed > 0 {
        return Err(Failure::Data(anyhow!("{failed} self-test suite(s) failed")));
    }
    Ok(())
}
