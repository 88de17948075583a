//! Weighted pairwise-consistency graphs over putative associations and
//! solvers for their densest compatible subset.

use std::sync::Arc;

use nalgebra::{DMatrix, Vector3};
use thiserror::Error;

use crate::registry::{Named, Registry};

/// A candidate correspondence between object `idx_i` of one window and
/// object `idx_j` of the other.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PutativeAssociation {
    pub idx_i: usize,
    pub idx_j: usize,
    pub weight: f64,
}

impl PutativeAssociation {
    fn shares_endpoint(&self, other: &Self) -> bool {
        self.idx_i == other.idx_i || self.idx_j == other.idx_j
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ConsistencyError {
    #[error("exact search limited to {limit} associations, got {n}")]
    TooLarge { n: usize, limit: usize },
}

/// Symmetric affinity matrix with node weights on the diagonal. Only the
/// positive off-diagonal entries are stored.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsistencyProblem {
    associations: Vec<PutativeAssociation>,
    /// Row `a` is `entries[offsets[a]..offsets[a + 1]]`, sorted by column.
    offsets: Vec<usize>,
    entries: Vec<(usize, f64)>,
}

impl ConsistencyProblem {
    /// Builds a problem from a dense matrix whose diagonal holds the node
    /// weights. Non-positive off-diagonal entries mean incompatible.
    pub fn from_dense(associations: Vec<PutativeAssociation>, affinity: &DMatrix<f64>) -> Self {
        let n = associations.len();
        assert_eq!(affinity.shape(), (n, n), "affinity shape");
        let mut edges = Vec::new();
        for a in 0..n {
            for b in a + 1..n {
                if affinity[(a, b)] > 0.0 {
                    assert_eq!(affinity[(a, b)], affinity[(b, a)], "affinity must be symmetric");
                    edges.push((a, b, affinity[(a, b)]));
                }
            }
        }
        Self::from_edges(associations, &edges)
    }

    /// `edges` holds each positive pair once as `(a, b, v)` with `a < b`, in
    /// lexicographic order.
    fn from_edges(associations: Vec<PutativeAssociation>, edges: &[(usize, usize, f64)]) -> Self {
        let n = associations.len();
        let mut offsets = vec![0usize; n + 1];
        for &(a, b, _) in edges {
            offsets[a + 1] += 1;
            offsets[b + 1] += 1;
        }
        for k in 0..n {
            offsets[k + 1] += offsets[k];
        }
        let mut cursor = offsets[..n].to_vec();
        let mut entries = vec![(0usize, 0.0f64); edges.len() * 2];
        // Row `r` receives its columns below `r` from earlier edges first,
        // then its own edges, so every row comes out sorted.
        for &(a, b, v) in edges {
            entries[cursor[a]] = (b, v);
            cursor[a] += 1;
            entries[cursor[b]] = (a, v);
            cursor[b] += 1;
        }
        Self { associations, offsets, entries }
    }

    pub fn len(&self) -> usize {
        self.associations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.associations.is_empty()
    }

    pub fn associations(&self) -> &[PutativeAssociation] {
        &self.associations
    }

    pub fn weight(&self, a: usize) -> f64 {
        self.associations[a].weight
    }

    /// Off-diagonal neighbours of `a` with positive affinity, by index.
    pub fn neighbors(&self, a: usize) -> &[(usize, f64)] {
        &self.entries[self.offsets[a]..self.offsets[a + 1]]
    }

    /// Number of stored off-diagonal entries (each pair counted twice).
    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn affinity(&self, a: usize, b: usize) -> f64 {
        if a == b {
            return self.weight(a);
        }
        let row = self.neighbors(a);
        row.binary_search_by_key(&b, |&(k, _)| k).map_or(0.0, |pos| row[pos].1)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.len();
        let mut m = DMatrix::zeros(n, n);
        for a in 0..n {
            m[(a, a)] = self.weight(a);
            for &(b, v) in self.neighbors(a) {
                m[(a, b)] = v;
            }
        }
        m
    }

    /// `M x` for a dense vector.
    pub fn multiply(&self, x: &[f64], out: &mut [f64]) {
        for (a, o) in out.iter_mut().enumerate() {
            *o = self.weight(a) * x[a] + self.neighbors(a).iter().map(|&(b, v)| v * x[b]).sum::<f64>();
        }
    }

    /// Every pair inside `set` has positive affinity.
    pub fn is_compatible(&self, set: &[usize]) -> bool {
        set.iter().enumerate().all(|(k, &a)| set[k + 1..].iter().all(|&b| self.affinity(a, b) > 0.0))
    }

    /// `xᵀMx / xᵀx` for the indicator vector of `set`; zero for the empty set.
    pub fn objective(&self, set: &[usize]) -> f64 {
        if set.is_empty() {
            return 0.0;
        }
        let total: f64 = set.iter().map(|&a| set.iter().map(|&b| self.affinity(a, b)).sum::<f64>()).sum();
        total / set.len() as f64
    }
}

/// Affinity from the hard distance-difference gate and a Gaussian kernel.
pub fn pair_affinity(eps: f64, eps_lim: f64, sigma_c: f64) -> f64 {
    if eps <= eps_lim {
        (-eps * eps / (2.0 * sigma_c * sigma_c)).exp()
    } else {
        0.0
    }
}

/// Consistency graph over `assocs`, whose indices address `positions_i` and
/// `positions_j`.
pub fn consistency_matrix(
    assocs: Vec<PutativeAssociation>,
    positions_i: &[Vector3<f64>],
    positions_j: &[Vector3<f64>],
    eps_lim: f64,
    sigma_c: f64,
) -> ConsistencyProblem {
    let table = |p: &[Vector3<f64>]| -> Vec<f64> {
        let m = p.len();
        let mut d = vec![0.0; m * m];
        for a in 0..m {
            for b in a + 1..m {
                let v = (p[a] - p[b]).norm();
                d[a * m + b] = v;
                d[b * m + a] = v;
            }
        }
        d
    };
    let (m_i, m_j) = (positions_i.len(), positions_j.len());
    let (d_i, d_j) = (table(positions_i), table(positions_j));
    let mut edges = Vec::new();
    for (a, pa) in assocs.iter().enumerate() {
        let row_i = &d_i[pa.idx_i * m_i..(pa.idx_i + 1) * m_i];
        let row_j = &d_j[pa.idx_j * m_j..(pa.idx_j + 1) * m_j];
        for (b, pb) in assocs.iter().enumerate().skip(a + 1) {
            if pa.shares_endpoint(pb) {
                continue;
            }
            let eps = (row_i[pb.idx_i] - row_j[pb.idx_j]).abs();
            if eps <= eps_lim {
                edges.push((a, b, pair_affinity(eps, eps_lim, sigma_c)));
            }
        }
    }
    ConsistencyProblem::from_edges(assocs, &edges)
}

pub trait ConsistencySolver: Named + Send + Sync {
    /// Indices of a pairwise-compatible subset, ascending.
    fn solve(&self, problem: &ConsistencyProblem) -> Result<Vec<usize>, ConsistencyError>;
}

/// Leading eigenvector by power iteration, rounded greedily.
#[derive(Debug, Clone, Copy)]
pub struct SpectralSolver {
    pub power_iters: usize,
    pub power_tol: f64,
}

impl Default for SpectralSolver {
    fn default() -> Self {
        Self { power_iters: 1000, power_tol: 1e-9 }
    }
}

impl Named for SpectralSolver {
    fn name(&self) -> &'static str {
        "spectral"
    }
}

impl ConsistencySolver for SpectralSolver {
    fn solve(&self, problem: &ConsistencyProblem) -> Result<Vec<usize>, ConsistencyError> {
        Ok(densest_consistent_set(problem, self.power_iters, self.power_tol))
    }
}

/// Power iteration from the uniform unit vector.
pub fn leading_eigenvector(problem: &ConsistencyProblem, iters: usize, tol: f64) -> Vec<f64> {
    let n = problem.len();
    let mut v = vec![1.0 / (n as f64).sqrt(); n];
    let mut next = vec![0.0; n];
    for _ in 0..iters {
        problem.multiply(&v, &mut next);
        let norm = next.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !(norm > 0.0) {
            break;
        }
        let mut delta = 0.0;
        for (x, y) in next.iter_mut().zip(&v) {
            *x /= norm;
            delta += (*x - y) * (*x - y);
        }
        std::mem::swap(&mut v, &mut next);
        if delta.sqrt() < tol {
            break;
        }
    }
    v
}

/// Visits nodes by descending eigenvector entry (ties by index), keeping
/// each one compatible with everything kept so far, and returns the prefix
/// of that sequence with the highest objective.
pub fn greedy_round(problem: &ConsistencyProblem, scores: &[f64]) -> Vec<usize> {
    let n = problem.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    // hits[c] counts selected nodes adjacent to c; link[c] sums their affinity.
    let mut hits = vec![0usize; n];
    let mut link = vec![0.0f64; n];
    let mut selected = Vec::new();
    let mut total = 0.0;
    let mut best = (f64::NEG_INFINITY, 0);
    for c in order {
        if hits[c] != selected.len() {
            continue;
        }
        selected.push(c);
        total += problem.weight(c) + 2.0 * link[c];
        let value = total / selected.len() as f64;
        if value > best.0 {
            best = (value, selected.len());
        }
        for &(b, v) in problem.neighbors(c) {
            hits[b] += 1;
            link[b] += v;
        }
    }
    selected.truncate(best.1);
    selected.sort_unstable();
    selected
}

/// Grows a compatible set from `seed`, each step adding the compatible node
/// with the largest gain `w + 2·Σ affinity to the set` (ties by `scores`,
/// then index). Returns the prefix with the highest objective.
pub fn greedy_grow(problem: &ConsistencyProblem, scores: &[f64], seed: usize) -> (f64, Vec<usize>) {
    let n = problem.len();
    let mut hits = vec![0usize; n];
    let mut link = vec![0.0f64; n];
    let mut taken = vec![false; n];
    let mut selected = Vec::new();
    let mut total = 0.0;
    let mut best = (f64::NEG_INFINITY, 0);
    let mut next = Some(seed);
    while let Some(c) = next {
        taken[c] = true;
        selected.push(c);
        total += problem.weight(c) + 2.0 * link[c];
        let value = total / selected.len() as f64;
        if value > best.0 {
            best = (value, selected.len());
        }
        for &(b, v) in problem.neighbors(c) {
            hits[b] += 1;
            link[b] += v;
        }
        next = None;
        let mut best_gain = f64::NEG_INFINITY;
        for &(b, _) in problem.neighbors(c) {
            if taken[b] || hits[b] != selected.len() {
                continue;
            }
            let gain = problem.weight(b) + 2.0 * link[b];
            let better = match next {
                None => true,
                Some(cur) => gain > best_gain || (gain == best_gain && (scores[b], cur) > (scores[cur], b)),
            };
            if better {
                best_gain = gain;
                next = Some(b);
            }
        }
    }
    selected.truncate(best.1);
    selected.sort_unstable();
    (best.0, selected)
}

/// Seeds tried by [`densest_consistent_set`] besides the eigenvector order.
pub const GREEDY_SEEDS: usize = 8;

/// Best-improvement local search over single add, drop and swap moves that
/// keep the set compatible.
pub fn local_improve(problem: &ConsistencyProblem, set: &[usize]) -> Vec<usize> {
    let n = problem.len();
    let mut member = vec![false; n];
    let mut hits = vec![0usize; n];
    let mut link = vec![0.0f64; n];
    let mut total = 0.0;
    let mut k = 0usize;
    let insert = |c: usize, member: &mut [bool], hits: &mut [usize], link: &mut [f64], total: &mut f64, k: &mut usize| {
        *total += problem.weight(c) + 2.0 * link[c];
        member[c] = true;
        *k += 1;
        for &(b, v) in problem.neighbors(c) {
            hits[b] += 1;
            link[b] += v;
        }
    };
    let remove = |c: usize, member: &mut [bool], hits: &mut [usize], link: &mut [f64], total: &mut f64, k: &mut usize| {
        for &(b, v) in problem.neighbors(c) {
            hits[b] -= 1;
            link[b] -= v;
        }
        member[c] = false;
        *k -= 1;
        *total -= problem.weight(c) + 2.0 * link[c];
    };
    for &c in set {
        insert(c, &mut member, &mut hits, &mut link, &mut total, &mut k);
    }
    // Each accepted move raises the objective, so this only bounds the work.
    for _ in 0..4 * n {
        let current = total / k as f64;
        let mut best: Option<(f64, Option<usize>, Option<usize>)> = None;
        let mut consider = |value: f64, drop: Option<usize>, add: Option<usize>| {
            if value > current + 1e-12 && best.is_none_or(|b| value > b.0) {
                best = Some((value, drop, add));
            }
        };
        for y in 0..n {
            if member[y] {
                if k > 1 {
                    consider((total - problem.weight(y) - 2.0 * link[y]) / (k - 1) as f64, Some(y), None);
                }
            } else if hits[y] == k {
                consider((total + problem.weight(y) + 2.0 * link[y]) / (k + 1) as f64, None, Some(y));
            } else if hits[y] + 1 == k {
                let x = (0..n).find(|&x| member[x] && problem.affinity(x, y) <= 0.0).expect("one missing neighbour");
                let value = (total - problem.weight(x) - 2.0 * link[x] + problem.weight(y) + 2.0 * link[y]) / k as f64;
                consider(value, Some(x), Some(y));
            }
        }
        let Some((_, drop, add)) = best else { break };
        if let Some(x) = drop {
            remove(x, &mut member, &mut hits, &mut link, &mut total, &mut k);
        }
        if let Some(y) = add {
            insert(y, &mut member, &mut hits, &mut link, &mut total, &mut k);
        }
    }
    (0..n).filter(|&c| member[c]).collect()
}

pub fn densest_consistent_set(problem: &ConsistencyProblem, power_iters: usize, power_tol: f64) -> Vec<usize> {
    if problem.is_empty() {
        return Vec::new();
    }
    let v = leading_eigenvector(problem, power_iters, power_tol);
    let rounded = greedy_round(problem, &v);
    let mut best = (problem.objective(&rounded), rounded);
    let mut order: Vec<usize> = (0..problem.len()).collect();
    order.sort_by(|&a, &b| v[b].total_cmp(&v[a]).then(a.cmp(&b)));
    let heaviest = (0..problem.len()).max_by(|&a, &b| problem.weight(a).total_cmp(&problem.weight(b)).then(b.cmp(&a)));
    let mut seeds: Vec<usize> = order.iter().copied().take(GREEDY_SEEDS).collect();
    seeds.extend(heaviest.filter(|h| !seeds.contains(h)));
    for &seed in &seeds {
        let (value, set) = greedy_grow(problem, &v, seed);
        if value > best.0 {
            best = (value, set);
        }
    }
    local_improve(problem, &best.1)
}

/// Exhaustive branch-and-bound over compatible subsets.
#[derive(Debug, Clone, Copy)]
pub struct ExactSolver {
    pub limit: usize,
}

impl Default for ExactSolver {
    fn default() -> Self {
        Self { limit: EXACT_LIMIT }
    }
}

pub const EXACT_LIMIT: usize = 20;

impl Named for ExactSolver {
    fn name(&self) -> &'static str {
        "exact"
    }
}

impl ConsistencySolver for ExactSolver {
    fn solve(&self, problem: &ConsistencyProblem) -> Result<Vec<usize>, ConsistencyError> {
        if problem.len() > self.limit {
            return Err(ConsistencyError::TooLarge { n: problem.len(), limit: self.limit });
        }
        Ok(exact_search(problem))
    }
}

pub fn exact_consistent_oracle(problem: &ConsistencyProblem) -> Result<Vec<usize>, ConsistencyError> {
    ExactSolver::default().solve(problem)
}

struct Search<'a> {
    m: &'a DMatrix<f64>,
    best: f64,
    best_set: Vec<usize>,
}

impl Search<'_> {
    /// Largest row sum restricted to `nodes`: no subset of `nodes` can
    /// have a higher mean row sum.
    fn bound(&self, nodes: &[usize]) -> f64 {
        nodes
            .iter()
            .map(|&a| nodes.iter().map(|&b| self.m[(a, b)]).sum::<f64>())
            .fold(f64::NEG_INFINITY, f64::max)
    }

    fn expand(&mut self, current: &mut Vec<usize>, candidates: &[usize]) {
        if !current.is_empty() {
            let total: f64 = current.iter().map(|&a| current.iter().map(|&b| self.m[(a, b)]).sum::<f64>()).sum();
            let value = total / current.len() as f64;
            if value > self.best {
                self.best = value;
                self.best_set = current.clone();
            }
        }
        if candidates.is_empty() {
            return;
        }
        let pool: Vec<usize> = current.iter().chain(candidates).copied().collect();
        if self.bound(&pool) <= self.best {
            return;
        }
        for (k, &c) in candidates.iter().enumerate() {
            let rest: Vec<usize> = candidates[k + 1..].iter().copied().filter(|&b| self.m[(c, b)] > 0.0).collect();
            current.push(c);
            self.expand(current, &rest);
            current.pop();
        }
    }
}

fn exact_search(problem: &ConsistencyProblem) -> Vec<usize> {
    if problem.is_empty() {
        return Vec::new();
    }
    let m = problem.to_dense();
    let mut search = Search { m: &m, best: f64::NEG_INFINITY, best_set: Vec::new() };
    let all: Vec<usize> = (0..problem.len()).collect();
    search.expand(&mut Vec::new(), &all);
    let mut set = search.best_set;
    set.sort_unstable();
    set
}

/// Registry with `spectral` and `exact`.
pub fn builtin_consistency_solvers(power_iters: usize, power_tol: f64) -> Registry<dyn ConsistencySolver> {
    let mut reg: Registry<dyn ConsistencySolver> = Registry::new("consistency");
    reg.register(Arc::new(SpectralSolver { power_iters, power_tol }));
    reg.register(Arc::new(ExactSolver::default()));
    reg
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::RigidTransform;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn assoc(k: usize, weight: f64) -> PutativeAssociation {
        PutativeAssociation { idx_i: k, idx_j: k, weight }
    }

    /// Node weights `w` and symmetric edges `(a, b, v)`.
    pub(crate) fn problem(weights: &[f64], edges: &[(usize, usize, f64)]) -> ConsistencyProblem {
        let n = weights.len();
        let mut m = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(weights));
        for &(a, b, v) in edges {
            m[(a, b)] = v;
            m[(b, a)] = v;
        }
        ConsistencyProblem::from_dense((0..n).map(|k| assoc(k, weights[k])).collect(), &m)
    }

    fn clique(nodes: &[usize], v: f64) -> Vec<(usize, usize, f64)> {
        let mut e = Vec::new();
        for (k, &a) in nodes.iter().enumerate() {
            for &b in &nodes[k + 1..] {
                e.push((a, b, v));
            }
        }
        e
    }

    /// Independent oracle: every subset as a bitmask.
    fn bitmask_best(p: &ConsistencyProblem) -> f64 {
        let n = p.len();
        let m = p.to_dense();
        let mut best = 0.0f64;
        for mask in 1u32..(1 << n) {
            let members: Vec<usize> = (0..n).filter(|&k| mask & (1 << k) != 0).collect();
            let mut ok = true;
            let mut total = 0.0;
            for &a in &members {
                for &b in &members {
                    if a != b && m[(a, b)] <= 0.0 {
                        ok = false;
                    }
                    total += m[(a, b)];
                }
            }
            if ok {
                best = best.max(total / members.len() as f64);
            }
        }
        best
    }

    pub(crate) fn random_problem(rng: &mut ChaCha8Rng, n: usize) -> ConsistencyProblem {
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
        problem(&weights, &edges)
    }

    #[test]
    fn five_clique_plus_isolated() {
        let p = problem(&[1.0; 8], &clique(&[1, 3, 4, 6, 7], 1.0));
        let want = vec![1, 3, 4, 6, 7];
        assert_eq!(densest_consistent_set(&p, 1000, 1e-9), want);
        assert_eq!(exact_consistent_oracle(&p).unwrap(), want);
    }

    #[test]
    fn larger_clique_wins() {
        let mut edges = clique(&[0, 1, 2, 3], 1.0);
        edges.extend(clique(&[4, 5], 1.0));
        let p = problem(&[1.0; 6], &edges);
        assert_eq!(densest_consistent_set(&p, 1000, 1e-9), vec![0, 1, 2, 3]);
        assert_eq!(exact_consistent_oracle(&p).unwrap(), vec![0, 1, 2, 3]);
    }

    #[test]
    fn degenerate_sizes() {
        let empty = problem(&[], &[]);
        assert!(densest_consistent_set(&empty, 1000, 1e-9).is_empty());
        assert!(exact_consistent_oracle(&empty).unwrap().is_empty());
        let single = problem(&[0.7], &[]);
        assert_eq!(exact_consistent_oracle(&single).unwrap(), vec![0]);
        assert_eq!(densest_consistent_set(&single, 1000, 1e-9), vec![0]);
        let big = problem(&[1.0; 21], &[]);
        assert!(exact_consistent_oracle(&big).is_err());
    }

    #[test]
    fn exact_matches_bitmask_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..200 {
            let n = rng.random_range(1..=12);
            let p = random_problem(&mut rng, n);
            let set = exact_consistent_oracle(&p).unwrap();
            assert!(p.is_compatible(&set));
            assert!((p.objective(&set) - bitmask_best(&p)).abs() < 1e-9);
        }
    }

    #[test]
    fn spectral_close_to_optimum() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..200 {
            let n = rng.random_range(1..=12);
            let p = random_problem(&mut rng, n);
            let got = densest_consistent_set(&p, 1000, 1e-9);
            let opt = exact_consistent_oracle(&p).unwrap();
            assert!(p.is_compatible(&got));
            assert!(p.objective(&got) >= 0.9 * p.objective(&opt));
        }
    }

    #[test]
    fn affinity_examples() {
        let pi = vec![Vector3::new(0.0, 0.0, 0.0), Vector3::new(10.0, 0.0, 0.0)];
        let t = RigidTransform::from_euler_deg(5.0, -3.0, 40.0, Vector3::new(4.0, -2.0, 1.0));
        let pj: Vec<_> = pi.iter().map(|p| t.apply(p)).collect();
        let assocs = vec![assoc(0, 2.0), assoc(1, 2.0)];
        let p = consistency_matrix(assocs.clone(), &pi, &pj, 2.0, 2.0 / 3.0);
        assert!((p.affinity(0, 1) - 1.0).abs() < 1e-12);
        assert_eq!(p.affinity(0, 0), 2.0);

        let stretched = vec![pj[0], pj[0] + (pj[1] - pj[0]).normalize() * 12.01];
        let p = consistency_matrix(assocs, &pi, &stretched, 2.0, 2.0 / 3.0);
        assert_eq!(p.affinity(0, 1), 0.0);

        let shared = vec![
            PutativeAssociation { idx_i: 0, idx_j: 0, weight: 1.0 },
            PutativeAssociation { idx_i: 0, idx_j: 1, weight: 1.0 },
        ];
        let p = consistency_matrix(shared, &pi, &pi, 2.0, 2.0 / 3.0);
        assert_eq!(p.affinity(0, 1), 0.0);
        assert_eq!(pair_affinity(2.0, 2.0, 1.0), (-2.0f64).exp());
    }

    fn cloud(seed: u64, n: usize) -> Vec<Vector3<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| Vector3::new(rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0), rng.random_range(-2.0..2.0)))
            .collect()
    }

    fn all_pairs(n: usize) -> Vec<PutativeAssociation> {
        (0..n).flat_map(|i| (0..n).map(move |j| PutativeAssociation { idx_i: i, idx_j: j, weight: 1.0 })).collect()
    }

    proptest! {
        #[test]
        fn affinity_rigid_invariant(seed in 0u64..1000, yaw in -180.0f64..180.0, roll in -30.0f64..30.0, tx in -100.0f64..100.0) {
            let pi = cloud(seed, 8);
            let pj = cloud(seed + 1, 8);
            let t = RigidTransform::from_euler_deg(roll, 10.0, yaw, Vector3::new(tx, 3.0, -7.0));
            let moved: Vec<_> = pj.iter().map(|p| t.apply(p)).collect();
            let a = consistency_matrix(all_pairs(8), &pi, &pj, 2.0, 2.0 / 3.0).to_dense();
            let b = consistency_matrix(all_pairs(8), &pi, &moved, 2.0, 2.0 / 3.0).to_dense();
            prop_assert!((a.clone() - a.transpose()).amax() < 1e-12);
            prop_assert!((a - b).amax() < 1e-9);
        }

        #[test]
        fn spectral_output_is_compatible(seed in 0u64..10_000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = rng.random_range(1..40);
            let p = random_problem(&mut rng, n);
            let set = densest_consistent_set(&p, 1000, 1e-9);
            prop_assert!(!set.is_empty());
            prop_assert!(p.is_compatible(&set));
        }
    }
}
