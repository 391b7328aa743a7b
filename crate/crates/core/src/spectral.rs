//! Block structure and Perron-Frobenius data of transition matrices.
//!
//! The strongly connected components of the automaton digraph are ordered
//! so that every edge runs from a block to itself or to an earlier block,
//! which makes the permuted transition matrix block lower triangular with
//! irreducible (or 1x1 zero) diagonal blocks. Spectral radii are Perron
//! roots computed by power iteration on `A + I`, which is primitive on
//! every irreducible block regardless of its period.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, VecDeque};

use nalgebra::{DMatrix, DVector};
use num_bigint::BigUint;
use num_traits::Zero;

use crate::automaton::{
    count_to_f64, masked_path_counts, path_count_series, MarkovAutomaton, TransitionMatrix,
    VertexId,
};
use crate::error::{Error, Result};

/// Relative tolerance for calling a block contributing.
pub const CONTRIBUTING_TOL: f64 = 1e-9;
/// Relative Collatz-Wielandt gap at which power iteration stops.
pub const POWER_TOL: f64 = 1e-12;
pub const POWER_MAX_ITER: usize = 100_000;
/// Largest residual accepted for a Perron eigenvector.
pub const PERRON_RESIDUAL_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Block {
    /// Original vertex indices, ascending.
    pub vertices: Vec<VertexId>,
    /// A single vertex without a self-loop.
    pub trivial: bool,
}

/// Strongly connected components in block lower triangular order.
#[derive(Clone, Debug)]
pub struct BlockDecomposition {
    matrix: TransitionMatrix,
    /// `ordering[p]` is the original vertex at permuted position `p`.
    pub ordering: Vec<VertexId>,
    pub blocks: Vec<Block>,
    /// Block index of every original vertex.
    pub block_of: Vec<usize>,
    /// Nonzero below-diagonal couplings `B_ij` (i > j), keyed by `(i, j)`.
    pub couplings: BTreeMap<(usize, usize), Vec<Vec<u8>>>,
}

impl BlockDecomposition {
    pub fn matrix(&self) -> &TransitionMatrix {
        &self.matrix
    }

    pub fn block_count(&self) -> usize {
        self.blocks.len()
    }

    pub fn diagonal_block(&self, j: usize) -> Vec<Vec<u8>> {
        self.sub(&self.blocks[j].vertices, &self.blocks[j].vertices)
    }

    pub fn diagonal_block_f64(&self, j: usize) -> DMatrix<f64> {
        self.matrix.submatrix_f64(&self.blocks[j].vertices)
    }

    fn sub(&self, rows: &[VertexId], cols: &[VertexId]) -> Vec<Vec<u8>> {
        rows.iter()
            .map(|&r| cols.iter().map(|&c| self.matrix.get(r, c)).collect())
            .collect()
    }

    /// `P A P^T` for the block ordering.
    pub fn permuted(&self) -> TransitionMatrix {
        let rows = self.sub(&self.ordering, &self.ordering);
        TransitionMatrix::from_rows(&rows).expect("permutation of a 0/1 matrix")
    }

    /// Rebuilds the original matrix from the diagonal blocks and couplings only.
    pub fn reassemble(&self) -> TransitionMatrix {
        let n = self.matrix.dim();
        let mut rows = vec![vec![0u8; n]; n];
        for (j, b) in self.blocks.iter().enumerate() {
            let d = self.diagonal_block(j);
            for (a, &r) in b.vertices.iter().enumerate() {
                for (c, &col) in b.vertices.iter().enumerate() {
                    rows[r][col] = d[a][c];
                }
            }
        }
        for (&(i, j), m) in &self.couplings {
            for (a, &r) in self.blocks[i].vertices.iter().enumerate() {
                for (c, &col) in self.blocks[j].vertices.iter().enumerate() {
                    rows[r][col] = m[a][c];
                }
            }
        }
        TransitionMatrix::from_rows(&rows).expect("blocks hold 0/1 entries")
    }

    /// True when no nonzero entry of the permuted matrix lies above the block diagonal.
    pub fn is_block_lower_triangular(&self) -> bool {
        let n = self.matrix.dim();
        (0..n).all(|r| {
            (0..n).all(|c| self.matrix.get(r, c) == 0 || self.block_of[r] >= self.block_of[c])
        })
    }

    /// Blocks directly reachable from block `i` (excluding itself).
    pub fn successor_blocks(&self, i: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .couplings
            .keys()
            .filter(|&&(from, _)| from == i)
            .map(|&(_, to)| to)
            .collect();
        out.sort_unstable();
        out
    }
}

fn tarjan(a: &TransitionMatrix) -> Vec<Vec<VertexId>> {
    struct State<'a> {
        a: &'a TransitionMatrix,
        index: usize,
        idx: Vec<Option<usize>>,
        low: Vec<usize>,
        stack: Vec<usize>,
        on_stack: Vec<bool>,
        comps: Vec<Vec<usize>>,
    }

    fn connect(v: usize, s: &mut State) {
        s.idx[v] = Some(s.index);
        s.low[v] = s.index;
        s.index += 1;
        s.stack.push(v);
        s.on_stack[v] = true;
        let succ: Vec<usize> = s.a.successors(v).collect();
        for w in succ {
            match s.idx[w] {
                None => {
                    connect(w, s);
                    s.low[v] = s.low[v].min(s.low[w]);
                }
                Some(iw) if s.on_stack[w] => s.low[v] = s.low[v].min(iw),
                Some(_) => {}
            }
        }
        if Some(s.low[v]) == s.idx[v] {
            let mut comp = Vec::new();
            loop {
                let w = s.stack.pop().expect("tarjan stack");
                s.on_stack[w] = false;
                comp.push(w);
                if w == v {
                    break;
                }
            }
            comp.sort_unstable();
            s.comps.push(comp);
        }
    }

    let n = a.dim();
    let mut s = State {
        a,
        index: 0,
        idx: vec![None; n],
        low: vec![0; n],
        stack: Vec::new(),
        on_stack: vec![false; n],
        comps: Vec::new(),
    };
    for v in 0..n {
        if s.idx[v].is_none() {
            connect(v, &mut s);
        }
    }
    s.comps
}

/// Strongly connected components ordered so that edges only point to the
/// same or an earlier block. Among blocks that may be placed next, the one
/// containing the lowest vertex index goes first.
pub fn scc_decompose(a: &TransitionMatrix) -> BlockDecomposition {
    let n = a.dim();
    let comps = tarjan(a);
    let mut comp_of = vec![0; n];
    for (c, vs) in comps.iter().enumerate() {
        for &v in vs {
            comp_of[v] = c;
        }
    }
    // succ[c] = components reachable by one edge from c, excluding c.
    let mut succ = vec![Vec::new(); comps.len()];
    let mut pred = vec![Vec::new(); comps.len()];
    for v in 0..n {
        for w in a.successors(v) {
            let (cv, cw) = (comp_of[v], comp_of[w]);
            if cv != cw && !succ[cv].contains(&cw) {
                succ[cv].push(cw);
                pred[cw].push(cv);
            }
        }
    }
    // A component is ready once all of its successors are placed.
    let mut pending: Vec<usize> = succ.iter().map(Vec::len).collect();
    let mut ready: BinaryHeap<Reverse<(usize, usize)>> = BinaryHeap::new();
    for (c, vs) in comps.iter().enumerate() {
        if pending[c] == 0 {
            ready.push(Reverse((vs[0], c)));
        }
    }
    let mut order = Vec::with_capacity(comps.len());
    while let Some(Reverse((_, c))) = ready.pop() {
        order.push(c);
        for &p in &pred[c] {
            pending[p] -= 1;
            if pending[p] == 0 {
                ready.push(Reverse((comps[p][0], p)));
            }
        }
    }
    debug_assert_eq!(order.len(), comps.len());

    let mut blocks = Vec::with_capacity(order.len());
    let mut block_of = vec![0; n];
    let mut ordering = Vec::with_capacity(n);
    for (j, &c) in order.iter().enumerate() {
        let vs = comps[c].clone();
        for &v in &vs {
            block_of[v] = j;
        }
        ordering.extend_from_slice(&vs);
        let trivial = vs.len() == 1 && a.get(vs[0], vs[0]) == 0;
        blocks.push(Block {
            vertices: vs,
            trivial,
        });
    }

    let mut d = BlockDecomposition {
        matrix: a.clone(),
        ordering,
        blocks,
        block_of,
        couplings: BTreeMap::new(),
    };
    let mut couplings = BTreeMap::new();
    for v in 0..n {
        for w in a.successors(v) {
            let (i, j) = (d.block_of[v], d.block_of[w]);
            if i != j {
                couplings
                    .entry((i, j))
                    .or_insert_with(|| d.sub(&d.blocks[i].vertices, &d.blocks[j].vertices));
            }
        }
    }
    d.couplings = couplings;
    d
}

fn pattern_of(m: &DMatrix<f64>) -> TransitionMatrix {
    let rows: Vec<Vec<u8>> = (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| u8::from(m[(i, j)] != 0.0)).collect())
        .collect();
    TransitionMatrix::from_rows(&rows).expect("pattern is 0/1")
}

fn check_nonnegative_square(m: &DMatrix<f64>) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::input("matrix must be square"));
    }
    if m.iter().any(|&x| x.is_nan() || x < 0.0 || !x.is_finite()) {
        return Err(Error::input(
            "matrix entries must be finite and non-negative",
        ));
    }
    Ok(())
}

struct PowerResult {
    rho: f64,
    vector: DVector<f64>,
}

/// Power iteration on `M + I` for an irreducible non-negative `M`.
///
/// Stops on the Collatz-Wielandt bracket `min (Bx)_i/x_i <= rho(B) <= max (Bx)_i/x_i`,
/// then keeps iterating a little to polish the eigenvector.
fn perron_iteration(m: &DMatrix<f64>) -> Result<PowerResult> {
    let n = m.nrows();
    let shifted = m + DMatrix::<f64>::identity(n, n);
    let mut x = DVector::from_element(n, 1.0);
    let mut best: Option<(f64, f64, DVector<f64>)> = None;
    let mut polish = 0usize;
    let mut gap = f64::INFINITY;
    for _ in 0..POWER_MAX_ITER {
        let y = &shifted * &x;
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for i in 0..n {
            let r = y[i] / x[i];
            lo = lo.min(r);
            hi = hi.max(r);
        }
        gap = (hi - lo) / hi;
        if best.as_ref().is_none_or(|b| gap <= b.0) {
            best = Some((gap, 0.5 * (lo + hi), x.clone()));
        }
        if gap <= POWER_TOL {
            polish += 1;
            if polish > 64 || gap == 0.0 {
                break;
            }
        }
        let top = y.max();
        x = y / top;
    }
    match best {
        Some((g, lambda, v)) if g <= POWER_TOL => Ok(PowerResult {
            rho: lambda - 1.0,
            vector: v,
        }),
        _ => Err(Error::Convergence {
            iterations: POWER_MAX_ITER,
            residual: gap,
        }),
    }
}

/// Spectral radius of a non-negative square matrix.
///
/// The matrix is split into irreducible blocks by its nonzero pattern and the
/// largest Perron root is returned; nilpotent blocks contribute zero.
pub fn spectral_radius(m: &DMatrix<f64>) -> Result<f64> {
    check_nonnegative_square(m)?;
    let d = scc_decompose(&pattern_of(m));
    let mut rho = 0.0f64;
    for b in d.blocks.iter().filter(|b| !b.trivial) {
        let sub = DMatrix::from_fn(b.vertices.len(), b.vertices.len(), |i, j| {
            m[(b.vertices[i], b.vertices[j])]
        });
        rho = rho.max(perron_iteration(&sub)?.rho);
    }
    Ok(rho)
}

/// Period of an irreducible 0/1 block: gcd of cycle lengths through a vertex.
pub fn period(block: &[Vec<u8>]) -> Option<usize> {
    let n = block.len();
    if n == 0 || (n == 1 && block[0][0] == 0) {
        return None;
    }
    let mut level = vec![usize::MAX; n];
    level[0] = 0;
    let mut queue = VecDeque::from([0usize]);
    while let Some(u) = queue.pop_front() {
        for v in 0..n {
            if block[u][v] != 0 && level[v] == usize::MAX {
                level[v] = level[u] + 1;
                queue.push_back(v);
            }
        }
    }
    let mut g = 0usize;
    for u in 0..n {
        for v in 0..n {
            if block[u][v] != 0 && level[u] != usize::MAX && level[v] != usize::MAX {
                g = gcd(g, (level[u] + 1).abs_diff(level[v]));
            }
        }
    }
    Some(g)
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlockSpectrum {
    pub vertices: Vec<VertexId>,
    pub radius: f64,
    pub period: Option<usize>,
    pub trivial: bool,
    pub is_origin: bool,
    pub contributing: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpectralReport {
    pub blocks: Vec<BlockSpectrum>,
    /// Growth rate: the largest block spectral radius.
    pub rho: f64,
    /// Largest spectral radius among non-contributing blocks (0 if none).
    pub rho1: f64,
    /// Indices of the contributing blocks.
    pub contributing: Vec<usize>,
    /// `(N(2n)/N(n))^(1/n)` at `n = COUNT_CHECK_N`.
    pub count_estimate: f64,
    /// Whether `count_estimate` is within 10% of `rho`. Diagnostic only.
    pub count_agrees: bool,
}

pub const COUNT_CHECK_N: usize = 20;

/// Path-count estimate of the growth rate, `(N(2n)/N(n))^(1/n)`.
pub fn count_growth_estimate(a: &MarkovAutomaton, n: usize) -> f64 {
    let counts = path_count_series(a, 2 * n);
    let ratio = count_to_f64(&counts[2 * n]) / count_to_f64(&counts[n]);
    ratio.powf(1.0 / n as f64)
}

/// Spectral radii of all blocks, the growth rate and the contributing set.
pub fn growth_rate(a: &MarkovAutomaton) -> Result<SpectralReport> {
    let d = scc_decompose(&a.transition_matrix());
    growth_rate_with(a, &d)
}

pub fn growth_rate_with(a: &MarkovAutomaton, d: &BlockDecomposition) -> Result<SpectralReport> {
    let origin_block = d.block_of[a.origin()];
    let mut blocks = Vec::with_capacity(d.block_count());
    for (j, b) in d.blocks.iter().enumerate() {
        let radius = if b.trivial {
            0.0
        } else {
            perron_iteration(&d.diagonal_block_f64(j))?.rho
        };
        blocks.push(BlockSpectrum {
            vertices: b.vertices.clone(),
            radius,
            period: period(&d.diagonal_block(j)),
            trivial: b.trivial,
            is_origin: j == origin_block,
            contributing: false,
        });
    }
    let rho = blocks
        .iter()
        .filter(|b| !b.is_origin)
        .map(|b| b.radius)
        .fold(0.0, f64::max);
    let mut contributing = Vec::new();
    if rho > 0.0 {
        for (j, b) in blocks.iter_mut().enumerate() {
            if !b.is_origin && !b.trivial && (b.radius - rho).abs() <= CONTRIBUTING_TOL * rho {
                b.contributing = true;
                contributing.push(j);
            }
        }
    }
    let rho1 = blocks
        .iter()
        .filter(|b| !b.is_origin && !b.contributing)
        .map(|b| b.radius)
        .fold(0.0, f64::max);
    let count_estimate = count_growth_estimate(a, COUNT_CHECK_N);
    let count_agrees = rho > 0.0 && ((count_estimate - rho) / rho).abs() <= 0.1;
    Ok(SpectralReport {
        blocks,
        rho,
        rho1,
        contributing,
        count_estimate,
        count_agrees,
    })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SingleCrossing {
    pub holds: bool,
    /// Vertex path from one contributing block into another, on failure.
    pub witness: Option<Vec<VertexId>>,
}

/// Checks that no directed path visits two distinct contributing blocks.
pub fn verify_single_crossing(d: &BlockDecomposition, contributing: &[usize]) -> SingleCrossing {
    let a = d.matrix();
    for &c in contributing {
        // Breadth-first search leaving block c.
        let n = a.dim();
        let mut parent = vec![usize::MAX; n];
        let mut seen = vec![false; n];
        let mut queue = VecDeque::new();
        for &v in &d.blocks[c].vertices {
            seen[v] = true;
            queue.push_back(v);
        }
        while let Some(u) = queue.pop_front() {
            for w in a.successors(u) {
                if seen[w] {
                    continue;
                }
                seen[w] = true;
                parent[w] = u;
                if d.block_of[w] != c && contributing.contains(&d.block_of[w]) {
                    let mut path = vec![w];
                    let mut cur = w;
                    while parent[cur] != usize::MAX {
                        cur = parent[cur];
                        path.push(cur);
                    }
                    path.reverse();
                    return SingleCrossing {
                        holds: false,
                        witness: Some(path),
                    };
                }
                queue.push_back(w);
            }
        }
    }
    SingleCrossing {
        holds: true,
        witness: None,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NoncontributingCounts {
    /// `c(n)` for `n = 0..=n_max`.
    pub counts: Vec<BigUint>,
    /// `c(n+1)/c(n)` where defined.
    pub ratios: Vec<Option<f64>>,
    /// `max(rho1, 1)`.
    pub base: f64,
    /// Constant fitted on the first five terms.
    pub constant: f64,
    /// `c(n) <= constant * base^n` for all `n`.
    pub bound_holds: bool,
    /// Longest path from the origin outside contributing blocks, if finite.
    pub transient_length: Option<usize>,
}

impl NoncontributingCounts {
    /// `c(n) = 0` for every `n` beyond the transient length.
    pub fn vanishes_after_transient(&self) -> bool {
        match self.transient_length {
            Some(t) => self.counts.iter().skip(t + 1).all(Zero::is_zero),
            None => false,
        }
    }
}

pub const MAX_COUNT_N: usize = 40;

/// Paths from the origin that avoid every contributing block.
pub fn noncontributing_path_counts(
    a: &MarkovAutomaton,
    d: &BlockDecomposition,
    report: &SpectralReport,
    n_max: usize,
) -> Result<NoncontributingCounts> {
    if n_max > MAX_COUNT_N {
        return Err(Error::input(format!("n_max must be at most {MAX_COUNT_N}")));
    }
    let t = d.matrix();
    let allowed: Vec<bool> = (0..t.dim())
        .map(|v| !report.contributing.contains(&d.block_of[v]))
        .collect();
    let counts = masked_path_counts(t, a.origin(), &allowed, n_max);
    let as_f64: Vec<f64> = counts.iter().map(count_to_f64).collect();
    let ratios = as_f64
        .windows(2)
        .map(|w| (w[0] > 0.0).then(|| w[1] / w[0]))
        .collect();
    let base = report.rho1.max(1.0);
    let constant = as_f64
        .iter()
        .take(5)
        .enumerate()
        .map(|(n, &c)| c / base.powi(n as i32))
        .fold(0.0, f64::max);
    let bound_holds = as_f64
        .iter()
        .enumerate()
        .all(|(n, &c)| c <= constant * base.powi(n as i32) * (1.0 + 1e-12));
    Ok(NoncontributingCounts {
        counts,
        ratios,
        base,
        constant,
        bound_holds,
        transient_length: transient_length(t, a.origin(), &allowed),
    })
}

/// Longest path from `start` inside the allowed subgraph, or `None` if it
/// can reach a cycle.
fn transient_length(t: &TransitionMatrix, start: usize, allowed: &[bool]) -> Option<usize> {
    fn visit(
        v: usize,
        t: &TransitionMatrix,
        allowed: &[bool],
        state: &mut [u8],
        depth: &mut [usize],
    ) -> Option<usize> {
        match state[v] {
            1 => return None,
            2 => return Some(depth[v]),
            _ => {}
        }
        state[v] = 1;
        let mut best = 0;
        for w in t.successors(v).filter(|&w| allowed[w]) {
            best = best.max(visit(w, t, allowed, state, depth)? + 1);
        }
        state[v] = 2;
        depth[v] = best;
        Some(best)
    }
    let n = t.dim();
    visit(start, t, allowed, &mut vec![0; n], &mut vec![0; n])
}

/// Perron root, eigenvector and stochastic normalisation of one block.
#[derive(Clone, Debug, PartialEq)]
pub struct PerronVector {
    pub rho: f64,
    /// Strictly positive, maximum entry 1.
    pub w: DVector<f64>,
    /// `R(i,j) = A(i,j) w(j) / (rho w(i))`.
    pub stochastic: DMatrix<f64>,
    /// `||A w - rho w||_inf`.
    pub residual: f64,
}

impl PerronVector {
    /// Largest `|sum_j R(i,j) - 1|`.
    pub fn row_sum_error(&self) -> f64 {
        self.stochastic
            .row_iter()
            .map(|r| (r.sum() - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

pub fn perron_vector(block: &DMatrix<f64>) -> Result<PerronVector> {
    check_nonnegative_square(block)?;
    let pattern = scc_decompose(&pattern_of(block));
    if pattern.block_count() != 1 || pattern.blocks[0].trivial {
        return Err(Error::input(
            "Perron vector needs an irreducible block with positive spectral radius",
        ));
    }
    let PowerResult { rho, vector } = perron_iteration(block)?;
    let w = &vector / vector.max();
    let residual = (block * &w - &w * rho).amax();
    if residual > PERRON_RESIDUAL_TOL {
        return Err(Error::Convergence {
            iterations: POWER_MAX_ITER,
            residual,
        });
    }
    let n = block.nrows();
    let stochastic = DMatrix::from_fn(n, n, |i, j| block[(i, j)] * w[j] / (rho * w[i]));
    Ok(PerronVector {
        rho,
        w,
        stochastic,
        residual,
    })
}

/// Perron data tied to a block of a decomposition.
#[derive(Clone, Debug, PartialEq)]
pub struct PerronData {
    pub block: usize,
    pub vertices: Vec<VertexId>,
    pub perron: PerronVector,
}

pub fn perron_data(d: &BlockDecomposition, block: usize) -> Result<PerronData> {
    Ok(PerronData {
        block,
        vertices: d.blocks[block].vertices.clone(),
        perron: perron_vector(&d.diagonal_block_f64(block))?,
    })
}

/// Tightest `C1, C2` with `C1 rho^n <= N(n) <= C2 rho^n` for `1 <= n <= n_max`.
pub fn growth_constants(a: &MarkovAutomaton, n_max: usize) -> Result<(f64, f64)> {
    let report = growth_rate(a)?;
    growth_constants_with(a, report.rho, n_max)
}

pub fn growth_constants_with(a: &MarkovAutomaton, rho: f64, n_max: usize) -> Result<(f64, f64)> {
    if n_max == 0 || n_max > MAX_COUNT_N {
        return Err(Error::input(format!("n_max must be in 1..={MAX_COUNT_N}")));
    }
    if rho.is_nan() || rho <= 0.0 {
        return Err(Error::input("growth constants need a positive growth rate"));
    }
    let counts = path_count_series(a, n_max);
    let ratios = (1..=n_max).map(|n| count_to_f64(&counts[n]) / rho.powi(n as i32));
    Ok(ratios.fold((f64::INFINITY, 0.0f64), |(lo, hi), r| {
        (lo.min(r), hi.max(r))
    }))
}
