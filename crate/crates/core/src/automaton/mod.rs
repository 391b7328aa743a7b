//! Markov digraphs coding geodesics of a group with respect to a
//! symmetric generating set.
//!
//! A [`MarkovAutomaton`] has a distinguished origin with no incoming edges.
//! Paths leaving the origin spell words in the edge labels; the automaton
//! is strongly Markov for a group when these label words are geodesic and
//! hit every group element exactly once.

mod file;

use std::collections::{HashMap, HashSet};

use num_bigint::BigUint;
use num_traits::{ToPrimitive, Zero};

use crate::error::{Error, Result};
use crate::words::{Family, GeneratorTable, GroupOracle, Letter, Word};

pub use file::{load_automaton, save_automaton, AutomatonFile, AUTOMATON_FORMAT_VERSION};

pub type VertexId = usize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Edge {
    pub from: VertexId,
    pub to: VertexId,
    pub label: Letter,
}

/// Labeled digraph with origin `v0`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MarkovAutomaton {
    vertices: Vec<String>,
    origin: VertexId,
    generators: GeneratorTable,
    edges: Vec<Edge>,
    out_edges: Vec<Vec<usize>>,
}

impl MarkovAutomaton {
    /// Builds an automaton and checks its structural invariants.
    pub fn new(
        vertices: Vec<String>,
        origin: VertexId,
        generators: GeneratorTable,
        edges: Vec<Edge>,
    ) -> Result<Self> {
        if origin >= vertices.len() {
            return Err(Error::invariant(format!(
                "origin index {origin} out of range ({} vertices)",
                vertices.len()
            )));
        }
        let unique: HashSet<&str> = vertices.iter().map(String::as_str).collect();
        if unique.len() != vertices.len() {
            return Err(Error::invariant("vertex names must be distinct"));
        }
        let mut seen = HashSet::new();
        let mut out_edges = vec![Vec::new(); vertices.len()];
        for (i, e) in edges.iter().enumerate() {
            if e.from >= vertices.len() || e.to >= vertices.len() {
                return Err(Error::invariant(format!(
                    "edge {i} has an endpoint out of range"
                )));
            }
            if e.label >= generators.len() {
                return Err(Error::invariant(format!(
                    "edge {} -> {} has unknown label {}",
                    vertices[e.from], vertices[e.to], e.label
                )));
            }
            if e.to == origin {
                return Err(Error::invariant(format!(
                    "edge {} -> {} ends in the origin",
                    vertices[e.from], vertices[e.to]
                )));
            }
            if !seen.insert((e.from, e.to)) {
                return Err(Error::invariant(format!(
                    "duplicate edge {} -> {}",
                    vertices[e.from], vertices[e.to]
                )));
            }
            out_edges[e.from].push(i);
        }
        Ok(Self {
            vertices,
            origin,
            generators,
            edges,
            out_edges,
        })
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn vertex_name(&self, v: VertexId) -> &str {
        &self.vertices[v]
    }

    pub fn vertex_names(&self) -> &[String] {
        &self.vertices
    }

    pub fn origin(&self) -> VertexId {
        self.origin
    }

    pub fn generators(&self) -> &GeneratorTable {
        &self.generators
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Indices (into [`edges`](Self::edges)) of the edges leaving `v`, in edge order.
    pub fn out_edges(&self, v: VertexId) -> &[usize] {
        &self.out_edges[v]
    }

    /// Non-origin vertices in increasing index order.
    pub fn state_vertices(&self) -> impl Iterator<Item = VertexId> + '_ {
        (0..self.vertices.len()).filter(move |&v| v != self.origin)
    }

    pub fn transition_matrix(&self) -> TransitionMatrix {
        let n = self.vertices.len();
        let mut entries = vec![0u8; n * n];
        for e in &self.edges {
            entries[e.from * n + e.to] = 1;
        }
        TransitionMatrix { n, entries }
    }

    /// Label word spelled by a sequence of edges.
    pub fn label_word(&self, path: &Path) -> Word {
        Word(path.edges.iter().map(|&e| self.edges[e].label).collect())
    }

    /// All paths of length `n` from the origin, in lexicographic edge order.
    pub fn enumerate_paths(&self, n: usize) -> Vec<Path> {
        let mut out = Vec::new();
        let mut stack = Vec::with_capacity(n);
        self.walk(self.origin, n, &mut stack, &mut |p| {
            out.push(Path { edges: p.to_vec() })
        });
        out
    }

    fn walk(&self, v: VertexId, left: usize, stack: &mut Vec<usize>, f: &mut impl FnMut(&[usize])) {
        if left == 0 {
            f(stack);
            return;
        }
        for &e in &self.out_edges[v] {
            stack.push(e);
            self.walk(self.edges[e].to, left - 1, stack, f);
            stack.pop();
        }
    }

    /// First pair of consecutive edges whose labels are mutually inverse.
    pub fn inverse_backtrack(&self) -> Option<(usize, usize)> {
        for (i, e) in self.edges.iter().enumerate() {
            let inv = self.generators.inverse(e.label);
            if let Some(&j) = self.out_edges[e.to]
                .iter()
                .find(|&&j| self.edges[j].label == inv)
            {
                return Some((i, j));
            }
        }
        None
    }
}

/// A sequence of edge indices starting at the origin.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Path {
    pub edges: Vec<usize>,
}

impl Path {
    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }
}

/// Square 0/1 matrix `a_ij = #{edges v_i -> v_j}`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TransitionMatrix {
    n: usize,
    entries: Vec<u8>,
}

impl TransitionMatrix {
    pub fn from_rows(rows: &[Vec<u8>]) -> Result<Self> {
        let n = rows.len();
        let mut entries = Vec::with_capacity(n * n);
        for r in rows {
            if r.len() != n {
                return Err(Error::input("transition matrix must be square"));
            }
            if r.iter().any(|&x| x > 1) {
                return Err(Error::input("transition matrix entries must be 0 or 1"));
            }
            entries.extend_from_slice(r);
        }
        Ok(Self { n, entries })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> u8 {
        self.entries[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[u8] {
        &self.entries[i * self.n..(i + 1) * self.n]
    }

    pub fn successors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.row(i)
            .iter()
            .enumerate()
            .filter(|(_, &a)| a != 0)
            .map(|(j, _)| j)
    }

    /// Principal submatrix on `idx` as floats.
    pub fn submatrix_f64(&self, idx: &[usize]) -> nalgebra::DMatrix<f64> {
        nalgebra::DMatrix::from_fn(idx.len(), idx.len(), |i, j| {
            f64::from(self.get(idx[i], idx[j]))
        })
    }
}

/// Path counts `c(0..=n_max)` from `start`, restricted to vertices where `allowed` is true.
///
/// Uses checked 64-bit arithmetic and recomputes with big integers on overflow.
pub(crate) fn masked_path_counts(
    a: &TransitionMatrix,
    start: usize,
    allowed: &[bool],
    n_max: usize,
) -> Vec<BigUint> {
    if let Some(c) = masked_path_counts_u64(a, start, allowed, n_max) {
        return c.into_iter().map(BigUint::from).collect();
    }
    let n = a.dim();
    let mut cur = vec![BigUint::zero(); n];
    cur[start] = BigUint::from(1u8);
    let mut out = vec![BigUint::from(1u8)];
    for _ in 0..n_max {
        let mut next = vec![BigUint::zero(); n];
        for (i, ci) in cur.iter().enumerate() {
            if ci.is_zero() {
                continue;
            }
            for j in a.successors(i).filter(|&j| allowed[j]) {
                next[j] += ci;
            }
        }
        out.push(next.iter().sum());
        cur = next;
    }
    out
}

fn masked_path_counts_u64(
    a: &TransitionMatrix,
    start: usize,
    allowed: &[bool],
    n_max: usize,
) -> Option<Vec<u64>> {
    let n = a.dim();
    let mut cur = vec![0u64; n];
    cur[start] = 1;
    let mut out = vec![1u64];
    for _ in 0..n_max {
        let mut next = vec![0u64; n];
        for (i, &ci) in cur.iter().enumerate() {
            if ci == 0 {
                continue;
            }
            for j in a.successors(i).filter(|&j| allowed[j]) {
                next[j] = next[j].checked_add(ci)?;
            }
        }
        out.push(next.iter().try_fold(0u64, |acc, &x| acc.checked_add(x))?);
        cur = next;
    }
    Some(out)
}

/// `N(0), ..., N(n_max)`: numbers of paths from the origin of each length.
pub fn path_count_series(a: &MarkovAutomaton, n_max: usize) -> Vec<BigUint> {
    let allowed = vec![true; a.vertex_count()];
    masked_path_counts(&a.transition_matrix(), a.origin(), &allowed, n_max)
}

/// Number of length-`n` paths from the origin, `sum_j (A^n)_{v0 j}`.
pub fn count_paths(a: &MarkovAutomaton, n: usize) -> BigUint {
    path_count_series(a, n).pop().expect("series is non-empty")
}

/// Lossy conversion used for growth ratios.
pub fn count_to_f64(c: &BigUint) -> f64 {
    c.to_f64().unwrap_or(f64::INFINITY)
}

fn single_vertex_names(table: &GeneratorTable) -> Vec<String> {
    let mut names = vec!["v0".to_string()];
    names.extend(table.names().iter().cloned());
    names
}

/// Automaton of reduced words in the free group of rank `k`.
///
/// One vertex per generator symbol; `v -> w` unless `w` is the inverse of `v`.
pub fn build_free_group_automaton(k: usize) -> Result<MarkovAutomaton> {
    if k < 1 {
        return Err(Error::input("free group rank must be at least 1"));
    }
    let table = GroupOracle::free(k)?.table().clone();
    let s = table.len();
    let mut edges = Vec::new();
    for g in 0..s {
        edges.push(Edge {
            from: 0,
            to: g + 1,
            label: g,
        });
    }
    for g in 0..s {
        for h in 0..s {
            if h != table.inverse(g) {
                edges.push(Edge {
                    from: g + 1,
                    to: h + 1,
                    label: h,
                });
            }
        }
    }
    MarkovAutomaton::new(single_vertex_names(&table), 0, table, edges)
}

/// Automaton of ordered words in the free abelian group of rank `n`.
///
/// The vertex of a letter of generator `i` loops on itself and moves on to
/// both letters of every generator `j > i`.
pub fn build_free_abelian_automaton(n: usize) -> Result<MarkovAutomaton> {
    if n < 1 {
        return Err(Error::input("free abelian rank must be at least 1"));
    }
    let table = GroupOracle::free_abelian(n)?.table().clone();
    let s = table.len();
    let mut edges = Vec::new();
    for g in 0..s {
        edges.push(Edge {
            from: 0,
            to: g + 1,
            label: g,
        });
    }
    for g in 0..s {
        edges.push(Edge {
            from: g + 1,
            to: g + 1,
            label: g,
        });
        for h in (g / 2 + 1) * 2..s {
            edges.push(Edge {
                from: g + 1,
                to: h + 1,
                label: h,
            });
        }
    }
    MarkovAutomaton::new(single_vertex_names(&table), 0, table, edges)
}

/// Automaton of geodesic syllable words in a free product of cyclic groups.
///
/// A syllable `x^j` of a factor of order `m` is written with `j` positive
/// letters when `j <= m - j` and with `m - j` inverse letters otherwise. One
/// vertex per (factor, sign, run length); a run may grow while it stays
/// geodesic, or switch to the first letter of a different factor.
pub fn build_free_product_automaton(orders: &[usize]) -> Result<MarkovAutomaton> {
    if orders.len() < 2 {
        return Err(Error::input("a free product needs at least two factors"));
    }
    if orders == [2, 2] {
        return Err(Error::input(
            "Z2 * Z2 is the infinite dihedral group, which is elementary (virtually cyclic)",
        ));
    }
    let oracle = GroupOracle::free_product(orders)?;
    let table = oracle.table().clone();

    struct State {
        factor: usize,
        letter: Letter,
        run: usize,
        max_run: usize,
    }
    let mut states = Vec::new();
    let mut names = vec!["v0".to_string()];
    let mut letter = 0;
    for (factor, &m) in orders.iter().enumerate() {
        let signs: &[(usize, usize)] = if m == 2 {
            &[(0, 1)]
        } else {
            &[(0, m / 2), (1, (m - 1) / 2)]
        };
        for &(offset, max_run) in signs {
            let l = letter + offset;
            for run in 1..=max_run {
                names.push(if run == 1 {
                    table.name(l).to_string()
                } else {
                    format!("{}^{run}", table.name(l))
                });
                states.push(State {
                    factor,
                    letter: l,
                    run,
                    max_run,
                });
            }
        }
        letter += if m == 2 { 1 } else { 2 };
    }

    let vertex = |i: usize| i + 1;
    let mut edges = Vec::new();
    for (i, s) in states.iter().enumerate() {
        if s.run == 1 {
            edges.push(Edge {
                from: 0,
                to: vertex(i),
                label: s.letter,
            });
        }
    }
    for (i, s) in states.iter().enumerate() {
        for (j, t) in states.iter().enumerate() {
            let grows = t.factor == s.factor && t.letter == s.letter && t.run == s.run + 1;
            let switches = t.factor != s.factor && t.run == 1;
            if grows || switches {
                debug_assert!(t.run <= t.max_run);
                edges.push(Edge {
                    from: vertex(i),
                    to: vertex(j),
                    label: t.letter,
                });
            }
        }
    }
    MarkovAutomaton::new(names, 0, table, edges)
}

/// The built-in automaton for a group family.
pub fn build_for_family(family: &Family) -> Result<MarkovAutomaton> {
    match family {
        Family::Free(k) => build_free_group_automaton(*k),
        Family::FreeAbelian(n) => build_free_abelian_automaton(*n),
        Family::FreeProductCyclic(orders) => build_free_product_automaton(orders),
    }
}

/// Outcome of the exhaustive strong-Markov check up to some radius.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StrongMarkovReport {
    pub radius: usize,
    /// Every path label word has word length equal to the path length.
    pub geodesic: bool,
    /// Distinct paths represent distinct group elements.
    pub injective: bool,
    /// Every element of the ball is represented by some path.
    pub surjective: bool,
    /// Human-readable first counterexample, if any check failed.
    pub counterexample: Option<String>,
}

impl StrongMarkovReport {
    pub fn passed(&self) -> bool {
        self.geodesic && self.injective && self.surjective
    }
}

/// Checks geodesicity, injectivity and surjectivity of the path coding up to `radius`.
pub fn verify_strong_markov(
    a: &MarkovAutomaton,
    g: &GroupOracle,
    radius: usize,
) -> Result<StrongMarkovReport> {
    if a.generators() != g.table() {
        return Err(Error::input(format!(
            "automaton generators {:?} do not match the {} oracle generators {:?}",
            a.generators().names(),
            g.family(),
            g.table().names()
        )));
    }
    let table = g.table();
    let mut report = StrongMarkovReport {
        radius,
        geodesic: true,
        injective: true,
        surjective: true,
        counterexample: None,
    };
    let note = |report: &mut StrongMarkovReport, msg: String| {
        if report.counterexample.is_none() {
            report.counterexample = Some(msg);
        }
    };

    let mut hit: HashMap<Word, Word> = HashMap::new();
    for n in 0..=radius {
        for path in a.enumerate_paths(n) {
            let label = a.label_word(&path);
            let nf = g.reduce(&label)?;
            if nf.len() != n {
                report.geodesic = false;
                note(
                    &mut report,
                    format!(
                        "path {} has length {n} but word length {}",
                        label.display(table),
                        nf.len()
                    ),
                );
            }
            if let Some(prev) = hit.get(&nf) {
                report.injective = false;
                note(
                    &mut report,
                    format!(
                        "paths {} and {} represent the same element",
                        prev.display(table),
                        label.display(table)
                    ),
                );
            } else {
                hit.insert(nf, label);
            }
        }
    }
    for w in g.enumerate_ball(radius)? {
        if !hit.contains_key(&w) {
            report.surjective = false;
            note(
                &mut report,
                format!("element {} is not coded by any path", w.display(table)),
            );
            break;
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn edge_count(a: &MarkovAutomaton) -> usize {
        a.edges().len()
    }

    #[test]
    fn free_group_shape() {
        let a = build_free_group_automaton(2).unwrap();
        assert_eq!(a.vertex_count(), 5);
        // 4 from the origin plus each of 4 vertices to 3 non-inverse vertices.
        assert_eq!(edge_count(&a), 4 + 4 * 3);
        assert_eq!(count_paths(&a, 2), BigUint::from(12u32));
        assert!(a.inverse_backtrack().is_none());
        assert!(build_free_group_automaton(0).is_err());
    }

    #[test]
    fn integers_match_figure() {
        // v0 -> v1 (a), v0 -> v-1 (A), loops on both.
        for a in [
            build_free_group_automaton(1).unwrap(),
            build_free_abelian_automaton(1).unwrap(),
        ] {
            assert_eq!(a.vertex_count(), 3);
            let mut edges: Vec<_> = a.edges().iter().map(|e| (e.from, e.to, e.label)).collect();
            edges.sort();
            assert_eq!(edges, vec![(0, 1, 0), (0, 2, 1), (1, 1, 0), (2, 2, 1)]);
        }
    }

    #[test]
    fn z2_matches_figure() {
        let a = build_free_abelian_automaton(2).unwrap();
        assert_eq!(a.vertex_count(), 5);
        // 4 from v0, the a/A vertices each loop and reach b and B, b/B only loop.
        assert_eq!(edge_count(&a), 4 + 2 * (1 + 2) + 2);
        let t = a.transition_matrix();
        let expected: [[u8; 5]; 5] = [
            [0, 1, 1, 1, 1],
            [0, 1, 0, 1, 1],
            [0, 0, 1, 1, 1],
            [0, 0, 0, 1, 0],
            [0, 0, 0, 0, 1],
        ];
        for (i, row) in expected.iter().enumerate() {
            assert_eq!(t.row(i), row);
        }
        assert_eq!(count_paths(&a, 3), BigUint::from(12u32));
        assert_eq!(count_paths(&a, 5), BigUint::from(20u32));
    }

    #[test]
    fn free_product_shapes() {
        let a = build_free_product_automaton(&[2, 3]).unwrap();
        let t = a.transition_matrix();
        let states: Vec<usize> = a.state_vertices().collect();
        let block: Vec<Vec<u8>> = states
            .iter()
            .map(|&i| states.iter().map(|&j| t.get(i, j)).collect())
            .collect();
        assert_eq!(block, vec![vec![0, 1, 1], vec![1, 0, 0], vec![1, 0, 0]]);
        let counts: Vec<u64> = path_count_series(&a, 4)
            .iter()
            .map(|c| c.to_u64().unwrap())
            .collect();
        assert_eq!(counts, vec![1, 3, 4, 6, 8]);

        let k3 = build_free_product_automaton(&[2, 2, 2]).unwrap();
        let t = k3.transition_matrix();
        for i in 1..4 {
            for j in 1..4 {
                assert_eq!(t.get(i, j), u8::from(i != j));
            }
        }

        let err = build_free_product_automaton(&[2, 2]).unwrap_err();
        assert!(err.to_string().contains("elementary"));
        assert!(build_free_product_automaton(&[3]).is_err());
    }

    #[test]
    fn higher_order_syllables() {
        let a = build_free_product_automaton(&[5, 2]).unwrap();
        let g = GroupOracle::free_product(&[5, 2]).unwrap();
        let r = verify_strong_markov(&a, &g, 7).unwrap();
        assert!(r.passed(), "{r:?}");
        let a = build_free_product_automaton(&[4, 3]).unwrap();
        let g = GroupOracle::free_product(&[4, 3]).unwrap();
        assert!(verify_strong_markov(&a, &g, 7).unwrap().passed());
    }

    #[test]
    fn empty_path_count() {
        let a = build_free_product_automaton(&[2, 2, 2]).unwrap();
        assert_eq!(count_paths(&a, 0), BigUint::from(1u8));
    }

    #[test]
    fn count_paths_overflows_into_big_integers() {
        let a = build_free_group_automaton(3).unwrap();
        // 6 * 5^29 > 2^64
        let c = count_paths(&a, 30);
        let expected = BigUint::from(6u32) * BigUint::from(5u32).pow(29);
        assert_eq!(c, expected);
        assert!(c > BigUint::from(u64::MAX));
    }

    #[test]
    fn enumeration_agrees_with_matrix_counts() {
        let a = build_free_product_automaton(&[2, 3]).unwrap();
        let series = path_count_series(&a, 10);
        for (n, c) in series.iter().enumerate() {
            assert_eq!(BigUint::from(a.enumerate_paths(n).len()), *c);
        }
    }

    #[test]
    fn strong_markov_checks() {
        let f2 = build_free_group_automaton(2).unwrap();
        let r = verify_strong_markov(&f2, &GroupOracle::free(2).unwrap(), 6).unwrap();
        assert!(r.passed());

        let z2 = build_free_abelian_automaton(2).unwrap();
        let r = verify_strong_markov(&z2, &GroupOracle::free_abelian(2).unwrap(), 6).unwrap();
        assert!(r.passed());

        let r = verify_strong_markov(&f2, &GroupOracle::free_abelian(2).unwrap(), 3).unwrap();
        assert!(!r.injective);
        assert!(r.counterexample.is_some());

        let err = verify_strong_markov(&f2, &GroupOracle::free_product(&[2, 3]).unwrap(), 2);
        assert!(matches!(err, Err(Error::Input(_))));
    }

    #[test]
    fn rejects_edge_into_origin_and_duplicates() {
        let table = GroupOracle::free(1).unwrap().table().clone();
        let names = vec!["v0".to_string(), "x".to_string()];
        let bad = MarkovAutomaton::new(
            names.clone(),
            0,
            table.clone(),
            vec![Edge {
                from: 1,
                to: 0,
                label: 0,
            }],
        );
        assert!(matches!(bad, Err(Error::Invariant(m)) if m.contains("origin")));
        let dup = MarkovAutomaton::new(
            names,
            0,
            table,
            vec![
                Edge {
                    from: 0,
                    to: 1,
                    label: 0,
                },
                Edge {
                    from: 0,
                    to: 1,
                    label: 1,
                },
            ],
        );
        assert!(matches!(dup, Err(Error::Invariant(m)) if m.contains("duplicate")));
    }
}
