//! Covering Markov operator on tuples of observables indexed by the
//! non-origin automaton vertices.
//!
//! Convention: `(P xi)_v = sum over edges e = (v -> w, g) of T_g(xi_w)`.
//! The origin carries no slot; reading out at the origin applies the same
//! rule to the origin's edges. With this pull-back convention the origin
//! read-out of `P^(n-1)` applied to a constant tuple is the sum of
//! `T_{e1}(T_{e2}(... T_{en}(x)))` over all length-`n` paths, i.e. the
//! spherical sum `sum_{|g| = n} g(x)` for a strongly Markov automaton.
//!
//! Per slot, edges inside a diagonal block (the `D` part) are summed first
//! and cross-block edges (the `Q` part) second, each in edge index order, so
//! that `D + Q` reproduces `P` bit for bit.

use num_complex::Complex64;

use crate::algebra::{
    derive_seed, random_matrix, state_value, ActionAssignment, AlgebraState, CMatrix, Observable,
};
use crate::automaton::{MarkovAutomaton, VertexId};
use crate::error::{Error, Result};
use crate::spectral::{
    growth_rate_with, perron_data, scc_decompose, BlockDecomposition, PerronData, SpectralReport,
};
use crate::words::GroupOracle;

/// Tuple `(x_1, ..., x_k)` with one observable per non-origin vertex.
#[derive(Clone, Debug, PartialEq)]
pub struct CoveringElement {
    pub slots: Vec<Observable>,
}

impl CoveringElement {
    pub fn zeros(k: usize, d: usize) -> Self {
        Self {
            slots: vec![CMatrix::zeros(d, d); k],
        }
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    /// Largest Frobenius norm of a slot difference.
    pub fn max_distance(&self, other: &Self) -> f64 {
        self.slots
            .iter()
            .zip(&other.slots)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

/// The tuple with `x` in every one of the `k` slots.
pub fn constant_lift(x: &Observable, k: usize) -> CoveringElement {
    CoveringElement {
        slots: vec![x.clone(); k],
    }
}

/// `phi_k(xi) = (1/k) sum_j phi(xi_j)`.
pub fn extend_state(s: &AlgebraState, xi: &CoveringElement) -> Result<Complex64> {
    if xi.is_empty() {
        return Err(Error::input("covering element has no slots"));
    }
    let mut acc = Complex64::new(0.0, 0.0);
    for x in &xi.slots {
        acc += state_value(s, x)?;
    }
    Ok(acc / xi.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Part {
    Diagonal,
    Cross,
}

/// Which contributing block a coding path passes through.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum EntryTag {
    /// Only non-contributing vertices.
    None,
    /// Exactly one contributing block (index into the decomposition).
    Block(usize),
    /// Two or more contributing blocks.
    Multiple,
}

#[derive(Clone, Debug, PartialEq)]
pub struct D1Report {
    pub block: usize,
    pub power: usize,
    /// `max_i ||(D^q xi)_i - (rho^q L_w R^q L_w^-1 xi)_i||_F`.
    pub abs_deviation: f64,
    /// Absolute deviation divided by `max_i ||(D^q xi)_i||_F`.
    pub rel_deviation: f64,
}

pub const D1_MAX_POWER: usize = 12;

#[derive(Clone, Debug)]
pub struct CoveringOperator {
    automaton: MarkovAutomaton,
    action: ActionAssignment,
    decomposition: BlockDecomposition,
    spectrum: SpectralReport,
    /// Slot index of each vertex (`None` for the origin).
    slot_of: Vec<Option<usize>>,
    slot_vertex: Vec<VertexId>,
    edge_part: Vec<Part>,
}

impl CoveringOperator {
    pub fn new(automaton: &MarkovAutomaton, action: &ActionAssignment) -> Result<Self> {
        if automaton.generators() != action.table() {
            return Err(Error::input(
                "action generators do not match the automaton labels",
            ));
        }
        let decomposition = scc_decompose(&automaton.transition_matrix());
        let spectrum = growth_rate_with(automaton, &decomposition)?;
        let mut slot_of = vec![None; automaton.vertex_count()];
        let slot_vertex: Vec<VertexId> = automaton.state_vertices().collect();
        for (i, &v) in slot_vertex.iter().enumerate() {
            slot_of[v] = Some(i);
        }
        let edge_part = automaton
            .edges()
            .iter()
            .map(|e| {
                if decomposition.block_of[e.from] == decomposition.block_of[e.to] {
                    Part::Diagonal
                } else {
                    Part::Cross
                }
            })
            .collect();
        Ok(Self {
            automaton: automaton.clone(),
            action: action.clone(),
            decomposition,
            spectrum,
            slot_of,
            slot_vertex,
            edge_part,
        })
    }

    pub fn automaton(&self) -> &MarkovAutomaton {
        &self.automaton
    }

    pub fn action(&self) -> &ActionAssignment {
        &self.action
    }

    pub fn decomposition(&self) -> &BlockDecomposition {
        &self.decomposition
    }

    pub fn spectrum(&self) -> &SpectralReport {
        &self.spectrum
    }

    /// Growth rate of the automaton.
    pub fn rho(&self) -> f64 {
        self.spectrum.rho
    }

    /// Number of slots `k`.
    pub fn slots(&self) -> usize {
        self.slot_vertex.len()
    }

    pub fn slot_vertex(&self, slot: usize) -> VertexId {
        self.slot_vertex[slot]
    }

    pub fn dim(&self) -> usize {
        self.action.dim()
    }

    pub fn lift(&self, x: &Observable) -> CoveringElement {
        constant_lift(x, self.slots())
    }

    /// Edge partition: (`D` edges, `Q` edges) as edge indices.
    pub fn split_d_q(&self) -> (Vec<usize>, Vec<usize>) {
        let all = 0..self.automaton.edges().len();
        let (d, q): (Vec<usize>, Vec<usize>) =
            all.partition(|&e| self.edge_part[e] == Part::Diagonal);
        (d, q)
    }

    fn check(&self, xi: &CoveringElement) -> Result<()> {
        let d = self.dim();
        if xi.len() != self.slots() {
            return Err(Error::input(format!(
                "covering element has {} slots, expected {}",
                xi.len(),
                self.slots()
            )));
        }
        if xi.slots.iter().any(|x| x.nrows() != d || x.ncols() != d) {
            return Err(Error::input(
                "covering element slot has the wrong dimension",
            ));
        }
        Ok(())
    }

    /// Sum over the out-edges of `v` belonging to `part` (or all, if `None`),
    /// with `cache[label * k + slot]` memoising `T_label(xi_slot)`.
    fn vertex_sum(
        &self,
        v: VertexId,
        xi: &CoveringElement,
        part: Option<Part>,
        cache: &mut [Option<Observable>],
    ) -> Observable {
        let d = self.dim();
        let k = self.slots();
        let mut acc = CMatrix::zeros(d, d);
        for &ei in self.automaton.out_edges(v) {
            if part.is_some_and(|p| self.edge_part[ei] != p) {
                continue;
            }
            let e = self.automaton.edges()[ei];
            let slot = self.slot_of[e.to].expect("edges never enter the origin");
            let entry = &mut cache[e.label * k + slot];
            let term = entry.get_or_insert_with(|| self.action.get(e.label).apply(&xi.slots[slot]));
            acc += &*term;
        }
        acc
    }

    fn new_cache(&self) -> Vec<Option<Observable>> {
        vec![None; self.action.table().len() * self.slots()]
    }

    fn apply_part(&self, xi: &CoveringElement, part: Part) -> Result<CoveringElement> {
        self.check(xi)?;
        let mut cache = self.new_cache();
        let slots = self
            .slot_vertex
            .iter()
            .map(|&v| self.vertex_sum(v, xi, Some(part), &mut cache))
            .collect();
        Ok(CoveringElement { slots })
    }

    /// `P xi`.
    pub fn apply_p(&self, xi: &CoveringElement) -> Result<CoveringElement> {
        self.check(xi)?;
        let mut cache = self.new_cache();
        let slots = self
            .slot_vertex
            .iter()
            .map(|&v| {
                let d = self.vertex_sum(v, xi, Some(Part::Diagonal), &mut cache);
                let q = self.vertex_sum(v, xi, Some(Part::Cross), &mut cache);
                d + q
            })
            .collect();
        Ok(CoveringElement { slots })
    }

    /// Block-diagonal part `D xi`.
    pub fn apply_d(&self, xi: &CoveringElement) -> Result<CoveringElement> {
        self.apply_part(xi, Part::Diagonal)
    }

    /// Cross-block part `Q xi` (origin edges never land in a slot).
    pub fn apply_q(&self, xi: &CoveringElement) -> Result<CoveringElement> {
        self.apply_part(xi, Part::Cross)
    }

    /// The origin row of `P` applied to `xi`.
    pub fn readout(&self, xi: &CoveringElement) -> Result<Observable> {
        self.check(xi)?;
        let mut cache = self.new_cache();
        Ok(self.vertex_sum(self.automaton.origin(), xi, None, &mut cache))
    }

    /// `sum_{|g| = n} g(x)` as the origin read-out of `P^(n-1)` on the constant lift.
    pub fn sphere_sum_via_p(&self, x: &Observable, n: usize) -> Result<Observable> {
        if n == 0 {
            return Ok(x.clone());
        }
        let mut xi = self.lift(x);
        for _ in 1..n {
            xi = self.apply_p(&xi)?;
        }
        self.readout(&xi)
    }

    /// `readout((scale P)^m lift(x))` for `m = 0..count`, i.e. `scale^m S_{m+1}(x)`.
    pub fn scaled_sphere_sums(
        &self,
        x: &Observable,
        scale: f64,
        count: usize,
    ) -> Result<Vec<Observable>> {
        let mut out = Vec::with_capacity(count);
        let mut xi = self.lift(x);
        for m in 0..count {
            if m > 0 {
                xi = self.apply_p(&xi)?;
                for s in &mut xi.slots {
                    *s = s.map(|z| z * scale);
                }
            }
            out.push(self.readout(&xi)?);
        }
        Ok(out)
    }

    /// Sphere sum split by the contributing block the coding path runs through.
    pub fn sphere_sum_by_entry(
        &self,
        x: &Observable,
        n: usize,
    ) -> Result<Vec<(EntryTag, Observable)>> {
        if n == 0 {
            return Ok(vec![(EntryTag::None, x.clone())]);
        }
        let contributing = &self.spectrum.contributing;
        let tags: Vec<EntryTag> = std::iter::once(EntryTag::None)
            .chain(contributing.iter().map(|&b| EntryTag::Block(b)))
            .chain(std::iter::once(EntryTag::Multiple))
            .collect();
        let tag_index = |t: EntryTag| tags.iter().position(|&u| u == t).expect("known tag");
        let own_tag = |v: VertexId| {
            let b = self.decomposition.block_of[v];
            if contributing.contains(&b) {
                EntryTag::Block(b)
            } else {
                EntryTag::None
            }
        };
        let combine = |own: EntryTag, rest: EntryTag| match (own, rest) {
            (EntryTag::None, r) => r,
            (o, EntryTag::None) => o,
            (o, r) if o == r => o,
            _ => EntryTag::Multiple,
        };
        let d = self.dim();
        let zero = CMatrix::zeros(d, d);
        // g[tag][slot]: sum over length-m paths from the slot vertex, tagged
        // by the contributing blocks visited (the start vertex included).
        let mut g: Vec<CoveringElement> = tags
            .iter()
            .map(|&t| CoveringElement {
                slots: self
                    .slot_vertex
                    .iter()
                    .map(|&v| {
                        if own_tag(v) == t {
                            x.clone()
                        } else {
                            zero.clone()
                        }
                    })
                    .collect(),
            })
            .collect();
        let step = |g: &[CoveringElement], v: VertexId, own: EntryTag| -> Vec<Observable> {
            let mut out = vec![zero.clone(); tags.len()];
            for &ei in self.automaton.out_edges(v) {
                let e = self.automaton.edges()[ei];
                let slot = self.slot_of[e.to].expect("edges never enter the origin");
                for (ti, &t) in tags.iter().enumerate() {
                    let src = &g[ti].slots[slot];
                    if src.iter().all(|z| z.norm() == 0.0) {
                        continue;
                    }
                    out[tag_index(combine(own, t))] += self.action.get(e.label).apply(src);
                }
            }
            out
        };
        for _ in 1..n {
            let mut next: Vec<CoveringElement> =
                vec![CoveringElement::zeros(self.slots(), d); tags.len()];
            for (slot, &v) in self.slot_vertex.iter().enumerate() {
                for (ti, m) in step(&g, v, own_tag(v)).into_iter().enumerate() {
                    next[ti].slots[slot] = m;
                }
            }
            g = next;
        }
        let out = step(&g, self.automaton.origin(), EntryTag::None);
        Ok(tags.into_iter().zip(out).collect())
    }

    /// Checks `D^q = rho^q L_w R^q L_w^{-1}` on the slots of a contributing block
    /// using a seeded random tuple.
    pub fn verify_d1(&self, block: usize, q: usize, seed: u64) -> Result<D1Report> {
        if q == 0 || q > D1_MAX_POWER {
            return Err(Error::input(format!("power must be in 1..={D1_MAX_POWER}")));
        }
        if !self.spectrum.contributing.contains(&block) {
            return Err(Error::input(format!("block {block} is not contributing")));
        }
        let PerronData {
            vertices, perron, ..
        } = perron_data(&self.decomposition, block)?;
        let n = vertices.len();
        let d = self.dim();
        let local = |v: VertexId| vertices.iter().position(|&u| u == v);
        // Edges inside the block as (local from, local to, label).
        let edges: Vec<(usize, usize, usize)> = self
            .automaton
            .edges()
            .iter()
            .filter_map(|e| Some((local(e.from)?, local(e.to)?, e.label)))
            .collect();
        let apply = |xi: &[Observable], weight: &dyn Fn(usize, usize) -> f64| -> Vec<Observable> {
            let mut out = vec![CMatrix::zeros(d, d); n];
            for &(i, j, g) in &edges {
                out[i] += self.action.get(g).apply(&xi[j]) * Complex64::new(weight(i, j), 0.0);
            }
            out
        };
        let xi: Vec<Observable> = (0..n)
            .map(|i| random_matrix(d, derive_seed(seed, i as u64)))
            .collect();

        let mut lhs = xi.clone();
        for _ in 0..q {
            lhs = apply(&lhs, &|_, _| 1.0);
        }
        let mut rhs: Vec<Observable> = xi
            .iter()
            .enumerate()
            .map(|(i, x)| x * Complex64::new(1.0 / perron.w[i], 0.0))
            .collect();
        for _ in 0..q {
            rhs = apply(&rhs, &|i, j| perron.stochastic[(i, j)]);
        }
        let scale = perron.rho.powi(q as i32);
        for (i, r) in rhs.iter_mut().enumerate() {
            *r *= Complex64::new(scale * perron.w[i], 0.0);
        }
        let abs = lhs
            .iter()
            .zip(&rhs)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        let size = lhs.iter().map(|a| a.norm()).fold(0.0, f64::max);
        Ok(D1Report {
            block,
            power: q,
            abs_deviation: abs,
            rel_deviation: if size > 0.0 { abs / size } else { abs },
        })
    }
}

/// `sum_{|g| = n} g(x)` by enumerating the sphere with the group oracle.
pub fn sphere_sum_bruteforce(
    action: &ActionAssignment,
    oracle: &GroupOracle,
    x: &Observable,
    n: usize,
) -> Result<Observable> {
    let spheres = oracle.enumerate_spheres(n)?;
    // Compensated summation: spheres hold thousands of terms.
    let mut acc = CMatrix::zeros(x.nrows(), x.ncols());
    let mut carry = CMatrix::zeros(x.nrows(), x.ncols());
    for w in &spheres[n] {
        let term = action.apply_word(w, x)?;
        for ((a, c), t) in acc.iter_mut().zip(carry.iter_mut()).zip(term.iter()) {
            let y = t - *c;
            let sum = *a + y;
            *c = (sum - *a) - y;
            *a = sum;
        }
    }
    Ok(acc)
}
