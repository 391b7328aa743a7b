//! A full matrix algebra `M_d` with a faithful state and inner
//! automorphisms that preserve it.
//!
//! The state is `phi(x) = tr(rho x)` for a positive definite density matrix
//! `rho` of trace one. An automorphism `x -> U x U*` preserves the state
//! exactly when `U` commutes with `rho`.

mod file;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::words::{Family, GeneratorTable, GroupOracle, Letter, Word};

pub use file::{
    load_action, load_matrix, save_action, save_matrix, ActionFile, MatrixFile,
    ACTION_FORMAT_VERSION,
};

pub type CMatrix = DMatrix<Complex64>;
/// An element of the algebra.
pub type Observable = CMatrix;

/// Tolerance for unitarity, state invariance and involution compatibility.
pub const EXACT_TOL: f64 = 1e-12;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

pub fn identity(d: usize) -> CMatrix {
    CMatrix::identity(d, d)
}

pub fn real_diagonal(values: &[f64]) -> CMatrix {
    let n = values.len();
    CMatrix::from_fn(n, n, |i, j| {
        if i == j {
            Complex64::new(values[i], 0.0)
        } else {
            ZERO
        }
    })
}

/// Largest entry modulus.
pub fn max_abs(x: &CMatrix) -> f64 {
    x.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn is_hermitian(x: &CMatrix, tol: f64) -> bool {
    x.is_square() && max_abs(&(x - x.adjoint())) <= tol
}

/// Eigenvalues of a Hermitian matrix, ascending.
pub fn hermitian_eigenvalues(x: &CMatrix) -> DVector<f64> {
    let mut ev = herm(x).symmetric_eigenvalues();
    ev.as_mut_slice().sort_by(f64::total_cmp);
    ev
}

pub fn min_eigenvalue(x: &CMatrix) -> f64 {
    hermitian_eigenvalues(x).min()
}

pub fn max_eigenvalue(x: &CMatrix) -> f64 {
    hermitian_eigenvalues(x).max()
}

/// Operator norm (largest singular value).
pub fn operator_norm(x: &CMatrix) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    x.clone().singular_values().max()
}

/// `(x + x*) / 2`, Hermitian bit for bit.
fn herm(x: &CMatrix) -> CMatrix {
    let n = x.nrows();
    CMatrix::from_fn(n, n, |i, j| (x[(i, j)] + x[(j, i)].conj()) * 0.5)
}

/// `U x U*`.
///
/// Computed on the Hermitian and skew parts of `x` separately so that
/// `conjugate(u, x*) == conjugate(u, x)*` holds exactly in floating point.
pub fn conjugate(u: &CMatrix, x: &CMatrix) -> CMatrix {
    let n = x.nrows();
    let ua = u.adjoint();
    let h = herm(x);
    // k = (x - x*) / 2i
    let k = CMatrix::from_fn(n, n, |i, j| {
        let z = x[(i, j)] - x[(j, i)].conj();
        Complex64::new(z.im * 0.5, -(z.re * 0.5))
    });
    let hc = herm(&(u * h * &ua));
    if k.iter().all(|z| *z == ZERO) {
        return hc;
    }
    let kc = herm(&(u * k * &ua));
    CMatrix::from_fn(n, n, |i, j| {
        let z = kc[(i, j)];
        hc[(i, j)] + Complex64::new(-z.im, z.re)
    })
}

/// A faithful state given by its density matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct AlgebraState {
    density: CMatrix,
}

impl AlgebraState {
    /// Validates Hermiticity, trace one and strict positivity to `EXACT_TOL`.
    pub fn new(density: CMatrix) -> Result<Self> {
        if !density.is_square() || density.nrows() == 0 {
            return Err(Error::input("density matrix must be square and non-empty"));
        }
        if !is_hermitian(&density, EXACT_TOL) {
            return Err(Error::input("density matrix is not Hermitian"));
        }
        let tr = density.trace();
        if (tr - Complex64::new(1.0, 0.0)).norm() > EXACT_TOL {
            return Err(Error::input(format!(
                "density matrix has trace {tr}, expected 1"
            )));
        }
        let lo = min_eigenvalue(&density);
        if lo <= EXACT_TOL {
            return Err(Error::input(format!(
                "density matrix is not positive definite (smallest eigenvalue {lo:e}); the state must be faithful"
            )));
        }
        Ok(Self { density })
    }

    /// Normalised trace `I/d`.
    pub fn tracial(d: usize) -> Self {
        Self {
            density: identity(d) * Complex64::new(1.0 / d as f64, 0.0),
        }
    }

    pub fn diagonal(weights: &[f64]) -> Result<Self> {
        Self::new(real_diagonal(weights))
    }

    pub fn dim(&self) -> usize {
        self.density.nrows()
    }

    pub fn density(&self) -> &CMatrix {
        &self.density
    }

    pub fn is_tracial(&self) -> bool {
        let d = self.dim() as f64;
        max_abs(&(&self.density - identity(self.dim()) * Complex64::new(1.0 / d, 0.0))) <= EXACT_TOL
    }

    fn check_dim(&self, x: &CMatrix) -> Result<()> {
        if x.nrows() != self.dim() || x.ncols() != self.dim() {
            return Err(Error::input(format!(
                "observable is {}x{} but the algebra has dimension {}",
                x.nrows(),
                x.ncols(),
                self.dim()
            )));
        }
        Ok(())
    }
}

/// `phi(x) = tr(rho x)`.
pub fn state_value(s: &AlgebraState, x: &Observable) -> Result<Complex64> {
    s.check_dim(x)?;
    let rho = s.density();
    let d = s.dim();
    let mut acc = ZERO;
    for i in 0..d {
        for j in 0..d {
            acc += rho[(i, j)] * x[(j, i)];
        }
    }
    Ok(acc)
}

/// GNS norm `phi(x* x)^(1/2)`.
pub fn gns_norm2(s: &AlgebraState, x: &Observable) -> Result<f64> {
    let v = state_value(s, &(x.adjoint() * x))?;
    Ok(v.re.max(0.0).sqrt())
}

fn unitarity_defect(u: &CMatrix) -> f64 {
    max_abs(&(u * u.adjoint() - identity(u.nrows())))
}

/// True iff `U rho U* = rho`; errors when `u` is not unitary.
pub fn check_state_invariance(s: &AlgebraState, u: &CMatrix) -> Result<bool> {
    s.check_dim(u)?;
    let defect = unitarity_defect(u);
    if defect > EXACT_TOL {
        return Err(Error::input(format!(
            "matrix is not unitary (||U U* - I|| = {defect:e})"
        )));
    }
    let diff = u * s.density() * u.adjoint() - s.density();
    Ok(operator_norm(&diff) <= EXACT_TOL)
}

/// Inner automorphism `x -> U x U*`.
#[derive(Clone, Debug, PartialEq)]
pub struct Automorphism {
    unitary: CMatrix,
}

impl Automorphism {
    pub fn new(unitary: CMatrix) -> Result<Self> {
        if !unitary.is_square() {
            return Err(Error::input("unitary must be square"));
        }
        let defect = unitarity_defect(&unitary);
        if defect > EXACT_TOL {
            return Err(Error::input(format!(
                "matrix is not unitary (||U U* - I|| = {defect:e})"
            )));
        }
        Ok(Self { unitary })
    }

    pub fn identity(d: usize) -> Self {
        Self {
            unitary: identity(d),
        }
    }

    pub fn unitary(&self) -> &CMatrix {
        &self.unitary
    }

    pub fn dim(&self) -> usize {
        self.unitary.nrows()
    }

    pub fn apply(&self, x: &Observable) -> Observable {
        conjugate(&self.unitary, x)
    }

    pub fn inverse(&self) -> Self {
        Self {
            unitary: self.unitary.adjoint(),
        }
    }

    pub fn preserves(&self, s: &AlgebraState) -> bool {
        let diff = &self.unitary * s.density() * self.unitary.adjoint() - s.density();
        operator_norm(&diff) <= EXACT_TOL
    }
}

/// `a b*` is a scalar of modulus one, i.e. `Ad(a) = Ad(b)`.
pub fn same_conjugation(a: &CMatrix, b: &CMatrix, tol: f64) -> bool {
    let m = a * b.adjoint();
    let phase = m[(0, 0)];
    (phase.norm() - 1.0).abs() <= tol && max_abs(&(&m - identity(m.nrows()) * phase)) <= tol
}

/// Automorphism assigned to each generator symbol.
#[derive(Clone, Debug)]
pub struct ActionAssignment {
    table: GeneratorTable,
    maps: Vec<Automorphism>,
}

impl ActionAssignment {
    /// Checks that every generator has an automorphism of the same dimension
    /// and that inverse generators act by inverse maps.
    pub fn new(table: GeneratorTable, maps: Vec<Automorphism>) -> Result<Self> {
        if maps.len() != table.len() {
            return Err(Error::input(format!(
                "{} automorphisms given for {} generators",
                maps.len(),
                table.len()
            )));
        }
        let d = maps.first().map(Automorphism::dim).unwrap_or(0);
        for (g, m) in maps.iter().enumerate() {
            if m.dim() != d {
                return Err(Error::input(format!(
                    "generator {} acts on dimension {} instead of {d}",
                    table.name(g),
                    m.dim()
                )));
            }
            let inv = &maps[table.inverse(g)];
            if !same_conjugation(&(inv.unitary() * m.unitary()), &identity(d), EXACT_TOL) {
                return Err(Error::input(format!(
                    "generator {} and its inverse {} do not act by inverse automorphisms",
                    table.name(g),
                    table.name(table.inverse(g))
                )));
            }
        }
        Ok(Self { table, maps })
    }

    /// Every generator acts trivially.
    pub fn trivial(table: GeneratorTable, d: usize) -> Self {
        let maps = vec![Automorphism::identity(d); table.len()];
        Self { table, maps }
    }

    /// Seeded state-preserving action compatible with the relations of `family`.
    ///
    /// Free groups get independent random unitaries; free abelian groups get
    /// commuting diagonal unitaries (the state must then be diagonal); a
    /// cyclic factor of order `m` gets a unitary with `U^m = I`.
    pub fn seeded(
        table: &GeneratorTable,
        family: Option<&Family>,
        state: &AlgebraState,
        seed: u64,
    ) -> Result<Self> {
        let d = state.dim();
        let mut maps: Vec<Option<Automorphism>> = vec![None; table.len()];
        let mut slot = 0u64;
        for g in 0..table.len() {
            if maps[g].is_some() {
                continue;
            }
            let sub_seed = derive_seed(seed, slot);
            slot += 1;
            let inv = table.inverse(g);
            let m = match family {
                Some(Family::FreeAbelian(_)) => {
                    if !is_diagonal(state.density()) {
                        return Err(Error::input(
                            "seeded free abelian actions need a diagonal state",
                        ));
                    }
                    random_diagonal_unitary(d, sub_seed)
                }
                Some(Family::FreeProductCyclic(orders)) => {
                    let factor = factor_of(table, g);
                    random_state_preserving_unitary_of_order(state, orders[factor], sub_seed)
                }
                _ if inv == g => random_state_preserving_unitary_of_order(state, 2, sub_seed),
                _ => random_state_preserving_unitary(state, sub_seed),
            };
            maps[inv] = Some(m.inverse());
            maps[g] = Some(m);
        }
        Self::new(
            table.clone(),
            maps.into_iter().map(Option::unwrap).collect(),
        )
    }

    pub fn table(&self) -> &GeneratorTable {
        &self.table
    }

    pub fn dim(&self) -> usize {
        self.maps.first().map(Automorphism::dim).unwrap_or(0)
    }

    pub fn get(&self, g: Letter) -> &Automorphism {
        &self.maps[g]
    }

    pub fn maps(&self) -> &[Automorphism] {
        &self.maps
    }

    pub fn preserves(&self, s: &AlgebraState) -> Result<()> {
        for (g, m) in self.maps.iter().enumerate() {
            if m.dim() != s.dim() {
                return Err(Error::input("action and state dimensions differ"));
            }
            if !m.preserves(s) {
                return Err(Error::input(format!(
                    "generator {} does not preserve the state",
                    self.table.name(g)
                )));
            }
        }
        Ok(())
    }

    fn check_word(&self, w: &Word) -> Result<()> {
        match w.letters().iter().find(|&&l| l >= self.maps.len()) {
            Some(l) => Err(Error::input(format!(
                "generator {l} has no assigned automorphism"
            ))),
            None => Ok(()),
        }
    }

    /// `T_{e1}(T_{e2}(... T_{ek}(x)))` for `w = e1 e2 ... ek`.
    pub fn apply_word(&self, w: &Word, x: &Observable) -> Result<Observable> {
        self.check_word(w)?;
        let mut y = x.clone();
        for &l in w.letters().iter().rev() {
            y = self.maps[l].apply(&y);
        }
        Ok(y)
    }

    /// Ordered product `U_{e1} ... U_{ek}`.
    pub fn word_unitary(&self, w: &Word) -> Result<CMatrix> {
        self.check_word(w)?;
        let mut u = identity(self.dim());
        for &l in w.letters() {
            u *= self.maps[l].unitary();
        }
        Ok(u)
    }

    /// Checks that the action factors through the group on the ball of
    /// radius `radius`: for every normal form `w` and generator `g`, the
    /// normal form of `w g` acts like `w` followed by `g`.
    pub fn verify_relators(&self, oracle: &GroupOracle, radius: usize) -> Result<()> {
        if oracle.table() != &self.table {
            return Err(Error::input("action and oracle generator tables differ"));
        }
        for w in oracle.enumerate_ball(radius)? {
            let uw = self.word_unitary(&w)?;
            for g in 0..self.table.len() {
                let nf = oracle.reduce(&w.concat(&oracle.letter(g)))?;
                let lhs = self.word_unitary(&nf)?;
                let rhs = &uw * self.maps[g].unitary();
                if !same_conjugation(&lhs, &rhs, 1e-10) {
                    return Err(Error::input(format!(
                        "relation violated: {} acts differently from {}.{}",
                        nf.display(&self.table),
                        w.display(&self.table),
                        self.table.name(g)
                    )));
                }
            }
        }
        Ok(())
    }
}

fn factor_of(table: &GeneratorTable, g: Letter) -> usize {
    // Symbols of one factor are contiguous: a self-inverse symbol or a pair.
    let mut factor = 0;
    let mut s = 0;
    while s < g {
        s += if table.is_self_inverse(s) { 1 } else { 2 };
        if s <= g {
            factor += 1;
        }
    }
    factor
}

fn is_diagonal(x: &CMatrix) -> bool {
    let n = x.nrows();
    (0..n).all(|i| (0..n).all(|j| i == j || x[(i, j)] == ZERO))
}

/// SplitMix64 step, used to derive independent sub-seeds.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed.wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(index + 1));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn gaussian_complex(rng: &mut ChaCha8Rng) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Haar-distributed unitary via QR of a complex Ginibre matrix.
fn haar_unitary(n: usize, rng: &mut ChaCha8Rng) -> CMatrix {
    let g = CMatrix::from_fn(n, n, |_, _| gaussian_complex(rng));
    let qr = g.qr();
    let (q, r) = (qr.q(), qr.r());
    let phases = CMatrix::from_fn(n, n, |i, j| {
        if i == j {
            let d = r[(i, i)];
            if d.norm() > 0.0 {
                d / d.norm()
            } else {
                Complex64::new(1.0, 0.0)
            }
        } else {
            ZERO
        }
    });
    q * phases
}

fn random_phase(rng: &mut ChaCha8Rng) -> Complex64 {
    Complex64::from_polar(1.0, rng.random::<f64>() * std::f64::consts::TAU)
}

/// Eigenspaces of the density matrix: eigenvector basis and index groups.
fn eigenspaces(s: &AlgebraState) -> (CMatrix, Vec<Vec<usize>>) {
    let d = s.dim();
    if s.is_tracial() {
        return (identity(d), vec![(0..d).collect()]);
    }
    let eig = herm(s.density()).symmetric_eigen();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let basis = CMatrix::from_fn(d, d, |i, j| eig.eigenvectors[(i, order[j])]);
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for (pos, &idx) in order.iter().enumerate() {
        let lam = eig.eigenvalues[idx];
        match groups.last_mut() {
            Some(gr) if (eig.eigenvalues[order[gr[0]]] - lam).abs() <= 1e-10 => gr.push(pos),
            _ => groups.push(vec![pos]),
        }
    }
    (basis, groups)
}

fn block_unitary(
    s: &AlgebraState,
    seed: u64,
    mut make: impl FnMut(usize, &mut ChaCha8Rng) -> CMatrix,
) -> Automorphism {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (basis, groups) = eigenspaces(s);
    let d = s.dim();
    let mut inner = CMatrix::zeros(d, d);
    for gr in &groups {
        let u = make(gr.len(), &mut rng);
        for (a, &i) in gr.iter().enumerate() {
            for (b, &j) in gr.iter().enumerate() {
                inner[(i, j)] = u[(a, b)];
            }
        }
    }
    Automorphism {
        unitary: &basis * inner * basis.adjoint(),
    }
}

/// Seeded random unitary commuting with the density matrix: Haar on each
/// eigenspace of `rho` (Haar on all of `U(d)` for the tracial state).
pub fn random_state_preserving_unitary(s: &AlgebraState, seed: u64) -> Automorphism {
    block_unitary(s, seed, haar_unitary)
}

/// Like [`random_state_preserving_unitary`] but with `U^order = I`.
pub fn random_state_preserving_unitary_of_order(
    s: &AlgebraState,
    order: usize,
    seed: u64,
) -> Automorphism {
    block_unitary(s, seed, |n, rng| {
        let v = haar_unitary(n, rng);
        let roots = DVector::from_fn(n, |_, _| {
            let k = rng.random_range(0..order);
            Complex64::from_polar(1.0, std::f64::consts::TAU * k as f64 / order as f64)
        });
        &v * CMatrix::from_diagonal(&roots) * v.adjoint()
    })
}

/// Seeded diagonal unitary with uniform random phases.
pub fn random_diagonal_unitary(d: usize, seed: u64) -> Automorphism {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let phases = DVector::from_fn(d, |_, _| random_phase(&mut rng));
    Automorphism {
        unitary: CMatrix::from_diagonal(&phases),
    }
}

/// Seeded complex Ginibre matrix.
pub fn random_matrix(d: usize, seed: u64) -> CMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    CMatrix::from_fn(d, d, |_, _| gaussian_complex(&mut rng))
}

pub fn random_hermitian(d: usize, seed: u64) -> CMatrix {
    herm(&random_matrix(d, seed))
}

/// Seeded positive semidefinite matrix `G G* / d`.
pub fn random_positive(d: usize, seed: u64) -> CMatrix {
    let g = random_matrix(d, seed);
    herm(&(&g * g.adjoint() * Complex64::new(1.0 / d as f64, 0.0)))
}

/// `x <= y` in operator order: the smallest eigenvalue of `y - x` is at least `-tol`.
pub fn operator_order_leq(x: &CMatrix, y: &CMatrix, tol: f64) -> Result<bool> {
    if x.shape() != y.shape() {
        return Err(Error::input("operands have different shapes"));
    }
    for (name, m) in [("left", x), ("right", y)] {
        let scale = max_abs(m).max(1.0);
        if !is_hermitian(m, 1e-12 * scale) {
            return Err(Error::input(format!("{name} operand is not Hermitian")));
        }
    }
    Ok(min_eigenvalue(&(y - x)) >= -tol)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn state_values() {
        let t = AlgebraState::tracial(2);
        assert!((state_value(&t, &identity(2)).unwrap() - c(1.0)).norm() < 1e-15);
        let s = AlgebraState::diagonal(&[0.7, 0.3]).unwrap();
        let v = state_value(&s, &real_diagonal(&[1.0, -1.0])).unwrap();
        assert!((v - c(0.4)).norm() < 1e-15);
        let x = random_hermitian(3, 4);
        let s3 = AlgebraState::tracial(3);
        let v = state_value(&s3, &x).unwrap();
        let va = state_value(&s3, &x.adjoint()).unwrap();
        assert!((v - va.conj()).norm() < 1e-15);
        assert!(state_value(&s, &identity(3)).is_err());
    }

    #[test]
    fn state_validation() {
        assert!(AlgebraState::diagonal(&[0.5, 0.6]).is_err());
        assert!(AlgebraState::diagonal(&[1.0, 0.0]).is_err());
        assert!(AlgebraState::diagonal(&[0.25, 0.75]).is_ok());
    }

    #[test]
    fn gns_norms() {
        let t = AlgebraState::tracial(2);
        assert!((gns_norm2(&t, &real_diagonal(&[1.0, -1.0])).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(gns_norm2(&t, &CMatrix::zeros(2, 2)).unwrap(), 0.0);
        let s = AlgebraState::diagonal(&[0.1, 0.2, 0.3, 0.4]).unwrap();
        for seed in 0..100 {
            let x = random_matrix(4, seed);
            assert!(gns_norm2(&s, &x).unwrap() <= operator_norm(&x) + 1e-12);
        }
    }

    #[test]
    fn state_invariance() {
        let t = AlgebraState::tracial(2);
        let u = random_state_preserving_unitary(&AlgebraState::tracial(2), 3);
        assert!(check_state_invariance(&t, u.unitary()).unwrap());

        let s = AlgebraState::diagonal(&[0.7, 0.3]).unwrap();
        let swap = CMatrix::from_row_slice(2, 2, &[ZERO, c(1.0), c(1.0), ZERO]);
        assert!(!check_state_invariance(&s, &swap).unwrap());
        let phases = CMatrix::from_diagonal(&DVector::from_vec(vec![
            Complex64::from_polar(1.0, 0.3),
            Complex64::from_polar(1.0, -1.1),
        ]));
        assert!(check_state_invariance(&s, &phases).unwrap());
        assert!(check_state_invariance(&s, &(swap * c(2.0))).is_err());
    }

    #[test]
    fn random_unitaries() {
        let s = AlgebraState::diagonal(&[0.1, 0.2, 0.3, 0.4]).unwrap();
        for seed in 0..5 {
            let u = random_state_preserving_unitary(&s, seed);
            assert!(check_state_invariance(&s, u.unitary()).unwrap());
        }
        let t = AlgebraState::tracial(4);
        let a = random_state_preserving_unitary(&t, 11);
        assert_eq!(a, random_state_preserving_unitary(&t, 11));
        assert_ne!(a, random_state_preserving_unitary(&t, 12));

        // Degenerate eigenspace gets a non-diagonal block.
        let s = AlgebraState::diagonal(&[0.25, 0.25, 0.5]).unwrap();
        let u = random_state_preserving_unitary(&s, 5);
        assert!(u.preserves(&s));
        assert!(u.unitary()[(0, 1)].norm() > 1e-6);

        let u3 = random_state_preserving_unitary_of_order(&t, 3, 9);
        let cube = u3.unitary() * u3.unitary() * u3.unitary();
        assert!(max_abs(&(cube - identity(4))) < 1e-12);
    }

    #[test]
    fn conjugation_is_exactly_adjoint_compatible() {
        let u = random_state_preserving_unitary(&AlgebraState::tracial(3), 1);
        let x = random_matrix(3, 2);
        let a = u.apply(&x).adjoint();
        let b = u.apply(&x.adjoint());
        assert_eq!(a, b);
        let direct = u.unitary() * &x * u.unitary().adjoint();
        assert!(max_abs(&(direct - u.apply(&x))) < 1e-14);
    }

    #[test]
    fn multiplicative_and_unital() {
        let u = random_state_preserving_unitary(&AlgebraState::tracial(4), 8);
        let x = random_matrix(4, 1);
        let y = random_matrix(4, 2);
        let lhs = u.apply(&(&x * &y));
        let rhs = u.apply(&x) * u.apply(&y);
        assert!(max_abs(&(lhs - rhs)) < 1e-12);
        assert!(max_abs(&(u.apply(&identity(4)) - identity(4))) < 1e-14);
    }

    #[test]
    fn words() {
        let oracle = GroupOracle::free(2).unwrap();
        let t = AlgebraState::tracial(2);
        let act = ActionAssignment::seeded(oracle.table(), Some(oracle.family()), &t, 7).unwrap();
        let x = random_matrix(2, 3);
        assert_eq!(act.apply_word(&Word::identity(), &x).unwrap(), x);
        let back = act.apply_word(&Word(vec![0, 1]), &x).unwrap();
        assert!(max_abs(&(back - &x)) < 1e-13);
        let one = act.apply_word(&Word(vec![2]), &x).unwrap();
        let u = act.get(2).unitary();
        assert!(max_abs(&(one - u * &x * u.adjoint())) < 1e-14);
        let w = Word(vec![0, 2, 2, 1, 3]);
        let uw = act.word_unitary(&w).unwrap();
        let direct = &uw * &x * uw.adjoint();
        assert!(max_abs(&(act.apply_word(&w, &x).unwrap() - direct)) < 1e-13);
        assert!(act.apply_word(&Word(vec![9]), &x).is_err());
    }

    #[test]
    fn seeded_actions_respect_relations() {
        let t = AlgebraState::tracial(3);
        for fam in [Family::Free(2), Family::FreeProductCyclic(vec![2, 3, 4])] {
            let o = GroupOracle::new(fam).unwrap();
            let act = ActionAssignment::seeded(o.table(), Some(o.family()), &t, 5).unwrap();
            act.verify_relators(&o, 3).unwrap();
            act.preserves(&t).unwrap();
        }
        let s = AlgebraState::diagonal(&[0.5, 0.3, 0.2]).unwrap();
        let o = GroupOracle::free_abelian(2).unwrap();
        let act = ActionAssignment::seeded(o.table(), Some(o.family()), &s, 5).unwrap();
        act.verify_relators(&o, 3).unwrap();
        act.preserves(&s).unwrap();

        // A generic free-group action does not satisfy the Z^2 relations.
        let f = GroupOracle::free(2).unwrap();
        let act = ActionAssignment::seeded(f.table(), Some(f.family()), &t, 5).unwrap();
        assert!(act.verify_relators(&o, 2).is_err());
    }

    #[test]
    fn involution_compatibility_is_enforced() {
        let o = GroupOracle::free(1).unwrap();
        let u = random_state_preserving_unitary(&AlgebraState::tracial(2), 1);
        let bad = ActionAssignment::new(o.table().clone(), vec![u.clone(), u.clone()]);
        assert!(bad.is_err());
        let ok = ActionAssignment::new(o.table().clone(), vec![u.clone(), u.inverse()]);
        assert!(ok.is_ok());
    }

    #[test]
    fn order_relation() {
        let x = random_hermitian(3, 1);
        assert!(operator_order_leq(&x, &x, 0.0).unwrap());
        for seed in 0..20 {
            let y = random_matrix(3, seed);
            assert!(operator_order_leq(&CMatrix::zeros(3, 3), &(y.adjoint() * &y), 1e-12).unwrap());
        }
        assert!(!operator_order_leq(
            &real_diagonal(&[1.0, 0.0]),
            &real_diagonal(&[0.0, 1.0]),
            1e-12
        )
        .unwrap());
        assert!(operator_order_leq(&random_matrix(2, 1), &identity(2), 0.0).is_err());
    }

    #[test]
    fn factor_lookup() {
        let o = GroupOracle::free_product(&[2, 3, 2, 5]).unwrap();
        let factors: Vec<usize> = (0..o.table().len())
            .map(|g| factor_of(o.table(), g))
            .collect();
        assert_eq!(factors, vec![0, 1, 1, 2, 3, 3]);
    }
}
