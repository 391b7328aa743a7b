//! Spherical sums and their Cesàro averages
//! `s_N(x) = (1/N) sum_{n=1}^{N} rho^-n S_{n+1}(x)`, with `S_m` the sum over
//! the sphere of radius `m`.

use num_complex::Complex64;

use crate::algebra::{
    gns_norm2, identity, is_hermitian, max_abs, max_eigenvalue, min_eigenvalue, operator_norm,
    operator_order_leq, state_value, AlgebraState, CMatrix, Observable,
};
use crate::automaton::{count_to_f64, path_count_series};
use crate::covering::CoveringOperator;
use crate::error::{Error, Result};

/// Slack added to the right-hand side of the squares inequality.
pub const SQUARES_SLACK: f64 = 1e-10;
/// Eigenvalue tolerance for positivity checks.
pub const PSD_TOL: f64 = 1e-10;
/// Relative tolerance of the state functional identity.
pub const STATE_REL_TOL: f64 = 1e-12;
/// Relative size below which ladder deltas are treated as zero.
pub const DELTA_FLOOR: f64 = 1e-12;
/// Largest radius used for the normalized Schwarz check.
pub const SCHWARZ_RADIUS: usize = 6;

fn scaled(x: &CMatrix, s: f64) -> CMatrix {
    x.map(|z| z * s)
}

/// `sum_{|g| = n} g(x)`.
pub fn spherical_sum(cov: &CoveringOperator, x: &Observable, n: usize) -> Result<Observable> {
    cov.sphere_sum_via_p(x, n)
}

/// `N(n)^-1 sum_{|g| = n} g(x)`.
pub fn normalized_spherical(
    cov: &CoveringOperator,
    x: &Observable,
    n: usize,
) -> Result<Observable> {
    let count = path_count_series(cov.automaton(), n)
        .pop()
        .expect("non-empty");
    let count = count_to_f64(&count);
    if count == 0.0 {
        return Err(Error::input(format!("sphere of radius {n} is empty")));
    }
    Ok(scaled(&spherical_sum(cov, x, n)?, 1.0 / count))
}

/// `s_N(x)` for every `N` in `ns` (sorted, positive), from one pass over the iterates.
pub fn cesaro_ladder(
    cov: &CoveringOperator,
    x: &Observable,
    ns: &[usize],
) -> Result<Vec<Observable>> {
    if ns.is_empty() {
        return Ok(Vec::new());
    }
    if ns[0] == 0 || ns.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::input(
            "averaging lengths must be positive and increasing",
        ));
    }
    let inv_rho = 1.0 / cov.rho();
    let d = x.nrows();
    let mut acc = CMatrix::zeros(d, d);
    let mut out = Vec::with_capacity(ns.len());
    let mut xi = cov.lift(x);
    let mut next = ns.iter().peekable();
    for n in 1..=*ns.last().expect("non-empty") {
        xi = cov.apply_p(&xi)?;
        for s in &mut xi.slots {
            *s = scaled(s, inv_rho);
        }
        acc += cov.readout(&xi)?;
        if next.peek() == Some(&&n) {
            next.next();
            out.push(scaled(&acc, 1.0 / n as f64));
        }
    }
    Ok(out)
}

pub fn cesaro_average(cov: &CoveringOperator, x: &Observable, n: usize) -> Result<Observable> {
    Ok(cesaro_ladder(cov, x, &[n])?.pop().expect("one sample"))
}

/// `c_N = (1/N) sum_{n=1}^{N} rho^-n N(n+1)` for `N = 1..=n_max` (index 0 holds `c_1`).
pub fn cesaro_weights(cov: &CoveringOperator, n_max: usize) -> Vec<f64> {
    let counts = path_count_series(cov.automaton(), n_max + 1);
    let rho = cov.rho();
    let mut acc = 0.0;
    (1..=n_max)
        .map(|n| {
            acc += count_to_f64(&counts[n + 1]) / rho.powi(n as i32);
            acc / n as f64
        })
        .collect()
}

/// Sampled Cesàro averages of one observable.
#[derive(Clone, Debug)]
pub struct AverageSeries {
    pub rho: f64,
    pub ns: Vec<usize>,
    pub samples: Vec<Observable>,
    /// `c_N` for each entry of `ns`.
    pub weights: Vec<f64>,
}

pub fn average_series(
    cov: &CoveringOperator,
    x: &Observable,
    ns: &[usize],
) -> Result<AverageSeries> {
    let samples = cesaro_ladder(cov, x, ns)?;
    let all = cesaro_weights(cov, ns.last().copied().unwrap_or(0));
    Ok(AverageSeries {
        rho: cov.rho(),
        ns: ns.to_vec(),
        samples,
        weights: ns.iter().map(|&n| all[n - 1]).collect(),
    })
}

#[derive(Clone, Debug)]
pub struct ConvergenceReport {
    /// `N_max/8, N_max/4, N_max/2, N_max`.
    pub ladder: [usize; 4],
    pub samples: Vec<Observable>,
    /// `||s_{N_i+1} - s_{N_i}||_2` in the GNS norm, consecutive ladder entries.
    pub gns_deltas: Vec<f64>,
    pub op_deltas: Vec<f64>,
    pub limit: Observable,
    /// Deltas at or below this size count as round-off.
    pub floor: f64,
}

impl ConvergenceReport {
    /// No delta exceeds the one before it (in both norms), ignoring round-off.
    pub fn cauchy(&self) -> bool {
        let ok = |d: &[f64]| d.windows(2).all(|w| w[1] <= w[0] || w[1] <= self.floor);
        ok(&self.gns_deltas) && ok(&self.op_deltas)
    }

    pub fn strictly_decreasing(&self) -> bool {
        let ok = |d: &[f64]| d.windows(2).all(|w| w[1] < w[0]);
        ok(&self.gns_deltas) && ok(&self.op_deltas)
    }
}

pub fn convergence_diagnostics(
    cov: &CoveringOperator,
    state: &AlgebraState,
    x: &Observable,
    n_max: usize,
) -> Result<ConvergenceReport> {
    if n_max < 8 {
        return Err(Error::input("N_max must be at least 8"));
    }
    let ladder = [n_max / 8, n_max / 4, n_max / 2, n_max];
    let samples = cesaro_ladder(cov, x, &ladder)?;
    let mut gns_deltas = Vec::with_capacity(3);
    let mut op_deltas = Vec::with_capacity(3);
    for w in samples.windows(2) {
        let diff = &w[1] - &w[0];
        gns_deltas.push(gns_norm2(state, &diff)?);
        op_deltas.push(operator_norm(&diff));
    }
    let limit = samples[3].clone();
    let floor = DELTA_FLOOR * operator_norm(&limit).max(1.0);
    Ok(ConvergenceReport {
        ladder,
        samples,
        gns_deltas,
        op_deltas,
        limit,
        floor,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct StateFunctionalReport {
    pub n: usize,
    /// `phi(s_N(x))`.
    pub lhs: Complex64,
    /// `c_N phi(x)`.
    pub rhs: Complex64,
    pub weight: f64,
    /// `|lhs - rhs| / max(|rhs|, c_N ||x||)`.
    pub rel_error: f64,
}

impl StateFunctionalReport {
    pub fn passed(&self) -> bool {
        self.rel_error <= STATE_REL_TOL
    }
}

pub fn state_functional_check(
    cov: &CoveringOperator,
    state: &AlgebraState,
    x: &Observable,
    n: usize,
) -> Result<StateFunctionalReport> {
    let s = cesaro_average(cov, x, n)?;
    let weight = cesaro_weights(cov, n)[n - 1];
    let lhs = state_value(state, &s)?;
    let rhs = state_value(state, x)? * weight;
    let scale = rhs.norm().max(weight * operator_norm(x));
    let err = (lhs - rhs).norm();
    Ok(StateFunctionalReport {
        n,
        lhs,
        rhs,
        weight,
        rel_error: if scale > 0.0 { err / scale } else { err },
    })
}

fn require_positive(x: &Observable) -> Result<()> {
    if !is_hermitian(x, 1e-12 * max_abs(x).max(1.0)) || min_eigenvalue(x) < -PSD_TOL {
        return Err(Error::input("observable is not positive semidefinite"));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct MajorantReport {
    /// `lambda_max(s_N(x))` for `N = 1..=N_max`.
    pub max_eigenvalues: Vec<f64>,
    /// `c* = max_N lambda_max(s_N(x))`.
    pub bound: f64,
    /// `c* / ||x||`.
    pub constant: f64,
    /// `s_N(x) <= c* I` for every `N`.
    pub dominated: bool,
}

pub fn majorant_bound(
    cov: &CoveringOperator,
    x: &Observable,
    n_max: usize,
) -> Result<MajorantReport> {
    require_positive(x)?;
    let ns: Vec<usize> = (1..=n_max).collect();
    let samples = cesaro_ladder(cov, x, &ns)?;
    let max_eigenvalues: Vec<f64> = samples.iter().map(max_eigenvalue).collect();
    let bound = max_eigenvalues
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let top = identity(x.nrows()) * Complex64::new(bound, 0.0);
    let mut dominated = true;
    for s in &samples {
        dominated &= operator_order_leq(s, &top, PSD_TOL)?;
    }
    let norm = operator_norm(x);
    Ok(MajorantReport {
        max_eigenvalues,
        bound,
        constant: if norm > 0.0 { bound / norm } else { 0.0 },
        dominated,
    })
}

/// Smallest `kappa` with `a <= kappa b + SQUARES_SLACK I`, or infinity.
pub fn order_constant(a: &CMatrix, b: &CMatrix) -> f64 {
    let slack = identity(a.nrows()) * Complex64::new(SQUARES_SLACK, 0.0);
    let holds = |k: f64| min_eigenvalue(&(b * Complex64::new(k, 0.0) + &slack - a)) >= 0.0;
    if holds(0.0) {
        return 0.0;
    }
    let mut hi = 1.0;
    while !holds(hi) {
        hi *= 2.0;
        if hi > 1e15 {
            return f64::INFINITY;
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if holds(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

#[derive(Clone, Debug, PartialEq)]
pub struct SquaresReport {
    /// `min_n lambda_min(sigma_n(x^2) - sigma_n(x)^2)` over `n <= SCHWARZ_RADIUS`.
    pub schwarz_min_eigenvalue: f64,
    /// Smallest `kappa` with `sigma_n(x)^2 <= kappa sigma_n(x^2) + slack`, per radius `0..=SCHWARZ_RADIUS`.
    pub sigma_kappas: Vec<f64>,
    /// Smallest `kappa_N` with `s_N(x)^2 <= kappa_N s_N(x^2) + slack`, for `N = 1..=N_max`.
    pub kappas: Vec<f64>,
    pub kappa_max: f64,
}

impl SquaresReport {
    pub fn schwarz_holds(&self) -> bool {
        self.schwarz_min_eigenvalue >= -PSD_TOL
    }
}

pub fn squares_check(
    cov: &CoveringOperator,
    x: &Observable,
    n_max: usize,
) -> Result<SquaresReport> {
    require_positive(x)?;
    let x2 = x * x;
    let mut schwarz_min_eigenvalue = f64::INFINITY;
    let mut sigma_kappas = Vec::new();
    for n in 0..=SCHWARZ_RADIUS {
        let a = normalized_spherical(cov, x, n)?;
        let a2 = &a * &a;
        let b = normalized_spherical(cov, &x2, n)?;
        schwarz_min_eigenvalue = schwarz_min_eigenvalue.min(min_eigenvalue(&(&b - &a2)));
        sigma_kappas.push(order_constant(&a2, &b));
    }
    let ns: Vec<usize> = (1..=n_max).collect();
    let sx = cesaro_ladder(cov, x, &ns)?;
    let sx2 = cesaro_ladder(cov, &x2, &ns)?;
    let kappas: Vec<f64> = sx
        .iter()
        .zip(&sx2)
        .map(|(a, b)| order_constant(&(a * a), b))
        .collect();
    let kappa_max = kappas.iter().copied().fold(0.0, f64::max);
    Ok(SquaresReport {
        schwarz_min_eigenvalue,
        sigma_kappas,
        kappas,
        kappa_max,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{
        random_hermitian, random_matrix, random_positive, random_state_preserving_unitary,
        ActionAssignment,
    };
    use crate::automaton::{
        build_free_abelian_automaton, build_free_group_automaton, Edge, MarkovAutomaton,
    };
    use crate::words::GroupOracle;

    fn free2(d: usize, seed: Option<u64>) -> (CoveringOperator, AlgebraState) {
        let o = GroupOracle::free(2).unwrap();
        let s = AlgebraState::tracial(d);
        let act = match seed {
            Some(seed) => ActionAssignment::seeded(o.table(), Some(o.family()), &s, seed).unwrap(),
            None => ActionAssignment::trivial(o.table().clone(), d),
        };
        let a = build_free_group_automaton(2).unwrap();
        (CoveringOperator::new(&a, &act).unwrap(), s)
    }

    fn integers(seed: Option<u64>) -> (CoveringOperator, AlgebraState) {
        let o = GroupOracle::free_abelian(1).unwrap();
        let s = AlgebraState::diagonal(&[0.7, 0.3]).unwrap();
        let act = match seed {
            Some(seed) => ActionAssignment::seeded(o.table(), Some(o.family()), &s, seed).unwrap(),
            None => ActionAssignment::trivial(o.table().clone(), 2),
        };
        let a = build_free_abelian_automaton(1).unwrap();
        (CoveringOperator::new(&a, &act).unwrap(), s)
    }

    fn self_loop(seed: u64) -> CoveringOperator {
        let table = GroupOracle::free(1).unwrap().table().clone();
        let a = MarkovAutomaton::new(
            vec!["v0".into(), "v".into()],
            0,
            table.clone(),
            vec![
                Edge {
                    from: 0,
                    to: 1,
                    label: 0,
                },
                Edge {
                    from: 1,
                    to: 1,
                    label: 0,
                },
            ],
        )
        .unwrap();
        let u = random_state_preserving_unitary(&AlgebraState::tracial(2), seed);
        let act = ActionAssignment::new(table, vec![u.clone(), u.inverse()]).unwrap();
        CoveringOperator::new(&a, &act).unwrap()
    }

    #[test]
    fn spherical_sums() {
        let (cov, _) = free2(2, None);
        let x = random_hermitian(2, 1);
        assert_eq!(spherical_sum(&cov, &x, 0).unwrap(), x);
        assert!(max_abs(&(spherical_sum(&cov, &x, 2).unwrap() - scaled(&x, 12.0))) < 1e-13);

        let (cov, _) = integers(Some(4));
        let u = cov.action().get(0).unitary().clone();
        let u3 = u.pow(3);
        let expected = &u3 * &x * u3.adjoint() + u3.adjoint() * &x * &u3;
        assert!(max_abs(&(spherical_sum(&cov, &x, 3).unwrap() - expected)) < 1e-13);
    }

    #[test]
    fn normalized_is_unital() {
        let (cov, _) = free2(2, Some(7));
        for n in 0..=8 {
            let s = normalized_spherical(&cov, &identity(2), n).unwrap();
            assert!(max_abs(&(s - identity(2))) < 1e-13);
        }
        let (triv, _) = free2(2, None);
        let x = random_hermitian(2, 3);
        assert!(max_abs(&(normalized_spherical(&triv, &x, 4).unwrap() - &x)) < 1e-14);
    }

    #[test]
    fn trivial_cesaro_closed_forms() {
        let (cov, _) = free2(2, None);
        let x = random_hermitian(2, 5);
        let ns: Vec<usize> = (1..=64).collect();
        for s in cesaro_ladder(&cov, &x, &ns).unwrap() {
            assert!(max_abs(&(s - scaled(&x, 4.0))) < 1e-12);
        }
        let (z, _) = integers(None);
        let s = cesaro_average(&z, &x, 10).unwrap();
        assert!(max_abs(&(s - scaled(&x, 2.0))) < 1e-13);
        let zero = CMatrix::zeros(2, 2);
        assert_eq!(cesaro_average(&cov, &zero, 5).unwrap(), zero);
        assert!(cesaro_ladder(&cov, &x, &[4, 4]).is_err());
        assert!(cesaro_ladder(&cov, &x, &[0]).is_err());
    }

    #[test]
    fn ladder_matches_direct_sums() {
        let (cov, _) = free2(2, Some(9));
        let x = random_hermitian(2, 2);
        let n = 5;
        let mut direct = CMatrix::zeros(2, 2);
        for k in 1..=n {
            direct += scaled(
                &spherical_sum(&cov, &x, k + 1).unwrap(),
                cov.rho().powi(-(k as i32)),
            );
        }
        let direct = scaled(&direct, 1.0 / n as f64);
        assert!(max_abs(&(cesaro_average(&cov, &x, n).unwrap() - direct)) < 1e-12);
    }

    #[test]
    fn weights() {
        let (cov, _) = free2(2, None);
        assert!(cesaro_weights(&cov, 40)
            .iter()
            .all(|c| (c - 4.0).abs() < 1e-12));
        let (z, _) = integers(None);
        assert!(cesaro_weights(&z, 40)
            .iter()
            .all(|c| (c - 2.0).abs() < 1e-15));
    }

    #[test]
    fn hermiticity_linearity_positivity() {
        let (cov, _) = free2(3, Some(11));
        let x = random_matrix(3, 1);
        let y = random_matrix(3, 2);
        let s = cesaro_average(&cov, &x, 7).unwrap();
        assert_eq!(s.adjoint(), cesaro_average(&cov, &x.adjoint(), 7).unwrap());

        let (a, b) = (Complex64::new(0.3, -1.2), Complex64::new(-2.0, 0.5));
        let lhs = cesaro_average(&cov, &(&x * a + &y * b), 7).unwrap();
        let rhs = s * a + cesaro_average(&cov, &y, 7).unwrap() * b;
        assert!(max_abs(&(lhs - rhs)) < 1e-12);

        let p = random_positive(3, 4);
        let ns: Vec<usize> = (1..=12).collect();
        for s in cesaro_ladder(&cov, &p, &ns).unwrap() {
            assert!(min_eigenvalue(&s) >= -PSD_TOL);
        }
    }

    #[test]
    fn convergence_report() {
        let (cov, s) = free2(2, None);
        let r = convergence_diagnostics(&cov, &s, &random_hermitian(2, 1), 32).unwrap();
        assert_eq!(r.ladder, [4, 8, 16, 32]);
        assert!(r.gns_deltas.iter().chain(&r.op_deltas).all(|&d| d < 1e-12));
        assert!(r.cauchy());

        let (cov, s) = free2(2, Some(1));
        let r = convergence_diagnostics(&cov, &s, &identity(2), 16).unwrap();
        assert!(r.gns_deltas.iter().all(|&d| d < 1e-12));
        assert!(convergence_diagnostics(&cov, &s, &identity(2), 7).is_err());

        let (cov, s) = free2(2, Some(21));
        let r = convergence_diagnostics(&cov, &s, &random_hermitian(2, 3), 64).unwrap();
        assert!(r.gns_deltas.iter().all(|&d| d >= 0.0));
        assert_eq!(r.limit, r.samples[3]);
    }

    #[test]
    fn state_functional() {
        let (cov, s) = free2(2, Some(3));
        let x = random_hermitian(2, 6);
        for n in [1, 5, 20] {
            let r = state_functional_check(&cov, &s, &x, n).unwrap();
            assert!((r.weight - 4.0).abs() < 1e-12);
            assert!(r.passed(), "{r:?}");
        }
        let (z, s) = integers(Some(5));
        let r = state_functional_check(&z, &s, &x, 9).unwrap();
        assert!((r.weight - 2.0).abs() < 1e-15);
        assert!(r.passed(), "{r:?}");

        let (cov, s) = free2(2, Some(3));
        let traceless = &x - identity(2) * Complex64::new(x.trace().re / 2.0, 0.0);
        let r = state_functional_check(&cov, &s, &traceless, 6).unwrap();
        assert!(r.lhs.norm() < 1e-13 && r.rhs.norm() < 1e-13);
    }

    #[test]
    fn majorant() {
        let (cov, _) = free2(2, None);
        let x = random_positive(2, 2);
        let r = majorant_bound(&cov, &x, 16).unwrap();
        assert!((r.bound - 4.0 * operator_norm(&x)).abs() < 1e-12);
        assert!(r.dominated);

        let (cov, _) = free2(2, Some(5));
        let r = majorant_bound(&cov, &identity(2), 8).unwrap();
        assert!((r.bound - 4.0).abs() < 1e-12);
        let r1 = majorant_bound(&cov, &x, 20).unwrap();
        let r2 = majorant_bound(&cov, &scaled(&x, 2.0), 20).unwrap();
        assert!(r1.dominated);
        assert!((r2.bound - 2.0 * r1.bound).abs() <= 1e-12 * r1.bound);
        assert!(majorant_bound(&cov, &(-identity(2)), 4).is_err());
    }

    #[test]
    fn squares() {
        let (cov, _) = free2(2, None);
        let x = random_positive(2, 3) + identity(2);
        let r = squares_check(&cov, &x, 10).unwrap();
        assert!(r.schwarz_holds());
        assert!(
            r.kappas.iter().all(|k| (k - 4.0).abs() < 1e-9),
            "{:?}",
            r.kappas
        );

        let cov = self_loop(8);
        let r = squares_check(&cov, &x, 6).unwrap();
        assert!(
            r.sigma_kappas.iter().all(|k| (k - 1.0).abs() < 1e-9),
            "{:?}",
            r.sigma_kappas
        );

        let (cov, _) = free2(2, Some(13));
        let r = squares_check(&cov, &random_positive(2, 9), 12).unwrap();
        assert!(r.schwarz_holds());
        assert!(r.kappa_max.is_finite() && r.kappa_max > 0.0);
    }

    #[test]
    fn schwarz_on_random_observables() {
        let (cov, _) = free2(2, Some(17));
        for seed in 0..50 {
            let x = random_matrix(2, 100 + seed);
            for n in 0..=6 {
                let a = normalized_spherical(&cov, &x, n).unwrap();
                let b = normalized_spherical(&cov, &(x.adjoint() * &x), n).unwrap();
                assert!(min_eigenvalue(&(b - a.adjoint() * a)) >= -PSD_TOL);
            }
        }
    }

    #[test]
    fn order_constants() {
        let x = random_positive(2, 1) + identity(2);
        assert!((order_constant(&scaled(&x, 3.0), &x) - 3.0).abs() < 1e-9);
        assert_eq!(order_constant(&CMatrix::zeros(2, 2), &x), 0.0);
        let mut b = CMatrix::zeros(2, 2);
        b[(0, 0)] = Complex64::new(1.0, 0.0);
        assert!(order_constant(&identity(2), &b).is_infinite());
    }
}
