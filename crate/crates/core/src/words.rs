//! Group elements in normal form for the supported families.
//!
//! Every family uses a symmetric generating set whose symbols are plain
//! indices. For a generator pair the positive letter comes first and its
//! inverse second; an order-two generator of a free product is a single
//! self-inverse symbol. Normal forms are chosen so that the number of
//! letters equals the geodesic word length.

use std::collections::{BTreeSet, HashSet};
use std::fmt;

use crate::error::{Error, Result};

/// Maximum number of elements `enumerate_ball` will materialise.
pub const BALL_GUARD: usize = 10_000_000;

/// Index of a generator symbol.
pub type Letter = usize;

/// A generator together with its inverse symbol.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Generator {
    pub id: Letter,
    pub inverse_id: Letter,
}

/// Names and the inverse involution of a symmetric generating set.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GeneratorTable {
    names: Vec<String>,
    inverse: Vec<Letter>,
}

impl GeneratorTable {
    pub fn new(names: Vec<String>, inverse: Vec<Letter>) -> Result<Self> {
        if names.len() != inverse.len() {
            return Err(Error::input(format!(
                "generator table has {} names but {} inverses",
                names.len(),
                inverse.len()
            )));
        }
        let unique: HashSet<&str> = names.iter().map(String::as_str).collect();
        if unique.len() != names.len() {
            return Err(Error::input("generator names must be distinct"));
        }
        for (g, &inv) in inverse.iter().enumerate() {
            if inv >= inverse.len() {
                return Err(Error::input(format!(
                    "generator {} has out-of-range inverse {inv}",
                    names[g]
                )));
            }
            if inverse[inv] != g {
                return Err(Error::input(format!(
                    "inverse map is not an involution at generator {}",
                    names[g]
                )));
            }
        }
        Ok(Self { names, inverse })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn inverse(&self, g: Letter) -> Letter {
        self.inverse[g]
    }

    pub fn name(&self, g: Letter) -> &str {
        &self.names[g]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn generator(&self, g: Letter) -> Generator {
        Generator {
            id: g,
            inverse_id: self.inverse[g],
        }
    }

    pub fn lookup(&self, name: &str) -> Option<Letter> {
        self.names.iter().position(|n| n == name)
    }

    pub fn is_self_inverse(&self, g: Letter) -> bool {
        self.inverse[g] == g
    }

    fn check(&self, letters: &[Letter]) -> Result<()> {
        match letters.iter().find(|&&l| l >= self.len()) {
            Some(l) => Err(Error::input(format!(
                "unknown generator id {l} (table has {} symbols)",
                self.len()
            ))),
            None => Ok(()),
        }
    }
}

fn pair_names(i: usize) -> (String, String) {
    if i < 26 {
        let c = (b'a' + i as u8) as char;
        (c.to_string(), c.to_ascii_uppercase().to_string())
    } else {
        (format!("a{i}"), format!("A{i}"))
    }
}

/// Generator table with `k` generator pairs `a, A, b, B, ...`.
fn paired_table(k: usize) -> GeneratorTable {
    let mut names = Vec::with_capacity(2 * k);
    let mut inverse = Vec::with_capacity(2 * k);
    for i in 0..k {
        let (pos, neg) = pair_names(i);
        names.push(pos);
        names.push(neg);
        inverse.push(2 * i + 1);
        inverse.push(2 * i);
    }
    GeneratorTable { names, inverse }
}

/// A word over the generator symbols.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Word(pub Vec<Letter>);

impl Word {
    pub fn identity() -> Self {
        Word(Vec::new())
    }

    pub fn letters(&self) -> &[Letter] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn concat(&self, other: &Word) -> Word {
        let mut letters = self.0.clone();
        letters.extend_from_slice(&other.0);
        Word(letters)
    }

    pub fn display<'a>(&'a self, table: &'a GeneratorTable) -> impl fmt::Display + 'a {
        WordDisplay { word: self, table }
    }
}

impl From<Vec<Letter>> for Word {
    fn from(letters: Vec<Letter>) -> Self {
        Word(letters)
    }
}

struct WordDisplay<'a> {
    word: &'a Word,
    table: &'a GeneratorTable,
}

impl fmt::Display for WordDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.word.is_empty() {
            return f.write_str("e");
        }
        for (i, &l) in self.word.0.iter().enumerate() {
            if i > 0 {
                f.write_str(".")?;
            }
            f.write_str(self.table.name(l))?;
        }
        Ok(())
    }
}

/// Supported group families.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Family {
    /// Free group of the given rank.
    Free(usize),
    /// Free abelian group of the given rank.
    FreeAbelian(usize),
    /// Free product of cyclic groups of the given orders.
    FreeProductCyclic(Vec<usize>),
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Family::Free(k) => write!(f, "free:{k}"),
            Family::FreeAbelian(n) => write!(f, "abelian:{n}"),
            Family::FreeProductCyclic(orders) => {
                let parts: Vec<String> = orders.iter().map(|m| m.to_string()).collect();
                write!(f, "freeprod:{}", parts.join(","))
            }
        }
    }
}

impl std::str::FromStr for Family {
    type Err = Error;

    /// Parses `free:K`, `abelian:N` (alias `Z^N`, `Z`) or `freeprod:M1,M2,...`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "Z" {
            return Ok(Family::FreeAbelian(1));
        }
        if let Some(n) = s.strip_prefix("Z^") {
            return parse_usize(n).map(Family::FreeAbelian);
        }
        if let Some(k) = s.strip_prefix("F") {
            if let Ok(k) = k.parse() {
                return Ok(Family::Free(k));
            }
        }
        let (kind, rest) = s
            .split_once(':')
            .ok_or_else(|| Error::input(format!("unrecognised group spec {s:?}")))?;
        match kind {
            "free" => parse_usize(rest).map(Family::Free),
            "abelian" => parse_usize(rest).map(Family::FreeAbelian),
            "freeprod" => rest
                .split(',')
                .map(parse_usize)
                .collect::<Result<Vec<_>>>()
                .map(Family::FreeProductCyclic),
            _ => Err(Error::input(format!("unrecognised group family {kind:?}"))),
        }
    }
}

fn parse_usize(s: &str) -> Result<usize> {
    s.trim()
        .parse()
        .map_err(|_| Error::input(format!("expected a non-negative integer, got {s:?}")))
}

/// Ground-truth arithmetic for one group family.
#[derive(Clone, Debug)]
pub struct GroupOracle {
    family: Family,
    table: GeneratorTable,
    /// For free products: factor index and exponent (+1 or -1) of each symbol.
    syllables: Vec<(usize, i64)>,
}

impl GroupOracle {
    pub fn new(family: Family) -> Result<Self> {
        match &family {
            Family::Free(k) | Family::FreeAbelian(k) => {
                if *k < 1 {
                    return Err(Error::input("rank must be at least 1"));
                }
                let table = paired_table(*k);
                Ok(Self {
                    family,
                    table,
                    syllables: Vec::new(),
                })
            }
            Family::FreeProductCyclic(orders) => {
                if orders.is_empty() {
                    return Err(Error::input("free product needs at least one factor"));
                }
                if let Some(m) = orders.iter().find(|&&m| m < 2) {
                    return Err(Error::input(format!(
                        "cyclic factor order {m} must be >= 2"
                    )));
                }
                let mut names = Vec::new();
                let mut inverse = Vec::new();
                let mut syllables = Vec::new();
                for (i, &m) in orders.iter().enumerate() {
                    let (pos, neg) = pair_names(i);
                    let id = names.len();
                    if m == 2 {
                        names.push(pos);
                        inverse.push(id);
                        syllables.push((i, 1));
                    } else {
                        names.push(pos);
                        names.push(neg);
                        inverse.push(id + 1);
                        inverse.push(id);
                        syllables.push((i, 1));
                        syllables.push((i, -1));
                    }
                }
                Ok(Self {
                    family,
                    table: GeneratorTable { names, inverse },
                    syllables,
                })
            }
        }
    }

    pub fn free(k: usize) -> Result<Self> {
        Self::new(Family::Free(k))
    }

    pub fn free_abelian(n: usize) -> Result<Self> {
        Self::new(Family::FreeAbelian(n))
    }

    pub fn free_product(orders: &[usize]) -> Result<Self> {
        Self::new(Family::FreeProductCyclic(orders.to_vec()))
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn table(&self) -> &GeneratorTable {
        &self.table
    }

    /// Word consisting of the single generator `g`.
    pub fn letter(&self, g: Letter) -> Word {
        Word(vec![g])
    }

    /// Normal form of `w`.
    pub fn reduce(&self, w: &Word) -> Result<Word> {
        self.table.check(&w.0)?;
        Ok(match &self.family {
            Family::Free(_) => self.reduce_free(&w.0),
            Family::FreeAbelian(n) => self.reduce_abelian(*n, &w.0),
            Family::FreeProductCyclic(orders) => self.reduce_free_product(orders, &w.0),
        })
    }

    fn reduce_free(&self, letters: &[Letter]) -> Word {
        let mut out: Vec<Letter> = Vec::with_capacity(letters.len());
        for &l in letters {
            if out.last() == Some(&self.table.inverse(l)) {
                out.pop();
            } else {
                out.push(l);
            }
        }
        Word(out)
    }

    fn exponents(&self, n: usize, letters: &[Letter]) -> Vec<i64> {
        let mut exps = vec![0i64; n];
        for &l in letters {
            exps[l / 2] += if l % 2 == 0 { 1 } else { -1 };
        }
        exps
    }

    fn reduce_abelian(&self, n: usize, letters: &[Letter]) -> Word {
        let exps = self.exponents(n, letters);
        let mut out = Vec::new();
        for (i, &e) in exps.iter().enumerate() {
            let l = if e >= 0 { 2 * i } else { 2 * i + 1 };
            out.extend(std::iter::repeat_n(l, e.unsigned_abs() as usize));
        }
        Word(out)
    }

    /// Symbol ids of the positive and negative letter of factor `i`.
    fn factor_letters(&self, i: usize) -> (Letter, Letter) {
        let pos = self
            .syllables
            .iter()
            .position(|&(f, e)| f == i && e == 1)
            .expect("every factor has a positive letter");
        (pos, self.table.inverse(pos))
    }

    fn reduce_free_product(&self, orders: &[usize], letters: &[Letter]) -> Word {
        // Stack of syllables (factor, exponent mod order), exponent never zero.
        let mut stack: Vec<(usize, usize)> = Vec::new();
        for &l in letters {
            let (factor, sign) = self.syllables[l];
            let m = orders[factor];
            let step = if sign > 0 { 1 } else { m - 1 };
            match stack.last_mut() {
                Some((f, e)) if *f == factor => {
                    *e = (*e + step) % m;
                    if *e == 0 {
                        stack.pop();
                    }
                }
                _ => stack.push((factor, step)),
            }
        }
        let mut out = Vec::new();
        for (factor, e) in stack {
            let m = orders[factor];
            let (pos, neg) = self.factor_letters(factor);
            if e <= m - e {
                out.extend(std::iter::repeat_n(pos, e));
            } else {
                out.extend(std::iter::repeat_n(neg, m - e));
            }
        }
        Word(out)
    }

    pub fn invert(&self, w: &Word) -> Result<Word> {
        self.table.check(&w.0)?;
        Ok(Word(
            w.0.iter().rev().map(|&l| self.table.inverse(l)).collect(),
        ))
    }

    pub fn multiply(&self, a: &Word, b: &Word) -> Result<Word> {
        self.reduce(&a.concat(b))
    }

    pub fn word_length(&self, w: &Word) -> Result<usize> {
        Ok(self.reduce(w)?.len())
    }

    /// `d(a, b) = |a^{-1} b|`.
    pub fn distance(&self, a: &Word, b: &Word) -> Result<usize> {
        self.word_length(&self.invert(a)?.concat(b))
    }

    pub fn equal(&self, a: &Word, b: &Word) -> Result<bool> {
        Ok(self.reduce(a)? == self.reduce(b)?)
    }

    /// Spheres `S_0, ..., S_radius`, each sorted, as lists of normal forms.
    pub fn enumerate_spheres(&self, radius: usize) -> Result<Vec<Vec<Word>>> {
        self.enumerate_spheres_limited(radius, BALL_GUARD)
    }

    fn enumerate_spheres_limited(&self, radius: usize, limit: usize) -> Result<Vec<Vec<Word>>> {
        let mut spheres = vec![vec![Word::identity()]];
        let mut total = 1usize;
        for n in 0..radius {
            let mut next = BTreeSet::new();
            for w in &spheres[n] {
                for g in 0..self.table.len() {
                    let mut letters = w.0.clone();
                    letters.push(g);
                    let r = self.reduce(&Word(letters))?;
                    if r.len() == n + 1 {
                        next.insert(r);
                    }
                }
                if total + next.len() > limit {
                    return Err(Error::Resource(format!(
                        "ball of radius {radius} for {} exceeds {limit} elements",
                        self.family
                    )));
                }
            }
            total += next.len();
            spheres.push(next.into_iter().collect());
        }
        Ok(spheres)
    }

    /// All distinct normal forms of length at most `radius`, shortest first.
    pub fn enumerate_ball(&self, radius: usize) -> Result<Vec<Word>> {
        Ok(self
            .enumerate_spheres(radius)?
            .into_iter()
            .flatten()
            .collect())
    }

    /// `N(n)`, the number of elements of word length exactly `n`, by enumeration.
    pub fn count_sphere_bruteforce(&self, n: usize) -> Result<usize> {
        Ok(self.enumerate_spheres(n)?[n].len())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w(v: &[Letter]) -> Word {
        Word(v.to_vec())
    }

    // Symbols: a=0, A=1, b=2, B=3.

    #[test]
    fn free_reduction_cancels() {
        let g = GroupOracle::free(2).unwrap();
        assert_eq!(g.reduce(&w(&[0, 2, 3])).unwrap(), w(&[0]));
        assert_eq!(g.word_length(&w(&[0, 2, 1])).unwrap(), 3);
    }

    #[test]
    fn abelian_reduction_commutes() {
        let g = GroupOracle::free_abelian(2).unwrap();
        assert_eq!(g.reduce(&w(&[0, 2, 1])).unwrap(), w(&[2]));
    }

    #[test]
    fn free_product_relator() {
        let g = GroupOracle::free_product(&[2, 3]).unwrap();
        // a is the self-inverse symbol 0; b=1, B=2.
        assert_eq!(g.table().len(), 3);
        assert_eq!(g.reduce(&w(&[0, 0])).unwrap(), Word::identity());
        assert_eq!(g.reduce(&w(&[1, 1])).unwrap(), w(&[2]));
        assert_eq!(g.reduce(&w(&[1, 1, 1])).unwrap(), Word::identity());
    }

    #[test]
    fn free_product_even_order_prefers_positive_half() {
        let g = GroupOracle::free_product(&[4, 3]).unwrap();
        // factor 0: x=0, X=1
        assert_eq!(g.reduce(&w(&[1, 1])).unwrap(), w(&[0, 0]));
        assert_eq!(g.reduce(&w(&[0, 0, 0])).unwrap(), w(&[1]));
    }

    #[test]
    fn unknown_generator_is_rejected() {
        let g = GroupOracle::free(2).unwrap();
        assert!(matches!(g.reduce(&w(&[4])), Err(Error::Input(_))));
    }

    /// Shortest path to a lattice point by breadth-first search over unit steps.
    fn lattice_bfs_length(target: (i64, i64)) -> usize {
        use std::collections::{HashMap, VecDeque};
        let mut dist = HashMap::new();
        let mut queue = VecDeque::new();
        dist.insert((0i64, 0i64), 0usize);
        queue.push_back((0i64, 0i64));
        while let Some(p) = queue.pop_front() {
            if p == target {
                return dist[&p];
            }
            let d = dist[&p];
            for step in [(1, 0), (-1, 0), (0, 1), (0, -1)] {
                let q = (p.0 + step.0, p.1 + step.1);
                if q.0.abs() <= 10 && q.1.abs() <= 10 && !dist.contains_key(&q) {
                    dist.insert(q, d + 1);
                    queue.push_back(q);
                }
            }
        }
        unreachable!()
    }

    #[test]
    fn word_lengths() {
        let z2 = GroupOracle::free_abelian(2).unwrap();
        let expected = lattice_bfs_length((3, -2));
        assert_eq!(expected, 5);
        assert_eq!(z2.word_length(&w(&[0, 0, 0, 3, 3])).unwrap(), expected);
        assert_eq!(z2.word_length(&Word::identity()).unwrap(), 0);
    }

    #[test]
    fn distances() {
        let f2 = GroupOracle::free(2).unwrap();
        assert_eq!(f2.distance(&w(&[0]), &w(&[2])).unwrap(), 2);
        assert_eq!(f2.distance(&w(&[0, 2]), &w(&[0, 2])).unwrap(), 0);
        let z = GroupOracle::free_abelian(1).unwrap();
        assert_eq!(z.distance(&w(&[0, 0]), &w(&[0; 5])).unwrap(), 3);
    }

    #[test]
    fn balls_and_spheres() {
        let f2 = GroupOracle::free(2).unwrap();
        let ball1 = f2.enumerate_ball(1).unwrap();
        assert_eq!(ball1.len(), 5);
        assert_eq!(f2.enumerate_ball(2).unwrap().len(), 17);
        assert_eq!(f2.count_sphere_bruteforce(3).unwrap(), 36);
        assert_eq!(f2.count_sphere_bruteforce(0).unwrap(), 1);

        let z2 = GroupOracle::free_abelian(2).unwrap();
        let lattice = |r: i64| {
            (-r..=r)
                .flat_map(|x| (-r..=r).map(move |y| (x, y)))
                .filter(|(x, y)| x.abs() + y.abs() <= r)
                .count()
        };
        assert_eq!(z2.enumerate_ball(2).unwrap().len(), lattice(2));
        assert_eq!(lattice(2), 13);
        assert_eq!(
            z2.count_sphere_bruteforce(3).unwrap(),
            lattice(3) - lattice(2)
        );
        assert_eq!(z2.count_sphere_bruteforce(3).unwrap(), 12);
    }

    #[test]
    fn free_group_sphere_closed_form() {
        for k in 1..=3usize {
            let g = GroupOracle::free(k).unwrap();
            let max_n = if k == 3 { 6 } else { 8 };
            let spheres = g.enumerate_spheres(max_n).unwrap();
            for (n, s) in spheres.iter().enumerate().skip(1) {
                let closed = 2 * k * (2 * k - 1).pow(n as u32 - 1);
                assert_eq!(s.len(), closed, "k={k} n={n}");
            }
        }
    }

    #[test]
    fn guard_trips() {
        let g = GroupOracle::free(2).unwrap();
        assert!(g.enumerate_spheres_limited(3, 53).is_ok());
        assert!(matches!(
            g.enumerate_spheres_limited(3, 52),
            Err(Error::Resource(_))
        ));
    }

    #[test]
    fn family_parsing() {
        assert_eq!("free:2".parse::<Family>().unwrap(), Family::Free(2));
        assert_eq!("Z".parse::<Family>().unwrap(), Family::FreeAbelian(1));
        assert_eq!("Z^2".parse::<Family>().unwrap(), Family::FreeAbelian(2));
        assert_eq!(
            "freeprod:2,3".parse::<Family>().unwrap(),
            Family::FreeProductCyclic(vec![2, 3])
        );
        assert!("bogus".parse::<Family>().is_err());
    }

    #[test]
    fn table_rejects_non_involution() {
        let r = GeneratorTable::new(vec!["a".into(), "b".into()], vec![1, 1]);
        assert!(r.is_err());
    }
}
