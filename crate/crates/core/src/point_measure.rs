//! Finite point configurations.
//!
//! A configuration is a flat sequence of atoms whose identity is its index.
//! Two modes share the same algebra: size-only atoms on ℝ (`f64`) and
//! space-time atoms `(time, size)` on `[0, 1] × ℝ∖{0}`. In both modes the
//! first moment `B(μ)` is the sum of the sizes.

use rand::Rng;
use serde::ser::SerializeSeq;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// An atom of a point configuration; `size` is the value entering `B(μ)`.
pub trait Atom: Copy + std::fmt::Debug + PartialEq {
    fn size(&self) -> f64;
}

impl Atom for f64 {
    fn size(&self) -> f64 {
        *self
    }
}

/// A jump `(time, size)` with `time ∈ [0, 1]` and `size ≠ 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpaceTimeAtom {
    pub time: f64,
    pub size: f64,
}

impl SpaceTimeAtom {
    pub fn new(time: f64, size: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&time) {
            return Err(Error::Domain(format!("jump time {time} outside [0, 1]")));
        }
        if size == 0.0 || !size.is_finite() {
            return Err(Error::Domain(format!("jump size must be finite and nonzero, got {size}")));
        }
        Ok(Self { time, size })
    }
}

impl Atom for SpaceTimeAtom {
    fn size(&self) -> f64 {
        self.size
    }
}

impl Serialize for SpaceTimeAtom {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        [self.time, self.size].serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for SpaceTimeAtom {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let [time, size] = <[f64; 2]>::deserialize(deserializer)?;
        SpaceTimeAtom::new(time, size).map_err(serde::de::Error::custom)
    }
}

/// A finite point configuration `μ = Σ δ_γ`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Configuration<A> {
    atoms: Vec<A>,
}

/// Configuration of jump sizes on ℝ.
pub type SizeConfiguration = Configuration<f64>;
/// Configuration of `(time, size)` jumps.
pub type SpaceTimeConfiguration = Configuration<SpaceTimeAtom>;

impl<A: Atom> Configuration<A> {
    pub fn new(atoms: Vec<A>) -> Self {
        Self { atoms }
    }

    pub fn empty() -> Self {
        Self { atoms: Vec::new() }
    }

    pub fn atoms(&self) -> &[A] {
        &self.atoms
    }

    pub fn into_atoms(self) -> Vec<A> {
        self.atoms
    }

    /// Total mass `μ(Γ)`.
    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// First moment `B(μ) = Σ_{γ ∈ μ} γ`; zero for the empty configuration.
    pub fn first_moment(&self) -> f64 {
        self.atoms.iter().map(Atom::size).sum()
    }

    /// Ordered index pairs `(i, j)` with `i ≠ j`: the support of `μ^⌊2⌋`.
    pub fn factorial_pair_indices(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let n = self.atoms.len();
        (0..n).flat_map(move |i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
    }

    /// Ordered atom pairs off the index diagonal, `n(n-1)` of them.
    pub fn factorial_pairs(&self) -> Vec<(A, A)> {
        self.factorial_pair_indices()
            .map(|(i, j)| (self.atoms[i], self.atoms[j]))
            .collect()
    }

    /// Configuration with the atom at `index` removed.
    pub fn without(&self, index: usize) -> Result<Self> {
        self.check_index(index)?;
        let mut atoms = self.atoms.clone();
        atoms.remove(index);
        Ok(Self { atoms })
    }

    pub fn with(&self, atom: A) -> Self {
        let mut atoms = self.atoms.clone();
        atoms.push(atom);
        Self { atoms }
    }

    /// Removes one atom chosen uniformly, i.e. draws from `μ(dγ)/μ(Γ)`.
    pub fn remove_random_atom<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<(A, Self)> {
        if self.atoms.is_empty() {
            return Err(Error::Domain("cannot remove an atom from the empty configuration".into()));
        }
        let index = rng.random_range(0..self.atoms.len());
        Ok((self.atoms[index], self.without(index)?))
    }

    fn check_index(&self, index: usize) -> Result<()> {
        if index >= self.atoms.len() {
            Err(Error::IndexOutOfRange { index, len: self.atoms.len() })
        } else {
            Ok(())
        }
    }
}

impl SizeConfiguration {
    /// The splitting map: `μ ↦ μ - δ_γ + δ_{γ'} + δ_{γ-γ'}` where `γ` is the
    /// atom at `index`. The two new atoms are appended in that order.
    pub fn split_atom(&self, index: usize, first: f64) -> Result<Self> {
        self.check_index(index)?;
        let gamma = self.atoms[index];
        let mut atoms = Vec::with_capacity(self.atoms.len() + 1);
        atoms.extend(self.atoms.iter().enumerate().filter(|&(k, _)| k != index).map(|(_, &a)| a));
        atoms.push(first);
        atoms.push(gamma - first);
        Ok(Self { atoms })
    }

    /// Inverse of [`split_atom`](Self::split_atom): replaces atoms `i` and
    /// `j` by their sum, appended last.
    pub fn merge_atoms(&self, i: usize, j: usize) -> Result<Self> {
        self.check_index(i)?;
        self.check_index(j)?;
        if i == j {
            return Err(Error::Domain("cannot merge an atom with itself".into()));
        }
        let merged = self.atoms[i] + self.atoms[j];
        let mut atoms: Vec<f64> = self
            .atoms
            .iter()
            .enumerate()
            .filter(|&(k, _)| k != i && k != j)
            .map(|(_, &a)| a)
            .collect();
        atoms.push(merged);
        Ok(Self { atoms })
    }
}

impl Serialize for SizeConfiguration {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut seq = serializer.serialize_seq(Some(self.atoms.len()))?;
        for a in &self.atoms {
            seq.serialize_element(&[*a])?;
        }
        seq.end()
    }
}

impl<'de> Deserialize<'de> for SizeConfiguration {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let atoms = Vec::<[f64; 1]>::deserialize(deserializer)?;
        Ok(Self { atoms: atoms.into_iter().map(|[v]| v).collect() })
    }
}

impl Serialize for SpaceTimeConfiguration {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.atoms.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for SpaceTimeConfiguration {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        Ok(Self { atoms: Vec::deserialize(deserializer)? })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use crate::stats::chi_square;
    use proptest::prelude::*;

    fn st(t: f64, x: f64) -> SpaceTimeAtom {
        SpaceTimeAtom::new(t, x).unwrap()
    }

    #[test]
    fn first_moment_examples() {
        assert_eq!(SizeConfiguration::new(vec![1.5, -0.5, 2.0]).first_moment(), 3.0);
        assert_eq!(SizeConfiguration::empty().first_moment(), 0.0);
        let c = SpaceTimeConfiguration::new(vec![st(0.2, 1.0), st(0.7, -1.0)]);
        assert_eq!(c.first_moment(), 0.0);
    }

    #[test]
    fn factorial_pairs_examples() {
        assert!(SizeConfiguration::new(vec![1.0]).factorial_pairs().is_empty());
        assert_eq!(SizeConfiguration::new(vec![1.0, 2.0]).factorial_pairs(), vec![(1.0, 2.0), (2.0, 1.0)]);
        assert_eq!(SizeConfiguration::new(vec![1.0, 2.0, 3.0]).factorial_pairs().len(), 6);
    }

    #[test]
    fn factorial_pairs_skip_indices_not_values() {
        // Equal values at distinct indices still form pairs.
        let c = SizeConfiguration::new(vec![1.0, 1.0]);
        assert_eq!(c.factorial_pairs(), vec![(1.0, 1.0), (1.0, 1.0)]);
    }

    #[test]
    fn factorial_pair_count_exhaustive() {
        for n in 0..=10usize {
            let c = SizeConfiguration::new((0..n).map(|k| k as f64).collect());
            let pairs: Vec<_> = c.factorial_pair_indices().collect();
            assert_eq!(pairs.len(), n * n.saturating_sub(1));
            assert!(pairs.iter().all(|(i, j)| i != j));
        }
    }

    #[test]
    fn split_examples() {
        let c = SizeConfiguration::new(vec![3.0, 5.0]);
        assert_eq!(c.split_atom(0, 1.0).unwrap().atoms(), &[5.0, 1.0, 2.0]);
        let single = SizeConfiguration::new(vec![3.0]);
        assert_eq!(single.split_atom(0, 3.0).unwrap().atoms(), &[3.0, 0.0]);
        assert!(matches!(c.split_atom(2, 1.0), Err(Error::IndexOutOfRange { index: 2, len: 2 })));
    }

    #[test]
    fn remove_random_atom_examples() {
        let mut rng = rng_from_seed(1);
        let (a, rest) = SizeConfiguration::new(vec![4.0]).remove_random_atom(&mut rng).unwrap();
        assert_eq!(a, 4.0);
        assert!(rest.is_empty());
        assert!(matches!(SizeConfiguration::empty().remove_random_atom(&mut rng), Err(Error::Domain(_))));
    }

    #[test]
    fn remove_random_atom_is_uniform() {
        let mut rng = rng_from_seed(11);
        for n in [2usize, 5] {
            let c = SizeConfiguration::new((0..n).map(|k| k as f64).collect());
            let draws = 20_000u64;
            let mut hits = vec![0u64; n];
            for _ in 0..draws {
                let (a, rest) = c.remove_random_atom(&mut rng).unwrap();
                assert_eq!(rest.len(), n - 1);
                hits[a as usize] += 1;
            }
            let p = 1.0 / n as f64;
            let sigma = (draws as f64 * p * (1.0 - p)).sqrt();
            for &h in &hits {
                assert!((h as f64 - draws as f64 * p).abs() < 4.0 * sigma);
            }
            let chi = chi_square(&hits, &vec![p; n]);
            assert!(chi.p_value > 1e-3, "{chi:?}");
        }
    }

    #[test]
    fn json_shapes() {
        let c = SizeConfiguration::new(vec![1.5, -2.0]);
        assert_eq!(serde_json::to_string(&c).unwrap(), "[[1.5],[-2.0]]");
        let s = SpaceTimeConfiguration::new(vec![st(0.25, 2.0)]);
        assert_eq!(serde_json::to_string(&s).unwrap(), "[[0.25,2.0]]");
        let back: SpaceTimeConfiguration = serde_json::from_str("[[0.25,2.0]]").unwrap();
        assert_eq!(back, s);
        assert!(serde_json::from_str::<SpaceTimeConfiguration>("[[0.5,0.0]]").is_err());
    }

    #[test]
    fn space_time_atom_validation() {
        assert!(SpaceTimeAtom::new(1.5, 1.0).is_err());
        assert!(SpaceTimeAtom::new(0.5, 0.0).is_err());
    }

    proptest! {
        #[test]
        fn split_preserves_first_moment(
            atoms in prop::collection::vec(-50.0f64..50.0, 1..12),
            idx in 0usize..12,
            first in -50.0f64..50.0,
        ) {
            let c = SizeConfiguration::new(atoms);
            let idx = idx % c.len();
            let s = c.split_atom(idx, first).unwrap();
            prop_assert_eq!(s.len(), c.len() + 1);
            let before = c.first_moment();
            let scale = c.atoms().iter().map(|a| a.abs()).sum::<f64>() + first.abs() + 1.0;
            prop_assert!((s.first_moment() - before).abs() <= 1e-12 * scale);
        }

        #[test]
        fn merge_undoes_split(
            atoms in prop::collection::vec(-50.0f64..50.0, 1..12),
            idx in 0usize..12,
            first in -50.0f64..50.0,
        ) {
            let c = SizeConfiguration::new(atoms);
            let idx = idx % c.len();
            let s = c.split_atom(idx, first).unwrap();
            let n = s.len();
            let m = s.merge_atoms(n - 2, n - 1).unwrap();
            let mut got = m.into_atoms();
            let mut want = c.atoms().to_vec();
            let moved = want.remove(idx);
            want.push(moved);
            prop_assert_eq!(got.len(), want.len());
            let last = got.pop().unwrap();
            prop_assert!((last - want.pop().unwrap()).abs() <= 1e-12 * (1.0 + moved.abs() + first.abs()));
            prop_assert_eq!(got, want);
        }
    }
}
