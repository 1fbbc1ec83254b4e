//! Two-particle configuration space on an open chain.
//!
//! Sites are numbered `1..=L`. A basis state is an ordered pair of hard-core
//! boson positions `i2 < i1`. The relative coordinate is `r = i1 - i2` and the
//! centre of mass is kept doubled, `cc = i1 + i2`, so that half-integer centres
//! stay exact integers.

use crate::error::{invalid, Result};

/// One configuration of the two bosons.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PairState {
    pub i1: usize,
    pub i2: usize,
}

impl PairState {
    pub fn r(&self) -> usize {
        self.i1 - self.i2
    }

    /// Doubled centre of mass, `i1 + i2`.
    pub fn cc(&self) -> usize {
        self.i1 + self.i2
    }

    pub fn center(&self) -> f64 {
        self.cc() as f64 / 2.0
    }

    pub fn from_rc(r: usize, cc: usize) -> Option<Self> {
        if r == 0 || cc < r || (cc - r) % 2 != 0 {
            return None;
        }
        let i2 = (cc - r) / 2;
        if i2 == 0 {
            return None;
        }
        Some(Self { i1: i2 + r, i2 })
    }
}

/// Enumeration of all pair states on an `L`-site open chain, ordered by
/// `(r, cc)`.
#[derive(Debug, Clone)]
pub struct TwoParticleBasis {
    sites: usize,
    states: Vec<PairState>,
}

impl TwoParticleBasis {
    pub fn new(sites: usize) -> Result<Self> {
        if sites < 2 {
            return invalid(format!("chain needs at least 2 sites, got {sites}"));
        }
        let mut states = Vec::with_capacity(sites * (sites - 1) / 2);
        for r in 1..sites {
            for i2 in 1..=(sites - r) {
                states.push(PairState { i1: i2 + r, i2 });
            }
        }
        Ok(Self { sites, states })
    }

    /// Number of sites `L`.
    pub fn sites(&self) -> usize {
        self.sites
    }

    pub fn dim(&self) -> usize {
        self.states.len()
    }

    pub fn states(&self) -> &[PairState] {
        &self.states
    }

    pub fn state(&self, index: usize) -> PairState {
        self.states[index]
    }

    /// First dense index carrying relative coordinate `r`.
    fn offset(&self, r: usize) -> usize {
        (r - 1) * self.sites - (r - 1) * r / 2
    }

    /// Dense index of the configuration with bosons on `i1 > i2`.
    pub fn index_of_sites(&self, i1: usize, i2: usize) -> Option<usize> {
        if i2 == 0 || i1 <= i2 || i1 > self.sites {
            return None;
        }
        Some(self.offset(i1 - i2) + i2 - 1)
    }

    /// Dense index of the configuration `(r, cc)`.
    pub fn index_of_rc(&self, r: usize, cc: usize) -> Option<usize> {
        let s = PairState::from_rc(r, cc)?;
        self.index_of_sites(s.i1, s.i2)
    }

    /// Index of the mirror image under `i -> L + 1 - i`.
    pub fn mirror_index(&self, index: usize) -> usize {
        let s = self.states[index];
        let l1 = self.sites + 1;
        self.index_of_sites(l1 - s.i2, l1 - s.i1)
            .expect("mirror of a valid state is valid")
    }

    /// Mirror permutation over the whole basis; an involution.
    pub fn mirror_permutation(&self) -> Vec<usize> {
        (0..self.dim()).map(|i| self.mirror_index(i)).collect()
    }

    /// Midpoint of the chain, `(L + 1) / 2`.
    pub fn chain_center(&self) -> f64 {
        (self.sites as f64 + 1.0) / 2.0
    }
}

/// Link spins and site occupations reconstructed from Gauss's law.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinkConfig {
    /// `spins[j - 1]` is sigma^z on link `(j, j + 1)`.
    pub spins: Vec<i8>,
    /// `occupations[i - 1]` is the boson number on site `i`.
    pub occupations: Vec<u8>,
}

impl LinkConfig {
    /// Sigma^z on link `(j, j + 1)`; links outside the chain read as vacuum.
    pub fn spin(&self, j: usize) -> i8 {
        if j == 0 || j > self.spins.len() {
            -1
        } else {
            self.spins[j - 1]
        }
    }

    /// Gauss generator `G_i` at site `i` (1-based).
    pub fn gauss(&self, i: usize) -> i8 {
        let parity = if self.occupations[i - 1] % 2 == 1 { -1 } else { 1 };
        self.spin(i - 1) * parity * self.spin(i)
    }

    pub fn satisfies_gauss_law(&self) -> bool {
        (1..=self.occupations.len()).all(|i| self.gauss(i) == 1)
    }

    /// Number of links carrying +1, i.e. the length of the electric string.
    pub fn string_length(&self) -> usize {
        self.spins.iter().filter(|&&s| s == 1).count()
    }
}

/// Reconstructs the gauge links for bosons on sites `i1 > i2`.
pub fn links_from_positions(i1: usize, i2: usize, sites: usize) -> Result<LinkConfig> {
    if sites < 2 || i2 == 0 || i1 <= i2 || i1 > sites {
        return invalid(format!(
            "positions must satisfy 1 <= i2 < i1 <= L, got i1={i1}, i2={i2}, L={sites}"
        ));
    }
    let spins = (1..sites)
        .map(|j| if i2 <= j && j < i1 { 1 } else { -1 })
        .collect();
    let occupations = (1..=sites).map(|i| u8::from(i == i1 || i == i2)).collect();
    Ok(LinkConfig { spins, occupations })
}
