//! Adjacency structures, restricted sample spaces, exclusion and dependence
//! neighborhoods, and local-subnetwork extraction.
//!
//! Units are indexed `0..n` throughout the library; the CSV layer converts
//! from the 1-based ids used on disk.

use crate::error::{Error, Result};

#[inline]
pub(crate) fn words_for(n: usize) -> usize {
    n.div_ceil(64)
}

/// Undirected binary network stored as symmetric row bitsets.
///
/// `A_ij = A_ji` and `A_ii = 0` hold for every value of this type.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Network {
    n: usize,
    words: usize,
    rows: Vec<u64>,
    edges: usize,
}

impl Network {
    pub fn empty(n: usize) -> Self {
        let words = words_for(n);
        Network {
            n,
            words,
            rows: vec![0; n * words],
            edges: 0,
        }
    }

    /// Builds a network from unordered pairs. Repeated pairs collapse.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut net = Network::empty(n);
        for &(i, j) in edges {
            for index in [i, j] {
                if index >= n {
                    return Err(Error::IndexOutOfRange { index, n });
                }
            }
            if i == j {
                return Err(Error::SelfLoop(i));
            }
            net.set_edge(i, j, true);
        }
        Ok(net)
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        (self.rows[i * self.words + j / 64] >> (j % 64)) & 1 == 1
    }

    /// Sets `A_ij = A_ji = on`. Returns whether the entry changed.
    pub(crate) fn set_edge(&mut self, i: usize, j: usize, on: bool) -> bool {
        debug_assert!(i != j);
        if self.has_edge(i, j) == on {
            return false;
        }
        let (wi, bi) = (i * self.words + j / 64, 1u64 << (j % 64));
        let (wj, bj) = (j * self.words + i / 64, 1u64 << (i % 64));
        if on {
            self.rows[wi] |= bi;
            self.rows[wj] |= bj;
            self.edges += 1;
        } else {
            self.rows[wi] &= !bi;
            self.rows[wj] &= !bj;
            self.edges -= 1;
        }
        true
    }

    #[inline]
    pub fn edge_count(&self) -> usize {
        self.edges
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[u64] {
        &self.rows[i * self.words..(i + 1) * self.words]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.row(i).iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        iter_bits(self.row(i))
    }

    /// Edges as `(i, j)` with `i < j`, in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n).flat_map(move |i| self.neighbors(i).filter(move |&j| j > i).map(move |j| (i, j)))
    }

    /// Number of units adjacent to both `i` and `j`, optionally restricted to
    /// the units set in `mask`.
    #[inline]
    pub fn common_neighbors(&self, i: usize, j: usize, mask: Option<&[u64]>) -> usize {
        let (ri, rj) = (self.row(i), self.row(j));
        match mask {
            None => ri.iter().zip(rj).map(|(a, b)| (a & b).count_ones() as usize).sum(),
            Some(m) => ri
                .iter()
                .zip(rj)
                .zip(m)
                .map(|((a, b), c)| (a & b & c).count_ones() as usize)
                .sum(),
        }
    }

    /// Relabels units so that old unit `i` becomes `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Network {
        let mut out = Network::empty(self.n);
        for (i, j) in self.edges() {
            out.set_edge(perm[i], perm[j], true);
        }
        out
    }

    /// Row-major dense 0/1 matrix, mostly for inspection and tests.
    pub fn to_dense(&self) -> Vec<Vec<u8>> {
        (0..self.n)
            .map(|i| (0..self.n).map(|j| self.has_edge(i, j) as u8).collect())
            .collect()
    }
}

pub(crate) fn iter_bits(words: &[u64]) -> impl Iterator<Item = usize> + '_ {
    words.iter().enumerate().flat_map(|(w, &word)| {
        let mut rest = word;
        std::iter::from_fn(move || {
            if rest == 0 {
                return None;
            }
            let b = rest.trailing_zeros() as usize;
            rest &= rest - 1;
            Some(w * 64 + b)
        })
    })
}

pub fn build_network(n: usize, edges: &[(usize, usize)]) -> Result<Network> {
    Network::from_edges(n, edges)
}

/// Source of pairwise distances between units.
pub trait Distances {
    fn len(&self) -> usize;
    fn distance(&self, i: usize, j: usize) -> f64;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Planar unit locations with Euclidean distance.
#[derive(Clone, Debug, PartialEq)]
pub struct Locations {
    points: Vec<[f64; 2]>,
}

impl Locations {
    pub fn new(points: Vec<[f64; 2]>) -> Result<Self> {
        if points.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidDistances("nonfinite location".into()));
        }
        Ok(Locations { points })
    }

    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }
}

impl Distances for Locations {
    fn len(&self) -> usize {
        self.points.len()
    }

    #[inline]
    fn distance(&self, i: usize, j: usize) -> f64 {
        let (a, b) = (self.points[i], self.points[j]);
        (a[0] - b[0]).hypot(a[1] - b[1])
    }
}

/// Full symmetric distance matrix with zero diagonal.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    values: Vec<f64>,
}

impl DistanceMatrix {
    pub fn new(n: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                got: values.len(),
            });
        }
        for i in 0..n {
            if values[i * n + i] != 0.0 {
                return Err(Error::InvalidDistances(format!("nonzero diagonal at unit {i}")));
            }
            for j in 0..n {
                let v = values[i * n + j];
                if !(v >= 0.0) {
                    return Err(Error::InvalidDistances(format!("negative or NaN distance at ({i}, {j})")));
                }
                if v != values[j * n + i] {
                    return Err(Error::AsymmetricDistances { i, j });
                }
            }
        }
        Ok(DistanceMatrix { n, values })
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        if let Some(bad) = rows.iter().find(|r| r.len() != n) {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: bad.len(),
            });
        }
        DistanceMatrix::new(n, rows.into_iter().flatten().collect())
    }
}

impl Distances for DistanceMatrix {
    fn len(&self) -> usize {
        self.n
    }

    #[inline]
    fn distance(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }
}

/// Per-unit eligibility sets `U_i`; edges outside them have probability zero.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RestrictedSpace {
    n: usize,
    words: usize,
    eligible: Vec<Vec<usize>>,
    mask: Vec<u64>,
    dyads: Vec<(usize, usize)>,
}

impl RestrictedSpace {
    pub fn complete(n: usize) -> Self {
        let sets = (0..n).map(|i| (0..n).filter(|&j| j != i).collect()).collect();
        Self::build(n, sets)
    }

    /// Validates `j ∈ U_i ⇔ i ∈ U_j` and `i ∉ U_i`.
    pub fn from_sets(sets: Vec<Vec<usize>>) -> Result<Self> {
        let n = sets.len();
        let mut sets = sets;
        for (i, s) in sets.iter_mut().enumerate() {
            s.sort_unstable();
            s.dedup();
            if let Some(&index) = s.iter().find(|&&j| j >= n) {
                return Err(Error::IndexOutOfRange { index, n });
            }
            if s.binary_search(&i).is_ok() {
                return Err(Error::SelfLoop(i));
            }
        }
        for i in 0..n {
            for &j in &sets[i] {
                if sets[j].binary_search(&i).is_err() {
                    return Err(Error::InvalidConfig(format!(
                        "eligibility is not symmetric: {j} in U_{i} but {i} not in U_{j}"
                    )));
                }
            }
        }
        Ok(Self::build(n, sets))
    }

    fn build(n: usize, eligible: Vec<Vec<usize>>) -> Self {
        let words = words_for(n);
        let mut mask = vec![0u64; n * words];
        let mut dyads = Vec::new();
        for (i, s) in eligible.iter().enumerate() {
            for &j in s {
                mask[i * words + j / 64] |= 1 << (j % 64);
                if j > i {
                    dyads.push((i, j));
                }
            }
        }
        RestrictedSpace {
            n,
            words,
            eligible,
            mask,
            dyads,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn contains(&self, i: usize, j: usize) -> bool {
        (self.mask[i * self.words + j / 64] >> (j % 64)) & 1 == 1
    }

    pub fn eligible(&self, i: usize) -> &[usize] {
        &self.eligible[i]
    }

    /// Eligible dyads `(i, j)` with `i < j`, lexicographic.
    pub fn dyads(&self) -> &[(usize, usize)] {
        &self.dyads
    }

    pub fn dyad_count(&self) -> usize {
        self.dyads.len()
    }

    pub fn admits(&self, net: &Network) -> bool {
        net.n() == self.n
            && (0..self.n).all(|i| {
                net.row(i)
                    .iter()
                    .zip(&self.mask[i * self.words..(i + 1) * self.words])
                    .all(|(a, m)| a & !m == 0)
            })
    }

    pub fn permuted(&self, perm: &[usize]) -> RestrictedSpace {
        let mut sets = vec![Vec::new(); self.n];
        for (i, s) in self.eligible.iter().enumerate() {
            sets[perm[i]] = s.iter().map(|&j| perm[j]).collect::<Vec<_>>();
            sets[perm[i]].sort_unstable();
        }
        Self::build(self.n, sets)
    }
}

/// `U_i = { j ≠ i : d_ij < cutoff }`.
pub fn eligibility_from_distance<D: Distances + ?Sized>(d: &D, cutoff: f64) -> Result<RestrictedSpace> {
    if cutoff.is_nan() {
        return Err(Error::InvalidConfig("distance cutoff is NaN".into()));
    }
    let n = d.len();
    let mut sets = vec![Vec::new(); n];
    for i in 0..n {
        for j in (i + 1)..n {
            let dij = d.distance(i, j);
            if dij != d.distance(j, i) {
                return Err(Error::AsymmetricDistances { i, j });
            }
            if dij < cutoff {
                sets[i].push(j);
                sets[j].push(i);
            }
        }
    }
    for s in &mut sets {
        s.sort_unstable();
    }
    Ok(RestrictedSpace::build(n, sets))
}

/// Exclusion neighborhoods `N_i`. The owner is always stored first.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NeighborhoodSystem {
    sets: Vec<Vec<usize>>,
}

impl NeighborhoodSystem {
    pub fn from_sets(sets: Vec<Vec<usize>>) -> Result<Self> {
        let n = sets.len();
        let mut out = Vec::with_capacity(n);
        for (i, s) in sets.into_iter().enumerate() {
            if let Some(&index) = s.iter().find(|&&j| j >= n) {
                return Err(Error::IndexOutOfRange { index, n });
            }
            if !s.contains(&i) {
                return Err(Error::InvalidConfig(format!("unit {i} missing from its own neighborhood")));
            }
            let mut members = vec![i];
            for j in s {
                if !members.contains(&j) {
                    members.push(j);
                }
            }
            out.push(members);
        }
        Ok(NeighborhoodSystem { sets: out })
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    pub fn members(&self, i: usize) -> &[usize] {
        &self.sets[i]
    }
}

fn nearest<D: Distances + ?Sized>(d: &D, i: usize, candidates: &mut Vec<usize>, k: usize) -> Vec<usize> {
    let key = |&a: &usize, &b: &usize| d.distance(i, a).total_cmp(&d.distance(i, b)).then(a.cmp(&b));
    if k < candidates.len() {
        candidates.select_nth_unstable_by(k, key);
        candidates.truncate(k);
    }
    candidates.sort_unstable_by(key);
    let mut out = Vec::with_capacity(k + 1);
    out.push(i);
    out.extend_from_slice(candidates);
    out
}

/// `N_i` = unit `i` together with its `l − 1` nearest units; ties go to the
/// lower index.
pub fn knn_neighborhoods<D: Distances + ?Sized>(d: &D, l: usize) -> Result<NeighborhoodSystem> {
    let n = d.len();
    if l == 0 {
        return Err(Error::InvalidConfig("neighborhood size must be at least 1".into()));
    }
    if l > n {
        return Err(Error::NeighborhoodTooLarge { l, n });
    }
    let sets = (0..n)
        .map(|i| {
            let mut c: Vec<usize> = (0..n).filter(|&j| j != i).collect();
            nearest(d, i, &mut c, l - 1)
        })
        .collect();
    Ok(NeighborhoodSystem { sets })
}

/// Like [`knn_neighborhoods`] but only units sharing `i`'s group label are
/// candidates. Groups smaller than `l` give the whole group.
pub fn knn_within_groups<D: Distances + ?Sized>(d: &D, l: usize, groups: &[usize]) -> Result<NeighborhoodSystem> {
    let n = d.len();
    if groups.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: groups.len(),
        });
    }
    if l == 0 {
        return Err(Error::InvalidConfig("neighborhood size must be at least 1".into()));
    }
    if l > n {
        return Err(Error::NeighborhoodTooLarge { l, n });
    }
    let sets = (0..n)
        .map(|i| {
            let mut c: Vec<usize> = (0..n).filter(|&j| j != i && groups[j] == groups[i]).collect();
            nearest(d, i, &mut c, l - 1)
        })
        .collect();
    Ok(NeighborhoodSystem { sets })
}

/// Dependence neighborhoods `R_i`, symmetric by construction.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DependenceSystem {
    sets: Vec<Vec<usize>>,
}

impl DependenceSystem {
    /// Symmetrizes the input: `j ∈ R_i` also puts `i ∈ R_j`.
    pub fn from_sets(sets: Vec<Vec<usize>>) -> Result<Self> {
        let n = sets.len();
        let mut sym = vec![Vec::new(); n];
        for (i, s) in sets.iter().enumerate() {
            for &j in s {
                if j >= n {
                    return Err(Error::IndexOutOfRange { index: j, n });
                }
                sym[i].push(j);
                sym[j].push(i);
            }
        }
        for s in &mut sym {
            s.sort_unstable();
            s.dedup();
        }
        Ok(DependenceSystem { sets: sym })
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    /// Sorted members of `R_i`.
    pub fn members(&self, i: usize) -> &[usize] {
        &self.sets[i]
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.sets[i].binary_search(&j).is_ok()
    }

    pub fn total_size(&self) -> usize {
        self.sets.iter().map(Vec::len).sum()
    }
}

/// `R_i = { j : |N_i ∩ N_j| ≥ 2 }`, the rule for dyad-independent models.
pub fn dependence_from_overlap(nbhds: &NeighborhoodSystem) -> DependenceSystem {
    let n = nbhds.len();
    let mut containing = vec![Vec::new(); n];
    for i in 0..n {
        for &k in nbhds.members(i) {
            containing[k].push(i);
        }
    }
    let mut count = vec![0usize; n];
    let mut touched = Vec::new();
    let sets = (0..n)
        .map(|i| {
            for &k in nbhds.members(i) {
                for &j in &containing[k] {
                    if count[j] == 0 {
                        touched.push(j);
                    }
                    count[j] += 1;
                }
            }
            let mut r: Vec<usize> = touched.iter().copied().filter(|&j| count[j] >= 2).collect();
            for &j in &touched {
                count[j] = 0;
            }
            touched.clear();
            r.sort_unstable();
            r
        })
        .collect();
    DependenceSystem { sets }
}

/// `R_i = { j : w_j = w_i }`.
pub fn dependence_from_blocks(labels: &[usize]) -> DependenceSystem {
    let k = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut blocks = vec![Vec::new(); k];
    for (i, &w) in labels.iter().enumerate() {
        blocks[w].push(i);
    }
    DependenceSystem {
        sets: labels.iter().map(|&w| blocks[w].clone()).collect(),
    }
}

#[inline]
pub(crate) fn pair_index(k: usize, l: usize, m: usize) -> usize {
    debug_assert!(k < l && l < m);
    k * m - k * (k + 1) / 2 + (l - k - 1)
}

/// Adjacency of the subnetwork over `N_i`, in member order.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LocalAdjacency {
    owner: usize,
    members: Vec<usize>,
    bits: Vec<u64>,
}

impl LocalAdjacency {
    /// All-zero local adjacency (`𝟎_i`).
    pub fn zeros(owner: usize, members: Vec<usize>) -> Self {
        let m = members.len();
        let pairs = m * m.saturating_sub(1) / 2;
        LocalAdjacency {
            owner,
            members,
            bits: vec![0; words_for(pairs).max(1)],
        }
    }

    /// Local adjacency whose pair `p` (in [`LocalAdjacency::pairs`] order) is
    /// set when bit `p` of `code` is.
    pub fn from_code(owner: usize, members: Vec<usize>, code: u64) -> Self {
        let mut a = Self::zeros(owner, members);
        let p = a.pair_count();
        let masked = if p >= 64 { code } else { code & ((1u64 << p) - 1) };
        a.bits[0] = masked;
        a
    }

    pub fn owner(&self) -> usize {
        self.owner
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn size(&self) -> usize {
        self.members.len()
    }

    pub fn pair_count(&self) -> usize {
        let m = self.members.len();
        m * m.saturating_sub(1) / 2
    }

    /// Member-position pairs `(k, l)`, `k < l`, in storage order.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> {
        let m = self.members.len();
        (0..m).flat_map(move |k| ((k + 1)..m).map(move |l| (k, l)))
    }

    /// Entry at member positions `(k, l)`.
    pub fn get(&self, k: usize, l: usize) -> bool {
        if k == l {
            return false;
        }
        let (a, b) = if k < l { (k, l) } else { (l, k) };
        let p = pair_index(a, b, self.members.len());
        (self.bits[p / 64] >> (p % 64)) & 1 == 1
    }

    fn set(&mut self, k: usize, l: usize) {
        let (a, b) = if k < l { (k, l) } else { (l, k) };
        let p = pair_index(a, b, self.members.len());
        self.bits[p / 64] |= 1 << (p % 64);
    }

    /// Entry for units `u`, `v` (not positions); false if either is outside `N_i`.
    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        let pos = |x| self.members.iter().position(|&m| m == x);
        match (pos(u), pos(v)) {
            (Some(k), Some(l)) => self.get(k, l),
            _ => false,
        }
    }

    /// `e(a_i)`.
    pub fn edge_count(&self) -> usize {
        self.bits.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Pair bits packed into one word; `None` beyond 64 local pairs.
    pub fn code(&self) -> Option<u64> {
        (self.pair_count() <= 64).then(|| self.bits[0])
    }

    /// Dense member-order matrix.
    pub fn to_dense(&self) -> Vec<Vec<u8>> {
        let m = self.members.len();
        (0..m).map(|k| (0..m).map(|l| self.get(k, l) as u8).collect()).collect()
    }
}

pub fn local_subnetwork(net: &Network, nbhds: &NeighborhoodSystem, i: usize) -> Result<LocalAdjacency> {
    if i >= nbhds.len() {
        return Err(Error::IndexOutOfRange { index: i, n: nbhds.len() });
    }
    if nbhds.len() != net.n() {
        return Err(Error::DimensionMismatch {
            expected: net.n(),
            got: nbhds.len(),
        });
    }
    let members = nbhds.members(i).to_vec();
    let mut a = LocalAdjacency::zeros(i, members);
    let m = a.members.len();
    for k in 0..m {
        for l in (k + 1)..m {
            if net.has_edge(a.members[k], a.members[l]) {
                a.set(k, l);
            }
        }
    }
    Ok(a)
}

pub fn edge_count(a_i: &LocalAdjacency) -> usize {
    a_i.edge_count()
}

/// `e(A_i)` read directly from the network without materializing `A_i`.
#[inline]
pub fn local_edge_count(net: &Network, members: &[usize]) -> usize {
    let mut e = 0;
    for (k, &u) in members.iter().enumerate() {
        for &v in &members[k + 1..] {
            e += net.has_edge(u, v) as usize;
        }
    }
    e
}
