//! Network statistics `g(a, x)` and their change statistics.
//!
//! Dyadic terms are sums over unordered pairs; `Gwesp` is the geometrically
//! weighted edgewise shared-partner statistic. With a block structure present,
//! ordinary terms only see within-block dyads (a term may additionally be
//! pinned to one block) and the `Between*` terms see the remaining dyads.

use crate::error::{Error, Result};
use crate::network::{words_for, Network};

#[derive(Clone, Debug, PartialEq)]
pub enum Covariate {
    Continuous(Vec<f64>),
    Categorical(Vec<i64>),
}

impl Covariate {
    fn len(&self) -> usize {
        match self {
            Covariate::Continuous(v) => v.len(),
            Covariate::Categorical(v) => v.len(),
        }
    }

    pub fn value(&self, i: usize) -> f64 {
        match self {
            Covariate::Continuous(v) => v[i],
            Covariate::Categorical(v) => v[i] as f64,
        }
    }
}

/// Per-unit covariate vectors `X_i`, stored column-wise.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct CovariateTable {
    n: usize,
    names: Vec<String>,
    columns: Vec<Covariate>,
}

impl CovariateTable {
    pub fn new(n: usize) -> Self {
        CovariateTable {
            n,
            names: Vec::new(),
            columns: Vec::new(),
        }
    }

    pub fn with_column(mut self, name: &str, column: Covariate) -> Result<Self> {
        self.push(name, column)?;
        Ok(self)
    }

    pub fn push(&mut self, name: &str, column: Covariate) -> Result<usize> {
        if column.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: column.len(),
            });
        }
        if self.names.iter().any(|c| c == name) {
            return Err(Error::InvalidConfig(format!("duplicate covariate `{name}`")));
        }
        if let Covariate::Continuous(v) = &column {
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidConfig(format!("covariate `{name}` has nonfinite values")));
            }
        }
        self.names.push(name.to_string());
        self.columns.push(column);
        Ok(self.columns.len() - 1)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::MissingCovariate(name.to_string()))
    }

    pub fn column(&self, p: usize) -> &Covariate {
        &self.columns[p]
    }

    pub fn width(&self) -> usize {
        self.columns.len()
    }

    /// Continuous columns rescaled to zero mean and unit (population)
    /// variance; constant columns are only centered.
    pub fn standardized(&self) -> Self {
        let n = self.n as f64;
        let columns = self
            .columns
            .iter()
            .map(|c| match c {
                Covariate::Continuous(v) if !v.is_empty() => {
                    let mean = v.iter().sum::<f64>() / n;
                    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
                    let sd = var.sqrt();
                    let scale = if sd > 0.0 { sd } else { 1.0 };
                    Covariate::Continuous(v.iter().map(|x| (x - mean) / scale).collect())
                }
                other => other.clone(),
            })
            .collect();
        CovariateTable {
            n: self.n,
            names: self.names.clone(),
            columns,
        }
    }

    /// Rows reordered so that old unit `i` becomes `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let columns = self
            .columns
            .iter()
            .map(|c| match c {
                Covariate::Continuous(v) => {
                    let mut out = vec![0.0; v.len()];
                    for (i, &x) in v.iter().enumerate() {
                        out[perm[i]] = x;
                    }
                    Covariate::Continuous(out)
                }
                Covariate::Categorical(v) => {
                    let mut out = vec![0; v.len()];
                    for (i, &x) in v.iter().enumerate() {
                        out[perm[i]] = x;
                    }
                    Covariate::Categorical(out)
                }
            })
            .collect();
        CovariateTable {
            n: self.n,
            names: self.names.clone(),
            columns,
        }
    }
}

/// Block membership `w` with per-block unit bitsets.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlockMembership {
    labels: Vec<usize>,
    count: usize,
    masks: Vec<Vec<u64>>,
}

impl BlockMembership {
    /// Labels are 0-based block indices; the block count is `max + 1`.
    pub fn new(labels: Vec<usize>) -> Self {
        let n = labels.len();
        let count = labels.iter().copied().max().map_or(0, |m| m + 1);
        let mut masks = vec![vec![0u64; words_for(n)]; count];
        for (i, &w) in labels.iter().enumerate() {
            masks[w][i / 64] |= 1 << (i % 64);
        }
        BlockMembership { labels, count, masks }
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn mask(&self, k: usize) -> &[u64] {
        &self.masks[k]
    }

    pub fn members(&self, k: usize) -> Vec<usize> {
        (0..self.labels.len()).filter(|&i| self.labels[i] == k).collect()
    }

    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut labels = vec![0; self.labels.len()];
        for (i, &w) in self.labels.iter().enumerate() {
            labels[perm[i]] = w;
        }
        BlockMembership::new(labels)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Term {
    Edges,
    NodeCov(usize),
    AbsDiff(usize),
    NodeMatch(usize),
    Gwesp(f64),
    BetweenEdges,
    BetweenNodeCov(usize),
}

impl Term {
    pub fn is_between(&self) -> bool {
        matches!(self, Term::BetweenEdges | Term::BetweenNodeCov(_))
    }

    pub fn is_dyad_independent(&self) -> bool {
        !matches!(self, Term::Gwesp(_))
    }
}

/// A term together with an optional pin to a single block.
#[derive(Clone, Debug, PartialEq)]
pub struct StatTerm {
    pub term: Term,
    pub block: Option<usize>,
}

impl From<Term> for StatTerm {
    fn from(term: Term) -> Self {
        StatTerm { term, block: None }
    }
}

/// Ordered list of statistic terms; component order is declaration order.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct StatisticSpec {
    terms: Vec<StatTerm>,
}

impl StatisticSpec {
    pub fn new<T: Into<StatTerm>>(terms: impl IntoIterator<Item = T>) -> Self {
        StatisticSpec {
            terms: terms.into_iter().map(Into::into).collect(),
        }
    }

    pub fn terms(&self) -> &[StatTerm] {
        &self.terms
    }

    pub fn dim(&self) -> usize {
        self.terms.len()
    }

    pub fn is_dyad_independent(&self) -> bool {
        self.terms.iter().all(|t| t.term.is_dyad_independent())
    }

    pub fn validate(&self, cov: &CovariateTable, blocks: Option<&BlockMembership>) -> Result<()> {
        let mut edge_scopes = Vec::new();
        for t in &self.terms {
            let col = match t.term {
                Term::NodeCov(p) | Term::AbsDiff(p) | Term::NodeMatch(p) | Term::BetweenNodeCov(p) => Some(p),
                _ => None,
            };
            if let Some(p) = col {
                if p >= cov.width() {
                    return Err(Error::MissingCovariate(format!("#{p}")));
                }
                if matches!(t.term, Term::NodeMatch(_)) && matches!(cov.column(p), Covariate::Continuous(_)) {
                    return Err(Error::InvalidSpec(format!(
                        "nodematch requires a categorical covariate, `{}` is continuous",
                        cov.names()[p]
                    )));
                }
            }
            if let Term::Gwesp(decay) = t.term {
                if !decay.is_finite() {
                    return Err(Error::InvalidSpec("gwesp decay must be finite".into()));
                }
            }
            if t.term.is_between() {
                if blocks.is_none() {
                    return Err(Error::InvalidSpec("between-block terms need a block structure".into()));
                }
                if t.block.is_some() {
                    return Err(Error::InvalidSpec("between-block terms cannot be pinned to a block".into()));
                }
            }
            if let Some(k) = t.block {
                match blocks {
                    None => return Err(Error::InvalidSpec("block-pinned term without a block structure".into())),
                    Some(b) if k >= b.count() => {
                        return Err(Error::InvalidSpec(format!("block {k} out of range")));
                    }
                    _ => {}
                }
            }
            if matches!(t.term, Term::Edges) {
                if edge_scopes.contains(&t.block) {
                    return Err(Error::InvalidSpec("more than one edges term".into()));
                }
                edge_scopes.push(t.block);
            }
        }
        Ok(())
    }
}

/// Validated bundle of spec, covariates and blocks used by the hot paths.
#[derive(Clone, Copy, Debug)]
pub struct StatContext<'a> {
    pub spec: &'a StatisticSpec,
    pub cov: &'a CovariateTable,
    pub blocks: Option<&'a BlockMembership>,
}

#[inline]
fn gwesp_weight(decay: f64, shared: usize) -> f64 {
    // e^τ Σ_{k≥1} (−e^{−τ})^{k−1} C(L, k) collapses to e^τ (1 − (1 − e^{−τ})^L)
    decay.exp() * (1.0 - (-(-decay).exp_m1()).powi(shared as i32))
}

impl<'a> StatContext<'a> {
    pub fn new(
        spec: &'a StatisticSpec,
        cov: &'a CovariateTable,
        blocks: Option<&'a BlockMembership>,
    ) -> Result<Self> {
        spec.validate(cov, blocks)?;
        if let Some(b) = blocks {
            if b.labels().len() != cov.n() {
                return Err(Error::DimensionMismatch {
                    expected: cov.n(),
                    got: b.labels().len(),
                });
            }
        }
        Ok(StatContext { spec, cov, blocks })
    }

    /// Whether dyad `(i, j)` contributes to `term`, and the shared-partner
    /// mask that applies to it.
    #[inline]
    fn scope(&self, t: &StatTerm, i: usize, j: usize) -> (bool, Option<&'a [u64]>) {
        match self.blocks {
            None => (true, None),
            Some(b) => {
                let (wi, wj) = (b.label(i), b.label(j));
                if t.term.is_between() {
                    (wi != wj, None)
                } else {
                    let inside = wi == wj && t.block.is_none_or(|k| k == wi);
                    (inside, Some(b.mask(wi)))
                }
            }
        }
    }

    /// Value of a dyad-independent term on dyad `(i, j)` when present.
    #[inline]
    fn dyad_value(&self, term: &Term, i: usize, j: usize) -> f64 {
        match *term {
            Term::Edges | Term::BetweenEdges => 1.0,
            Term::NodeCov(p) | Term::BetweenNodeCov(p) => {
                let c = self.cov.column(p);
                c.value(i) + c.value(j)
            }
            Term::AbsDiff(p) => {
                let c = self.cov.column(p);
                (c.value(i) - c.value(j)).abs()
            }
            Term::NodeMatch(p) => match self.cov.column(p) {
                Covariate::Categorical(v) => (v[i] == v[j]) as u8 as f64,
                Covariate::Continuous(_) => unreachable!("validated"),
            },
            Term::Gwesp(_) => unreachable!("not dyadic"),
        }
    }

    pub fn statistics(&self, net: &Network) -> Vec<f64> {
        let mut g = vec![0.0; self.spec.dim()];
        for (i, j) in net.edges() {
            for (slot, t) in g.iter_mut().zip(self.spec.terms()) {
                let (inside, mask) = self.scope(t, i, j);
                if !inside {
                    continue;
                }
                *slot += match t.term {
                    Term::Gwesp(decay) => gwesp_weight(decay, net.common_neighbors(i, j, mask)),
                    ref term => self.dyad_value(term, i, j),
                };
            }
        }
        g
    }

    /// `g(a^{ij+}) − g(a^{ij−})` written into `out`, computed locally.
    pub fn change_into(&self, net: &Network, i: usize, j: usize, out: &mut [f64]) {
        let present = net.has_edge(i, j);
        for (slot, t) in out.iter_mut().zip(self.spec.terms()) {
            let (inside, mask) = self.scope(t, i, j);
            *slot = if !inside {
                0.0
            } else {
                match t.term {
                    Term::Gwesp(decay) => gwesp_change(net, i, j, present, decay, mask),
                    ref term => self.dyad_value(term, i, j),
                }
            };
        }
    }

    pub fn change(&self, net: &Network, i: usize, j: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.spec.dim()];
        self.change_into(net, i, j, &mut out);
        out
    }

    /// Change statistics that do not depend on the network, when every term
    /// is dyad-independent.
    pub fn dyadic_change(&self, i: usize, j: usize) -> Option<Vec<f64>> {
        if !self.spec.is_dyad_independent() {
            return None;
        }
        Some(
            self.spec
                .terms()
                .iter()
                .map(|t| if self.scope(t, i, j).0 { self.dyad_value(&t.term, i, j) } else { 0.0 })
                .collect(),
        )
    }
}

fn gwesp_change(net: &Network, i: usize, j: usize, present: bool, decay: f64, mask: Option<&[u64]>) -> f64 {
    let q = -(-decay).exp_m1();
    let shared = net.common_neighbors(i, j, mask);
    let mut delta = gwesp_weight(decay, shared);
    if shared == 0 {
        return delta;
    }
    // each common neighbour k gains partner j on edge (i,k) and i on (j,k)
    let (ri, rj) = (net.row(i), net.row(j));
    let adj = present as usize;
    for w in 0..ri.len() {
        let mut both = ri[w] & rj[w] & mask.map_or(!0, |m| m[w]);
        while both != 0 {
            let k = w * 64 + both.trailing_zeros() as usize;
            both &= both - 1;
            let l_ik = net.common_neighbors(i, k, mask) - adj;
            let l_jk = net.common_neighbors(j, k, mask) - adj;
            delta += q.powi(l_ik as i32) + q.powi(l_jk as i32);
        }
    }
    delta
}

pub fn compute_statistics(
    net: &Network,
    cov: &CovariateTable,
    spec: &StatisticSpec,
    blocks: Option<&BlockMembership>,
) -> Result<Vec<f64>> {
    check_units(net, cov)?;
    Ok(StatContext::new(spec, cov, blocks)?.statistics(net))
}

pub fn change_statistics(
    net: &Network,
    cov: &CovariateTable,
    spec: &StatisticSpec,
    dyad: (usize, usize),
    blocks: Option<&BlockMembership>,
) -> Result<Vec<f64>> {
    check_units(net, cov)?;
    let (i, j) = dyad;
    for index in [i, j] {
        if index >= net.n() {
            return Err(Error::IndexOutOfRange { index, n: net.n() });
        }
    }
    if i == j {
        return Err(Error::SelfLoop(i));
    }
    Ok(StatContext::new(spec, cov, blocks)?.change(net, i, j))
}

fn check_units(net: &Network, cov: &CovariateTable) -> Result<()> {
    if net.n() != cov.n() {
        return Err(Error::DimensionMismatch {
            expected: cov.n(),
            got: net.n(),
        });
    }
    Ok(())
}
