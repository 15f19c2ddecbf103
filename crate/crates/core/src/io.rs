//! File formats: node, edge and distance CSVs, model configurations, fit
//! records and λ grids. Unit ids are 1-based in files and 0-based in memory.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{eligibility_from_distance, DistanceMatrix, Distances, Locations, Network, RestrictedSpace};
use crate::stats::{BlockMembership, Covariate, CovariateTable, StatTerm, StatisticSpec, Term};

/// Seventeen significant digits, enough to round-trip any `f64`.
pub fn format_number(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else {
        format!("{x:.16e}")
    }
}

fn parse_f64(field: &str, what: &str, row: usize) -> Result<f64> {
    let v: f64 = field
        .trim()
        .parse()
        .map_err(|_| Error::Parse(format!("row {row}: `{field}` is not a number ({what})")))?;
    if !v.is_finite() {
        return Err(Error::Parse(format!("row {row}: nonfinite {what}")));
    }
    Ok(v)
}

fn parse_id(field: &str, n: usize, row: usize) -> Result<usize> {
    let id: usize = field
        .trim()
        .parse()
        .map_err(|_| Error::Parse(format!("row {row}: `{field}` is not a unit id")))?;
    if id == 0 || id > n {
        return Err(Error::IndexOutOfRange { index: id, n });
    }
    Ok(id - 1)
}

/// Contents of `nodes.csv`, rows ordered by id.
#[derive(Clone, Debug, PartialEq)]
pub struct NodeTable {
    pub locations: Option<Locations>,
    /// Remaining columns as raw text, in header order.
    pub columns: Vec<(String, Vec<String>)>,
}

impl NodeTable {
    pub fn n(&self) -> usize {
        self.columns.first().map_or_else(|| self.locations.as_ref().map_or(0, |l| l.points().len()), |c| c.1.len())
    }

    fn raw(&self, name: &str) -> Result<&[String]> {
        self.columns
            .iter()
            .find(|(c, _)| c == name)
            .map(|(_, v)| v.as_slice())
            .ok_or_else(|| Error::MissingCovariate(name.to_string()))
    }

    pub fn numeric_column(&self, name: &str) -> Result<Vec<f64>> {
        self.raw(name)?
            .iter()
            .enumerate()
            .map(|(r, v)| parse_f64(v, name, r + 1))
            .collect()
    }

    /// Distinct values mapped to `0..K` in sorted order (numerically when all
    /// values are integers).
    pub fn label_column(&self, name: &str) -> Result<Vec<usize>> {
        Ok(categorical_codes(self.raw(name)?).into_iter().map(|c| c as usize).collect())
    }

    /// Covariates from every column except `exclude`. Columns named in
    /// `categorical`, or holding non-numeric text, become categorical.
    pub fn covariate_table(&self, categorical: &[String], exclude: &[String]) -> Result<CovariateTable> {
        let mut table = CovariateTable::new(self.n());
        for (name, values) in &self.columns {
            if exclude.contains(name) {
                continue;
            }
            let numeric: Option<Vec<f64>> = values.iter().map(|v| v.trim().parse::<f64>().ok()).collect();
            let column = match numeric {
                Some(v) if !categorical.contains(name) => Covariate::Continuous(v),
                _ => Covariate::Categorical(categorical_codes(values)),
            };
            table.push(name, column)?;
        }
        for c in categorical {
            table.index_of(c)?;
        }
        Ok(table)
    }
}

fn categorical_codes(values: &[String]) -> Vec<i64> {
    let ints: Option<Vec<i64>> = values.iter().map(|v| v.trim().parse::<i64>().ok()).collect();
    let keys: Vec<(Option<i64>, &str)> = match &ints {
        Some(iv) => iv.iter().map(|&x| (Some(x), "")).collect(),
        None => values.iter().map(|v| (None, v.trim())).collect(),
    };
    let distinct: BTreeSet<(Option<i64>, &str)> = keys.iter().copied().collect();
    let index: BTreeMap<(Option<i64>, &str), i64> = distinct.into_iter().enumerate().map(|(k, v)| (v, k as i64)).collect();
    keys.iter().map(|k| index[k]).collect()
}

/// Parses `nodes.csv`: header `id,loc_x,loc_y,x1,x2,...` with ids `1..n` in
/// any order; the location columns are optional.
pub fn parse_nodes<R: Read>(input: R) -> Result<NodeTable> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header.first().map(String::as_str) != Some("id") {
        return Err(Error::Parse("nodes file must start with an `id` column".into()));
    }
    let mut seen = HashSet::new();
    for h in &header {
        if !seen.insert(h.as_str()) {
            return Err(Error::Parse(format!("duplicate column `{h}`")));
        }
    }
    let loc = (header.iter().position(|h| h == "loc_x"), header.iter().position(|h| h == "loc_y"));
    if loc.0.is_some() != loc.1.is_some() {
        return Err(Error::Parse("loc_x and loc_y must appear together".into()));
    }
    let records: Vec<csv::StringRecord> = rdr.records().collect::<std::result::Result<_, _>>()?;
    let n = records.len();
    if n == 0 {
        return Err(Error::Parse("nodes file has no rows".into()));
    }
    let mut order = vec![usize::MAX; n];
    for (r, rec) in records.iter().enumerate() {
        let id = parse_id(&rec[0], n, r + 1)?;
        if order[id] != usize::MAX {
            return Err(Error::Parse(format!("duplicate id {}", id + 1)));
        }
        order[id] = r;
    }
    let locations = match loc {
        (Some(x), Some(y)) => {
            let pts = order
                .iter()
                .map(|&r| Ok([parse_f64(&records[r][x], "loc_x", r + 1)?, parse_f64(&records[r][y], "loc_y", r + 1)?]))
                .collect::<Result<Vec<_>>>()?;
            Some(Locations::new(pts)?)
        }
        _ => None,
    };
    let columns = header
        .iter()
        .enumerate()
        .filter(|(c, _)| *c != 0 && Some(*c) != loc.0 && Some(*c) != loc.1)
        .map(|(c, name)| {
            let vals = order
                .iter()
                .map(|&r| {
                    let v = &records[r][c];
                    if v.is_empty() {
                        Err(Error::Parse(format!("row {}: empty value in `{name}`", r + 1)))
                    } else {
                        Ok(v.to_string())
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((name.clone(), vals))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(NodeTable { locations, columns })
}

/// Parses `edges.csv`: header `i,j`, one undirected edge per row.
pub fn parse_edges<R: Read>(input: R, n: usize) -> Result<Network> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let header = rdr.headers()?;
    if header.len() != 2 || &header[0] != "i" || &header[1] != "j" {
        return Err(Error::Parse("edges file header must be `i,j`".into()));
    }
    let mut edges = Vec::new();
    let mut seen = HashSet::new();
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let (i, j) = (parse_id(&rec[0], n, r + 1)?, parse_id(&rec[1], n, r + 1)?);
        if i == j {
            return Err(Error::SelfLoop(i + 1));
        }
        if !seen.insert((i.min(j), i.max(j))) {
            return Err(Error::Parse(format!("row {}: duplicate edge ({}, {})", r + 1, i + 1, j + 1)));
        }
        edges.push((i, j));
    }
    Network::from_edges(n, &edges)
}

/// Parses `distances.csv`: `n` rows of `n` comma-separated values in id
/// order, with an optional header row.
pub fn parse_distances<R: Read>(input: R) -> Result<DistanceMatrix> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(input);
    let mut rows = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if r == 0 && rec.iter().any(|f| f.parse::<f64>().is_err()) {
            continue;
        }
        rows.push(rec.iter().map(|f| parse_f64(f, "distance", r + 1)).collect::<Result<Vec<_>>>()?);
    }
    if rows.is_empty() {
        return Err(Error::Parse("distance file has no rows".into()));
    }
    DistanceMatrix::from_rows(rows)
}

/// Where pairwise distances come from.
#[derive(Clone, Debug, PartialEq)]
pub enum Geometry {
    Locations(Locations),
    Matrix(DistanceMatrix),
}

impl Distances for Geometry {
    fn len(&self) -> usize {
        match self {
            Geometry::Locations(l) => l.len(),
            Geometry::Matrix(m) => m.len(),
        }
    }

    fn distance(&self, i: usize, j: usize) -> f64 {
        match self {
            Geometry::Locations(l) => l.distance(i, j),
            Geometry::Matrix(m) => m.distance(i, j),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermConfig {
    pub term: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covariate: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decay: Option<f64>,
    /// 1-based block the term is pinned to.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub block: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum ConstraintConfig {
    Distance { cutoff: f64 },
    None,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlocksConfig {
    pub column: String,
    /// Give every within-block term its own copy per block.
    #[serde(default)]
    pub per_block: bool,
}

/// Model configuration file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub terms: Vec<TermConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constraint: Option<ConstraintConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blocks: Option<BlocksConfig>,
    /// Covariate columns to treat as categorical.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub categorical: Vec<String>,
}

impl ModelConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ModelConfig = serde_json::from_str(text)?;
        if cfg.terms.is_empty() {
            return Err(Error::InvalidSpec("model has no terms".into()));
        }
        if let Some(ConstraintConfig::Distance { cutoff }) = cfg.constraint {
            if !(cutoff > 0.0) || !cutoff.is_finite() {
                return Err(Error::InvalidSpec("distance cutoff must be positive and finite".into()));
            }
        }
        Ok(cfg)
    }

    /// Columns that are not covariates (the block column).
    pub fn reserved_columns(&self) -> Vec<String> {
        self.blocks.iter().map(|b| b.column.clone()).collect()
    }

    pub fn spec(&self, cov: &CovariateTable, blocks: Option<&BlockMembership>) -> Result<StatisticSpec> {
        let mut terms = Vec::new();
        let copies = match (&self.blocks, blocks) {
            (Some(b), Some(m)) if b.per_block => Some(m.count()),
            _ => None,
        };
        for t in &self.terms {
            let col = |what: &str| -> Result<usize> {
                let name = t
                    .covariate
                    .as_deref()
                    .ok_or_else(|| Error::InvalidSpec(format!("`{what}` needs a covariate")))?;
                cov.index_of(name)
            };
            let term = match t.term.as_str() {
                "edges" => Term::Edges,
                "nodecov" => Term::NodeCov(col("nodecov")?),
                "absdiff" => Term::AbsDiff(col("absdiff")?),
                "nodematch" => Term::NodeMatch(col("nodematch")?),
                "gwesp" => Term::Gwesp(t.decay.ok_or_else(|| Error::InvalidSpec("`gwesp` needs a decay".into()))?),
                "between_edges" => Term::BetweenEdges,
                "between_nodecov" => Term::BetweenNodeCov(col("between_nodecov")?),
                other => return Err(Error::InvalidSpec(format!("unknown term `{other}`"))),
            };
            let block = match t.block {
                Some(0) => return Err(Error::InvalidSpec("block ids are 1-based".into())),
                b => b.map(|b| b - 1),
            };
            match (copies, block, term.is_between()) {
                (Some(k), None, false) => terms.extend((0..k).map(|b| StatTerm {
                    term: term.clone(),
                    block: Some(b),
                })),
                _ => terms.push(StatTerm { term, block }),
            }
        }
        let spec = StatisticSpec::new(terms);
        spec.validate(cov, blocks)?;
        Ok(spec)
    }

    pub fn restricted_space(&self, geometry: Option<&Geometry>, n: usize) -> Result<RestrictedSpace> {
        match &self.constraint {
            None | Some(ConstraintConfig::None) => Ok(RestrictedSpace::complete(n)),
            Some(ConstraintConfig::Distance { cutoff }) => {
                let g = geometry.ok_or_else(|| {
                    Error::InvalidConfig("distance constraint needs locations or a distance matrix".into())
                })?;
                if g.len() != n {
                    return Err(Error::DimensionMismatch { expected: n, got: g.len() });
                }
                eligibility_from_distance(g, *cutoff)
            }
        }
    }
}

/// Output of `fit`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitRecord {
    pub eta_hat: Vec<f64>,
    pub se: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub seed: u64,
}

impl FitRecord {
    pub fn from_json(text: &str) -> Result<Self> {
        let r: FitRecord = serde_json::from_str(text)?;
        if r.eta_hat.is_empty() || r.eta_hat.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parse("eta_hat must be a non-empty list of finite numbers".into()));
        }
        if r.se.len() != r.eta_hat.len() {
            return Err(Error::DimensionMismatch {
                expected: r.eta_hat.len(),
                got: r.se.len(),
            });
        }
        Ok(r)
    }
}

/// Comma-separated finite λ values, e.g. `"-0.6931,0,0.6931"`.
pub fn parse_lambda_grid(s: &str) -> Result<Vec<f64>> {
    let grid = s
        .split(',')
        .enumerate()
        .map(|(k, f)| {
            let v: f64 = f
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("lambda #{}: `{}` is not a number", k + 1, f.trim())))?;
            if !v.is_finite() {
                return Err(Error::Parse(format!("lambda #{} is not finite", k + 1)));
            }
            Ok(v)
        })
        .collect::<Result<Vec<f64>>>()?;
    let mut seen = HashSet::new();
    if let Some(d) = grid.iter().find(|v| !seen.insert(v.to_bits())) {
        return Err(Error::Parse(format!("duplicate lambda {d}")));
    }
    Ok(grid)
}

pub fn read_to_string(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::InvalidConfig(format!("cannot read {}: {e}", path.display())))
}

pub fn open(path: &Path) -> Result<std::fs::File> {
    std::fs::File::open(path).map_err(|e| Error::InvalidConfig(format!("cannot open {}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn nodes_are_reordered_by_id() {
        let text = "id,loc_x,loc_y,x1,region\n2,0.5,0.5,1.5,b\n1,0.0,0.1,-2,a\n3,1,1,0,b\n";
        let t = parse_nodes(text.as_bytes()).unwrap();
        assert_eq!(t.n(), 3);
        assert_eq!(t.locations.as_ref().unwrap().points()[0], [0.0, 0.1]);
        assert_eq!(t.numeric_column("x1").unwrap(), vec![-2.0, 1.5, 0.0]);
        let cov = t.covariate_table(&[], &[]).unwrap();
        assert_eq!(cov.column(1), &Covariate::Categorical(vec![0, 1, 1]));
        assert_eq!(t.label_column("region").unwrap(), vec![0, 1, 1]);
        assert!(parse_nodes("id,x\n1,2\n1,3\n".as_bytes()).is_err());
        assert!(parse_nodes("id,x\n1,2\n3,3\n".as_bytes()).is_err());
        assert!(parse_nodes("x,id\n1,1\n".as_bytes()).is_err());
        assert!(parse_nodes("id,loc_x\n1,1\n".as_bytes()).is_err());
        assert!(parse_nodes("id,x\n1,\n".as_bytes()).is_err());
    }

    #[test]
    fn integer_labels_sort_numerically() {
        let t = parse_nodes("id,block\n1,10\n2,9\n3,10\n".as_bytes()).unwrap();
        assert_eq!(t.label_column("block").unwrap(), vec![1, 0, 1]);
    }

    #[test]
    fn edges_are_one_based_and_validated() {
        let net = parse_edges("i,j\n1,2\n3,2\n".as_bytes(), 3).unwrap();
        assert!(net.has_edge(0, 1) && net.has_edge(1, 2) && !net.has_edge(0, 2));
        assert!(matches!(parse_edges("i,j\n1,1\n".as_bytes(), 3), Err(Error::SelfLoop(1))));
        assert!(matches!(parse_edges("i,j\n1,4\n".as_bytes(), 3), Err(Error::IndexOutOfRange { index: 4, n: 3 })));
        assert!(parse_edges("i,j\n1,2\n2,1\n".as_bytes(), 3).is_err());
        assert!(parse_edges("a,b\n1,2\n".as_bytes(), 3).is_err());
        assert_eq!(parse_edges("i,j\n".as_bytes(), 2).unwrap(), Network::empty(2));
    }

    #[test]
    fn distances_with_and_without_header() {
        let a = parse_distances("0,1,2\n1,0,3\n2,3,0\n".as_bytes()).unwrap();
        let b = parse_distances("1,2,3\n0,1,2\n1,0,3\n2,3,0\n".as_bytes());
        // a numeric first row is data, so this one is not square
        assert!(b.is_err());
        let c = parse_distances("u1,u2,u3\n0,1,2\n1,0,3\n2,3,0\n".as_bytes()).unwrap();
        assert_eq!(a, c);
        assert!(matches!(
            parse_distances("0,1\n2,0\n".as_bytes()),
            Err(Error::AsymmetricDistances { .. })
        ));
    }

    #[test]
    fn model_config_builds_spec_and_space() {
        let text = r#"{"terms":[{"term":"edges"},{"term":"nodecov","covariate":"x1"},{"term":"gwesp","decay":0.3},
            {"term":"between_edges"}],"constraint":{"type":"distance","cutoff":0.6},"blocks":{"column":"block"}}"#;
        let cfg = ModelConfig::from_json(text).unwrap();
        let nodes = parse_nodes("id,loc_x,loc_y,x1,block\n1,0,0,1,1\n2,0.5,0,2,1\n3,1,0,3,2\n".as_bytes()).unwrap();
        let cov = nodes.covariate_table(&cfg.categorical, &cfg.reserved_columns()).unwrap();
        assert_eq!(cov.width(), 1);
        let blocks = BlockMembership::new(nodes.label_column("block").unwrap());
        let spec = cfg.spec(&cov, Some(&blocks)).unwrap();
        assert_eq!(spec.dim(), 4);
        assert!(matches!(cfg.spec(&cov, None), Err(Error::InvalidSpec(_))));
        let geo = Geometry::Locations(nodes.locations.clone().unwrap());
        let space = cfg.restricted_space(Some(&geo), 3).unwrap();
        assert!(space.contains(0, 1) && !space.contains(0, 2));
        assert!(cfg.restricted_space(None, 3).is_err());

        let per = ModelConfig {
            blocks: Some(BlocksConfig {
                column: "block".into(),
                per_block: true,
            }),
            ..cfg.clone()
        };
        assert_eq!(per.spec(&cov, Some(&blocks)).unwrap().dim(), 7);

        for bad in [
            r#"{"terms":[]}"#,
            r#"{"terms":[{"term":"stars"}]}"#,
            r#"{"terms":[{"term":"edges"}],"constraint":{"type":"distance","cutoff":-1}}"#,
            r#"{"terms":[{"term":"edges","extra":1}]}"#,
        ] {
            let r = ModelConfig::from_json(bad).and_then(|c| c.spec(&cov, None));
            assert!(r.is_err(), "{bad}");
        }
        let missing = ModelConfig::from_json(r#"{"terms":[{"term":"nodecov"}]}"#).unwrap();
        assert!(missing.spec(&cov, None).is_err());
    }

    #[test]
    fn fit_record_round_trip() {
        let r = FitRecord {
            eta_hat: vec![-1.5, 0.25],
            se: vec![0.1, 0.05],
            converged: true,
            iterations: 3,
            seed: 42,
        };
        let text = serde_json::to_string(&r).unwrap();
        assert_eq!(FitRecord::from_json(&text).unwrap(), r);
        assert!(FitRecord::from_json(r#"{"eta_hat":[],"se":[],"converged":true,"iterations":1,"seed":0}"#).is_err());
        assert!(FitRecord::from_json(r#"{"eta_hat":[1],"se":[],"converged":true,"iterations":1,"seed":0}"#).is_err());
    }

    #[test]
    fn lambda_grid_examples() {
        assert_eq!(parse_lambda_grid("-0.6931, 0,0.6931").unwrap(), vec![-0.6931, 0.0, 0.6931]);
        assert!(parse_lambda_grid("").is_err());
        assert!(parse_lambda_grid("1,,2").is_err());
        assert!(parse_lambda_grid("inf").is_err());
        assert!(parse_lambda_grid("0.5,0.5").is_err());
    }

    #[test]
    fn format_number_round_trips() {
        for x in [0.0, -0.0, 1.0 / 3.0, 1e-300, -2.5e17, f64::MAX] {
            assert_eq!(format_number(x).parse::<f64>().unwrap().to_bits(), x.to_bits());
        }
        assert_eq!(format_number(f64::NAN), "NaN");
    }

    proptest! {
        #[test]
        fn edge_files_round_trip(n in 2usize..12, raw in proptest::collection::vec((0usize..12, 0usize..12), 0..30)) {
            let mut edges: Vec<(usize, usize)> = raw.into_iter()
                .map(|(a, b)| (a % n, b % n)).filter(|(a, b)| a != b)
                .map(|(a, b)| (a.min(b), a.max(b))).collect();
            edges.sort_unstable();
            edges.dedup();
            let mut text = String::from("i,j\n");
            for (a, b) in &edges {
                text.push_str(&format!("{},{}\n", a + 1, b + 1));
            }
            let net = parse_edges(text.as_bytes(), n).unwrap();
            prop_assert_eq!(net.edges().collect::<Vec<_>>(), edges);
        }

        #[test]
        fn parsers_never_panic(bytes in proptest::collection::vec(any::<u8>(), 0..200)) {
            let _ = parse_nodes(bytes.as_slice());
            let _ = parse_edges(bytes.as_slice(), 5);
            let _ = parse_distances(bytes.as_slice());
            let text = String::from_utf8_lossy(&bytes);
            let _ = ModelConfig::from_json(&text);
            let _ = FitRecord::from_json(&text);
            let _ = parse_lambda_grid(&text);
        }
    }
}
