use std::path::Path;

use edgecause_core::ergm::ErgmModel;
use edgecause_core::error::{Error, Result};
use edgecause_core::io::{self, FitRecord, Geometry, ModelConfig, NodeTable};
use edgecause_core::network::{
    dependence_from_blocks, dependence_from_overlap, knn_neighborhoods, knn_within_groups, DependenceSystem,
    NeighborhoodSystem, Network,
};
use edgecause_core::stats::{BlockMembership, CovariateTable, StatisticSpec};

use crate::ModelInputs;

/// Everything a model configuration resolves to on a node table.
pub struct Inputs {
    pub nodes: NodeTable,
    pub cov: CovariateTable,
    pub blocks: Option<BlockMembership>,
    pub spec: StatisticSpec,
    pub geometry: Option<Geometry>,
    pub space: edgecause_core::network::RestrictedSpace,
}

impl Inputs {
    /// `exclude` lists node columns that are not covariates (e.g. the outcome).
    pub fn load(args: &ModelInputs, standardize: bool, exclude: &[String]) -> Result<Self> {
        let nodes = io::parse_nodes(io::open(&args.nodes)?)?;
        let config = ModelConfig::from_json(&io::read_to_string(&args.model)?)?;
        let mut reserved = config.reserved_columns();
        reserved.extend(exclude.iter().cloned());
        let raw = nodes.covariate_table(&config.categorical, &reserved)?;
        let cov = if standardize { raw.standardized() } else { raw };
        let blocks = match &config.blocks {
            Some(b) => Some(BlockMembership::new(nodes.label_column(&b.column)?)),
            None => None,
        };
        let spec = config.spec(&cov, blocks.as_ref())?;
        let geometry = match &args.distances {
            Some(p) => Some(Geometry::Matrix(io::parse_distances(io::open(p)?)?)),
            None => nodes.locations.clone().map(Geometry::Locations),
        };
        let n = nodes.n();
        if let Some(Geometry::Matrix(m)) = &geometry {
            use edgecause_core::network::Distances;
            if m.len() != n {
                return Err(Error::DimensionMismatch { expected: n, got: m.len() });
            }
        }
        let space = config.restricted_space(geometry.as_ref(), n)?;
        Ok(Inputs {
            nodes,
            cov,
            blocks,
            spec,
            geometry,
            space,
        })
    }

    pub fn n(&self) -> usize {
        self.nodes.n()
    }

    pub fn observed(&self, edges: &Path) -> Result<Network> {
        let net = io::parse_edges(io::open(edges)?, self.n())?;
        if !self.space.admits(&net) {
            return Err(Error::OutsideRestrictedSpace);
        }
        Ok(net)
    }

    pub fn model(&self, eta: Vec<f64>) -> Result<ErgmModel> {
        ErgmModel::new(self.spec.clone(), eta, self.space.clone(), self.cov.clone(), self.blocks.clone())
    }

    /// Nearest-neighbour `N_i` (within blocks when the model has them) and the
    /// matching dependence sets.
    pub fn neighborhoods(&self, size: usize) -> Result<(NeighborhoodSystem, DependenceSystem)> {
        let geo = self
            .geometry
            .as_ref()
            .ok_or_else(|| Error::InvalidConfig("neighbourhoods need loc_x/loc_y or --distances".into()))?;
        match &self.blocks {
            Some(b) => Ok((knn_within_groups(geo, size, b.labels())?, dependence_from_blocks(b.labels()))),
            None => {
                let nb = knn_neighborhoods(geo, size)?;
                let dep = dependence_from_overlap(&nb);
                Ok((nb, dep))
            }
        }
    }
}

pub fn read_fit(path: &Path) -> Result<FitRecord> {
    FitRecord::from_json(&io::read_to_string(path)?)
}

pub fn lambda_grid(arg: &Option<String>) -> Result<Vec<f64>> {
    match arg {
        Some(s) => io::parse_lambda_grid(s),
        None => Ok(edgecause_core::simlab::default_lambda_grid()),
    }
}

pub fn nbhd_size(l: usize, includes_self: bool) -> Result<usize> {
    if l == 0 {
        return Err(Error::InvalidConfig("--nbhd-l must be at least 1".into()));
    }
    Ok(if includes_self { l } else { l + 1 })
}
