#![allow(dead_code)]

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::Output;

use edgecause_core::ergm::IndependentSampler;
use edgecause_core::seed::rng_for;
use edgecause_core::simlab::{generate_dgp, DgpConfig, PotentialOutcomes, Scenario};

pub const BERNOULLI_MODEL: &str = r#"{"terms":[{"term":"edges"},{"term":"nodecov","covariate":"x1"},{"term":"nodecov","covariate":"x2"}],
"constraint":{"type":"distance","cutoff":0.2}}"#;

pub fn dispatch(args: &[&str]) -> i32 {
    let mut argv = vec!["edgecause".to_string()];
    argv.extend(args.iter().map(|s| s.to_string()));
    edgecause_cli::dispatch(argv)
}

pub fn run_binary(args: &[&str]) -> Output {
    std::process::Command::new(env!("CARGO_BIN_EXE_edgecause"))
        .args(args)
        .output()
        .expect("binary runs")
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// A Bernoulli-scenario data set: nodes.csv (with outcome `y`), edges.csv
/// and model.json in `dir`.
pub struct Fixture {
    pub nodes: PathBuf,
    pub edges: PathBuf,
    pub model: PathBuf,
    pub y: Vec<f64>,
}

pub fn bernoulli_fixture(dir: &Path, n: usize, seed: u64) -> Fixture {
    let mut cfg = DgpConfig::new(Scenario::Bernoulli, n, 3);
    cfg.seed = seed;
    let study = generate_dgp(&cfg).unwrap();
    let net = IndependentSampler::new(&study.model).unwrap().draw(&mut rng_for(seed, "fixture", 0));
    let y = study.outcomes.observed(&net, &study.nbhds);
    let mut nodes = String::from("id,loc_x,loc_y,x1,x2,y\n");
    for i in 0..n {
        let p = study.locations.points()[i];
        writeln!(nodes, "{},{},{},{},{},{}", i + 1, p[0], p[1], study.x1[i], study.x2[i], y[i]).unwrap();
    }
    let mut edges = String::from("i,j\n");
    for (a, b) in net.edges() {
        writeln!(edges, "{},{}", a + 1, b + 1).unwrap();
    }
    let f = Fixture {
        nodes: dir.join("nodes.csv"),
        edges: dir.join("edges.csv"),
        model: dir.join("model.json"),
        y,
    };
    std::fs::write(&f.nodes, nodes).unwrap();
    std::fs::write(&f.edges, edges).unwrap();
    std::fs::write(&f.model, BERNOULLI_MODEL).unwrap();
    f
}
