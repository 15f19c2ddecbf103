#![no_main]

use edgecause_core::io::ModelConfig;
use edgecause_core::stats::{BlockMembership, Covariate, CovariateTable};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(cfg) = ModelConfig::from_json(text) else { return };
    let cov = CovariateTable::new(4)
        .with_column("x1", Covariate::Continuous(vec![0.1, -0.4, 1.2, 0.0]))
        .unwrap()
        .with_column("g", Covariate::Categorical(vec![0, 1, 1, 0]))
        .unwrap();
    let blocks = BlockMembership::new(vec![0, 0, 1, 1]);
    for b in [None, Some(&blocks)] {
        if let Ok(spec) = cfg.spec(&cov, b) {
            assert!(spec.dim() > 0);
        }
    }
    let _ = cfg.restricted_space(None, 4);
});
