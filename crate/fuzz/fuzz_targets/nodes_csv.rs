#![no_main]

use edgecause_core::io::parse_nodes;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(t) = parse_nodes(data) {
        let n = t.n();
        assert!(t.columns.iter().all(|(_, v)| v.len() == n));
        let _ = t.covariate_table(&[], &[]);
        for (name, _) in &t.columns {
            if let Ok(labels) = t.label_column(name) {
                let k = labels.iter().max().map_or(0, |m| m + 1);
                assert!(k <= n);
            }
        }
    }
});
