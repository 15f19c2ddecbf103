#![no_main]

use edgecause_core::io::parse_edges;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    // first byte picks the unit count
    let Some((&n, rest)) = data.split_first() else { return };
    let n = n as usize % 64 + 1;
    if let Ok(net) = parse_edges(rest, n) {
        assert_eq!(net.n(), n);
        for (i, j) in net.edges() {
            assert!(i < j && j < n);
            assert!(net.has_edge(j, i));
        }
    }
});
