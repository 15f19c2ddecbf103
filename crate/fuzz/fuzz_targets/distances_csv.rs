#![no_main]

use edgecause_core::io::parse_distances;
use edgecause_core::network::Distances;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(d) = parse_distances(data) {
        for i in 0..d.len() {
            assert_eq!(d.distance(i, i), 0.0);
            for j in 0..d.len() {
                assert_eq!(d.distance(i, j), d.distance(j, i));
            }
        }
    }
});
