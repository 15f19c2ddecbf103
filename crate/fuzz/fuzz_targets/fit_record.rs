#![no_main]

use edgecause_core::io::FitRecord;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(r) = FitRecord::from_json(text) {
        assert_eq!(r.eta_hat.len(), r.se.len());
        let again = FitRecord::from_json(&serde_json_roundtrip(&r)).unwrap();
        assert_eq!(again.eta_hat, r.eta_hat);
    }
});

fn serde_json_roundtrip(r: &FitRecord) -> String {
    let num = |v: &[f64]| v.iter().map(|x| format!("{x:e}")).collect::<Vec<_>>().join(",");
    format!(
        r#"{{"eta_hat":[{}],"se":[{}],"converged":{},"iterations":{},"seed":{}}}"#,
        num(&r.eta_hat),
        num(&r.se),
        r.converged,
        r.iterations,
        r.seed
    )
}
