#![no_main]

use indcal::data::GeneratorSpec;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(spec) = GeneratorSpec::from_json(text) else { return };
    let again = GeneratorSpec::from_json(&spec.to_json().unwrap()).unwrap();
    assert_eq!(again, spec);
    // keep generation cheap
    let small = spec.with_size_and_seed(spec.n().min(64), spec.seed());
    let _ = indcal::data::generate(&small);
});
