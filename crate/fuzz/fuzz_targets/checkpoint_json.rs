#![no_main]

use indcal::forecast::{Forecaster, RandomizedForecaster};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(f) = Forecaster::from_json(text) else { return };
    let again = Forecaster::from_json(&f.to_json().unwrap()).unwrap();
    assert_eq!(again, f);
    // a loaded forecaster must not panic on prediction
    let _ = f.predict(&[0.0; 4], 0.5);
});
