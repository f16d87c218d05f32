#![no_main]

use indcal::data::{Dataset, LABEL_COLUMN};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(ds) = Dataset::read_csv(data, LABEL_COLUMN) {
        assert!(!ds.is_empty());
        assert!(ds.labels().iter().all(|y| y.is_finite()));
        // round trip through the writer
        let mut buf = Vec::new();
        ds.write_csv(&mut buf).unwrap();
        let again = Dataset::read_csv(buf.as_slice(), LABEL_COLUMN).unwrap();
        assert_eq!(again.len(), ds.len());
        assert_eq!(again.labels(), ds.labels());
    }
});
