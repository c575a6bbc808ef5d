#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(table) = knotroot::data::parse_csv(text) else { return };
    for name in table.columns().to_vec() {
        if let Ok(values) = table.numeric(&name) {
            assert!(values.iter().all(|v| v.is_finite()));
        }
    }
});
