#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(design) = knotroot::sim::parse_design(text) {
        // canonical text re-parses to the same design
        let again = knotroot::sim::parse_design(&design.to_text()).expect("canonical text parses");
        assert_eq!(again.to_text(), design.to_text());
    }
});
