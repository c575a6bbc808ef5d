#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(table) = knotroot::limit::parse_table(text) {
        assert!(table.sample().windows(2).all(|w| w[0] <= w[1]));
        let again = knotroot::limit::parse_table(&knotroot::limit::write_table(&table)).expect("written table parses");
        assert_eq!(again.sample(), table.sample());
    }
});
