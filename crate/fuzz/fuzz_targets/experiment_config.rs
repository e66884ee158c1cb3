#![no_main]

use ampic::harness::Experiment;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(exp) = Experiment::from_json_str(text) {
        let again = serde_json::to_string(&exp).expect("config serializes");
        assert_eq!(Experiment::from_json_str(&again).expect("written config parses"), exp);
    }
});
