#![no_main]

use ampic::ising::IsingInstance;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(inst) = IsingInstance::parse_text(text) {
        let again = IsingInstance::parse_text(&inst.to_text()).expect("written instance parses");
        assert_eq!(again, inst);
        let spins = vec![1i8; inst.num_spins()];
        assert!(inst.energy(&spins).is_finite() || inst.max_abs_coefficient() > 1e300);
    }
});
