#![no_main]

use ampic::network::RoadNetwork;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(net) = RoadNetwork::from_json_str(text) {
        let again = RoadNetwork::from_json_str(&net.to_json_string()).expect("written network parses");
        assert_eq!(again, net);
    }
});
