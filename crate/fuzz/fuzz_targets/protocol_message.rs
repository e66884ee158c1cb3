#![no_main]

use ampic::harness::coupling::{encode_peer_message, parse_controller_message, parse_peer_message};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(msg) = parse_peer_message(text) {
        let line = encode_peer_message(&msg).expect("message encodes");
        assert_eq!(parse_peer_message(&line).expect("encoded message parses"), msg);
    }
    let _ = parse_controller_message(text);
});
