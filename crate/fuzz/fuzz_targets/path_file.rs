#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(vertices) = filippov::io::parse_path_file(text) else { return };
    assert!(vertices.len() >= 3 && vertices.iter().all(|v| v.is_finite()));
    let _ = filippov::index::ClosedPath::new(vertices);
});
