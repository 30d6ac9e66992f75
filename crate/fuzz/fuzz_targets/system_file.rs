#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(file) = filippov::io::parse_system_file(text) else { return };
    let reparsed = filippov::io::parse_system_file(&file.to_toml()).expect("emitted file re-parses");
    assert_eq!(reparsed.to_toml(), file.to_toml());
    let _ = file.instantiate(Some(0.25));
});
