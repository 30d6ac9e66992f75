#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(e) = filippov::parse(text) else { return };
    // printing must re-parse to the same tree
    let again = filippov::parse(&e.to_string()).expect("printed expression re-parses");
    assert_eq!(again.to_string(), e.to_string());
    let _ = e.eval(0.5, -0.25);
    let _ = e.differentiate(filippov::Var::X).eval(0.5, -0.25);
});
