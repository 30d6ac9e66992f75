//! Replays the fuzz seed corpus through the checks the fuzz targets make.

use std::fs;
use std::path::PathBuf;

fn seeds(target: &str) -> Vec<(String, String)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fuzz/corpus")
        .join(target);
    let mut out: Vec<(String, String)> = fs::read_dir(&dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.display().to_string(), fs::read_to_string(&p).unwrap())
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds in {}", dir.display());
    out
}

#[test]
fn expression_seeds() {
    let mut parsed = 0;
    for (name, text) in seeds("expr_parse") {
        let Ok(e) = filippov::parse(&text) else {
            continue;
        };
        let again = filippov::parse(&e.to_string()).unwrap_or_else(|err| panic!("{name}: {err}"));
        assert_eq!(again, e, "{name}");
        let _ = e.eval(0.5, -0.25);
        let _ = e.differentiate(filippov::Var::X).eval(0.5, -0.25);
        parsed += 1;
    }
    assert!(parsed >= 3);
}

#[test]
fn system_file_seeds() {
    for (name, text) in seeds("system_file") {
        let file = filippov::io::parse_system_file(&text).unwrap_or_else(|e| panic!("{name}: {e}"));
        let reparsed = filippov::io::parse_system_file(&file.to_toml()).unwrap();
        assert_eq!(reparsed.to_toml(), file.to_toml(), "{name}");
        file.instantiate(Some(0.25))
            .unwrap_or_else(|e| panic!("{name}: {e}"));
    }
}

#[test]
fn path_file_seeds() {
    for (name, text) in seeds("path_file") {
        let v = filippov::io::parse_path_file(&text).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert!(v.len() >= 3 && v.iter().all(|p| p.is_finite()));
        let simple = filippov::index::ClosedPath::new(v).is_ok();
        assert_eq!(simple, !name.ends_with("bowtie"), "{name}");
    }
}
