//! Randomness must flow from explicit seeds only.

use std::fs;
use std::path::Path;

const FORBIDDEN: [&str; 7] = [
    "thread_rng",
    "OsRng",
    "SystemTime",
    "getrandom",
    "from_entropy",
    "RandomState",
    "rand::",
];

/// `pat` occurring with no identifier character directly before it.
fn contains_token(line: &str, pat: &str) -> bool {
    line.match_indices(pat).any(|(i, _)| {
        line[..i]
            .chars()
            .next_back()
            .map_or(true, |c| !(c.is_alphanumeric() || c == '_'))
    })
}

fn scan(dir: &Path, hits: &mut Vec<String>) {
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.is_dir() {
            scan(&path, hits);
        } else if path.extension().is_some_and(|e| e == "rs") {
            let text = fs::read_to_string(&path).unwrap();
            for (line_no, line) in text.lines().enumerate() {
                for pat in FORBIDDEN {
                    if contains_token(line, pat) {
                        hits.push(format!("{}:{}: {}", path.display(), line_no + 1, line.trim()));
                    }
                }
            }
        }
    }
}

#[test]
fn no_ambient_entropy_in_sources() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR"));
    let mut hits = Vec::new();
    scan(&root.join("src"), &mut hits);
    scan(&root.join("../cli/src"), &mut hits);
    assert!(hits.is_empty(), "entropy sources found:\n{}", hits.join("\n"));
}
