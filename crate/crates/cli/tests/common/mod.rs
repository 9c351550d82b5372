#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use metaembed::digest::file_sha256;

pub struct Outcome {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

impl From<Output> for Outcome {
    fn from(o: Output) -> Self {
        Outcome {
            code: o.status.code().expect("exited normally"),
            stdout: String::from_utf8_lossy(&o.stdout).into_owned(),
            stderr: String::from_utf8_lossy(&o.stderr).into_owned(),
        }
    }
}

/// Runs the binary and checks that none of the `inputs` changed.
pub fn run(args: &[&str], inputs: &[&Path]) -> Outcome {
    let before: Vec<String> = inputs.iter().map(|p| file_sha256(p).unwrap()).collect();
    let out: Outcome = Command::new(env!("CARGO_BIN_EXE_metaembed"))
        .args(args)
        .output()
        .expect("binary runs")
        .into();
    let after: Vec<String> = inputs.iter().map(|p| file_sha256(p).unwrap()).collect();
    assert_eq!(before, after, "inputs were modified by {args:?}");
    assert!([0, 2, 3].contains(&out.code), "exit {} for {args:?}: {}", out.code, out.stderr);
    out
}

pub fn ok(args: &[&str], inputs: &[&Path]) -> Outcome {
    let out = run(args, inputs);
    assert_eq!(out.code, 0, "{args:?} failed: {}", out.stderr);
    out
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

pub fn manifest(out: &Path) -> serde_json::Value {
    let mut name = out.as_os_str().to_owned();
    name.push(".manifest.json");
    serde_json::from_str(&std::fs::read_to_string(PathBuf::from(name)).unwrap()).unwrap()
}

/// Checks the manifest next to `out` against the files on disk.
pub fn check_manifest(out: &Path, command: &str) {
    let m = manifest(out);
    assert_eq!(m["command"], command);
    for key in ["inputs", "outputs"] {
        for entry in m[key].as_array().unwrap() {
            let path = entry["path"].as_str().unwrap();
            assert_eq!(entry["sha256"].as_str().unwrap(), file_sha256(Path::new(path)).unwrap(), "{path}");
        }
    }
    assert!(m["outputs"].as_array().unwrap().iter().any(|e| e["path"] == s(out)));
}

/// Digests of every file under `dir`, keyed by file name; manifests are
/// reduced to their content without the wall-clock duration.
pub fn snapshot(dir: &Path) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let name = path.file_name().unwrap().to_string_lossy().into_owned();
        let value = if name.ends_with(".manifest.json") {
            let mut m: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
            m.as_object_mut().unwrap().remove("duration_ms");
            m.to_string()
        } else {
            file_sha256(&path).unwrap()
        };
        out.insert(name, value);
    }
    out
}
