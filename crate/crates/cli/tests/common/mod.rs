//! Process-level helpers for driving the `ot-sitesel` binary.
#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::Value;

pub struct Run {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

impl Run {
    pub fn json(&self) -> Value {
        serde_json::from_str(&self.stdout).unwrap_or_else(|e| panic!("bad envelope ({e}): {}", self.stdout))
    }

    /// The envelope minus its `timing` block, the only part allowed to vary.
    pub fn stable(&self) -> Value {
        strip_timing(self.json())
    }
}

pub fn strip_timing(mut v: Value) -> Value {
    if let Value::Object(m) = &mut v {
        m.remove("timing");
    }
    v
}

pub fn run<S: AsRef<std::ffi::OsStr>>(args: &[S]) -> Run {
    let out = Command::new(env!("CARGO_BIN_EXE_ot-sitesel"))
        .args(args)
        .env_remove("OT_SITESEL_THREADS")
        .output()
        .expect("spawn ot-sitesel");
    Run {
        code: out.status.code().unwrap_or(-1),
        stdout: String::from_utf8_lossy(&out.stdout).into_owned(),
        stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
    }
}

pub fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

pub fn csv(rows: &[Vec<f64>]) -> String {
    let d = rows[0].len();
    let mut s = String::from("site_id");
    for j in 0..d {
        s.push_str(&format!(",x{j}"));
    }
    s.push('\n');
    for (i, r) in rows.iter().enumerate() {
        s.push_str(&format!("s{i:02}"));
        for v in r {
            s.push_str(&format!(",{v}"));
        }
        s.push('\n');
    }
    s
}

pub const LINE4: &str = "site_id,x\na,0\nb,1\nc,2\nd,3\n";

/// Two well separated clusters of six sites each, fixed coordinates.
pub fn two_clusters_csv() -> String {
    let offsets = [(0.1, 0.3), (-0.4, 0.2), (0.3, -0.5), (-0.2, -0.1), (0.5, 0.4), (-0.3, -0.6)];
    let mut rows = Vec::new();
    for (cx, flip) in [(-3.0, 1.0), (3.0, -1.0)] {
        for &(dx, dy) in &offsets {
            rows.push(vec![cx + flip * dx, flip * dy]);
        }
    }
    csv(&rows)
}

pub fn indices(v: &Value) -> Vec<u64> {
    v["indices"].as_array().unwrap().iter().map(|x| x.as_u64().unwrap()).collect()
}

pub fn f(v: &Value) -> f64 {
    v.as_f64().unwrap_or_else(|| panic!("not a number: {v}"))
}

/// A small simulation config that finishes in seconds.
pub const SMALL_SWEEP: &str = r#"
seed = 7
replications = 3
budget = 3
etas = [0.0, 1.0]
shifts = [0.0, 1.7]
methods = ["opt-pate", "random", "stratified"]
stochastic_draws = 3
bootstrap = 50

[population]
n_sites = 10
dim = 2
units_per_site = 5
"#;
