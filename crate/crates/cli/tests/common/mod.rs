//! Helpers shared by the CLI test targets: a brute-force mining oracle and
//! process utilities.
#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub const BIN: &str = env!("CARGO_BIN_EXE_bitextmine");

pub fn fixture(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(rel)
}

pub fn mini_config() -> PathBuf {
    fixture("mini/pipeline.toml")
}

/// Runs the binary with provider environment variables cleared.
pub fn run(args: &[&str]) -> Output {
    run_env(args, &[])
}

pub fn run_env(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(BIN);
    cmd.args(args);
    for var in [
        "BITEXTMINE_EMBED_URL",
        "BITEXTMINE_EMBED_CMD",
        "BITEXTMINE_TRANSLATE_URL",
        "BITEXTMINE_TRANSLATE_CMD",
    ] {
        cmd.env_remove(var);
    }
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

pub fn out_set(dir: &Path) -> String {
    format!("output_dir=\"{}\"", dir.display())
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// `(stage, event)` pairs from run.log, timestamps dropped.
pub fn log_events(dir: &Path) -> Vec<(String, String)> {
    std::fs::read_to_string(dir.join("run.log"))
        .unwrap_or_default()
        .lines()
        .map(|l| {
            let mut parts = l.split(' ').skip(1);
            (parts.next().unwrap().to_string(), parts.next().unwrap().to_string())
        })
        .collect()
}

fn unit(v: &[f32]) -> Vec<f64> {
    let norm = v.iter().map(|&x| f64::from(x) * f64::from(x)).sum::<f64>().sqrt();
    v.iter().map(|&x| if norm > 0.0 { f64::from(x) / norm } else { 0.0 }).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct OraclePair {
    pub src: usize,
    pub tgt: usize,
    pub margin: f64,
    pub direction: &'static str,
}

/// Indices of the `k` most similar rows, best first, ties to the lower index.
fn top_k(sims: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..sims.len()).collect();
    idx.sort_by(|&a, &b| sims[b].partial_cmp(&sims[a]).unwrap().then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

/// Margin mining by full cosine matrix in f64, best-neighbor candidates from
/// both directions, union, threshold, sort.
pub fn oracle_mine(src: &[Vec<f32>], tgt: &[Vec<f32>], k: usize, threshold: f64) -> Vec<OraclePair> {
    if src.is_empty() || tgt.is_empty() {
        return Vec::new();
    }
    let k = k.min(src.len()).min(tgt.len());
    let s: Vec<Vec<f64>> = src.iter().map(|v| unit(v)).collect();
    let t: Vec<Vec<f64>> = tgt.iter().map(|v| unit(v)).collect();
    let sim: Vec<Vec<f64>> = s
        .iter()
        .map(|a| t.iter().map(|b| a.iter().zip(b).map(|(x, y)| x * y).sum()).collect())
        .collect();
    let col = |j: usize| -> Vec<f64> { sim.iter().map(|row| row[j]).collect() };

    let fwd: Vec<Vec<usize>> = sim.iter().map(|row| top_k(row, k)).collect();
    let bwd: Vec<Vec<usize>> = (0..t.len()).map(|j| top_k(&col(j), k)).collect();
    let sx: Vec<f64> = fwd.iter().enumerate().map(|(i, l)| l.iter().map(|&j| sim[i][j]).sum()).collect();
    let sy: Vec<f64> = bwd.iter().enumerate().map(|(j, l)| l.iter().map(|&i| sim[i][j]).sum()).collect();
    let margin = |i: usize, j: usize| -> Option<f64> {
        let d = sx[i] + sy[j];
        (d > 0.0).then(|| 2.0 * k as f64 * sim[i][j] / d)
    };

    let mut found: Vec<OraclePair> = Vec::new();
    for (i, l) in fwd.iter().enumerate() {
        if let Some(m) = margin(i, l[0]) {
            found.push(OraclePair { src: i, tgt: l[0], margin: m, direction: "forward" });
        }
    }
    for (j, l) in bwd.iter().enumerate() {
        let i = l[0];
        if let Some(m) = margin(i, j) {
            match found.iter_mut().find(|p| p.src == i && p.tgt == j) {
                Some(p) => p.direction = "both",
                None => found.push(OraclePair { src: i, tgt: j, margin: m, direction: "backward" }),
            }
        }
    }
    found.retain(|p| p.margin >= threshold);
    found.sort_by(|a, b| {
        b.margin
            .partial_cmp(&a.margin)
            .unwrap()
            .then(a.src.cmp(&b.src))
            .then(a.tgt.cmp(&b.tgt))
    });
    found
}
