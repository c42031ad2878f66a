use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{CandidatePair, Direction, MineError};

pub const PAIRS_HEADER: &str = "src_id\ttgt_id\tmargin\tdirection\tsrc_text\ttgt_text";

/// One parsed line of a pairs file.
#[derive(Debug, Clone, PartialEq)]
pub struct PairRow {
    pub src_id: usize,
    pub tgt_id: usize,
    pub margin: f64,
    pub direction: Direction,
    pub src_text: String,
    pub tgt_text: String,
}

fn text_at<'a>(texts: &'a [String], id: usize, side: &str) -> Result<&'a str, MineError> {
    let t = texts.get(id).ok_or_else(|| {
        MineError::InvalidParams(format!("{side} id {id} has no text ({} texts)", texts.len()))
    })?;
    if t.contains(['\t', '\n', '\r']) {
        return Err(MineError::InvalidParams(format!(
            "{side} text {id} contains a tab or newline"
        )));
    }
    Ok(t)
}

/// Writes pairs with their texts. Margins are printed with six decimals.
pub fn write_pairs_tsv<W: Write>(
    mut out: W,
    pairs: &[CandidatePair],
    src_texts: &[String],
    tgt_texts: &[String],
) -> Result<(), MineError> {
    writeln!(out, "{PAIRS_HEADER}")?;
    for p in pairs {
        writeln!(
            out,
            "{}\t{}\t{:.6}\t{}\t{}\t{}",
            p.src_id,
            p.tgt_id,
            p.margin,
            p.direction.as_str(),
            text_at(src_texts, p.src_id, "source")?,
            text_at(tgt_texts, p.tgt_id, "target")?,
        )?;
    }
    out.flush()?;
    Ok(())
}

pub fn save_pairs_tsv(
    path: &Path,
    pairs: &[CandidatePair],
    src_texts: &[String],
    tgt_texts: &[String],
) -> Result<(), MineError> {
    write_pairs_tsv(BufWriter::new(File::create(path)?), pairs, src_texts, tgt_texts)
}

pub fn read_pairs_tsv<R: Read>(input: R) -> Result<Vec<PairRow>, MineError> {
    let bad = |line: usize, reason: String| MineError::PairsFormat { line, reason };
    let mut rows = Vec::new();
    for (i, line) in BufReader::new(input).lines().enumerate() {
        let line = line?;
        let n = i + 1;
        if n == 1 {
            if line != PAIRS_HEADER {
                return Err(bad(n, "missing or wrong header".into()));
            }
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 6 {
            return Err(bad(n, format!("expected 6 fields, found {}", f.len())));
        }
        let int = |s: &str, what: &str| {
            s.parse::<usize>()
                .map_err(|_| bad(n, format!("{what} `{s}` is not an integer")))
        };
        rows.push(PairRow {
            src_id: int(f[0], "src_id")?,
            tgt_id: int(f[1], "tgt_id")?,
            margin: f[2]
                .parse()
                .map_err(|_| bad(n, format!("margin `{}` is not a number", f[2])))?,
            direction: Direction::parse(f[3])
                .ok_or_else(|| bad(n, format!("unknown direction `{}`", f[3])))?,
            src_text: f[4].to_string(),
            tgt_text: f[5].to_string(),
        });
    }
    Ok(rows)
}
