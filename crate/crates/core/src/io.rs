//! On-disk formats: plain-text sequences, problem directories and PGM images.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linop::{DenseMatrix, LinearMap};
use crate::problems::{ProblemConfig, ProblemInstance};

/// One value per line, full precision.
pub fn write_vector<W: Write>(mut w: W, v: &[f64]) -> Result<()> {
    for x in v {
        writeln!(w, "{x:.17e}")?;
    }
    Ok(())
}

/// Reads whitespace-separated values; blank lines are ignored.
pub fn read_vector<R: BufRead>(r: R) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for line in r.lines() {
        for tok in line?.split_whitespace() {
            out.push(tok.parse().map_err(|e| Error::Parse(format!("`{tok}`: {e}")))?);
        }
    }
    Ok(out)
}

pub fn save_vector(path: &Path, v: &[f64]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_vector(&mut w, v)?;
    w.flush()?;
    Ok(())
}

pub fn load_vector(path: &Path) -> Result<Vec<f64>> {
    read_vector(BufReader::new(File::open(path)?))
}

pub fn save_matrix(path: &Path, m: &DenseMatrix) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    m.write_text(&mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_matrix(path: &Path) -> Result<DenseMatrix> {
    DenseMatrix::read_text(BufReader::new(File::open(path)?))
}

/// `meta.json` of an exported problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemMeta {
    pub name: String,
    pub n: usize,
    pub eps: f64,
    pub seed: u64,
    pub m: usize,
    pub p: usize,
    /// Generator settings; lets an import rebuild operators that were not written.
    pub config: Option<ProblemConfig>,
}

/// Writes `meta.json`, `b.txt` and, when known, `x_true.txt`, `b_true.txt` and
/// `noise.txt`. With `operators` the dense `A.txt` and `L.txt` are written too.
pub fn export_problem(problem: &ProblemInstance, dir: &Path, operators: bool) -> Result<()> {
    fs::create_dir_all(dir)?;
    let meta = ProblemMeta {
        name: problem.name().to_string(),
        n: problem.a.cols(),
        eps: problem.eps,
        seed: problem.seed,
        m: problem.a.rows(),
        p: problem.l.rows(),
        config: problem.config.clone(),
    };
    fs::write(dir.join("meta.json"), serde_json::to_string_pretty(&meta)?)?;
    save_vector(&dir.join("b.txt"), &problem.b)?;
    let optional = [
        ("x_true.txt", &problem.x_true),
        ("b_true.txt", &problem.b_true),
        ("noise.txt", &problem.noise),
    ];
    for (name, v) in optional {
        if let Some(v) = v {
            save_vector(&dir.join(name), v)?;
        }
    }
    if operators {
        save_matrix(&dir.join("A.txt"), &problem.a.to_dense())?;
        save_matrix(&dir.join("L.txt"), &problem.l.to_dense())?;
    }
    Ok(())
}

fn load_optional(path: &Path) -> Result<Option<Vec<f64>>> {
    if path.exists() {
        load_vector(path).map(Some)
    } else {
        Ok(None)
    }
}

/// Reads a directory written by [`export_problem`]. Operators come from
/// `A.txt`/`L.txt` when present and are regenerated from the metadata otherwise.
pub fn import_problem(dir: &Path) -> Result<ProblemInstance> {
    let meta: ProblemMeta = serde_json::from_str(&fs::read_to_string(dir.join("meta.json"))?)?;
    let (a, l) = if dir.join("A.txt").exists() {
        (
            LinearMap::dense(load_matrix(&dir.join("A.txt"))?)?,
            LinearMap::dense(load_matrix(&dir.join("L.txt"))?)?,
        )
    } else {
        let cfg = meta.config.as_ref().ok_or_else(|| {
            Error::Config(format!("{}: no A.txt and no generator settings", dir.display()))
        })?;
        let built = cfg.build()?;
        (built.a, built.l)
    };
    let b = load_vector(&dir.join("b.txt"))?;
    let mut problem = ProblemInstance::from_data(a, l, b)?;
    problem.config = meta.config;
    problem.eps = meta.eps;
    problem.seed = meta.seed;
    problem.x_true = load_optional(&dir.join("x_true.txt"))?;
    problem.b_true = load_optional(&dir.join("b_true.txt"))?;
    problem.noise = load_optional(&dir.join("noise.txt"))?;
    Ok(problem)
}

/// Plain (ASCII) PGM of a `side x side` image stored column by column,
/// linearly mapped from `[min, max]` to `0..=255`.
pub fn write_pgm<W: Write>(mut w: W, image: &[f64], side: usize) -> Result<()> {
    crate::error::check_len("PGM image", side * side, image.len())?;
    let lo = image.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = image.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    writeln!(w, "P2\n{side} {side}\n255")?;
    for row in 0..side {
        let line: Vec<String> = (0..side)
            .map(|col| {
                let v = (image[col * side + row] - lo) / span;
                ((v * 255.0).round().clamp(0.0, 255.0) as u8).to_string()
            })
            .collect();
        writeln!(w, "{}", line.join(" "))?;
    }
    Ok(())
}

/// Parses a plain PGM back into gray levels in row-major order.
pub fn read_pgm(text: &str) -> Result<(usize, usize, Vec<u8>)> {
    let mut toks = text
        .lines()
        .filter(|l| !l.starts_with('#'))
        .flat_map(|l| l.split_whitespace());
    if toks.next() != Some("P2") {
        return Err(Error::Parse("not a plain PGM".into()));
    }
    let mut num = || -> Result<usize> {
        toks.next()
            .ok_or_else(|| Error::Parse("truncated PGM".into()))?
            .parse()
            .map_err(|e| Error::Parse(format!("PGM: {e}")))
    };
    let (w, h, _max) = (num()?, num()?, num()?);
    let px = (0..w * h).map(|_| num().map(|v| v as u8)).collect::<Result<_>>()?;
    Ok((w, h, px))
}
