//! Deblurring a synthetic image blurred by a Kronecker Gaussian PSF with the
//! 2D first-difference regularizer. Writes the true, blurred and restored
//! images as PGM files.
//!
//! cargo run --release --example deblur_2d [side] [out_dir]

use std::fs::File;
use std::path::PathBuf;

use illposed::io::write_pgm;
use illposed::jbdqr::{jbdqr_run, JbdqrOptions, StopRule};
use illposed::problems::{ProblemConfig, ProblemKind};

fn main() -> illposed::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let side: usize = args.first().map_or(Ok(48), |s| s.parse()).expect("side");
    let out = PathBuf::from(args.get(1).cloned().unwrap_or_else(|| "deblur-out".into()));
    std::fs::create_dir_all(&out)?;

    let kind = ProblemKind::Blur { band: 8, sigma: 2.0 };
    let p = ProblemConfig::new(kind, side, 1e-2, 1).build()?;
    let r = jbdqr_run(&p, &JbdqrOptions { max_k: Some(40), rule: StopRule::OracleBest, ..Default::default() })?;
    let (k, err) = r.log.best().unwrap();
    println!("best step {k}, rel_err_L {err:.4}, {:.1} s", r.wall_time_s);

    write_pgm(File::create(out.join("true.pgm"))?, p.x_true.as_ref().unwrap(), side)?;
    write_pgm(File::create(out.join("blurred.pgm"))?, &p.b, side)?;
    write_pgm(File::create(out.join("restored.pgm"))?, &r.x, side)?;
    println!("images in {}", out.display());
    Ok(())
}
