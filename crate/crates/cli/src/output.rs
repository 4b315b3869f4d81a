//! Output files. Every file starts with a `#` line carrying the config hash and seed.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use sha2::{Digest, Sha256};

pub struct Output {
    dir: PathBuf,
    header: String,
}

pub fn config_hash(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

impl Output {
    pub fn new(dir: &Path, config_bytes: &[u8], seed: u64) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            header: format!("# config_hash={} seed={seed}\n", config_hash(config_bytes)),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Writes the header, then whatever `body` emits.
    pub fn write(&self, name: &str, body: impl FnOnce(&mut dyn Write) -> roughheat::Result<()>) -> Result<PathBuf> {
        let path = self.dir.join(name);
        let mut w = BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?);
        w.write_all(self.header.as_bytes())?;
        body(&mut w).with_context(|| format!("writing {}", path.display()))?;
        w.flush()?;
        Ok(path)
    }

    pub fn text(&self, name: &str, text: &str) -> Result<PathBuf> {
        self.write(name, |w| {
            w.write_all(text.as_bytes()).map_err(|e| roughheat::Error::Csv(e.to_string()))
        })
    }
}

/// Gnuplot script drawing `w` and `w_x` heat maps from `solution.csv`.
pub fn solution_plot() -> String {
    "set datafile separator ','
set terminal pngcairo size 1200,500
set output 'solution.png'
set multiplot layout 1,2
set xlabel 'x'
set ylabel 't'
set title 'w'
plot 'solution.csv' skip 2 using 1:2:3 with image notitle
set title 'w_x'
plot 'solution.csv' skip 2 using 1:2:4 with image notitle
unset multiplot
"
    .into()
}

pub fn mollify_plot() -> String {
    "set datafile separator ','
set terminal pngcairo size 800,500
set output 'mollify.png'
set logscale xy
set xlabel 'epsilon'
plot 'mollify.csv' skip 2 using 1:2 with linespoints title 'data L2 gap', \\
     '' skip 3 using 1:3 with linespoints title 'solution sup gap'
"
    .into()
}

pub fn l2decay_plot() -> String {
    "set datafile separator ','
set terminal pngcairo size 800,500
set output 'l2decay.png'
set logscale xy
set xlabel 'delta'
plot 'l2decay.csv' skip 3 using 1:2 with linespoints title 'W_f', \\
     '' skip 3 using 1:3 with linespoints title 'W_fx', \\
     '' skip 3 using 1:4 with linespoints title 'W_Gx'
"
    .into()
}

pub fn holder_plot() -> String {
    "set datafile separator ','
set terminal pngcairo size 800,500
set output 'holder.png'
set xlabel 'alpha'
set ylabel 'mean log2 growth per halving'
plot 'holder_fit.csv' skip 2 using 3:(strcol(1) eq 'w' && strcol(2) eq 'x' ? $4 : NaN) with linespoints title 'w, x', \\
     '' skip 2 using 3:(strcol(1) eq 'w' && strcol(2) eq 't' ? $4 : NaN) with linespoints title 'w, t', \\
     '' skip 2 using 3:(strcol(1) eq 'w_x' && strcol(2) eq 'x' ? $4 : NaN) with linespoints title 'w_x, x', \\
     '' skip 2 using 3:(strcol(1) eq 'w_x' && strcol(2) eq 't' ? $4 : NaN) with linespoints title 'w_x, t'
"
    .into()
}
