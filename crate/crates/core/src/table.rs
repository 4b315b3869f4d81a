//! Two-dimensional tables with local bicubic Lagrange interpolation.
//!
//! The first axis is uniform. The second axis is the time-like coordinate `u`
//! in `(0, 1]` with nodes `u_j = j/nu`, `j = 1..=nu`; queries below `u_1` are
//! extrapolated from the first four nodes.

use rayon::prelude::*;

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Extension {
    /// Zero outside the first axis' range.
    Zero,
    /// Constant continuation of the boundary values.
    Clamp,
}

#[derive(Debug, Clone)]
pub struct Table<const N: usize> {
    a0: f64,
    da: f64,
    na: usize,
    nu: usize,
    extension: Extension,
    values: Vec<[f64; N]>,
}

#[inline]
fn lagrange4(t: f64) -> [f64; 4] {
    let (t1, t2, t3) = (t - 1.0, t - 2.0, t - 3.0);
    [
        -t1 * t2 * t3 / 6.0,
        t * t2 * t3 * 0.5,
        -t * t1 * t3 * 0.5,
        t * t1 * t2 / 6.0,
    ]
}

#[inline]
fn stencil(pos: f64, n: usize) -> (usize, [f64; 4]) {
    let i0 = (pos.floor() as isize - 1).clamp(0, n as isize - 4) as usize;
    (i0, lagrange4(pos - i0 as f64))
}

impl<const N: usize> Table<N> {
    /// Fills every node `(i, j)` with `f(a_i, u_j)`, in parallel.
    pub fn try_from_fn(
        a0: f64,
        da: f64,
        na: usize,
        nu: usize,
        extension: Extension,
        f: impl Fn(f64, f64) -> Result<[f64; N]> + Sync,
    ) -> Result<Self> {
        assert!(na >= 4 && nu >= 4, "tables need at least four nodes per axis");
        let values = (0..na * nu)
            .into_par_iter()
            .map(|idx| {
                let (j, i) = (idx / na, idx % na);
                f(a0 + i as f64 * da, (j + 1) as f64 / nu as f64)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            a0,
            da,
            na,
            nu,
            extension,
            values,
        })
    }

    pub fn zeros(a0: f64, da: f64, na: usize, nu: usize, extension: Extension) -> Self {
        assert!(na >= 4 && nu >= 4, "tables need at least four nodes per axis");
        Self {
            a0,
            da,
            na,
            nu,
            extension,
            values: vec![[0.0; N]; na * nu],
        }
    }

    pub fn na(&self) -> usize {
        self.na
    }

    pub fn nu(&self) -> usize {
        self.nu
    }

    pub fn node_a(&self, i: usize) -> f64 {
        self.a0 + i as f64 * self.da
    }

    pub fn node_u(&self, j: usize) -> f64 {
        (j + 1) as f64 / self.nu as f64
    }

    pub fn spacing(&self) -> f64 {
        self.da
    }

    pub fn range(&self) -> (f64, f64) {
        (self.a0, self.node_a(self.na - 1))
    }

    pub fn get(&self, i: usize, j: usize) -> [f64; N] {
        self.values[j * self.na + i]
    }

    pub fn set(&mut self, i: usize, j: usize, v: [f64; N]) {
        self.values[j * self.na + i] = v;
    }

    /// Largest absolute stored value over all nodes and components.
    pub fn sup_norm(&self) -> f64 {
        self.values
            .iter()
            .flat_map(|v| v.iter())
            .fold(0.0f64, |m, x| m.max(x.abs()))
    }

    /// `self += scale · other` node by node; shapes must agree.
    pub fn add_scaled(&mut self, scale: f64, other: &Self) {
        assert_eq!(self.values.len(), other.values.len());
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            for k in 0..N {
                a[k] += scale * b[k];
            }
        }
    }

    /// Scales node values by `g(u_j)` row by row.
    pub fn scale_rows(&mut self, g: impl Fn(f64) -> f64) {
        for j in 0..self.nu {
            let s = g(self.node_u(j));
            for v in &mut self.values[j * self.na..(j + 1) * self.na] {
                for x in v.iter_mut() {
                    *x *= s;
                }
            }
        }
    }

    #[inline]
    pub fn interp(&self, a: f64, u: f64) -> [f64; N] {
        let mut pa = (a - self.a0) / self.da;
        let last = (self.na - 1) as f64;
        if !(pa >= 0.0 && pa <= last) {
            match self.extension {
                Extension::Zero => return [0.0; N],
                Extension::Clamp => pa = if pa.is_nan() { 0.0 } else { pa.clamp(0.0, last) },
            }
        }
        let pu = (u * self.nu as f64 - 1.0).min((self.nu - 1) as f64);
        let (ia, wa) = stencil(pa, self.na);
        let (iu, wu) = stencil(pu, self.nu);
        let mut out = [0.0; N];
        for (r, wr) in wu.iter().enumerate() {
            let row = (iu + r) * self.na + ia;
            let mut acc = [0.0; N];
            for (c, wc) in wa.iter().enumerate() {
                let v = &self.values[row + c];
                for k in 0..N {
                    acc[k] += wc * v[k];
                }
            }
            for k in 0..N {
                out[k] += wr * acc[k];
            }
        }
        out
    }
}
