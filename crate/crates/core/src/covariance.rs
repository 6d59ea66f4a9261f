//! Recursive per-bin noisy CPSDM estimation and loaded Hermitian solves.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::{Error, Result, C64};

/// Smoothing constant giving a 96 ms time constant at a 16 ms hop.
pub const DEFAULT_SMOOTHING: f64 = 0.8465;
/// Initial diagonal of every bin matrix.
pub const DEFAULT_INIT_DELTA: f64 = 1e-6;
/// Diagonal loading relative to `trace / M`, applied only inside solves.
pub const DEFAULT_LOADING: f64 = 1e-6;

/// Per-bin `M x M` Hermitian matrices with the state of the recursion
/// `C <- a C + (1 - a) y y^H`.
#[derive(Debug, Clone, PartialEq)]
pub struct Cpsdm {
    num_bins: usize,
    num_mics: usize,
    smoothing: f64,
    frames_seen: usize,
    matrices: Vec<C64>,
}

impl Cpsdm {
    pub fn new(num_bins: usize, num_mics: usize, smoothing: f64) -> Result<Self> {
        Self::with_initial_delta(num_bins, num_mics, smoothing, DEFAULT_INIT_DELTA)
    }

    pub fn with_initial_delta(
        num_bins: usize,
        num_mics: usize,
        smoothing: f64,
        delta: f64,
    ) -> Result<Self> {
        if num_mics == 0 || num_bins == 0 {
            return Err(Error::invalid("empty CPSDM dimensions"));
        }
        if !(0.0..=1.0).contains(&smoothing) {
            return Err(Error::invalid(format!("smoothing {smoothing} outside [0, 1]")));
        }
        if delta < 0.0 {
            return Err(Error::invalid("initial diagonal must be non-negative"));
        }
        let mut matrices = vec![C64::new(0.0, 0.0); num_bins * num_mics * num_mics];
        for k in 0..num_bins {
            for m in 0..num_mics {
                matrices[k * num_mics * num_mics + m * num_mics + m] = C64::new(delta, 0.0);
            }
        }
        Ok(Cpsdm {
            num_bins,
            num_mics,
            smoothing,
            frames_seen: 0,
            matrices,
        })
    }

    pub fn num_bins(&self) -> usize {
        self.num_bins
    }

    pub fn num_mics(&self) -> usize {
        self.num_mics
    }

    pub fn smoothing(&self) -> f64 {
        self.smoothing
    }

    pub fn frames_seen(&self) -> usize {
        self.frames_seen
    }

    /// Row-major `M x M` matrix of bin `k`.
    pub fn matrix(&self, k: usize) -> &[C64] {
        let mm = self.num_mics * self.num_mics;
        &self.matrices[k * mm..(k + 1) * mm]
    }

    /// Frames before the recursion has settled: `ceil(3 / (1 - a))`.
    pub fn warmup_frames(smoothing: f64) -> usize {
        if smoothing >= 1.0 {
            usize::MAX
        } else {
            (3.0 / (1.0 - smoothing)).ceil() as usize
        }
    }

    /// One recursion step. `frame` is laid out `(bin, mic)`.
    pub fn update(&mut self, frame: &[C64]) -> Result<()> {
        let m = self.num_mics;
        if frame.len() != self.num_bins * m {
            return Err(Error::invalid(format!(
                "frame has {} values, expected {} bins x {} mics",
                frame.len(),
                self.num_bins,
                m
            )));
        }
        let a = self.smoothing;
        let b = 1.0 - a;
        for (k, y) in frame.chunks_exact(m).enumerate() {
            let c = &mut self.matrices[k * m * m..(k + 1) * m * m];
            // Upper triangle, mirrored: the result is Hermitian by construction.
            for i in 0..m {
                let d = a * c[i * m + i].re + b * y[i].norm_sqr();
                c[i * m + i] = C64::new(d, 0.0);
                for j in i + 1..m {
                    let v = c[i * m + j] * a + y[i] * y[j].conj() * b;
                    c[i * m + j] = v;
                    c[j * m + i] = v.conj();
                }
            }
        }
        self.frames_seen += 1;
        Ok(())
    }
}

/// Cholesky factor of `C + loading * tr(C)/M * I`.
pub struct HermitianFactor {
    chol: Cholesky<C64, Dyn>,
}

impl HermitianFactor {
    pub fn new(c: &[C64], m: usize, loading: f64) -> Result<Self> {
        if c.len() != m * m || m == 0 {
            return Err(Error::invalid("matrix is not square"));
        }
        if loading < 0.0 || !loading.is_finite() {
            return Err(Error::invalid("loading must be finite and non-negative"));
        }
        let trace: f64 = (0..m).map(|i| c[i * m + i].re).sum();
        let load = loading * trace / m as f64;
        let mat = DMatrix::from_fn(m, m, |i, j| {
            if i == j {
                C64::new(c[i * m + i].re + load, 0.0)
            } else {
                // Average with the mirrored entry so only the Hermitian part
                // is factored.
                (c[i * m + j] + c[j * m + i].conj()) * 0.5
            }
        });
        let chol = Cholesky::new(mat).ok_or(Error::SingularMatrix)?;
        if chol.l_dirty().diagonal().iter().any(|d| !(d.re > 0.0) || !d.re.is_finite()) {
            return Err(Error::SingularMatrix);
        }
        Ok(HermitianFactor { chol })
    }

    pub fn solve(&self, b: &[C64]) -> Result<Vec<C64>> {
        let m = self.chol.l_dirty().nrows();
        if b.len() != m {
            return Err(Error::invalid(format!("rhs has {} entries, expected {m}", b.len())));
        }
        let x = self.chol.solve(&DVector::from_column_slice(b));
        Ok(x.iter().copied().collect())
    }
}

/// Solves `(C + loading * tr(C)/M * I) x = b` for Hermitian `C` (row-major).
pub fn solve_hermitian(c: &[C64], b: &[C64], loading: f64) -> Result<Vec<C64>> {
    let m = b.len();
    HermitianFactor::new(c, m, loading)?.solve(b)
}
