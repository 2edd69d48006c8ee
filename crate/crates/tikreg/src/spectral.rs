//! Singular value decomposition with a deterministic sign convention,
//! numerical rank, and Picard diagnostics.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// The dominant singular triplets of a system matrix.
///
/// Columns of `u` and `v` carry a fixed orientation: the largest-magnitude
/// entry of each left singular vector is positive, ties broken by the lowest
/// index. Cross-resolution comparisons of projected data depend on signs
/// being reproducible, and the backend's are not.
#[derive(Clone, Debug)]
pub struct TruncatedSvd {
    u: DMatrix<f64>,
    sigma: Vec<f64>,
    v: DMatrix<f64>,
    n: usize,
}

impl TruncatedSvd {
    /// Factor `a`, keeping the `k` (default: all) dominant triplets with
    /// positive singular values. Fails if the matrix is numerically zero.
    pub fn compute(a: &DMatrix<f64>, k: Option<usize>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::invalid("decomposition expects a square matrix"));
        }
        if a.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("matrix has non-finite entries"));
        }
        if let Some(k) = k {
            if k == 0 || k > n {
                return Err(Error::invalid(format!(
                    "requested {k} triplets of an {n} x {n} matrix"
                )));
            }
        }
        let svd = a.clone().svd(true, true);
        let sv = svd.singular_values;
        let mut u = svd.u.expect("left singular vectors requested");
        let v_t = svd.v_t.expect("right singular vectors requested");
        let mut v = v_t.transpose();

        let positive = sv.iter().take_while(|&&s| s > 0.0).count();
        if positive == 0 {
            return Err(Error::numerical(
                "matrix is numerically zero: no positive singular values",
            ));
        }
        let keep = k.map_or(positive, |k| k.min(positive));

        // Orientation pass: largest-magnitude entry of each kept u column
        // positive, first index winning ties.
        for c in 0..keep {
            let col = u.column(c);
            let mut best = 0usize;
            let mut best_abs = col[0].abs();
            for (r, &val) in col.iter().enumerate().skip(1) {
                if val.abs() > best_abs {
                    best = r;
                    best_abs = val.abs();
                }
            }
            if col[best] < 0.0 {
                u.column_mut(c).neg_mut();
                v.column_mut(c).neg_mut();
            }
        }

        Ok(TruncatedSvd {
            u: u.columns(0, keep).into_owned(),
            sigma: sv.iter().take(keep).copied().collect(),
            v: v.columns(0, keep).into_owned(),
            n,
        })
    }

    /// System size the factorization was taken from.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of retained triplets.
    pub fn k(&self) -> usize {
        self.sigma.len()
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn u(&self) -> &DMatrix<f64> {
        &self.u
    }

    pub fn v(&self) -> &DMatrix<f64> {
        &self.v
    }

    /// Project data onto the retained left singular directions.
    pub fn project(&self, b: &DVector<f64>) -> Result<SpectralSystem> {
        self.project_whitened(b, 1.0)
    }

    /// Project after dividing the system by the noise standard deviation.
    /// Scaling the matrix by 1/c scales its singular values by 1/c and leaves
    /// the singular vectors alone, so the factorization is reused as is.
    pub fn project_whitened(&self, b: &DVector<f64>, noise_sd: f64) -> Result<SpectralSystem> {
        if b.len() != self.n {
            return Err(Error::invalid(format!(
                "data length {} does not match system size {}",
                b.len(),
                self.n
            )));
        }
        if !(noise_sd > 0.0) || !noise_sd.is_finite() {
            return Err(Error::invalid(format!(
                "noise standard deviation must be positive and finite, got {noise_sd}"
            )));
        }
        let beta_vec = self.u.tr_mul(b) / noise_sd;
        let b_norm_sq = b.dot(b) / (noise_sd * noise_sd);
        Ok(SpectralSystem {
            sigma: self.sigma.iter().map(|s| s / noise_sd).collect(),
            beta: beta_vec.iter().copied().collect(),
            v: self.v.clone(),
            b_norm_sq,
            n: self.n,
            k: self.sigma.len(),
        })
    }
}

/// Spectral form of a discretized system: singular values, projected data,
/// right singular vectors, and the data norm needed by the tail identity.
#[derive(Clone, Debug)]
pub struct SpectralSystem {
    pub sigma: Vec<f64>,
    pub beta: Vec<f64>,
    pub v: DMatrix<f64>,
    pub b_norm_sq: f64,
    pub n: usize,
    pub k: usize,
}

impl SpectralSystem {
    /// Data energy beyond the first `p` retained components,
    /// ||b||^2 - sum_{i<=p} beta_i^2, clamped at zero against cancellation.
    pub fn tail_energy(&self, p: usize) -> f64 {
        let head: f64 = self.beta[..p.min(self.k)].iter().map(|b| b * b).sum();
        (self.b_norm_sq - head).max(0.0)
    }
}

/// Factor `a` and project `b` in one step, keeping `k` dominant triplets.
pub fn decompose(a: &DMatrix<f64>, b: &DVector<f64>, k: Option<usize>) -> Result<SpectralSystem> {
    TruncatedSvd::compute(a, k)?.project(b)
}

/// Numerical rank with respect to precision `epsilon`:
/// the count of singular values strictly above it.
pub fn numerical_rank(sigma: &[f64], epsilon: f64) -> Result<usize> {
    if !(epsilon > 0.0) {
        return Err(Error::invalid(format!(
            "rank precision must be positive, got {epsilon}"
        )));
    }
    if sigma.windows(2).any(|w| w[0] < w[1]) {
        return Err(Error::invalid(
            "singular values must be sorted nonincreasing",
        ));
    }
    Ok(sigma.iter().take_while(|&&s| s > epsilon).count())
}

/// Worst-case bound on the distance between computed and limiting singular
/// vectors, sqrt(2 delta / gap), given the approximation defect `delta`
/// (the square root of the norm diagnostic) and the spectral gap to the next
/// singular value estimated from a finer-scale proxy. None when the gap is
/// not positive, where no vector convergence claim holds.
pub fn singular_vector_gap_bound(delta: f64, mu_i: f64, mu_next: f64) -> Option<f64> {
    let gap = mu_i - mu_next;
    if gap > 0.0 && delta >= 0.0 {
        Some((2.0 * delta / gap).sqrt())
    } else {
        None
    }
}

/// One row of the Picard diagnostic table.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PicardRow {
    /// 1-based component index.
    pub index: usize,
    pub sigma: f64,
    pub abs_beta: f64,
    /// |beta_i| / sigma_i, the solution coefficient magnitude.
    pub ratio: f64,
}

/// Per-component magnitudes used to inspect the discrete Picard condition:
/// once |beta_i| stops decaying faster than sigma_i the ratios blow up and
/// those components are noise.
pub fn picard_table(sys: &SpectralSystem) -> Vec<PicardRow> {
    sys.sigma
        .iter()
        .zip(&sys.beta)
        .enumerate()
        .map(|(i, (&sigma, &beta))| PicardRow {
            index: i + 1,
            sigma,
            abs_beta: beta.abs(),
            ratio: beta.abs() / sigma,
        })
        .collect()
}
