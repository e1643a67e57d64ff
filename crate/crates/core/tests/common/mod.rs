//! Self-contained numerical oracles for the integration suites. None of
//! this shares code with the library's linear-algebra path: eigenvalues
//! come from a cyclic Jacobi sweep, linear systems from Gauss-Jordan
//! elimination with partial pivoting.

#![allow(dead_code)]
// index loops read better than iterator chains for this matrix math
#![allow(clippy::needless_range_loop)]

pub type Mat = Vec<Vec<f64>>;

pub fn identity(n: usize) -> Mat {
    (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect()
}

pub fn matmul(a: &Mat, b: &Mat) -> Mat {
    let n = a.len();
    let m = b[0].len();
    let inner = b.len();
    let mut out = vec![vec![0.0; m]; n];
    for i in 0..n {
        for k in 0..inner {
            let aik = a[i][k];
            if aik != 0.0 {
                for j in 0..m {
                    out[i][j] += aik * b[k][j];
                }
            }
        }
    }
    out
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns (eigenvalues, eigenvector columns), unsorted.
pub fn jacobi_eigen(mut a: Mat) -> (Vec<f64>, Mat) {
    let n = a.len();
    let mut v = identity(n);
    for _sweep in 0..200 {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[p][q] * a[p][q];
            }
        }
        if off <= 1e-300 {
            break;
        }
        for p in 0..n.saturating_sub(1) {
            for q in (p + 1)..n {
                if a[p][q].abs() <= 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[k][p];
                    let vkq = v[k][q];
                    v[k][p] = c * vkp - s * vkq;
                    v[k][q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let values = (0..n).map(|i| a[i][i]).collect();
    (values, v)
}

/// Solves `a x = b` by Gauss-Jordan elimination with partial pivoting.
pub fn gauss_solve(mut a: Mat, mut b: Vec<f64>) -> Vec<f64> {
    let n = a.len();
    for col in 0..n {
        let mut pivot = col;
        for row in (col + 1)..n {
            if a[row][col].abs() > a[pivot][col].abs() {
                pivot = row;
            }
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        let diag = a[col][col];
        assert!(diag != 0.0, "singular system in oracle");
        for j in col..n {
            a[col][j] /= diag;
        }
        b[col] /= diag;
        for row in 0..n {
            if row != col && a[row][col] != 0.0 {
                let factor = a[row][col];
                for j in col..n {
                    a[row][j] -= factor * a[col][j];
                }
                b[row] -= factor * b[col];
            }
        }
    }
    b
}

/// A labeled sample set with every class present.
pub struct Instance {
    pub samples: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub k: usize,
    pub b: usize,
}

pub struct InstanceScatters {
    pub means: Mat,
    pub grand: Vec<f64>,
    pub counts: Vec<usize>,
    pub sw: Mat,
    pub sb: Mat,
}

/// Raw pooled within-class scatter and count-weighted between-class
/// scatter, recomputed with plain vector arithmetic.
pub fn scatters(inst: &Instance) -> InstanceScatters {
    let n = inst.samples.len();
    let b = inst.b;
    let k = inst.k;
    let mut counts = vec![0usize; k];
    let mut means = vec![vec![0.0; b]; k];
    for (row, &c) in inst.labels.iter().enumerate() {
        counts[c] += 1;
        for j in 0..b {
            means[c][j] += inst.samples[row][j];
        }
    }
    for c in 0..k {
        for j in 0..b {
            means[c][j] /= counts[c] as f64;
        }
    }
    let mut grand = vec![0.0; b];
    for row in &inst.samples {
        for j in 0..b {
            grand[j] += row[j];
        }
    }
    for g in grand.iter_mut() {
        *g /= n as f64;
    }
    let mut sw = vec![vec![0.0; b]; b];
    for (row, &c) in inst.labels.iter().enumerate() {
        for i in 0..b {
            let di = inst.samples[row][i] - means[c][i];
            for j in 0..b {
                sw[i][j] += di * (inst.samples[row][j] - means[c][j]);
            }
        }
    }
    let mut sb = vec![vec![0.0; b]; b];
    for c in 0..k {
        for i in 0..b {
            let di = means[c][i] - grand[i];
            for j in 0..b {
                sb[i][j] += counts[c] as f64 * di * (means[c][j] - grand[j]);
            }
        }
    }
    InstanceScatters {
        means,
        grand,
        counts,
        sw,
        sb,
    }
}

pub fn regularized(sw: &Mat, gamma: f64) -> Mat {
    let b = sw.len();
    let trace: f64 = (0..b).map(|i| sw[i][i]).sum();
    let scale = if trace > 0.0 { trace / b as f64 } else { 1.0 };
    let mut out = sw.clone();
    for i in 0..b {
        out[i][i] += gamma * scale;
    }
    out
}

/// Generalized eigenvalues of `sb w = lambda s~ w`, computed through the
/// symmetric inverse square root of the regularized scatter (a different
/// whitening route than the library's Cholesky), sorted descending.
pub fn oracle_eigenvalues(inst: &Instance, gamma: f64) -> Vec<f64> {
    let sc = scatters(inst);
    let sreg = regularized(&sc.sw, gamma);
    let (d, u) = jacobi_eigen(sreg);
    let b = inst.b;
    // S^{-1/2} = U diag(1/sqrt(d)) U^T
    let mut inv_half = vec![vec![0.0; b]; b];
    for i in 0..b {
        for j in 0..b {
            let mut acc = 0.0;
            for (l, dl) in d.iter().enumerate() {
                acc += u[i][l] * u[j][l] / dl.sqrt();
            }
            inv_half[i][j] = acc;
        }
    }
    let m = matmul(&matmul(&inv_half, &sc.sb), &inv_half);
    let (mut values, _) = jacobi_eigen(m);
    values.sort_by(|a, b| b.partial_cmp(a).unwrap());
    values
}

/// Independent Gaussian discriminant: one explicit linear solve per
/// class and evaluation point, no factorization reuse. Returns the
/// argmax class index with ties resolved to the earlier class.
pub fn oracle_classify(
    inst: &Instance,
    gamma: f64,
    priors: &[f64],
    x: &[f64],
) -> usize {
    let sc = scatters(inst);
    let sreg = regularized(&sc.sw, gamma);
    let n = inst.samples.len();
    let denom = if n > inst.k {
        (n - inst.k) as f64
    } else {
        n as f64
    };
    let b = inst.b;
    let sigma: Mat = sreg
        .iter()
        .map(|row| row.iter().map(|v| v / denom).collect())
        .collect();
    let mut best = 0usize;
    let mut best_score = f64::NEG_INFINITY;
    for (c, mu) in sc.means.iter().enumerate() {
        let a = gauss_solve(sigma.clone(), mu.clone());
        let mut score = priors[c].ln();
        for j in 0..b {
            score += a[j] * x[j];
        }
        let mut quad = 0.0;
        for j in 0..b {
            quad += a[j] * mu[j];
        }
        score -= 0.5 * quad;
        if score > best_score {
            best_score = score;
            best = c;
        }
    }
    best
}
