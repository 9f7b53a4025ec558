//! Sparse symmetric systems and a Jacobi-preconditioned conjugate gradient.

/// Accumulates weighted residual rows `w·(Σ aᵢ xᵢ − b)²` into the normal
/// equations `A x = rhs`.
#[derive(Debug, Clone)]
pub struct LeastSquaresBuilder {
    n: usize,
    triplets: Vec<(u32, u32, f64)>,
    rhs: Vec<f64>,
    constant: f64,
}

impl LeastSquaresBuilder {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            triplets: Vec::new(),
            rhs: vec![0.0; n],
            constant: 0.0,
        }
    }

    pub fn add_row(&mut self, coeffs: &[(usize, f64)], b: f64, weight: f64) {
        if weight == 0.0 {
            return;
        }
        for &(i, ai) in coeffs {
            for &(j, aj) in coeffs {
                self.triplets.push((i as u32, j as u32, weight * ai * aj));
            }
            self.rhs[i] += weight * ai * b;
        }
        self.constant += weight * b * b;
    }

    pub fn build(mut self) -> NormalEquations {
        self.triplets.sort_unstable_by_key(|&(i, j, _)| (i, j));
        let mut row_ptr = vec![0usize; self.n + 1];
        let mut cols = Vec::with_capacity(self.triplets.len() / 2);
        let mut vals: Vec<f64> = Vec::with_capacity(self.triplets.len() / 2);
        let mut last: Option<(u32, u32)> = None;
        for (i, j, v) in self.triplets {
            if last == Some((i, j)) {
                *vals.last_mut().unwrap() += v;
            } else {
                cols.push(j);
                vals.push(v);
                row_ptr[i as usize + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..self.n {
            row_ptr[i + 1] += row_ptr[i];
        }
        let mut diag = vec![0.0; self.n];
        for (i, d) in diag.iter_mut().enumerate() {
            for k in row_ptr[i]..row_ptr[i + 1] {
                if cols[k] as usize == i {
                    *d = vals[k];
                }
            }
        }
        NormalEquations {
            matrix: CsrMatrix {
                n: self.n,
                row_ptr,
                cols,
                vals,
                diag,
            },
            rhs: self.rhs,
            constant: self.constant,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<f64>,
    diag: Vec<f64>,
}

impl CsrMatrix {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn mul_into(&self, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            let mut s = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.vals[k] * x[self.cols[k] as usize];
            }
            *o = s;
        }
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        self.mul_into(x, &mut out);
        out
    }
}

/// `E(x) = xᵀ A x − 2 rhsᵀ x + constant`, the expanded sum of squared rows.
#[derive(Debug, Clone)]
pub struct NormalEquations {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    pub constant: f64,
}

impl NormalEquations {
    pub fn energy(&self, x: &[f64]) -> f64 {
        let ax = self.matrix.mul(x);
        let quad: f64 = x.iter().zip(&ax).map(|(a, b)| a * b).sum();
        let lin: f64 = x.iter().zip(&self.rhs).map(|(a, b)| a * b).sum();
        (quad - 2.0 * lin + self.constant).max(0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CgOutcome {
    pub iterations: usize,
    /// Final `‖rhs − A x‖ / ‖rhs‖`, recomputed from scratch.
    pub relative_residual: f64,
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn true_residual(a: &CsrMatrix, b: &[f64], x: &[f64], r: &mut [f64]) {
    a.mul_into(x, r);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
}

/// Preconditioned CG from the initial guess in `x`. Convergence is declared
/// only when the recomputed residual meets `tol`; a drifted recurrence
/// restarts from the true residual.
pub fn conjugate_gradient(
    a: &CsrMatrix,
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    max_iters: usize,
) -> CgOutcome {
    let n = a.dim();
    let b_norm = dot(b, b).sqrt();
    if b_norm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return CgOutcome {
            iterations: 0,
            relative_residual: 0.0,
            converged: true,
        };
    }
    let inv_diag: Vec<f64> = a
        .diag()
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 })
        .collect();
    let mut r = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut ap = vec![0.0; n];
    let mut iterations = 0;
    let mut stalled = false;

    loop {
        true_residual(a, b, x, &mut r);
        let rel = dot(&r, &r).sqrt() / b_norm;
        if rel <= tol || iterations >= max_iters || stalled {
            return CgOutcome {
                iterations,
                relative_residual: rel,
                converged: rel <= tol,
            };
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        p.copy_from_slice(&z);
        let mut rz = dot(&r, &z);
        while iterations < max_iters {
            a.mul_into(&p, &mut ap);
            let pap = dot(&p, &ap);
            if !(pap > 0.0) {
                stalled = true;
                break;
            }
            let alpha = rz / pap;
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            iterations += 1;
            if dot(&r, &r).sqrt() / b_norm <= tol {
                break;
            }
            for i in 0..n {
                z[i] = r[i] * inv_diag[i];
            }
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
        }
    }
}
