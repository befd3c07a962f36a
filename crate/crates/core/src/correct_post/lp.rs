//! Two exact solvers for small dense LPs of the form `min c.x  s.t.  A x <= b, 0 <= x <= 1`.
//!
//! [`vertex_enumeration`] visits every basic solution (intersection of `n` constraint
//! hyperplanes) and keeps the best feasible one; it is exhaustive and used for the
//! two-group problem with four variables. [`simplex`] is a dense tableau simplex with
//! Bland's rule, used when there are more variables. It requires `b >= 0` so the origin is a
//! feasible starting vertex, which holds for rate-equality constraints.

/// Feasibility slack when testing candidate vertices.
pub const FEAS_TOL: f64 = 1e-9;
const PIVOT_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Lp {
    pub objective: Vec<f64>,
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
}

impl Lp {
    pub fn n(&self) -> usize {
        self.objective.len()
    }

    /// Inequality rows including the unit box.
    fn with_box(&self) -> (Vec<Vec<f64>>, Vec<f64>) {
        let n = self.n();
        let mut a = self.a.clone();
        let mut b = self.b.clone();
        for j in 0..n {
            let mut lo = vec![0.0; n];
            lo[j] = -1.0;
            a.push(lo);
            b.push(0.0);
            let mut hi = vec![0.0; n];
            hi[j] = 1.0;
            a.push(hi);
            b.push(1.0);
        }
        (a, b)
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    pub fn is_feasible(&self, x: &[f64], slack: f64) -> bool {
        x.iter().all(|&v| v >= -slack && v <= 1.0 + slack)
            && self
                .a
                .iter()
                .zip(&self.b)
                .all(|(row, &bi)| dot(row, x) <= bi + slack)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solve the square system by Gaussian elimination with partial pivoting.
fn solve_square(mut m: Vec<Vec<f64>>, mut rhs: Vec<f64>) -> Option<Vec<f64>> {
    let n = rhs.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))?;
        if m[piv][col].abs() < PIVOT_EPS {
            return None;
        }
        m.swap(col, piv);
        rhs.swap(col, piv);
        for r in col + 1..n {
            let f = m[r][col] / m[col][col];
            if f != 0.0 {
                for c in col..n {
                    m[r][c] -= f * m[col][c];
                }
                rhs[r] -= f * rhs[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| m[r][c] * x[c]).sum();
        x[r] = (rhs[r] - s) / m[r][r];
    }
    Some(x)
}

fn next_combination(idx: &mut [usize], m: usize) -> bool {
    let k = idx.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if idx[i] < m - k + i {
            idx[i] += 1;
            for j in i + 1..k {
                idx[j] = idx[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Every feasible vertex of the polytope (duplicates possible at degenerate points).
pub fn vertices(lp: &Lp) -> Vec<Vec<f64>> {
    let n = lp.n();
    let (a, b) = lp.with_box();
    let m = a.len();
    let mut out = Vec::new();
    if n == 0 || m < n {
        return out;
    }
    let mut idx: Vec<usize> = (0..n).collect();
    loop {
        let sys = idx.iter().map(|&i| a[i].clone()).collect();
        let rhs = idx.iter().map(|&i| b[i]).collect();
        if let Some(x) = solve_square(sys, rhs) {
            if lp.is_feasible(&x, FEAS_TOL) {
                out.push(x.into_iter().map(|v| v.clamp(0.0, 1.0)).collect());
            }
        }
        if !next_combination(&mut idx, m) {
            break;
        }
    }
    out
}

/// Best vertex. Among vertices tied with the optimum (within `1e-12`), the one nearest
/// `prefer` in L1 distance wins, so a preferred point that is optimal is returned exactly.
pub fn vertex_enumeration(lp: &Lp, prefer: &[f64]) -> Option<Vec<f64>> {
    let vs = vertices(lp);
    let best = vs.iter().map(|x| lp.value(x)).reduce(f64::min)?;
    let dist = |x: &[f64]| x.iter().zip(prefer).map(|(a, b)| (a - b).abs()).sum::<f64>();
    vs.into_iter()
        .filter(|x| lp.value(x) <= best + 1e-12)
        .min_by(|x, y| dist(x).total_cmp(&dist(y)))
}

/// Dense tableau simplex with Bland's rule. Returns `None` when `b` has a negative entry
/// (origin infeasible); the box keeps the problem bounded.
pub fn simplex(lp: &Lp) -> Option<Vec<f64>> {
    let n = lp.n();
    let (a, b) = {
        let mut a = lp.a.clone();
        let mut b = lp.b.clone();
        for j in 0..n {
            let mut hi = vec![0.0; n];
            hi[j] = 1.0;
            a.push(hi);
            b.push(1.0);
        }
        (a, b)
    };
    if b.iter().any(|&v| v < 0.0) {
        return None;
    }
    let m = a.len();
    let width = n + m + 1;
    // rows 0..m constraints, row m the reduced costs; last column the rhs
    let mut t = vec![vec![0.0; width]; m + 1];
    for i in 0..m {
        t[i][..n].copy_from_slice(&a[i]);
        t[i][n + i] = 1.0;
        t[i][width - 1] = b[i];
    }
    t[m][..n].copy_from_slice(&lp.objective);
    let mut basis: Vec<usize> = (n..n + m).collect();

    loop {
        // Bland: lowest-index column with negative reduced cost
        let Some(col) = (0..n + m).find(|&j| t[m][j] < -PIVOT_EPS) else {
            break;
        };
        let mut row: Option<(usize, f64)> = None;
        for i in 0..m {
            if t[i][col] > PIVOT_EPS {
                let ratio = t[i][width - 1] / t[i][col];
                let better = match row {
                    None => true,
                    Some((r, best)) => {
                        ratio < best - PIVOT_EPS
                            || (ratio <= best + PIVOT_EPS && basis[i] < basis[r])
                    }
                };
                if better {
                    row = Some((i, ratio));
                }
            }
        }
        let (r, _) = row?;
        let p = t[r][col];
        for v in t[r].iter_mut() {
            *v /= p;
        }
        let pivot_row = t[r].clone();
        for (i, trow) in t.iter_mut().enumerate() {
            if i != r {
                let f = trow[col];
                if f != 0.0 {
                    for (v, pv) in trow.iter_mut().zip(&pivot_row) {
                        *v -= f * pv;
                    }
                }
            }
        }
        basis[r] = col;
    }
    let mut x = vec![0.0; n];
    for (i, &bv) in basis.iter().enumerate() {
        if bv < n {
            x[bv] = t[i][width - 1].clamp(0.0, 1.0);
        }
    }
    Some(x)
}
