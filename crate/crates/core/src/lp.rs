//! Revised simplex for `min c'x  s.t.  Ax = b, x >= 0`.
//!
//! The basis inverse is kept explicitly (dense, column-major) and updated with
//! rank-one pivots; it is rebuilt by blocked Gauss-Jordan elimination whenever
//! the residual `|B x_B - b|` drifts. Pricing is Dantzig's rule with a switch to
//! Bland's rule after a run of degenerate pivots, which rules out cycling.

use std::io::Write;
use std::time::{Duration, Instant};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Tolerances {
    /// Primal feasibility and residual tolerance.
    pub feasibility: f64,
    /// Reduced-cost threshold for optimality.
    pub optimality: f64,
    /// Smallest acceptable pivot element.
    pub pivot: f64,
    pub max_iterations: usize,
    pub time_limit: Option<Duration>,
    /// Bytes the dense basis inverse and its workspace may occupy.
    pub memory_budget: u64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            feasibility: 1e-8,
            optimality: 1e-9,
            pivot: 1e-10,
            max_iterations: 1_000_000,
            time_limit: None,
            memory_budget: 12 << 30,
        }
    }
}

/// Peak bytes of the dense basis inverse plus the factorization workspace.
pub fn dense_memory_bytes(rows: usize) -> u64 {
    24 * (rows as u64).pow(2)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
    TimeLimit,
}

#[derive(Clone, Debug)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Objective of the final basis (the best bound found when not optimal).
    pub objective: f64,
    /// Value of every structural column.
    pub x: Vec<f64>,
    /// Row duals `y = c_B' B^{-1}`.
    pub duals: Vec<f64>,
    /// Basic variable per row; ids `>= cols` denote artificials.
    pub basis: Vec<usize>,
    pub iterations: usize,
    pub refactorizations: usize,
    pub elapsed: Duration,
}

/// Column-wise access to an equality-form LP.
pub trait ColumnSource {
    fn num_rows(&self) -> usize;
    fn num_cols(&self) -> usize;
    fn cost(&self, j: usize) -> f64;
    fn rhs(&self) -> Vec<f64>;
    /// Writes the nonzeros of column `j` as `(row, value)` pairs.
    fn column(&self, j: usize, out: &mut Vec<(usize, f64)>);

    /// `out[j] = c_j - y' A_j` for every column.
    fn reduced_costs(&self, y: &[f64], out: &mut [f64]) {
        let mut col = Vec::new();
        for (j, o) in out.iter_mut().enumerate() {
            col.clear();
            self.column(j, &mut col);
            *o = self.cost(j) - col.iter().map(|&(i, v)| y[i] * v).sum::<f64>();
        }
    }
}

/// Explicit sparse LP in compressed-column form.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseLp {
    pub costs: Vec<f64>,
    pub rhs: Vec<f64>,
    pub col_starts: Vec<usize>,
    pub row_indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl SparseLp {
    /// Builds an LP from dense rows, mainly for tests and small models.
    pub fn from_dense(a: &[Vec<f64>], b: &[f64], c: &[f64]) -> Result<Self> {
        if a.len() != b.len() || a.iter().any(|r| r.len() != c.len()) {
            return Err(Error::Contract("inconsistent LP dimensions".into()));
        }
        let mut lp =
            SparseLp { costs: c.to_vec(), rhs: b.to_vec(), col_starts: vec![0], row_indices: vec![], values: vec![] };
        for j in 0..c.len() {
            for (i, row) in a.iter().enumerate() {
                if row[j] != 0.0 {
                    lp.row_indices.push(i);
                    lp.values.push(row[j]);
                }
            }
            lp.col_starts.push(lp.row_indices.len());
        }
        Ok(lp)
    }

    pub fn from_source(src: &impl ColumnSource) -> Self {
        let mut lp = SparseLp {
            costs: (0..src.num_cols()).map(|j| src.cost(j)).collect(),
            rhs: src.rhs(),
            col_starts: vec![0],
            row_indices: vec![],
            values: vec![],
        };
        let mut col = Vec::new();
        for j in 0..src.num_cols() {
            col.clear();
            src.column(j, &mut col);
            col.sort_by_key(|e| e.0);
            for &(i, v) in &col {
                lp.row_indices.push(i);
                lp.values.push(v);
            }
            lp.col_starts.push(lp.row_indices.len());
        }
        lp
    }

    /// Writes the LP in free-format MPS.
    pub fn write_mps(&self, name: &str, mut out: impl Write) -> Result<()> {
        writeln!(out, "NAME {name}")?;
        writeln!(out, "ROWS")?;
        writeln!(out, " N COST")?;
        for i in 0..self.rhs.len() {
            writeln!(out, " E R{i}")?;
        }
        writeln!(out, "COLUMNS")?;
        for j in 0..self.costs.len() {
            if self.costs[j] != 0.0 {
                writeln!(out, " X{j} COST {:e}", self.costs[j])?;
            }
            for k in self.col_starts[j]..self.col_starts[j + 1] {
                writeln!(out, " X{j} R{} {:e}", self.row_indices[k], self.values[k])?;
            }
        }
        writeln!(out, "RHS")?;
        for (i, &b) in self.rhs.iter().enumerate() {
            if b != 0.0 {
                writeln!(out, " RHS R{i} {b:e}")?;
            }
        }
        writeln!(out, "ENDATA")?;
        Ok(())
    }
}

impl ColumnSource for SparseLp {
    fn num_rows(&self) -> usize {
        self.rhs.len()
    }
    fn num_cols(&self) -> usize {
        self.costs.len()
    }
    fn cost(&self, j: usize) -> f64 {
        self.costs[j]
    }
    fn rhs(&self) -> Vec<f64> {
        self.rhs.clone()
    }
    fn column(&self, j: usize, out: &mut Vec<(usize, f64)>) {
        for k in self.col_starts[j]..self.col_starts[j + 1] {
            out.push((self.row_indices[k], self.values[k]));
        }
    }
}

/// Dense inverse of the basis in column-major order.
struct Inverse {
    m: usize,
    data: Vec<f64>,
}

impl Inverse {
    #[inline]
    fn col(&self, c: usize) -> &[f64] {
        &self.data[c * self.m..(c + 1) * self.m]
    }

    /// `B^{-1} v` for sparse `v`.
    fn ftran(&self, v: &[(usize, f64)], out: &mut [f64]) {
        out.fill(0.0);
        for &(r, a) in v {
            for (o, b) in out.iter_mut().zip(self.col(r)) {
                *o += a * b;
            }
        }
    }

    /// Blocked Gauss-Jordan inversion with partial pivoting; `cols` are the
    /// basis columns.
    ///
    /// Works on `[B | I]` row-major. Pivot rows for a panel of columns are
    /// chosen by an LU sweep over the panel, then the panel is applied to the
    /// trailing columns with two matrix products.
    fn factor(m: usize, cols: &[Vec<(usize, f64)>], pivot_tol: f64) -> Result<Inverse> {
        const NB: usize = 64;
        let w = 2 * m;
        let mut x = vec![0.0; m * w];
        for (c, col) in cols.iter().enumerate() {
            for &(r, v) in col {
                x[r * w + c] += v;
            }
        }
        for i in 0..m {
            x[i * w + m + i] = 1.0;
        }
        let mut c0 = 0;
        while c0 < m {
            let c1 = (c0 + NB).min(m);
            let bs = c1 - c0;
            // Panel copy of rows c0.., columns c0..c1.
            let rows = m - c0;
            let mut pan = vec![0.0; rows * bs];
            for r in 0..rows {
                pan[r * bs..(r + 1) * bs].copy_from_slice(&x[(c0 + r) * w + c0..(c0 + r) * w + c1]);
            }
            for t in 0..bs {
                let (mut p, mut best) = (t, 0.0);
                for r in t..rows {
                    let v = pan[r * bs + t].abs();
                    if v > best {
                        best = v;
                        p = r;
                    }
                }
                if best < pivot_tol {
                    return Err(Error::Numerical(format!("singular basis at column {}", c0 + t)));
                }
                if p != t {
                    for c in 0..bs {
                        pan.swap(p * bs + c, t * bs + c);
                    }
                    let (lo, hi) = x.split_at_mut((c0 + p) * w);
                    lo[(c0 + t) * w..(c0 + t + 1) * w].swap_with_slice(&mut hi[..w]);
                }
                let piv = pan[t * bs + t];
                let (top, below) = pan.split_at_mut((t + 1) * bs);
                let prow = &top[t * bs + t + 1..(t + 1) * bs];
                for row in below.chunks_exact_mut(bs) {
                    let f = row[t] / piv;
                    if f != 0.0 {
                        for (v, &pv) in row[t + 1..].iter_mut().zip(prow) {
                            *v -= f * pv;
                        }
                    }
                }
            }
            // T = inverse of the pivot block, by unpivoted Gauss-Jordan.
            let mut a = vec![0.0; bs * bs];
            let mut t_inv = vec![0.0; bs * bs];
            for r in 0..bs {
                a[r * bs..(r + 1) * bs].copy_from_slice(&x[(c0 + r) * w + c0..(c0 + r) * w + c1]);
                t_inv[r * bs + r] = 1.0;
            }
            for k in 0..bs {
                let d = 1.0 / a[k * bs + k];
                for c in 0..bs {
                    a[k * bs + c] *= d;
                    t_inv[k * bs + c] *= d;
                }
                for r in 0..bs {
                    let f = a[r * bs + k];
                    if r == k || f == 0.0 {
                        continue;
                    }
                    for c in 0..bs {
                        a[r * bs + c] -= f * a[k * bs + c];
                        t_inv[r * bs + c] -= f * t_inv[k * bs + c];
                    }
                }
            }
            // R = T X[c0..c1, c1..]; X[other, c1..] -= X[other, c0..c1] R.
            let width = w - c1;
            let mut r_blk = vec![0.0; bs * width];
            let mut l_other = vec![0.0; (m - bs) * bs];
            for (k, r) in (0..c0).chain(c1..m).enumerate() {
                l_other[k * bs..(k + 1) * bs].copy_from_slice(&x[r * w + c0..r * w + c1]);
            }
            // SAFETY: all pointers address live buffers with the given
            // dimensions and strides; the output never aliases the inputs.
            unsafe {
                matrixmultiply::dgemm(
                    bs,
                    bs,
                    width,
                    1.0,
                    t_inv.as_ptr(),
                    bs as isize,
                    1,
                    x.as_ptr().add(c0 * w + c1),
                    w as isize,
                    1,
                    0.0,
                    r_blk.as_mut_ptr(),
                    width as isize,
                    1,
                );
                if c0 > 0 {
                    matrixmultiply::dgemm(
                        c0,
                        bs,
                        width,
                        -1.0,
                        l_other.as_ptr(),
                        bs as isize,
                        1,
                        r_blk.as_ptr(),
                        width as isize,
                        1,
                        1.0,
                        x.as_mut_ptr().add(c1),
                        w as isize,
                        1,
                    );
                }
                if c1 < m {
                    matrixmultiply::dgemm(
                        m - c1,
                        bs,
                        width,
                        -1.0,
                        l_other.as_ptr().add(c0 * bs),
                        bs as isize,
                        1,
                        r_blk.as_ptr(),
                        width as isize,
                        1,
                        1.0,
                        x.as_mut_ptr().add(c1 * w + c1),
                        w as isize,
                        1,
                    );
                }
            }
            for r in 0..bs {
                x[(c0 + r) * w + c1..(c0 + r + 1) * w].copy_from_slice(&r_blk[r * width..(r + 1) * width]);
            }
            c0 = c1;
        }
        let mut data = vec![0.0; m * m];
        for r in 0..m {
            for c in 0..m {
                data[c * m + r] = x[r * w + m + c];
            }
        }
        Ok(Inverse { m, data })
    }

    /// Replaces the basic variable in row `p`, given `w = B^{-1} a_q`.
    fn pivot(&mut self, p: usize, w: &[f64]) {
        let m = self.m;
        let wp = w[p];
        for c in 0..m {
            let col = &mut self.data[c * m..(c + 1) * m];
            let t = col[p];
            if t == 0.0 {
                continue;
            }
            let t = t / wp;
            for (x, &wi) in col.iter_mut().zip(w) {
                *x -= wi * t;
            }
            col[p] = t;
        }
    }
}

const DEGENERATE_RUN: usize = 50;
const CHECK_EVERY: usize = 100;

struct Simplex<'a, S: ColumnSource> {
    src: &'a S,
    m: usize,
    n: usize,
    b: Vec<f64>,
    art_sign: Vec<f64>,
    basis: Vec<usize>,
    is_basic: Vec<bool>,
    inv: Inverse,
    x_b: Vec<f64>,
    tol: Tolerances,
    iterations: usize,
    refactorizations: usize,
    start: Instant,
}

impl<'a, S: ColumnSource> Simplex<'a, S> {
    fn column(&self, j: usize, out: &mut Vec<(usize, f64)>) {
        out.clear();
        if j < self.n {
            self.src.column(j, out);
        } else {
            out.push((j - self.n, self.art_sign[j - self.n]));
        }
    }

    fn refactor(&mut self) -> Result<()> {
        let cols: Vec<Vec<(usize, f64)>> = self
            .basis
            .iter()
            .map(|&j| {
                let mut c = Vec::new();
                self.column(j, &mut c);
                c
            })
            .collect();
        self.inv = Inverse::factor(self.m, &cols, self.tol.pivot)?;
        let rhs: Vec<(usize, f64)> = self.b.iter().copied().enumerate().filter(|e| e.1 != 0.0).collect();
        self.inv.ftran(&rhs, &mut self.x_b);
        self.refactorizations += 1;
        Ok(())
    }

    fn residual(&self) -> f64 {
        let mut r = self.b.clone();
        let mut col = Vec::new();
        for (k, &j) in self.basis.iter().enumerate() {
            self.column(j, &mut col);
            for &(i, v) in &col {
                r[i] -= v * self.x_b[k];
            }
        }
        r.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    fn phase_cost(&self, j: usize, phase_one: bool) -> f64 {
        match (phase_one, j < self.n) {
            (true, real) => {
                if real {
                    0.0
                } else {
                    1.0
                }
            }
            (false, real) => {
                if real {
                    self.src.cost(j)
                } else {
                    0.0
                }
            }
        }
    }

    fn duals(&self, phase_one: bool) -> Vec<f64> {
        let cb: Vec<f64> = self.basis.iter().map(|&j| self.phase_cost(j, phase_one)).collect();
        (0..self.m).map(|i| self.inv.col(i).iter().zip(&cb).map(|(a, c)| a * c).sum()).collect()
    }

    fn objective(&self, phase_one: bool) -> f64 {
        self.basis.iter().zip(&self.x_b).map(|(&j, &v)| self.phase_cost(j, phase_one) * v).sum()
    }

    /// Leaving row and step length for the entering column `w = B^{-1} a_q`.
    ///
    /// Phase two first drives out artificials that the column touches. Otherwise a
    /// two-pass (Harris) test: bound the step with the feasibility tolerance,
    /// then take the largest pivot within that bound. Under Bland's rule the
    /// smallest ratio wins, ties to the lowest basic index.
    fn ratio_test(&self, w: &[f64], phase_one: bool, bland: bool) -> Option<(usize, f64)> {
        let n = self.n;
        let ptol = self.tol.pivot;
        if !phase_one {
            let art = (0..self.m)
                .filter(|&i| self.basis[i] >= n && w[i].abs() > ptol)
                .max_by(|&a, &b| w[a].abs().total_cmp(&w[b].abs()));
            if let Some(i) = art {
                return Some((i, 0.0));
            }
        }
        let rows = || (0..self.m).filter(|&i| w[i] > ptol);
        if bland {
            let mut leave: Option<(usize, f64)> = None;
            for i in rows() {
                let ratio = self.x_b[i].max(0.0) / w[i];
                let better = match leave {
                    None => true,
                    Some((l, r)) => ratio < r - 1e-12 || (ratio <= r + 1e-12 && self.basis[i] < self.basis[l]),
                };
                if better {
                    leave = Some((i, ratio));
                }
            }
            return leave;
        }
        let feas = self.tol.feasibility;
        let bound = rows().map(|i| (self.x_b[i].max(0.0) + feas) / w[i]).fold(f64::INFINITY, f64::min);
        if !bound.is_finite() {
            return None;
        }
        let p = rows()
            .filter(|&i| self.x_b[i].max(0.0) / w[i] <= bound)
            .max_by(|&a, &b| w[a].total_cmp(&w[b]).then(b.cmp(&a)))?;
        Some((p, self.x_b[p].max(0.0) / w[p]))
    }

    /// Runs one phase to optimality; returns the terminal status.
    fn run(&mut self, phase_one: bool) -> Result<LpStatus> {
        let (m, n) = (self.m, self.n);
        let mut y = self.duals(phase_one);
        let mut d = vec![0.0; n];
        let mut w = vec![0.0; m];
        let mut col = Vec::new();
        let mut degenerate = 0usize;
        let mut since_check = 0usize;
        loop {
            if self.iterations >= self.tol.max_iterations {
                return Ok(LpStatus::IterationLimit);
            }
            if let Some(limit) = self.tol.time_limit {
                if self.start.elapsed() > limit {
                    return Ok(LpStatus::TimeLimit);
                }
            }
            self.src.reduced_costs(&y, &mut d);
            if phase_one {
                for (j, v) in d.iter_mut().enumerate() {
                    *v -= self.src.cost(j);
                }
            }
            let bland = degenerate >= DEGENERATE_RUN;
            let mut entering = None;
            let mut best = -self.tol.optimality;
            for j in 0..n {
                if self.is_basic[j] || d[j] >= best {
                    continue;
                }
                entering = Some(j);
                if bland {
                    break;
                }
                best = d[j];
            }
            let Some(q) = entering else {
                // Confirm optimality with exact duals, refactoring only if the
                // updated inverse has drifted.
                if since_check > 0 {
                    if self.residual() > self.tol.feasibility * 0.1 {
                        self.refactor()?;
                    }
                    y = self.duals(phase_one);
                    since_check = 0;
                    continue;
                }
                return Ok(LpStatus::Optimal);
            };

            self.column(q, &mut col);
            self.inv.ftran(&col, &mut w);
            let Some((p, theta)) = self.ratio_test(&w, phase_one, bland) else {
                return Ok(LpStatus::Unbounded);
            };

            for i in 0..m {
                self.x_b[i] -= theta * w[i];
            }
            self.x_b[p] = theta;
            // Dual update: y += d_q / w_p * (row p of the old inverse).
            let step = d[q] / w[p];
            for (i, yi) in y.iter_mut().enumerate() {
                *yi += step * self.inv.data[i * m + p];
            }
            self.inv.pivot(p, &w);
            if self.basis[p] < n {
                self.is_basic[self.basis[p]] = false;
            }
            self.basis[p] = q;
            self.is_basic[q] = true;
            self.iterations += 1;
            since_check += 1;
            degenerate = if theta <= 1e-12 { degenerate + 1 } else { 0 };

            if since_check.is_multiple_of(CHECK_EVERY) {
                if self.residual() > self.tol.feasibility * 0.1 {
                    self.refactor()?;
                    since_check = 0;
                }
                y = self.duals(phase_one);
            }
        }
    }
}

/// Solves `min c'x, Ax = b, x >= 0`, optionally from a starting basis (one
/// column id per row; ids `>= num_cols` are artificials on row `id - num_cols`).
///
/// Without a usable start the solver runs a phase one on artificial columns.
pub fn solve<S: ColumnSource>(src: &S, start: Option<&[usize]>, tol: &Tolerances) -> Result<LpSolution> {
    let begin = Instant::now();
    let (m, n) = (src.num_rows(), src.num_cols());
    if dense_memory_bytes(m) > tol.memory_budget {
        return Err(Error::Resource {
            what: format!("dense basis inverse with {m} rows"),
            needed: dense_memory_bytes(m),
            limit: tol.memory_budget,
        });
    }
    let b = src.rhs();
    if b.len() != m {
        return Err(Error::Contract("rhs length differs from the row count".into()));
    }
    let art_sign: Vec<f64> = b.iter().map(|&v| if v < 0.0 { -1.0 } else { 1.0 }).collect();
    let slack_basis: Vec<usize> = (n..n + m).collect();
    let mut sx = Simplex {
        src,
        m,
        n,
        b,
        art_sign,
        basis: slack_basis.clone(),
        is_basic: vec![false; n],
        inv: Inverse { m, data: vec![] },
        x_b: vec![0.0; m],
        tol: tol.clone(),
        iterations: 0,
        refactorizations: 0,
        start: begin,
    };

    let mut started = false;
    if let Some(basis) = start {
        if basis.len() == m && basis.iter().all(|&j| j < n + m) {
            sx.basis = basis.to_vec();
            if sx.refactor().is_ok() && sx.x_b.iter().all(|&v| v >= -tol.feasibility) {
                started = true;
            }
        }
    }
    if !started {
        sx.basis = slack_basis;
        sx.refactor()?;
    }
    sx.is_basic = vec![false; n];
    for &j in &sx.basis {
        if j < n {
            sx.is_basic[j] = true;
        }
    }

    let needs_phase_one = sx.basis.iter().zip(&sx.x_b).any(|(&j, &v)| j >= n && v > tol.feasibility);
    let mut status = LpStatus::Optimal;
    if needs_phase_one {
        status = sx.run(true)?;
        if status == LpStatus::Optimal && sx.objective(true) > tol.feasibility {
            status = LpStatus::Infeasible;
        }
    }
    if status == LpStatus::Optimal {
        status = sx.run(false)?;
    }

    let mut x = vec![0.0; n];
    for (k, &j) in sx.basis.iter().enumerate() {
        if j < n {
            x[j] = sx.x_b[k].max(0.0);
        }
    }
    let objective = (0..n).map(|j| src.cost(j) * x[j]).sum();
    Ok(LpSolution {
        status,
        objective,
        x,
        duals: sx.duals(false),
        basis: sx.basis,
        iterations: sx.iterations,
        refactorizations: sx.refactorizations,
        elapsed: begin.elapsed(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn small_lp_with_phase_one() {
        // min -x1 - 2x2 s.t. x1 + x2 + s1 = 4, x1 + 3x2 + s2 = 6
        let lp = SparseLp::from_dense(
            &[vec![1.0, 1.0, 1.0, 0.0], vec![1.0, 3.0, 0.0, 1.0]],
            &[4.0, 6.0],
            &[-1.0, -2.0, 0.0, 0.0],
        )
        .unwrap();
        let sol = solve(&lp, None, &Tolerances::default()).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert_abs_diff_eq!(sol.objective, -5.0, epsilon = 1e-9);
        assert_abs_diff_eq!(sol.x[0], 3.0, epsilon = 1e-9);
        assert_abs_diff_eq!(sol.x[1], 1.0, epsilon = 1e-9);
        // duals satisfy complementary slackness: y'A_j = c_j on basic columns
        assert_abs_diff_eq!(sol.duals[0] + sol.duals[1], -1.0, epsilon = 1e-9);
    }

    #[test]
    fn infeasible_and_unbounded() {
        let lp = SparseLp::from_dense(&[vec![1.0, 1.0]], &[-1.0], &[1.0, 1.0]).unwrap();
        assert_eq!(solve(&lp, None, &Tolerances::default()).unwrap().status, LpStatus::Infeasible);
        let lp = SparseLp::from_dense(&[vec![1.0, -1.0]], &[1.0], &[0.0, -1.0]).unwrap();
        assert_eq!(solve(&lp, None, &Tolerances::default()).unwrap().status, LpStatus::Unbounded);
    }

    #[test]
    fn degenerate_cycling_example() {
        // Beale's example in equality form; cycles under naive Dantzig pricing.
        let a = vec![
            vec![0.25, -60.0, -0.04, 9.0, 1.0, 0.0, 0.0],
            vec![0.5, -90.0, -0.02, 3.0, 0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
        ];
        let lp = SparseLp::from_dense(&a, &[0.0, 0.0, 1.0], &[-0.75, 150.0, -0.02, 6.0, 0.0, 0.0, 0.0]).unwrap();
        let sol = solve(&lp, Some(&[4, 5, 6]), &Tolerances::default()).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert_abs_diff_eq!(sol.objective, -0.05, epsilon = 1e-9);
    }

    #[test]
    fn iteration_limit() {
        let lp = SparseLp::from_dense(
            &[vec![1.0, 1.0, 1.0, 0.0], vec![1.0, 3.0, 0.0, 1.0]],
            &[4.0, 6.0],
            &[-1.0, -2.0, 0.0, 0.0],
        )
        .unwrap();
        let tol = Tolerances { max_iterations: 1, ..Tolerances::default() };
        let sol = solve(&lp, Some(&[2, 3]), &tol).unwrap();
        assert_eq!(sol.status, LpStatus::IterationLimit);
    }

    #[test]
    fn mps_export() {
        let lp = SparseLp::from_dense(&[vec![1.0, 2.0]], &[3.0], &[1.0, 0.0]).unwrap();
        let mut buf = Vec::new();
        lp.write_mps("t", &mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.contains(" X0 COST 1e0"));
        assert!(s.contains(" X1 R0 2e0"));
        assert!(s.contains(" RHS R0 3e0"));
        assert!(s.trim_end().ends_with("ENDATA"));
    }
}
