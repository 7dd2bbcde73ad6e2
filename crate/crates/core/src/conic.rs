//! Dense primal-dual interior-point solver for linear semidefinite programs.
//!
//! Problems have any number of real symmetric PSD blocks, free scalar
//! variables, and linear constraints with relation `=`, `<=` or `>=`.
//! The objective is minimised. Inequalities receive internal nonnegative
//! slacks, so the solver works on the standard form
//!
//! ```text
//! min  sum_b <C_b, X_b> + c_f^T t
//! s.t. sum_b A_b(X_b) + A_s s + A_f t = b,   X_b PSD, s >= 0, t free
//! ```
//!
//! with a Mehrotra predictor-corrector on the HKM search direction.
//!
//! Every constraint coefficient is stored as a sum of weighted rank-one
//! terms `sum_a lam_a u_a u_a^T`; dense and scaled-identity coefficients are
//! factored on entry. The Schur complement then needs only the Gram matrices
//! `U^T X U` and `U^T Z^{-1} U` of each block.
//!
//! Complex Hermitian variables are handled through the real embedding
//! `[[Re, -Im], [Im, Re]]`; see [`hermitian_embed`].

use std::fmt::Write as _;
use std::io::{self, BufRead, Write};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use thiserror::Error;

use crate::radio::{CMat, CVec};

#[derive(Debug, Error, PartialEq)]
pub enum ConicError {
    #[error("invalid problem data: {0}")]
    Input(String),
    #[error("malformed dump at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// Symmetric coefficient of a linear functional on one PSD block.
#[derive(Debug, Clone, PartialEq)]
pub enum SymCoeff {
    Dense(DMatrix<f64>),
    /// `sum_a lam_a u_a u_a^T`.
    LowRank(Vec<(f64, DVector<f64>)>),
    /// `c I`.
    Identity(f64),
}

impl SymCoeff {
    pub fn to_dense(&self, n: usize) -> DMatrix<f64> {
        match self {
            SymCoeff::Dense(m) => m.clone(),
            SymCoeff::LowRank(terms) => {
                let mut m = DMatrix::zeros(n, n);
                for (lam, u) in terms {
                    m.ger(*lam, u, u, 1.0);
                }
                m
            }
            SymCoeff::Identity(c) => DMatrix::identity(n, n).scale(*c),
        }
    }

    /// `<coeff, X>`.
    pub fn inner(&self, x: &DMatrix<f64>) -> f64 {
        match self {
            SymCoeff::Dense(m) => m.dot(x),
            SymCoeff::LowRank(terms) => terms.iter().map(|(lam, u)| lam * u.dot(&(x * u))).sum(),
            SymCoeff::Identity(c) => c * x.trace(),
        }
    }

    fn factors(&self, n: usize) -> Vec<(f64, DVector<f64>)> {
        match self {
            SymCoeff::LowRank(terms) => terms.clone(),
            SymCoeff::Identity(c) => (0..n)
                .map(|i| {
                    let mut e = DVector::zeros(n);
                    e[i] = 1.0;
                    (*c, e)
                })
                .collect(),
            SymCoeff::Dense(m) => {
                let eig = symmetrize(m).symmetric_eigen();
                let scale = eig.eigenvalues.amax();
                (0..n)
                    .filter(|&i| eig.eigenvalues[i].abs() > 1e-14 * scale)
                    .map(|i| (eig.eigenvalues[i], eig.eigenvectors.column(i).into_owned()))
                    .collect()
            }
        }
    }

    fn is_finite(&self) -> bool {
        match self {
            SymCoeff::Dense(m) => m.iter().all(|v| v.is_finite()),
            SymCoeff::LowRank(terms) => terms.iter().all(|(l, u)| l.is_finite() && u.iter().all(|v| v.is_finite())),
            SymCoeff::Identity(c) => c.is_finite(),
        }
    }

    fn dim_ok(&self, n: usize) -> bool {
        match self {
            SymCoeff::Dense(m) => m.shape() == (n, n),
            SymCoeff::LowRank(terms) => terms.iter().all(|(_, u)| u.len() == n),
            SymCoeff::Identity(_) => true,
        }
    }
}

/// `sum_b <C_b, X_b> + sum_i a_i t_i`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LinearFunctional {
    pub blocks: Vec<(usize, SymCoeff)>,
    pub scalars: Vec<(usize, f64)>,
}

impl LinearFunctional {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn block(mut self, b: usize, c: SymCoeff) -> Self {
        self.blocks.push((b, c));
        self
    }

    pub fn scalar(mut self, i: usize, a: f64) -> Self {
        self.scalars.push((i, a));
        self
    }

    pub fn eval(&self, blocks: &[DMatrix<f64>], scalars: &[f64]) -> f64 {
        self.blocks.iter().map(|(b, c)| c.inner(&blocks[*b])).sum::<f64>()
            + self.scalars.iter().map(|(i, a)| a * scalars[*i]).sum::<f64>()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Eq,
    Le,
    Ge,
}

impl Relation {
    fn symbol(self) -> &'static str {
        match self {
            Relation::Eq => "=",
            Relation::Le => "<=",
            Relation::Ge => ">=",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub f: LinearFunctional,
    pub rel: Relation,
    pub rhs: f64,
}

impl Constraint {
    /// Signed violation; zero or negative when satisfied.
    pub fn violation(&self, blocks: &[DMatrix<f64>], scalars: &[f64]) -> f64 {
        let v = self.f.eval(blocks, scalars) - self.rhs;
        match self.rel {
            Relation::Eq => v.abs(),
            Relation::Le => v,
            Relation::Ge => -v,
        }
    }
}

/// Minimise `objective` subject to `constraints`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConicProblem {
    pub blocks: Vec<usize>,
    pub free_scalars: usize,
    pub objective: LinearFunctional,
    pub constraints: Vec<Constraint>,
}

impl ConicProblem {
    pub fn new(blocks: Vec<usize>, free_scalars: usize) -> Self {
        Self { blocks, free_scalars, ..Default::default() }
    }

    pub fn add(&mut self, f: LinearFunctional, rel: Relation, rhs: f64) {
        self.constraints.push(Constraint { f, rel, rhs });
    }

    pub fn count(&self, rel: Relation) -> usize {
        self.constraints.iter().filter(|c| c.rel == rel).count()
    }

    pub fn validate(&self) -> Result<(), ConicError> {
        let check = |f: &LinearFunctional, what: &str| -> Result<(), ConicError> {
            for (b, c) in &f.blocks {
                let Some(&n) = self.blocks.get(*b) else {
                    return Err(ConicError::Input(format!("{what}: block {b} does not exist")));
                };
                if !c.dim_ok(n) {
                    return Err(ConicError::Input(format!("{what}: coefficient on block {b} is not {n}x{n}")));
                }
                if !c.is_finite() {
                    return Err(ConicError::Input(format!("{what}: non-finite coefficient")));
                }
            }
            for (i, a) in &f.scalars {
                if *i >= self.free_scalars || !a.is_finite() {
                    return Err(ConicError::Input(format!("{what}: bad scalar term ({i}, {a})")));
                }
            }
            Ok(())
        };
        if self.blocks.contains(&0) {
            return Err(ConicError::Input("zero-sized block".into()));
        }
        check(&self.objective, "objective")?;
        for (k, c) in self.constraints.iter().enumerate() {
            check(&c.f, &format!("constraint {k}"))?;
            if !c.rhs.is_finite() {
                return Err(ConicError::Input(format!("constraint {k}: non-finite rhs")));
            }
        }
        Ok(())
    }

    /// Plain-text dump.
    ///
    /// ```text
    /// conic v1
    /// blocks <n_0> <n_1> ...
    /// free <count>
    /// objective
    /// b <block> <i> <j> <value>     (upper triangle, i <= j)
    /// s <index> <value>
    /// constraint <= <rhs>
    /// ...
    /// end
    /// ```
    ///
    /// Each `objective` or `constraint` header opens a record that lists its
    /// nonzero coefficients as triples; `end` closes the file.
    pub fn dump(&self, out: &mut impl Write) -> io::Result<()> {
        let mut s = String::new();
        s.push_str("conic v1\nblocks");
        for n in &self.blocks {
            let _ = write!(s, " {n}");
        }
        let _ = writeln!(s, "\nfree {}", self.free_scalars);
        let functional = |s: &mut String, f: &LinearFunctional| {
            let mut dense: Vec<Option<DMatrix<f64>>> = vec![None; self.blocks.len()];
            for (b, c) in &f.blocks {
                let m = c.to_dense(self.blocks[*b]);
                dense[*b] = Some(match dense[*b].take() {
                    Some(acc) => acc + m,
                    None => m,
                });
            }
            for (b, m) in dense.iter().enumerate() {
                let Some(m) = m else { continue };
                for j in 0..m.ncols() {
                    for i in 0..=j {
                        let v = 0.5 * (m[(i, j)] + m[(j, i)]);
                        if v != 0.0 {
                            let _ = writeln!(s, "b {b} {i} {j} {v:e}");
                        }
                    }
                }
            }
            for (i, a) in &f.scalars {
                let _ = writeln!(s, "s {i} {a:e}");
            }
        };
        s.push_str("objective\n");
        functional(&mut s, &self.objective);
        for c in &self.constraints {
            let _ = writeln!(s, "constraint {} {:e}", c.rel.symbol(), c.rhs);
            functional(&mut s, &c.f);
        }
        s.push_str("end\n");
        out.write_all(s.as_bytes())
    }

    /// Reads the format written by [`ConicProblem::dump`]. Block coefficients
    /// come back as dense matrices.
    pub fn parse_dump(input: impl BufRead) -> Result<Self, ConicError> {
        let mut p = ConicProblem::default();
        let mut current: Option<(LinearFunctional, Option<(Relation, f64)>)> = None;
        let mut dense: Vec<(usize, DMatrix<f64>)> = Vec::new();
        let mut done = false;
        let finish = |p: &mut ConicProblem,
                      cur: Option<(LinearFunctional, Option<(Relation, f64)>)>,
                      dense: &mut Vec<(usize, DMatrix<f64>)>| {
            if let Some((mut f, head)) = cur {
                for (b, m) in dense.drain(..) {
                    f.blocks.push((b, SymCoeff::Dense(m)));
                }
                match head {
                    None => p.objective = f,
                    Some((rel, rhs)) => p.constraints.push(Constraint { f, rel, rhs }),
                }
            }
        };
        for (ln, line) in input.lines().enumerate() {
            let line = line.map_err(|e| ConicError::Parse { line: ln + 1, msg: e.to_string() })?;
            let err = |msg: &str| ConicError::Parse { line: ln + 1, msg: msg.to_string() };
            let tok: Vec<&str> = line.split_whitespace().collect();
            if tok.is_empty() {
                continue;
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| err("bad number"));
            let idx = |s: &str| s.parse::<usize>().map_err(|_| err("bad index"));
            match tok[0] {
                "conic" if ln == 0 => {
                    if tok.get(1) != Some(&"v1") {
                        return Err(err("unsupported version"));
                    }
                }
                "blocks" => p.blocks = tok[1..].iter().map(|t| idx(t)).collect::<Result<_, _>>()?,
                "free" => p.free_scalars = idx(tok.get(1).ok_or_else(|| err("missing count"))?)?,
                "objective" => {
                    finish(&mut p, current.take(), &mut dense);
                    current = Some((LinearFunctional::new(), None));
                }
                "constraint" => {
                    finish(&mut p, current.take(), &mut dense);
                    if tok.len() != 3 {
                        return Err(err("expected: constraint <rel> <rhs>"));
                    }
                    let rel = match tok[1] {
                        "=" => Relation::Eq,
                        "<=" => Relation::Le,
                        ">=" => Relation::Ge,
                        _ => return Err(err("unknown relation")),
                    };
                    current = Some((LinearFunctional::new(), Some((rel, num(tok[2])?))));
                }
                "b" => {
                    if tok.len() != 5 {
                        return Err(err("expected: b <block> <i> <j> <value>"));
                    }
                    let (b, i, j, v) = (idx(tok[1])?, idx(tok[2])?, idx(tok[3])?, num(tok[4])?);
                    let n = *p.blocks.get(b).ok_or_else(|| err("unknown block"))?;
                    if i >= n || j >= n {
                        return Err(err("index out of range"));
                    }
                    if current.is_none() {
                        return Err(err("coefficient outside a record"));
                    }
                    let pos = match dense.iter().position(|(bb, _)| *bb == b) {
                        Some(k) => k,
                        None => {
                            dense.push((b, DMatrix::zeros(n, n)));
                            dense.len() - 1
                        }
                    };
                    dense[pos].1[(i, j)] = v;
                    dense[pos].1[(j, i)] = v;
                }
                "s" => {
                    let Some((f, _)) = current.as_mut() else {
                        return Err(err("coefficient outside a record"));
                    };
                    if tok.len() != 3 {
                        return Err(err("expected: s <index> <value>"));
                    }
                    f.scalars.push((idx(tok[1])?, num(tok[2])?));
                }
                "end" => {
                    finish(&mut p, current.take(), &mut dense);
                    done = true;
                }
                _ => return Err(err("unknown record")),
            }
        }
        if !done {
            return Err(ConicError::Parse { line: 0, msg: "missing end".into() });
        }
        p.validate()?;
        Ok(p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tol: 1e-7, max_iter: 200 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    MaxIter,
}

/// Relative residuals: the worst per-row primal violation over `1 + |rhs|`,
/// and the dual residual and duality gap of the equilibrated problem.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Residuals {
    pub primal: f64,
    pub dual: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConicSolution {
    pub block_values: Vec<DMatrix<f64>>,
    pub scalar_values: Vec<f64>,
    pub objective_value: f64,
    pub dual_objective: f64,
    /// Constraint multipliers, in the sign convention of `A* y + Z = C`.
    pub duals: Vec<f64>,
    pub status: SolveStatus,
    pub residuals: Residuals,
    pub iterations: usize,
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    symmetrize(m).symmetric_eigenvalues().min()
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()).scale(0.5)
}

/// `[[Re h, -Im h], [Im h, Re h]]`.
pub fn hermitian_embed(h: &CMat) -> Result<DMatrix<f64>, ConicError> {
    if !h.is_square() {
        return Err(ConicError::Input("embedding needs a square matrix".into()));
    }
    let dev = cabs_max(&(h - h.adjoint()));
    if dev > 1e-12 * (1.0 + cabs_max(h)) {
        return Err(ConicError::Input(format!("matrix is not Hermitian (deviation {dev:e})")));
    }
    Ok(embed_unchecked(h))
}

fn cabs_max(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn embed_unchecked(h: &CMat) -> DMatrix<f64> {
    let n = h.nrows();
    DMatrix::from_fn(2 * n, 2 * n, |i, j| {
        let v = h[(i % n, j % n)];
        match (i < n, j < n) {
            (true, true) | (false, false) => v.re,
            (true, false) => -v.im,
            (false, true) => v.im,
        }
    })
}

/// `[Re x; Im x]`, so that `Re(x^H h x) = x~^T embed(h) x~`.
pub fn embed_vec(x: &CVec) -> DVector<f64> {
    let n = x.len();
    DVector::from_fn(2 * n, |i, _| if i < n { x[i].re } else { x[i - n].im })
}

/// Hermitian matrix whose embedding is the orthogonal projection of `y`
/// onto embedded matrices. PSD whenever `y` is.
pub fn extract_hermitian(y: &DMatrix<f64>) -> CMat {
    let n = y.nrows() / 2;
    CMat::from_fn(n, n, |i, j| {
        let re = 0.5 * (y[(i, j)] + y[(i + n, j + n)]);
        let im = 0.5 * (y[(i + n, j)] - y[(i, j + n)]);
        Complex64::new(re, im)
    })
}

/// Rank-two factors of `embed(h h^H)`.
pub fn embed_outer(h: &CVec) -> Vec<(f64, DVector<f64>)> {
    let n = h.len();
    let u1 = embed_vec(h);
    let u2 = DVector::from_fn(2 * n, |i, _| if i < n { -h[i].im } else { h[i - n].re });
    vec![(1.0, u1), (1.0, u2)]
}

/// Coefficient `G` with `<G, Y> = Re tr(A X)` for Hermitian `A` and the
/// embedded variable `Y` of `X`.
pub fn herm_coeff(a: &CMat) -> Result<SymCoeff, ConicError> {
    Ok(SymCoeff::Dense(hermitian_embed(a)?.scale(0.5)))
}

/// As [`herm_coeff`] for `A = c h h^H`.
pub fn herm_outer_coeff(h: &CVec, c: f64) -> SymCoeff {
    SymCoeff::LowRank(embed_outer(h).into_iter().map(|(l, u)| (0.5 * c * l, u)).collect())
}

// ---------------------------------------------------------------------------
// Interior-point method

struct BlockData {
    n: usize,
    c: DMatrix<f64>,
    u: DMatrix<f64>,
    lam: Vec<f64>,
    row: Vec<usize>,
}

impl BlockData {
    /// `A_b(Y)` accumulated into `out`.
    fn apply(&self, y: &DMatrix<f64>, out: &mut DVector<f64>) {
        if self.lam.is_empty() {
            return;
        }
        let yu = y * &self.u;
        for a in 0..self.lam.len() {
            out[self.row[a]] += self.lam[a] * self.u.column(a).dot(&yu.column(a));
        }
    }

    /// `A_b*(y)`.
    fn adjoint(&self, y: &DVector<f64>) -> DMatrix<f64> {
        if self.lam.is_empty() {
            return DMatrix::zeros(self.n, self.n);
        }
        let mut scaled = self.u.clone();
        for a in 0..self.lam.len() {
            let s = self.lam[a] * y[self.row[a]];
            scaled.column_mut(a).scale_mut(s);
        }
        symmetrize(&(scaled * self.u.transpose()))
    }
}

struct Standard {
    blocks: Vec<BlockData>,
    /// `(row, coefficient)` of each slack.
    slack: Vec<(usize, f64)>,
    a_f: DMatrix<f64>,
    c_f: DVector<f64>,
    b: DVector<f64>,
    row_scale: DVector<f64>,
    obj_scale: f64,
}

impl Standard {
    fn build(p: &ConicProblem) -> Self {
        let m = p.constraints.len();
        let nf = p.free_scalars;
        let mut factors: Vec<Vec<(usize, f64, DVector<f64>)>> = vec![Vec::new(); p.blocks.len()];
        let mut a_f = DMatrix::zeros(m, nf);
        let mut b = DVector::zeros(m);
        let mut slack = Vec::new();
        let mut row_norm2 = vec![0.0; m];

        for (i, con) in p.constraints.iter().enumerate() {
            let mut dense_norm: Vec<Option<DMatrix<f64>>> = vec![None; p.blocks.len()];
            for (bi, coeff) in &con.f.blocks {
                let n = p.blocks[*bi];
                for (lam, u) in coeff.factors(n) {
                    factors[*bi].push((i, lam, u));
                }
                let d = coeff.to_dense(n);
                dense_norm[*bi] = Some(match dense_norm[*bi].take() {
                    Some(acc) => acc + d,
                    None => d,
                });
            }
            row_norm2[i] += dense_norm.iter().flatten().map(|d| d.norm_squared()).sum::<f64>();
            for (j, a) in &con.f.scalars {
                a_f[(i, *j)] += a;
            }
            row_norm2[i] += a_f.row(i).norm_squared();
            match con.rel {
                Relation::Eq => {}
                Relation::Le => slack.push((i, 1.0)),
                Relation::Ge => slack.push((i, -1.0)),
            }
            b[i] = con.rhs;
        }

        let row_scale = DVector::from_fn(m, |i, _| {
            let nrm = row_norm2[i].sqrt();
            if nrm > 0.0 {
                1.0 / nrm
            } else {
                1.0
            }
        });
        for (i, s) in slack.iter_mut() {
            *s *= row_scale[*i];
        }
        for i in 0..m {
            b[i] *= row_scale[i];
            a_f.row_mut(i).scale_mut(row_scale[i]);
        }

        let mut c_blocks: Vec<DMatrix<f64>> = p.blocks.iter().map(|&n| DMatrix::zeros(n, n)).collect();
        for (bi, coeff) in &p.objective.blocks {
            c_blocks[*bi] += coeff.to_dense(p.blocks[*bi]);
        }
        let mut c_f: DVector<f64> = DVector::zeros(nf);
        for (j, a) in &p.objective.scalars {
            c_f[*j] += a;
        }
        let c_norm: f64 = (c_blocks.iter().map(|c| c.norm_squared()).sum::<f64>() + c_f.norm_squared()).sqrt();
        let obj_scale = if c_norm > 0.0 { 1.0 / c_norm } else { 1.0 };
        c_f *= obj_scale;

        let blocks = factors
            .into_iter()
            .zip(c_blocks)
            .zip(&p.blocks)
            .map(|((fs, c), &n)| {
                let mut u = DMatrix::zeros(n, fs.len());
                let mut lam = Vec::with_capacity(fs.len());
                let mut row = Vec::with_capacity(fs.len());
                for (a, (i, l, v)) in fs.into_iter().enumerate() {
                    u.set_column(a, &v);
                    lam.push(l * row_scale[i]);
                    row.push(i);
                }
                BlockData { n, c: symmetrize(&c).scale(obj_scale), u, lam, row }
            })
            .collect();

        Self { blocks, slack, a_f, c_f, b, row_scale, obj_scale }
    }

    fn m(&self) -> usize {
        self.b.len()
    }

    fn primal_map(&self, x: &[DMatrix<f64>], s: &DVector<f64>, t: &DVector<f64>) -> DVector<f64> {
        let mut out = &self.a_f * t;
        for (bd, xb) in self.blocks.iter().zip(x) {
            bd.apply(xb, &mut out);
        }
        for (k, (i, a)) in self.slack.iter().enumerate() {
            out[*i] += a * s[k];
        }
        out
    }

    fn slack_adjoint(&self, y: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(self.slack.len(), |k, _| self.slack[k].1 * y[self.slack[k].0])
    }
}

struct Iterate {
    x: Vec<DMatrix<f64>>,
    z: Vec<DMatrix<f64>>,
    s: DVector<f64>,
    zs: DVector<f64>,
    t: DVector<f64>,
    y: DVector<f64>,
}

struct Direction {
    dx: Vec<DMatrix<f64>>,
    dz: Vec<DMatrix<f64>>,
    ds: DVector<f64>,
    dzs: DVector<f64>,
    dt: DVector<f64>,
    dy: DVector<f64>,
}

/// Largest `alpha` in `(0, 1]` keeping `X + alpha dX` PSD, given `X = L L^T`.
fn psd_step(chol_l: &DMatrix<f64>, dx: &DMatrix<f64>) -> f64 {
    let Some(a) = chol_l.solve_lower_triangular(dx) else { return 0.0 };
    let Some(b) = chol_l.solve_lower_triangular(&a.transpose()) else { return 0.0 };
    let lmin = symmetrize(&b).symmetric_eigenvalues().min();
    if lmin >= 0.0 {
        f64::INFINITY
    } else {
        -1.0 / lmin
    }
}

fn lp_step(v: &DVector<f64>, dv: &DVector<f64>) -> f64 {
    v.iter()
        .zip(dv.iter())
        .filter(|(_, d)| **d < 0.0)
        .map(|(x, d)| -x / d)
        .fold(f64::INFINITY, f64::min)
}

struct Linearised {
    zinv: Vec<DMatrix<f64>>,
    lx: Vec<DMatrix<f64>>,
    lz: Vec<DMatrix<f64>>,
    schur: DMatrix<f64>,
    chol_m: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    mf: Option<nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>>,
    minv_af: DMatrix<f64>,
}

/// Solves `p`, minimising its objective.
pub fn solve(p: &ConicProblem, opts: &SolverOptions) -> Result<ConicSolution, ConicError> {
    p.validate()?;
    if !(opts.tol > 0.0) || opts.max_iter == 0 {
        return Err(ConicError::Input("tol and max_iter must be positive".into()));
    }
    let sf = Standard::build(p);
    let m = sf.m();
    let nf = p.free_scalars;
    let ns = sf.slack.len();
    let nu: f64 = (p.blocks.iter().sum::<usize>() + ns) as f64;

    // Initial point.
    let b_inf = sf.b.amax();
    let mut it = {
        let x = sf
            .blocks
            .iter()
            .map(|bd| {
                let xi = 10f64.max((bd.n as f64).sqrt()).max(bd.n as f64 * (1.0 + b_inf) / 2.0);
                DMatrix::identity(bd.n, bd.n).scale(xi)
            })
            .collect();
        let z = sf
            .blocks
            .iter()
            .map(|bd| {
                let eta = 10f64.max((bd.n as f64).sqrt()).max(bd.c.norm());
                DMatrix::identity(bd.n, bd.n).scale(eta)
            })
            .collect();
        let s0 = 10f64.max(1.0 + b_inf);
        Iterate {
            x,
            z,
            s: DVector::from_element(ns, s0),
            zs: DVector::from_element(ns, 10.0),
            t: DVector::zeros(nf),
            y: DVector::zeros(m),
        }
    };

    let b_norm = sf.b.norm();
    let c_norm = (sf.blocks.iter().map(|b| b.c.norm_squared()).sum::<f64>() + sf.c_f.norm_squared()).sqrt();
    let mut status = SolveStatus::MaxIter;
    let mut res = Residuals::default();
    let mut iterations = 0;

    for iter in 0..=opts.max_iter {
        iterations = iter;
        // Residuals.
        let rp = &sf.b - sf.primal_map(&it.x, &it.s, &it.t);
        let rd: Vec<DMatrix<f64>> = sf
            .blocks
            .iter()
            .zip(&it.z)
            .map(|(bd, z)| &bd.c - bd.adjoint(&it.y) - z)
            .collect();
        let rd_s = -sf.slack_adjoint(&it.y) - &it.zs;
        let rd_f = &sf.c_f - sf.a_f.transpose() * &it.y;
        let pobj: f64 = sf.blocks.iter().zip(&it.x).map(|(bd, x)| bd.c.dot(x)).sum::<f64>() + sf.c_f.dot(&it.t);
        let dobj = sf.b.dot(&it.y);
        let compl: f64 = it.x.iter().zip(&it.z).map(|(x, z)| x.dot(z)).sum::<f64>() + it.s.dot(&it.zs);
        let mu = compl / nu.max(1.0);
        let rd_norm = (rd.iter().map(|r| r.norm_squared()).sum::<f64>() + rd_s.norm_squared() + rd_f.norm_squared()).sqrt();
        res = Residuals {
            primal: (0..m)
                .map(|i| rp[i].abs() / (sf.row_scale[i] + sf.b[i].abs()))
                .fold(0.0, f64::max),
            dual: rd_norm / (1.0 + c_norm),
            gap: (pobj - dobj).abs().max(compl) / (1.0 + pobj.abs() + dobj.abs()),
        };
        if res.primal <= opts.tol && res.dual <= opts.tol && res.gap <= opts.tol {
            status = SolveStatus::Optimal;
            break;
        }
        // Infeasibility certificates, normalised by the growing objective.
        if dobj > 0.0 && iter > 5 {
            let ray: f64 = (sf.blocks.iter().zip(&rd).map(|(bd, r)| (&bd.c - r).norm_squared()).sum::<f64>()
                + (&sf.c_f - &rd_f).norm_squared()
                + rd_s.norm_squared())
            .sqrt();
            if ray / dobj < 1e-8 && dobj > 1e6 * (1.0 + c_norm) {
                status = SolveStatus::Infeasible;
                break;
            }
        }
        if pobj < 0.0 && iter > 5 {
            let ray = (&rp - &sf.b).norm();
            if ray / -pobj < 1e-8 && -pobj > 1e6 * (1.0 + b_norm) {
                status = SolveStatus::Unbounded;
                break;
            }
        }
        if iter == opts.max_iter {
            break;
        }

        let Some(lin) = linearise(&sf, &it) else { break };
        let affine = direction(&sf, &it, &lin, &rp, &rd, &rd_s, &rd_f, 0.0, mu, None);
        let (ap, ad) = step_lengths(&it, &lin, &affine);
        let (ap, ad) = (ap.min(1.0), ad.min(1.0));
        let compl_aff: f64 = it
            .x
            .iter()
            .zip(&affine.dx)
            .zip(it.z.iter().zip(&affine.dz))
            .map(|((x, dx), (z, dz))| (x + dx.scale(ap)).dot(&(z + dz.scale(ad))))
            .sum::<f64>()
            + (&it.s + affine.ds.scale(ap)).dot(&(&it.zs + affine.dzs.scale(ad)));
        let sigma = ((compl_aff / nu.max(1.0)) / mu).clamp(0.0, 1.0).powi(3);
        let corr = direction(&sf, &it, &lin, &rp, &rd, &rd_s, &rd_f, sigma, mu, Some(&affine));
        let (ap, ad) = step_lengths(&it, &lin, &corr);
        let gamma = 0.9 + 0.09 * (1.0 - sigma).max(0.0);
        let ap = (gamma * ap).min(1.0);
        let ad = (gamma * ad).min(1.0);

        for b in 0..it.x.len() {
            it.x[b] = symmetrize(&(&it.x[b] + corr.dx[b].scale(ap)));
            it.z[b] = symmetrize(&(&it.z[b] + corr.dz[b].scale(ad)));
        }
        it.s += corr.ds.scale(ap);
        it.zs += corr.dzs.scale(ad);
        it.t += corr.dt.scale(ap);
        it.y += corr.dy.scale(ad);
        if ap < 1e-12 && ad < 1e-12 {
            break;
        }
    }

    // Undo equilibration.
    let block_values = it.x.clone();
    let scalar_values: Vec<f64> = it.t.iter().copied().collect();
    let objective_value = p.objective.eval(&block_values, &scalar_values);
    let duals: Vec<f64> = (0..m).map(|i| it.y[i] * sf.row_scale[i] / sf.obj_scale).collect();
    let dual_objective = sf.b.dot(&it.y) / sf.obj_scale;
    Ok(ConicSolution {
        block_values,
        scalar_values,
        objective_value,
        dual_objective,
        duals,
        status,
        residuals: res,
        iterations,
    })
}

fn linearise(sf: &Standard, it: &Iterate) -> Option<Linearised> {
    let m = sf.m();
    let mut schur = DMatrix::zeros(m, m);
    let mut zinv = Vec::with_capacity(sf.blocks.len());
    let mut lx = Vec::with_capacity(sf.blocks.len());
    let mut lz = Vec::with_capacity(sf.blocks.len());
    for (b, bd) in sf.blocks.iter().enumerate() {
        let cz = it.z[b].clone().cholesky()?;
        let cx = it.x[b].clone().cholesky()?;
        let zi = symmetrize(&cz.inverse());
        if !bd.lam.is_empty() {
            let g = bd.u.transpose() * (&it.x[b] * &bd.u);
            let h = bd.u.transpose() * (&zi * &bd.u);
            let r = bd.lam.len();
            for a in 0..r {
                let ra = bd.row[a];
                let la = bd.lam[a];
                for c in 0..r {
                    schur[(ra, bd.row[c])] += la * bd.lam[c] * g[(a, c)] * h[(a, c)];
                }
            }
        }
        lx.push(cx.l());
        lz.push(cz.l());
        zinv.push(zi);
    }
    for (k, (i, a)) in sf.slack.iter().enumerate() {
        schur[(*i, *i)] += a * a * it.s[k] / it.zs[k];
    }
    let schur = symmetrize(&schur);
    let diag_max = schur.diagonal().amax().max(1e-300);
    let mut reg = 0.0;
    let chol_m = loop {
        let mut trial = schur.clone();
        for i in 0..m {
            trial[(i, i)] += reg;
        }
        if let Some(c) = trial.cholesky() {
            break c;
        }
        reg = if reg == 0.0 { 1e-14 * diag_max } else { reg * 100.0 };
        if reg > 1e-2 * diag_max {
            return None;
        }
    };
    let nf = sf.a_f.ncols();
    let (mf, minv_af) = if nf > 0 {
        let minv_af = chol_m.solve(&sf.a_f);
        let sm = sf.a_f.transpose() * &minv_af;
        (Some(sm.lu()), minv_af)
    } else {
        (None, DMatrix::zeros(m, 0))
    };
    Some(Linearised { zinv, lx, lz, schur, chol_m, mf, minv_af })
}

#[allow(clippy::too_many_arguments)]
fn direction(
    sf: &Standard,
    it: &Iterate,
    lin: &Linearised,
    rp: &DVector<f64>,
    rd: &[DMatrix<f64>],
    rd_s: &DVector<f64>,
    rd_f: &DVector<f64>,
    sigma: f64,
    mu: f64,
    corr: Option<&Direction>,
) -> Direction {
    let nb = sf.blocks.len();
    // K_b - X Rd Z^{-1}: the part of dX independent of dy.
    let mut base = Vec::with_capacity(nb);
    let mut rhs = rp.clone();
    for b in 0..nb {
        let x = &it.x[b];
        let zi = &lin.zinv[b];
        let mut k = zi.scale(sigma * mu) - x;
        if let Some(c) = corr {
            k -= &c.dx[b] * &c.dz[b] * zi;
        }
        k -= x * &rd[b] * zi;
        let mut neg = DVector::zeros(sf.m());
        sf.blocks[b].apply(&k, &mut neg);
        rhs -= neg;
        base.push(k);
    }
    let ns = sf.slack.len();
    let mut base_s = DVector::zeros(ns);
    for k in 0..ns {
        let (s, zs) = (it.s[k], it.zs[k]);
        let mut v = sigma * mu / zs - s;
        if let Some(c) = corr {
            v -= c.ds[k] * c.dzs[k] / zs;
        }
        v -= s / zs * rd_s[k];
        base_s[k] = v;
        let (i, a) = sf.slack[k];
        rhs[i] -= a * v;
    }

    let (dy, dt) = solve_refined(sf, lin, &rhs, rd_f);

    let mut dx = Vec::with_capacity(nb);
    let mut dz = Vec::with_capacity(nb);
    for b in 0..nb {
        let aty = sf.blocks[b].adjoint(&dy);
        let dzb = &rd[b] - &aty;
        let dxb = symmetrize(&(&base[b] + &it.x[b] * aty * &lin.zinv[b]));
        dx.push(dxb);
        dz.push(dzb);
    }
    let dzs = rd_s - sf.slack_adjoint(&dy);
    let ds = DVector::from_fn(ns, |k, _| base_s[k] - it.s[k] / it.zs[k] * (dzs[k] - rd_s[k]));
    Direction { dx, dz, ds, dzs, dt, dy }
}

/// Solves `M dy + A_f dt = r`, `A_f^T dy = r_f` with the factored `M`.
fn solve_newton(sf: &Standard, lin: &Linearised, r: &DVector<f64>, r_f: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
    let minv_r = lin.chol_m.solve(r);
    let dt = match &lin.mf {
        Some(lu) => {
            let rr = sf.a_f.transpose() * &minv_r - r_f;
            lu.solve(&rr).unwrap_or_else(|| DVector::zeros(sf.a_f.ncols()))
        }
        None => DVector::zeros(0),
    };
    let dy = if dt.is_empty() { minv_r } else { minv_r - &lin.minv_af * &dt };
    (dy, dt)
}

/// [`solve_newton`] plus iterative refinement against the exact `M`.
fn solve_refined(sf: &Standard, lin: &Linearised, r: &DVector<f64>, r_f: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
    let (mut dy, mut dt) = solve_newton(sf, lin, r, r_f);
    for _ in 0..3 {
        let e = r - &lin.schur * &dy - &sf.a_f * &dt;
        let e_f = r_f - sf.a_f.transpose() * &dy;
        let (cy, ct) = solve_newton(sf, lin, &e, &e_f);
        dy += cy;
        dt += ct;
    }
    (dy, dt)
}

fn step_lengths(it: &Iterate, lin: &Linearised, d: &Direction) -> (f64, f64) {
    let mut ap = lp_step(&it.s, &d.ds);
    let mut ad = lp_step(&it.zs, &d.dzs);
    for b in 0..it.x.len() {
        ap = ap.min(psd_step(&lin.lx[b], &d.dx[b]));
        ad = ad.min(psd_step(&lin.lz[b], &d.dz[b]));
    }
    (ap, ad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_sym(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
        let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        symmetrize(&a)
    }

    fn lambda_max_problem(c: &DMatrix<f64>) -> ConicProblem {
        let n = c.nrows();
        let mut p = ConicProblem::new(vec![n], 0);
        p.objective = LinearFunctional::new().block(0, SymCoeff::Dense(-c));
        p.add(LinearFunctional::new().block(0, SymCoeff::Identity(1.0)), Relation::Eq, 1.0);
        p
    }

    #[test]
    fn eigenvalue_basics() {
        assert_eq!(min_eigenvalue(&DMatrix::identity(3, 3)), 1.0);
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, -2.0]));
        assert!((min_eigenvalue(&d) + 2.0).abs() < 1e-15);
    }

    #[test]
    fn embedding_basics() {
        let i = CMat::identity(3, 3);
        assert_eq!(hermitian_embed(&i).unwrap(), DMatrix::identity(6, 6));
        let j = Complex64::new(0.0, 1.0);
        let h = CMat::from_row_slice(2, 2, &[Complex64::new(0.0, 0.0), j, -j, Complex64::new(0.0, 0.0)]);
        let mut ev: Vec<f64> = hermitian_embed(&h).unwrap().symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        for (a, b) in ev.iter().zip([-1.0, -1.0, 1.0, 1.0]) {
            assert!((a - b).abs() < 1e-12);
        }
        let bad = CMat::from_row_slice(2, 2, &[Complex64::new(0.0, 0.0), j, j, Complex64::new(0.0, 0.0)]);
        assert!(hermitian_embed(&bad).is_err());
    }

    #[test]
    fn embedding_isometry() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let n = 5;
            let f = CMat::from_fn(n, n, |_, _| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
            let h = (&f + f.adjoint()).scale(0.5);
            let x = CVec::from_fn(n, |_, _| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
            let e = hermitian_embed(&h).unwrap();
            let xe = embed_vec(&x);
            let complex = x.dotc(&(&h * &x)).re;
            let real = xe.dot(&(&e * &xe));
            assert!((complex - real).abs() <= 1e-12 * complex.abs().max(1.0));
            assert!((e.trace() - 2.0 * h.trace().re).abs() < 1e-12);
            let v = CVec::from_fn(n, |_, _| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
            let outer = SymCoeff::LowRank(embed_outer(&v)).to_dense(2 * n);
            assert!((outer - hermitian_embed(&(&v * v.adjoint())).unwrap()).amax() < 1e-12);
            // Re tr(A X) through the embedded coefficient.
            let w = &x * x.adjoint();
            let coeff = herm_coeff(&h).unwrap();
            let lhs = coeff.inner(&hermitian_embed(&w).unwrap());
            assert!((lhs - (&h * &w).trace().re).abs() < 1e-12);
            assert!(cabs_max(&(extract_hermitian(&hermitian_embed(&w).unwrap()) - &w)) < 1e-14);
        }
    }

    #[test]
    fn lambda_max_small() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for n in [2, 5, 9] {
            let c = random_sym(&mut rng, n);
            let sol = solve(&lambda_max_problem(&c), &SolverOptions::default()).unwrap();
            assert_eq!(sol.status, SolveStatus::Optimal);
            let lmax = c.symmetric_eigenvalues().max();
            assert!((-sol.objective_value - lmax).abs() < 1e-6, "n={n}");
            assert!(sol.objective_value - sol.dual_objective >= -1e-9);
        }
    }

    #[test]
    fn lp_absolute_value() {
        // min t0 s.t. t0 - t1 >= 0, t0 + t1 >= 0
        let mut p = ConicProblem::new(vec![], 2);
        p.objective = LinearFunctional::new().scalar(0, 1.0);
        p.add(LinearFunctional::new().scalar(0, 1.0).scalar(1, -1.0), Relation::Ge, 0.0);
        p.add(LinearFunctional::new().scalar(0, 1.0).scalar(1, 1.0), Relation::Ge, 0.0);
        let sol = solve(&p, &SolverOptions::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!(sol.objective_value.abs() < 1e-6);
    }

    #[test]
    fn lp_with_offset() {
        // min t s.t. t >= x - 3, t >= 3 - x, x = 1  ->  t = 2
        let mut p = ConicProblem::new(vec![], 2);
        p.objective = LinearFunctional::new().scalar(0, 1.0);
        p.add(LinearFunctional::new().scalar(0, 1.0).scalar(1, -1.0), Relation::Ge, -3.0);
        p.add(LinearFunctional::new().scalar(0, 1.0).scalar(1, 1.0), Relation::Ge, 3.0);
        p.add(LinearFunctional::new().scalar(1, 1.0), Relation::Eq, 1.0);
        let sol = solve(&p, &SolverOptions::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((sol.objective_value - 2.0).abs() < 1e-6);
    }

    #[test]
    fn detects_infeasible() {
        // tr(X) <= -1 with X PSD.
        let mut p = ConicProblem::new(vec![3], 0);
        p.add(LinearFunctional::new().block(0, SymCoeff::Identity(1.0)), Relation::Le, -1.0);
        let sol = solve(&p, &SolverOptions::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Infeasible);
    }

    #[test]
    fn detects_unbounded() {
        // min -t s.t. t - tr(X) <= 0
        let mut p = ConicProblem::new(vec![2], 1);
        p.objective = LinearFunctional::new().scalar(0, -1.0);
        p.add(LinearFunctional::new().scalar(0, 1.0).block(0, SymCoeff::Identity(-1.0)), Relation::Le, 0.0);
        let sol = solve(&p, &SolverOptions::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Unbounded);
    }

    #[test]
    fn rejects_bad_input() {
        let mut p = ConicProblem::new(vec![2], 0);
        p.add(LinearFunctional::new().block(0, SymCoeff::Identity(f64::NAN)), Relation::Le, 1.0);
        assert!(matches!(solve(&p, &SolverOptions::default()), Err(ConicError::Input(_))));
        let mut p = ConicProblem::new(vec![2], 0);
        p.add(LinearFunctional::new().block(1, SymCoeff::Identity(1.0)), Relation::Le, 1.0);
        assert!(p.validate().is_err());
    }

    #[test]
    fn scale_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let c = random_sym(&mut rng, 4);
        let base = solve(&lambda_max_problem(&c), &SolverOptions::default()).unwrap();
        let scaled = solve(&lambda_max_problem(&c.scale(7.5)), &SolverOptions::default()).unwrap();
        assert!((scaled.objective_value - 7.5 * base.objective_value).abs() < 1e-5);
        assert!((&scaled.block_values[0] - &base.block_values[0]).amax() < 1e-4);
    }

    #[test]
    fn dump_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut p = ConicProblem::new(vec![3, 2], 1);
        p.objective = LinearFunctional::new().block(0, SymCoeff::Dense(random_sym(&mut rng, 3))).scalar(0, -1.0);
        p.add(
            LinearFunctional::new()
                .block(0, SymCoeff::Identity(1.0))
                .block(1, SymCoeff::LowRank(vec![(2.0, DVector::from_vec(vec![1.0, -1.0]))])),
            Relation::Le,
            4.0,
        );
        p.add(LinearFunctional::new().scalar(0, 1.0), Relation::Ge, -2.5);
        let mut buf = Vec::new();
        p.dump(&mut buf).unwrap();
        let q = ConicProblem::parse_dump(&buf[..]).unwrap();
        assert_eq!(q.blocks, p.blocks);
        assert_eq!(q.constraints.len(), 2);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let xs = vec![random_sym(&mut rng, 3), random_sym(&mut rng, 2)];
        let ts = vec![0.7];
        for (a, b) in p.constraints.iter().zip(&q.constraints) {
            assert_eq!(a.rel, b.rel);
            assert!((a.f.eval(&xs, &ts) - b.f.eval(&xs, &ts)).abs() < 1e-12);
        }
        assert!((p.objective.eval(&xs, &ts) - q.objective.eval(&xs, &ts)).abs() < 1e-12);
        assert!(ConicProblem::parse_dump(&b"conic v1\nblocks 2\nfree 0\nobjective\nb 0 5 0 1\nend\n"[..]).is_err());
    }
}
