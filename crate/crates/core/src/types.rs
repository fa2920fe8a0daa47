//! Domain types shared across the solvers.

use std::io::Read;

use crate::conic::{Lin, Model, SolverOptions};
use crate::error::{invalid, DrroError, Result};

/// Ground norm of the transport cost.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Norm {
    L1,
    L2,
    Linf,
}

impl Norm {
    pub fn eval(&self, v: &[f64]) -> f64 {
        match self {
            Norm::L1 => v.iter().map(|x| x.abs()).sum(),
            Norm::L2 => v.iter().map(|x| x * x).sum::<f64>().sqrt(),
            Norm::Linf => v.iter().fold(0.0, |m, x| m.max(x.abs())),
        }
    }

    pub fn dual(&self) -> Norm {
        match self {
            Norm::L1 => Norm::Linf,
            Norm::L2 => Norm::L2,
            Norm::Linf => Norm::L1,
        }
    }

    /// Adds constraints enforcing `‖v‖ ≤ bound` to the model.
    pub fn add_bound(&self, m: &mut Model, bound: Lin, v: Vec<Lin>) {
        match self {
            Norm::L2 => {
                m.add_soc(bound, v);
            }
            Norm::Linf => {
                for e in v {
                    m.add_le(e.clone(), &bound);
                    m.add_le(e.scaled(-1.0), &bound);
                }
            }
            Norm::L1 => {
                if v.len() == 1 {
                    let e = v.into_iter().next().unwrap();
                    m.add_le(e.clone(), &bound);
                    m.add_le(e.scaled(-1.0), &bound);
                    return;
                }
                let mut total = Lin::zero();
                for e in v {
                    let a = m.add_var();
                    m.add_le(e.clone(), &Lin::var(a));
                    m.add_le(e.scaled(-1.0), &Lin::var(a));
                    total.add_term(a, 1.0);
                }
                m.add_le(total, &bound);
            }
        }
    }
}

/// Type-p Wasserstein ball around the empirical measure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WassersteinBall {
    pub p: f64,
    pub norm: Norm,
    pub delta: f64,
}

impl WassersteinBall {
    pub fn new(p: f64, norm: Norm, delta: f64) -> Result<Self> {
        if !(p >= 1.0) || !p.is_finite() {
            return invalid(format!("Wasserstein order must be finite and >= 1, got {p}"));
        }
        if !(delta >= 0.0) || !delta.is_finite() {
            return invalid(format!("radius must be finite and >= 0, got {delta}"));
        }
        Ok(WassersteinBall { p, norm, delta })
    }

    /// Same order and norm with a different radius.
    pub fn with_delta(&self, delta: f64) -> Result<Self> {
        Self::new(self.p, self.norm, delta)
    }

    /// Conjugate exponent `p/(p−1)`; infinite for `p = 1`.
    pub fn conjugate(&self) -> f64 {
        if self.p == 1.0 {
            f64::INFINITY
        } else {
            self.p / (self.p - 1.0)
        }
    }
}

/// `(q−1)^(q−1) / q^q`, the constant in the conjugate of `λ‖·‖^p`.
pub fn phi(q: f64) -> f64 {
    (q - 1.0).powf(q - 1.0) / q.powf(q)
}

/// `{x | Mx ≤ w}`. An empty row list is the whole space.
#[derive(Debug, Clone, PartialEq)]
pub struct Polyhedron {
    dim: usize,
    m: Vec<Vec<f64>>,
    w: Vec<f64>,
}

impl Polyhedron {
    /// Builds the polyhedron and checks nonemptiness with a feasibility LP.
    pub fn new(dim: usize, m: Vec<Vec<f64>>, w: Vec<f64>) -> Result<Self> {
        if m.len() != w.len() {
            return invalid("row count of M differs from length of w");
        }
        if m.iter().any(|r| r.len() != dim) {
            return invalid("row of M has wrong dimension");
        }
        if m.iter().flatten().chain(w.iter()).any(|v| !v.is_finite()) {
            return invalid("polyhedron data must be finite");
        }
        let poly = Polyhedron { dim, m, w };
        if !poly.m.is_empty() {
            let mut model = Model::new();
            let x = model.add_vars(dim);
            for (row, &wj) in poly.m.iter().zip(&poly.w) {
                model.add_le0(poly.row_expr(row, &x).with_const(-wj));
            }
            match model.solve(&SolverOptions::default()) {
                Ok(_) => {}
                Err(DrroError::Infeasible(_)) => {
                    return Err(DrroError::Infeasible("polyhedron is empty".into()))
                }
                Err(e) => return Err(e),
            }
        }
        Ok(poly)
    }

    pub fn full(dim: usize) -> Self {
        Polyhedron { dim, m: Vec::new(), w: Vec::new() }
    }

    /// The nonnegative orthant.
    pub fn nonneg(dim: usize) -> Self {
        let m = (0..dim)
            .map(|j| {
                let mut r = vec![0.0; dim];
                r[j] = -1.0;
                r
            })
            .collect();
        Polyhedron { dim, m, w: vec![0.0; dim] }
    }

    /// Axis-aligned box; infinite bounds are skipped.
    pub fn boxed(lo: &[f64], hi: &[f64]) -> Result<Self> {
        if lo.len() != hi.len() {
            return invalid("box bounds differ in length");
        }
        let dim = lo.len();
        let mut m = Vec::new();
        let mut w = Vec::new();
        for j in 0..dim {
            if lo[j] > hi[j] {
                return Err(DrroError::Infeasible(format!("box bound {j}: lo > hi")));
            }
            if lo[j].is_finite() {
                let mut r = vec![0.0; dim];
                r[j] = -1.0;
                m.push(r);
                w.push(-lo[j]);
            }
            if hi[j].is_finite() {
                let mut r = vec![0.0; dim];
                r[j] = 1.0;
                m.push(r);
                w.push(hi[j]);
            }
        }
        Ok(Polyhedron { dim, m, w })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.m
    }

    pub fn rhs(&self) -> &[f64] {
        &self.w
    }

    pub fn num_rows(&self) -> usize {
        self.m.len()
    }

    pub fn is_full_space(&self) -> bool {
        self.m.is_empty()
    }

    /// Returns a copy with one extra half-space `aᵀx ≤ b` (no emptiness check).
    pub fn with_cut(&self, a: Vec<f64>, b: f64) -> Self {
        let mut out = self.clone();
        out.m.push(a);
        out.w.push(b);
        out
    }

    /// `Σ_j row_j · x_j` as an expression over model variables `x`.
    pub fn row_expr(&self, row: &[f64], x: &[usize]) -> Lin {
        let mut e = Lin::zero();
        for (j, &c) in row.iter().enumerate() {
            e.add_term(x[j], c);
        }
        e
    }

    /// Adds `x ∈ self` for model variables `x`.
    pub fn constrain(&self, model: &mut Model, x: &[usize]) {
        for (row, &wj) in self.m.iter().zip(&self.w) {
            model.add_le0(self.row_expr(row, x).with_const(-wj));
        }
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        self.m
            .iter()
            .zip(&self.w)
            .all(|(r, &wj)| dot(r, x) <= wj + tol * (1.0 + wj.abs()))
    }

    /// Whether `dir` lies in the recession cone `{y | My ≤ 0}`.
    pub fn is_recession_direction(&self, dir: &[f64], tol: f64) -> bool {
        let scale = dir.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
        self.m.iter().all(|r| dot(r, dir) <= tol * scale)
    }

    /// Coordinatewise bounds `(lo, hi)`; entries are infinite where unbounded.
    pub fn bounding_box(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut lo = vec![f64::NEG_INFINITY; self.dim];
        let mut hi = vec![f64::INFINITY; self.dim];
        if self.m.is_empty() {
            return Ok((lo, hi));
        }
        if let Some((l, h)) = self.axis_box() {
            return Ok((l, h));
        }
        for j in 0..self.dim {
            for sign in [1.0, -1.0] {
                let mut model = Model::new();
                let x = model.add_vars(self.dim);
                self.constrain(&mut model, &x);
                model.set_objective(Lin::term(x[j], sign));
                match model.solve(&SolverOptions::default()) {
                    Ok(s) => {
                        if sign > 0.0 {
                            lo[j] = s.x[x[j]];
                        } else {
                            hi[j] = s.x[x[j]];
                        }
                    }
                    Err(DrroError::Unbounded(_)) => {}
                    Err(e) => return Err(e),
                }
            }
        }
        Ok((lo, hi))
    }

    /// Bounds when every row has a single nonzero, else `None`.
    fn axis_box(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        let mut lo = vec![f64::NEG_INFINITY; self.dim];
        let mut hi = vec![f64::INFINITY; self.dim];
        for (r, &wj) in self.m.iter().zip(&self.w) {
            let nz: Vec<usize> = (0..self.dim).filter(|&j| r[j] != 0.0).collect();
            if nz.len() != 1 {
                return None;
            }
            let j = nz[0];
            let b = wj / r[j];
            if r[j] > 0.0 {
                hi[j] = hi[j].min(b);
            } else {
                lo[j] = lo[j].max(b);
            }
        }
        Some((lo, hi))
    }

    /// Euclidean projection onto the polyhedron.
    pub fn project(&self, y: &[f64]) -> Result<Vec<f64>> {
        if y.len() != self.dim {
            return invalid("projection point has wrong dimension");
        }
        if self.contains(y, 0.0) {
            return Ok(y.to_vec());
        }
        if let Some((lo, hi)) = self.axis_box() {
            return Ok(y.iter().enumerate().map(|(j, &v)| v.max(lo[j]).min(hi[j])).collect());
        }
        let mut model = Model::new();
        let x = model.add_vars(self.dim);
        self.constrain(&mut model, &x);
        let mut obj = Lin::zero();
        for j in 0..self.dim {
            model.add_quad_objective(x[j], x[j], 1.0);
            obj.add_term(x[j], -2.0 * y[j]);
        }
        model.set_objective(obj);
        let s = model.solve(&SolverOptions::tight())?;
        Ok(x.iter().map(|&v| s.x[v]).collect())
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Loss `ℓ(θ,x) = max_k a_kᵀx + b_kᵀθ + c_k + (d_k⊙θ)ᵀx`.
#[derive(Debug, Clone, PartialEq)]
pub struct MaxAffineLoss {
    a: Vec<Vec<f64>>,
    b: Vec<Vec<f64>>,
    c: Vec<f64>,
    d: Vec<Vec<f64>>,
    n: usize,
    dim: usize,
}

impl MaxAffineLoss {
    pub fn new(
        a: Vec<Vec<f64>>,
        b: Vec<Vec<f64>>,
        c: Vec<f64>,
        d: Option<Vec<Vec<f64>>>,
    ) -> Result<Self> {
        let k = a.len();
        if k == 0 {
            return invalid("max-affine loss needs at least one piece");
        }
        if b.len() != k || c.len() != k {
            return invalid("A, B and c must have the same number of rows");
        }
        let n = a[0].len();
        let dim = b[0].len();
        if a.iter().any(|r| r.len() != n) || b.iter().any(|r| r.len() != dim) {
            return invalid("ragged coefficient matrix");
        }
        let d = d.unwrap_or_else(|| vec![vec![0.0; n]; k]);
        if d.len() != k || d.iter().any(|r| r.len() != n) {
            return invalid("D must be K x n");
        }
        let bilinear = d.iter().flatten().any(|&v| v != 0.0);
        if bilinear && dim != n {
            return invalid("bilinear terms require decision and randomness dimensions to match");
        }
        if a.iter().chain(&b).chain(&d).flatten().chain(&c).any(|v| !v.is_finite()) {
            return invalid("loss coefficients must be finite");
        }
        Ok(MaxAffineLoss { a, b, c, d, n, dim })
    }

    pub fn num_pieces(&self) -> usize {
        self.a.len()
    }

    /// Dimension of the randomness `x`.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Dimension of the decision `θ`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn a(&self) -> &[Vec<f64>] {
        &self.a
    }

    pub fn b(&self) -> &[Vec<f64>] {
        &self.b
    }

    pub fn c(&self) -> &[f64] {
        &self.c
    }

    pub fn d(&self) -> &[Vec<f64>] {
        &self.d
    }

    pub fn has_bilinear(&self) -> bool {
        self.d.iter().flatten().any(|&v| v != 0.0)
    }

    /// Slope of piece `k` in `x` at decision `θ`: `a_k + d_k⊙θ`.
    pub fn slope(&self, k: usize, theta: &[f64]) -> Vec<f64> {
        if self.has_bilinear() {
            (0..self.n).map(|j| self.a[k][j] + self.d[k][j] * theta[j]).collect()
        } else {
            self.a[k].clone()
        }
    }

    /// Intercept of piece `k` at decision `θ`: `b_kᵀθ + c_k`.
    pub fn intercept(&self, k: usize, theta: &[f64]) -> f64 {
        dot(&self.b[k], theta) + self.c[k]
    }

    pub fn piece(&self, k: usize, theta: &[f64], x: &[f64]) -> f64 {
        dot(&self.slope(k, theta), x) + self.intercept(k, theta)
    }

    fn check(&self, theta: &[f64], x: &[f64]) -> Result<()> {
        if theta.len() != self.dim || x.len() != self.n {
            return invalid(format!(
                "expected theta of length {} and x of length {}, got {} and {}",
                self.dim,
                self.n,
                theta.len(),
                x.len()
            ));
        }
        Ok(())
    }

    pub fn eval(&self, theta: &[f64], x: &[f64]) -> Result<f64> {
        self.check(theta, x)?;
        Ok(self.eval_unchecked(theta, x))
    }

    pub(crate) fn eval_unchecked(&self, theta: &[f64], x: &[f64]) -> f64 {
        (0..self.num_pieces())
            .map(|k| self.piece(k, theta, x))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Smallest index of a maximizing piece.
    pub fn argmax(&self, theta: &[f64], x: &[f64]) -> usize {
        let mut best = 0;
        let mut val = f64::NEG_INFINITY;
        for k in 0..self.num_pieces() {
            let v = self.piece(k, theta, x);
            if v > val {
                val = v;
                best = k;
            }
        }
        best
    }

    /// `(1/N) Σ_i ℓ(θ, ξ̂_i)`.
    pub fn empirical_mean(&self, theta: &[f64], data: &EmpiricalDataset) -> Result<f64> {
        if data.dim() != self.n {
            return invalid("dataset dimension differs from loss");
        }
        if theta.len() != self.dim {
            return invalid("decision dimension differs from loss");
        }
        Ok(data.points().iter().map(|x| self.eval_unchecked(theta, x)).sum::<f64>()
            / data.len() as f64)
    }
}

/// Evaluates `ℓ(θ, x)`.
pub fn eval_loss(loss: &MaxAffineLoss, theta: &[f64], x: &[f64]) -> Result<f64> {
    loss.eval(theta, x)
}

/// `Σ_j w_j ℓ(θ, x_j)` over a discrete distribution.
pub fn eval_expected_loss(
    loss: &MaxAffineLoss,
    theta: &[f64],
    dist: &DiscreteDistribution,
) -> Result<f64> {
    let mut total = 0.0;
    for (x, &w) in dist.atoms().iter().zip(dist.weights()) {
        total += w * loss.eval(theta, x)?;
    }
    Ok(total)
}

/// Samples `ξ̂_1..ξ̂_N`, each with weight `1/N`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalDataset {
    points: Vec<Vec<f64>>,
}

impl EmpiricalDataset {
    pub fn new(points: Vec<Vec<f64>>) -> Result<Self> {
        if points.is_empty() {
            return invalid("dataset needs at least one point");
        }
        let n = points[0].len();
        if n == 0 || points.iter().any(|p| p.len() != n) {
            return invalid("dataset points must share a nonzero dimension");
        }
        if points.iter().flatten().any(|v| !v.is_finite()) {
            return invalid("dataset contains non-finite values");
        }
        Ok(EmpiricalDataset { points })
    }

    pub fn from_scalars(xs: &[f64]) -> Result<Self> {
        Self::new(xs.iter().map(|&x| vec![x]).collect())
    }

    /// Checks that every sample lies in `support`.
    pub fn with_support(self, support: &Polyhedron) -> Result<Self> {
        if support.dim() != self.dim() {
            return invalid("support dimension differs from data");
        }
        if let Some(i) = self.points.iter().position(|p| !support.contains(p, 1e-9)) {
            return invalid(format!("sample {i} lies outside the support"));
        }
        Ok(self)
    }

    /// Reads one sample per CSV row.
    pub fn from_csv<R: Read>(reader: R, has_header: bool) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(has_header)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut points = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| DrroError::InvalidArgument(format!("csv row {i}: {e}")))?;
            let row: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse).collect();
            points.push(
                row.map_err(|e| DrroError::InvalidArgument(format!("csv row {i}: {e}")))?,
            );
        }
        Self::new(points)
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.points.iter().map(|p| p[j]).collect()
    }

    pub fn mean(&self) -> Vec<f64> {
        let n = self.len() as f64;
        let mut m = vec![0.0; self.dim()];
        for p in &self.points {
            for (mj, v) in m.iter_mut().zip(p) {
                *mj += v / n;
            }
        }
        m
    }

    pub fn to_distribution(&self) -> DiscreteDistribution {
        let w = 1.0 / self.len() as f64;
        DiscreteDistribution {
            atoms: self.points.clone(),
            weights: vec![w; self.len()],
        }
    }
}

/// Finitely supported probability measure.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDistribution {
    atoms: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

impl DiscreteDistribution {
    pub fn new(atoms: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        if atoms.len() != weights.len() {
            return invalid("atom count differs from weight count");
        }
        if atoms.is_empty() {
            return invalid("distribution needs at least one atom");
        }
        let n = atoms[0].len();
        if atoms.iter().any(|a| a.len() != n) {
            return invalid("atoms must share a dimension");
        }
        if weights.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
            return invalid("weights must be finite and nonnegative");
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return invalid(format!("weights sum to {total}, not 1"));
        }
        Ok(DiscreteDistribution { atoms, weights })
    }

    pub fn dirac(x: Vec<f64>) -> Self {
        DiscreteDistribution { atoms: vec![x], weights: vec![1.0] }
    }

    pub fn atoms(&self) -> &[Vec<f64>] {
        &self.atoms
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn dim(&self) -> usize {
        self.atoms[0].len()
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// Drops atoms with zero weight.
    pub fn pruned(&self) -> Self {
        let (atoms, weights) = self
            .atoms
            .iter()
            .zip(&self.weights)
            .filter(|(_, &w)| w > 0.0)
            .map(|(a, &w)| (a.clone(), w))
            .unzip();
        DiscreteDistribution { atoms, weights }
    }

    pub fn expectation(&self, f: impl Fn(&[f64]) -> f64) -> f64 {
        self.atoms.iter().zip(&self.weights).map(|(a, w)| w * f(a)).sum()
    }
}

/// Optimal point of the finite worst-case expectation program.
#[derive(Debug, Clone, PartialEq)]
pub struct WorstCaseSolution {
    pub value: f64,
    /// `N × K`, rows sum to one.
    pub gamma: Vec<Vec<f64>>,
    /// `N × K` displacement vectors.
    pub q: Vec<Vec<Vec<f64>>>,
    /// Multiplier of the transport budget (zero at `δ = 0`).
    pub lambda: f64,
}

impl WorstCaseSolution {
    /// `(1/N) ΣΣ γ_ik ‖q_ik/γ_ik‖^p`, with the `γ = 0` terms read as their limit.
    pub fn transport_cost(&self, ball: &WassersteinBall) -> f64 {
        let n = self.gamma.len() as f64;
        let mut total = 0.0;
        for (gi, qi) in self.gamma.iter().zip(&self.q) {
            for (&g, q) in gi.iter().zip(qi) {
                let len = ball.norm.eval(q);
                if len == 0.0 {
                    continue;
                }
                if ball.p == 1.0 {
                    total += len;
                } else if g <= 0.0 {
                    return f64::INFINITY;
                } else {
                    total += g * (len / g).powf(ball.p);
                }
            }
        }
        total / n
    }
}
