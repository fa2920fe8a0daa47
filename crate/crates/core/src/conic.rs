//! Small modeling layer over the clarabel interior-point solver.
//!
//! Constraints are kept in insertion order so that a [`RowId`] maps directly
//! to a slice of the solver's dual vector.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};

use crate::error::{DrroError, Result};

/// Affine expression `Σ coef·x_var + constant`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Lin {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl Lin {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        Lin { terms: Vec::new(), constant: c }
    }

    pub fn var(v: usize) -> Self {
        Lin { terms: vec![(v, 1.0)], constant: 0.0 }
    }

    pub fn term(v: usize, coef: f64) -> Self {
        Lin { terms: vec![(v, coef)], constant: 0.0 }
    }

    pub fn add_term(&mut self, v: usize, coef: f64) -> &mut Self {
        if coef != 0.0 {
            self.terms.push((v, coef));
        }
        self
    }

    pub fn add_const(&mut self, c: f64) -> &mut Self {
        self.constant += c;
        self
    }

    pub fn add_lin(&mut self, other: &Lin, scale: f64) -> &mut Self {
        for &(v, c) in &other.terms {
            self.add_term(v, c * scale);
        }
        self.constant += other.constant * scale;
        self
    }

    pub fn with_term(mut self, v: usize, coef: f64) -> Self {
        self.add_term(v, coef);
        self
    }

    pub fn with_const(mut self, c: f64) -> Self {
        self.constant += c;
        self
    }

    pub fn scaled(&self, s: f64) -> Lin {
        Lin {
            terms: self.terms.iter().map(|&(v, c)| (v, c * s)).collect(),
            constant: self.constant * s,
        }
    }

    pub fn minus(mut self, other: &Lin) -> Lin {
        self.add_lin(other, -1.0);
        self
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|&(v, c)| c * x[v]).sum::<f64>() + self.constant
    }
}

/// Handle to a constraint block: rows `start..start + len` of the stacked system.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RowId {
    pub start: usize,
    pub len: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Cone {
    Zero,
    Nonneg,
    Soc,
    Pow(f64),
}

#[derive(Debug, Clone)]
struct Block {
    cone: Cone,
    // each entry is an expression that must lie in the cone (componentwise)
    exprs: Vec<Lin>,
}

/// Solver tolerances. Defaults: feasibility 1e-8, duality gap 1e-6.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub tol_feas: f64,
    pub tol_gap_abs: f64,
    pub tol_gap_rel: f64,
    pub max_iter: u32,
    pub accept_almost_solved: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol_feas: 1e-8,
            tol_gap_abs: 1e-6,
            tol_gap_rel: 1e-6,
            max_iter: 400,
            accept_almost_solved: true,
        }
    }
}

impl SolverOptions {
    /// Tight settings used where certificates are re-evaluated to ~1e-7.
    pub fn tight() -> Self {
        SolverOptions {
            tol_feas: 1e-9,
            tol_gap_abs: 1e-9,
            tol_gap_rel: 1e-9,
            ..Self::default()
        }
    }
}

/// A convex conic program: minimize `½xᵀPx + cᵀx` over the stacked constraints.
#[derive(Debug, Clone, Default)]
pub struct Model {
    nvars: usize,
    obj: Lin,
    quad: Vec<(usize, usize, f64)>,
    blocks: Vec<Block>,
    nrows: usize,
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub x: Vec<f64>,
    /// Dual multipliers, one per stacked row.
    pub z: Vec<f64>,
    pub objective: f64,
    pub status: SolverStatus,
}

impl Solution {
    pub fn value(&self, e: &Lin) -> f64 {
        e.eval(&self.x)
    }

    pub fn dual(&self, row: RowId) -> &[f64] {
        &self.z[row.start..row.start + row.len]
    }
}

impl Model {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn num_vars(&self) -> usize {
        self.nvars
    }

    pub fn add_var(&mut self) -> usize {
        self.nvars += 1;
        self.nvars - 1
    }

    pub fn add_vars(&mut self, k: usize) -> Vec<usize> {
        (0..k).map(|_| self.add_var()).collect()
    }

    /// Variable constrained to be nonnegative.
    pub fn add_nonneg_var(&mut self) -> usize {
        let v = self.add_var();
        self.add_ge0(Lin::var(v));
        v
    }

    pub fn add_nonneg_vars(&mut self, k: usize) -> Vec<usize> {
        let vs = self.add_vars(k);
        self.push_block(Cone::Nonneg, vs.iter().map(|&v| Lin::var(v)).collect());
        vs
    }

    pub fn set_objective(&mut self, obj: Lin) {
        self.obj = obj;
    }

    pub fn objective(&self) -> &Lin {
        &self.obj
    }

    /// Adds `coef · x_i · x_j` to the objective (`i == j` gives `coef · x_i²`).
    pub fn add_quad_objective(&mut self, i: usize, j: usize, coef: f64) {
        let (a, b) = if i <= j { (i, j) } else { (j, i) };
        if a == b {
            self.quad.push((a, a, 2.0 * coef));
        } else {
            self.quad.push((a, b, coef));
        }
    }

    fn push_block(&mut self, cone: Cone, exprs: Vec<Lin>) -> RowId {
        let id = RowId { start: self.nrows, len: exprs.len() };
        self.nrows += exprs.len();
        self.blocks.push(Block { cone, exprs });
        id
    }

    /// `e ≤ 0`.
    pub fn add_le0(&mut self, e: Lin) -> RowId {
        self.push_block(Cone::Nonneg, vec![e.scaled(-1.0)])
    }

    /// `e ≥ 0`.
    pub fn add_ge0(&mut self, e: Lin) -> RowId {
        self.push_block(Cone::Nonneg, vec![e])
    }

    /// `lhs ≤ rhs`.
    pub fn add_le(&mut self, lhs: Lin, rhs: &Lin) -> RowId {
        self.add_le0(lhs.minus(rhs))
    }

    /// `e = 0`.
    pub fn add_eq0(&mut self, e: Lin) -> RowId {
        self.push_block(Cone::Zero, vec![e])
    }

    /// `‖xs‖₂ ≤ t`.
    pub fn add_soc(&mut self, t: Lin, xs: Vec<Lin>) -> RowId {
        let mut exprs = Vec::with_capacity(xs.len() + 1);
        exprs.push(t);
        exprs.extend(xs);
        self.push_block(Cone::Soc, exprs)
    }

    /// `‖xs‖₂² ≤ a·b` with `a, b ≥ 0`, via `‖(2xs, a − b)‖ ≤ a + b`.
    pub fn add_rsoc(&mut self, a: Lin, b: Lin, xs: Vec<Lin>) -> RowId {
        let mut sum = a.clone();
        sum.add_lin(&b, 1.0);
        let mut diff = a;
        diff.add_lin(&b, -1.0);
        let mut rest: Vec<Lin> = xs.iter().map(|x| x.scaled(2.0)).collect();
        rest.push(diff);
        self.add_soc(sum, rest)
    }

    /// `x^α y^(1−α) ≥ |z|`, `x, y ≥ 0`.
    pub fn add_pow(&mut self, x: Lin, y: Lin, z: Lin, alpha: f64) -> RowId {
        self.push_block(Cone::Pow(alpha), vec![x, y, z])
    }

    pub fn solve(&self, opts: &SolverOptions) -> Result<Solution> {
        let n = self.nvars.max(1);
        let m = self.nrows;
        let mut ai = Vec::new();
        let mut aj = Vec::new();
        let mut av = Vec::new();
        let mut b = Vec::with_capacity(m);
        let mut cones: Vec<SupportedConeT<f64>> = Vec::new();
        let mut row = 0;
        for blk in &self.blocks {
            // each expression e must satisfy e ∈ K, written as A x + s = b with s = e:
            // A = −coef, b = constant
            for e in &blk.exprs {
                for &(v, c) in &e.terms {
                    if c != 0.0 {
                        ai.push(row);
                        aj.push(v);
                        av.push(-c);
                    }
                }
                b.push(e.constant);
                row += 1;
            }
            let len = blk.exprs.len();
            match (blk.cone, cones.last_mut()) {
                (Cone::Zero, Some(SupportedConeT::ZeroConeT(k))) => *k += len,
                (Cone::Nonneg, Some(SupportedConeT::NonnegativeConeT(k))) => *k += len,
                (Cone::Zero, _) => cones.push(SupportedConeT::ZeroConeT(len)),
                (Cone::Nonneg, _) => cones.push(SupportedConeT::NonnegativeConeT(len)),
                (Cone::Soc, _) => cones.push(SupportedConeT::SecondOrderConeT(len)),
                (Cone::Pow(a), _) => cones.push(SupportedConeT::PowerConeT(a)),
            }
        }
        let a = CscMatrix::new_from_triplets(m, n, ai, aj, av);
        let mut q = vec![0.0; n];
        for &(v, c) in &self.obj.terms {
            q[v] += c;
        }
        let (pi, pj, pv): (Vec<_>, Vec<_>, Vec<_>) = {
            let mut pi = Vec::new();
            let mut pj = Vec::new();
            let mut pv = Vec::new();
            for &(i, j, v) in &self.quad {
                pi.push(i);
                pj.push(j);
                pv.push(v);
            }
            (pi, pj, pv)
        };
        let p = CscMatrix::new_from_triplets(n, n, pi, pj, pv);
        let settings = DefaultSettingsBuilder::default()
            .verbose(false)
            .tol_feas(opts.tol_feas)
            .tol_gap_abs(opts.tol_gap_abs)
            .tol_gap_rel(opts.tol_gap_rel)
            .max_iter(opts.max_iter)
            .build()
            .map_err(|e| DrroError::InvalidArgument(format!("solver settings: {e:?}")))?;
        let mut solver = DefaultSolver::new(&p, &q, &a, &b, &cones, settings)
            .map_err(|e| DrroError::InvalidArgument(format!("solver setup: {e:?}")))?;
        solver.solve();
        let sol = &solver.solution;
        match sol.status {
            SolverStatus::Solved => {}
            SolverStatus::AlmostSolved if opts.accept_almost_solved => {}
            SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
                return Err(DrroError::Infeasible("conic program is primal infeasible".into()))
            }
            SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => {
                return Err(DrroError::Unbounded("conic program is dual infeasible".into()))
            }
            other => {
                return Err(DrroError::NumericalFailure {
                    status: format!("{other:?}"),
                    r_prim: sol.r_prim,
                    r_dual: sol.r_dual,
                })
            }
        }
        let mut x = sol.x.clone();
        x.truncate(self.nvars);
        Ok(Solution {
            objective: sol.obj_val + self.obj.constant,
            x,
            z: sol.z.clone(),
            status: sol.status,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lp_with_duals() {
        // min -x - y  s.t. x + y <= 1, x,y >= 0
        let mut m = Model::new();
        let x = m.add_nonneg_var();
        let y = m.add_nonneg_var();
        let r = m.add_le0(Lin::var(x).with_term(y, 1.0).with_const(-1.0));
        m.set_objective(Lin::term(x, -1.0).with_term(y, -1.0));
        let s = m.solve(&SolverOptions::tight()).unwrap();
        assert!((s.objective + 1.0).abs() < 1e-7);
        assert!((s.dual(r)[0] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn rotated_cone() {
        // min a + b s.t. 1 <= a b, gives a = b = 1
        let mut m = Model::new();
        let a = m.add_var();
        let b = m.add_var();
        m.add_rsoc(Lin::var(a), Lin::var(b), vec![Lin::constant(1.0)]);
        m.set_objective(Lin::var(a).with_term(b, 1.0));
        let s = m.solve(&SolverOptions::tight()).unwrap();
        assert!((s.objective - 2.0).abs() < 1e-6);
    }

    #[test]
    fn power_cone() {
        // max z s.t. x^0.5 y^0.5 >= |z|, x = 4, y = 1 -> z = 2
        let mut m = Model::new();
        let v = m.add_vars(3);
        m.add_eq0(Lin::var(v[0]).with_const(-4.0));
        m.add_eq0(Lin::var(v[1]).with_const(-1.0));
        m.add_pow(Lin::var(v[0]), Lin::var(v[1]), Lin::var(v[2]), 0.5);
        m.set_objective(Lin::term(v[2], -1.0));
        let s = m.solve(&SolverOptions::tight()).unwrap();
        assert!((s.x[v[2]] - 2.0).abs() < 1e-6);
    }

    #[test]
    fn quadratic_objective() {
        // min (x-3)^2 = x^2 - 6x + 9
        let mut m = Model::new();
        let x = m.add_var();
        m.add_quad_objective(x, x, 1.0);
        m.set_objective(Lin::term(x, -6.0).with_const(9.0));
        let s = m.solve(&SolverOptions::tight()).unwrap();
        assert!((s.x[x] - 3.0).abs() < 1e-6);
        assert!(s.objective.abs() < 1e-6);
    }

    #[test]
    fn infeasible_and_unbounded() {
        let mut m = Model::new();
        let x = m.add_nonneg_var();
        m.add_le0(Lin::var(x).with_const(1.0));
        assert!(matches!(m.solve(&SolverOptions::default()), Err(DrroError::Infeasible(_))));

        let mut m = Model::new();
        let x = m.add_var();
        m.set_objective(Lin::var(x));
        m.add_le0(Lin::var(x));
        assert!(matches!(m.solve(&SolverOptions::default()), Err(DrroError::Unbounded(_))));
    }
}
