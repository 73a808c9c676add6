//! Small linear-programming layer over HiGHS.
//!
//! Models are always minimised. Row duals follow the convention
//! `dual = d(objective) / d(rhs)`, so a binding `>=` row in a minimisation has
//! a non-negative dual and the dual of an energy balance `supply = demand`
//! is the marginal cost of demand.

use std::fmt::Write as _;
use std::num::NonZeroU32;

use highs::{HighsModelStatus, RowProblem, Sense};

/// Coefficients at or below this magnitude are ignored by the solver.
const SMALL_MATRIX_VALUE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Con(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

impl Con {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
struct Column {
    name: String,
    lower: f64,
    upper: f64,
    cost: f64,
}

#[derive(Clone, Debug)]
struct Row {
    name: String,
    terms: Vec<(usize, f64)>,
    lower: f64,
    upper: f64,
}

#[derive(Clone, Debug, Default)]
pub struct LpModel {
    columns: Vec<Column>,
    rows: Vec<Row>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    /// The solver stopped without a usable answer.
    Failed,
}

#[derive(Clone, Debug)]
pub struct LpSolution {
    pub status: LpStatus,
    pub objective: f64,
    pub primal: Vec<f64>,
    /// Row activities.
    pub activity: Vec<f64>,
    pub duals: Vec<f64>,
    pub reduced_costs: Vec<f64>,
}

impl LpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }

    pub fn value(&self, v: Var) -> f64 {
        self.primal[v.0]
    }

    pub fn dual(&self, c: Con) -> f64 {
        self.duals[c.0]
    }

    fn failed(status: LpStatus) -> Self {
        Self {
            status,
            objective: f64::NAN,
            primal: Vec::new(),
            activity: Vec::new(),
            duals: Vec::new(),
            reduced_costs: Vec::new(),
        }
    }
}

impl LpModel {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn num_vars(&self) -> usize {
        self.columns.len()
    }

    pub fn num_cons(&self) -> usize {
        self.rows.len()
    }

    pub fn add_var(&mut self, name: impl Into<String>, lower: f64, upper: f64, cost: f64) -> Var {
        self.columns.push(Column {
            name: name.into(),
            lower,
            upper,
            cost,
        });
        Var(self.columns.len() - 1)
    }

    pub fn set_cost(&mut self, v: Var, cost: f64) {
        self.columns[v.0].cost = cost;
    }

    pub fn cost(&self, v: Var) -> f64 {
        self.columns[v.0].cost
    }

    pub fn bounds(&self, v: Var) -> (f64, f64) {
        (self.columns[v.0].lower, self.columns[v.0].upper)
    }

    pub fn set_bounds(&mut self, v: Var, lower: f64, upper: f64) {
        self.columns[v.0].lower = lower;
        self.columns[v.0].upper = upper;
    }

    /// `lower <= sum(terms) <= upper`; use infinities for one-sided rows.
    pub fn add_range(&mut self, name: impl Into<String>, terms: &[(Var, f64)], lower: f64, upper: f64) -> Con {
        self.rows.push(Row {
            name: name.into(),
            terms: terms.iter().map(|&(v, a)| (v.0, a)).collect(),
            lower,
            upper,
        });
        Con(self.rows.len() - 1)
    }

    pub fn add_le(&mut self, name: impl Into<String>, terms: &[(Var, f64)], rhs: f64) -> Con {
        self.add_range(name, terms, f64::NEG_INFINITY, rhs)
    }

    pub fn add_ge(&mut self, name: impl Into<String>, terms: &[(Var, f64)], rhs: f64) -> Con {
        self.add_range(name, terms, rhs, f64::INFINITY)
    }

    pub fn add_eq(&mut self, name: impl Into<String>, terms: &[(Var, f64)], rhs: f64) -> Con {
        self.add_range(name, terms, rhs, rhs)
    }

    pub fn con_bounds(&self, c: Con) -> (f64, f64) {
        (self.rows[c.0].lower, self.rows[c.0].upper)
    }

    pub fn var_name(&self, v: Var) -> &str {
        &self.columns[v.0].name
    }

    pub fn con_name(&self, c: Con) -> &str {
        &self.rows[c.0].name
    }

    fn check(&self) -> Result<(), String> {
        for c in &self.columns {
            if !c.cost.is_finite() || c.lower.is_nan() || c.upper.is_nan() || c.lower == f64::INFINITY {
                return Err(format!("variable {} has invalid data", c.name));
            }
        }
        for r in &self.rows {
            if r.terms.iter().any(|&(v, a)| v >= self.columns.len() || !a.is_finite()) {
                return Err(format!("constraint {} has invalid coefficients", r.name));
            }
            if r.lower.is_nan() || r.upper.is_nan() {
                return Err(format!("constraint {} has a NaN bound", r.name));
            }
        }
        Ok(())
    }

    /// Objective value of a candidate point.
    pub fn objective_at(&self, x: &[f64]) -> f64 {
        self.columns.iter().zip(x).map(|(c, v)| c.cost * v).sum()
    }

    /// Largest bound or row violation of a candidate point.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (c, &v) in self.columns.iter().zip(x) {
            worst = worst.max(c.lower - v).max(v - c.upper);
        }
        for r in &self.rows {
            let a: f64 = r.terms.iter().map(|&(j, coef)| coef * x[j]).sum();
            worst = worst.max(r.lower - a).max(a - r.upper);
        }
        worst
    }

    /// Objective of the dual evaluated at the solver's duals.
    pub fn dual_objective(&self, sol: &LpSolution) -> f64 {
        let pick = |y: f64, lo: f64, hi: f64| {
            if y > 0.0 {
                y * lo
            } else if y < 0.0 {
                y * hi
            } else {
                0.0
            }
        };
        let rows: f64 = self
            .rows
            .iter()
            .zip(&sol.duals)
            .map(|(r, &y)| pick(y, r.lower, r.upper))
            .sum();
        let cols: f64 = self
            .columns
            .iter()
            .zip(&sol.reduced_costs)
            .map(|(c, &d)| pick(d, c.lower, c.upper))
            .sum();
        rows + cols
    }

    pub fn solve(&self) -> LpSolution {
        if let Err(msg) = self.check() {
            log::error!("refusing to solve malformed LP: {msg}");
            return LpSolution::failed(LpStatus::Failed);
        }
        let mut pb = RowProblem::default();
        let cols: Vec<highs::Col> = self
            .columns
            .iter()
            .map(|c| pb.add_column(c.cost, c.lower..=c.upper))
            .collect();
        for r in &self.rows {
            // HiGHS drops these itself, with a warning per model.
            let terms = r
                .terms
                .iter()
                .filter(|&&(_, a)| a.abs() > SMALL_MATRIX_VALUE)
                .map(|&(j, a)| (cols[j], a));
            pb.add_row(r.lower..=r.upper, terms);
        }
        let mut model = pb.optimise(Sense::Minimise);
        model.make_quiet();
        model.set_threads(NonZeroU32::MIN);
        model.set_option("primal_feasibility_tolerance", 1e-9);
        model.set_option("dual_feasibility_tolerance", 1e-9);
        let solved = match model.try_solve() {
            Ok(s) => s,
            Err(e) => {
                log::error!("HiGHS failed: {e:?}");
                return LpSolution::failed(LpStatus::Failed);
            }
        };
        let status = match solved.status() {
            HighsModelStatus::Optimal => LpStatus::Optimal,
            HighsModelStatus::ModelEmpty if self.columns.is_empty() => LpStatus::Optimal,
            HighsModelStatus::Infeasible => LpStatus::Infeasible,
            HighsModelStatus::Unbounded | HighsModelStatus::UnboundedOrInfeasible => {
                LpStatus::Unbounded
            }
            other => {
                log::error!("HiGHS stopped with status {other:?}");
                LpStatus::Failed
            }
        };
        if status != LpStatus::Optimal {
            return LpSolution::failed(status);
        }
        let sol = solved.get_solution();
        LpSolution {
            status,
            objective: solved.objective_value(),
            primal: sol.columns().to_vec(),
            activity: sol.rows().to_vec(),
            duals: sol.dual_rows().to_vec(),
            reduced_costs: sol.dual_columns().to_vec(),
        }
    }

    /// CPLEX LP text rendering, for cross-checking with other solvers.
    pub fn to_lp_format(&self) -> String {
        let name = |j: usize| format!("x{j}_{}", sanitize(&self.columns[j].name));
        let mut out = String::from("\\ generated model\nMinimize\n obj:");
        let mut any = false;
        for (j, c) in self.columns.iter().enumerate() {
            if c.cost != 0.0 {
                let _ = write!(out, " {:+} {}", c.cost, name(j));
                any = true;
            }
        }
        if !any {
            out.push_str(" 0");
        }
        out.push_str("\nSubject To\n");
        for (i, r) in self.rows.iter().enumerate() {
            let mut lhs = String::new();
            for &(j, a) in &r.terms {
                let _ = write!(lhs, " {:+} {}", a, name(j));
            }
            if lhs.is_empty() {
                lhs.push_str(" 0 x_dummy");
            }
            let base = format!("c{i}_{}", sanitize(&r.name));
            match (r.lower.is_finite(), r.upper.is_finite()) {
                (true, true) if r.lower == r.upper => {
                    let _ = writeln!(out, " {base}:{lhs} = {}", r.lower);
                }
                (true, true) => {
                    let _ = writeln!(out, " {base}_lo:{lhs} >= {}", r.lower);
                    let _ = writeln!(out, " {base}_hi:{lhs} <= {}", r.upper);
                }
                (true, false) => {
                    let _ = writeln!(out, " {base}:{lhs} >= {}", r.lower);
                }
                (false, true) => {
                    let _ = writeln!(out, " {base}:{lhs} <= {}", r.upper);
                }
                (false, false) => {}
            }
        }
        out.push_str("Bounds\n");
        for (j, c) in self.columns.iter().enumerate() {
            let lo = if c.lower.is_finite() { c.lower.to_string() } else { "-inf".into() };
            let hi = if c.upper.is_finite() { c.upper.to_string() } else { "+inf".into() };
            let _ = writeln!(out, " {lo} <= {} <= {hi}", name(j));
        }
        out.push_str("End\n");
        out
    }
}

fn sanitize(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '_' { c } else { '_' })
        .collect()
}
