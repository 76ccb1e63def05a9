//! Sparse linear program in "user" form: named bounded variables, named
//! linear rows with a sense and right-hand side, and a linear objective that
//! is always minimized.

use std::fmt;

use crate::Scalar;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VarId(pub usize);

impl VarId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RowId(pub usize);

impl RowId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

impl fmt::Display for Sense {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sense::Le => "<=",
            Sense::Ge => ">=",
            Sense::Eq => "=",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Variable<T> {
    pub name: String,
    pub lower: T,
    pub upper: T,
    pub cost: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint<T> {
    pub name: String,
    pub terms: Vec<(VarId, T)>,
    pub sense: Sense,
    pub rhs: T,
}

impl<T: Scalar> Constraint<T> {
    pub fn activity(&self, values: &[T]) -> T {
        self.terms
            .iter()
            .map(|&(v, a)| a * values[v.0])
            .fold(T::zero(), |acc, x| acc + x)
    }

    /// Amount by which `values` violate this row (zero when satisfied).
    pub fn violation(&self, values: &[T]) -> T {
        let lhs = self.activity(values);
        match self.sense {
            Sense::Le => (lhs - self.rhs).max(T::zero()),
            Sense::Ge => (self.rhs - lhs).max(T::zero()),
            Sense::Eq => (lhs - self.rhs).abs(),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ProblemError {
    #[error("constraint `{row}` references undeclared variable index {var}")]
    UndeclaredVariable { row: String, var: usize },
    #[error("non-finite coefficient in constraint `{0}`")]
    NonFiniteCoefficient(String),
    #[error("non-finite or NaN data on variable `{0}`")]
    BadVariable(String),
    #[error("variable `{name}` has crossed bounds [{lower}, {upper}]")]
    CrossedBounds { name: String, lower: f64, upper: f64 },
    #[error("duplicate {kind} name `{name}`")]
    DuplicateName { kind: &'static str, name: String },
}

/// A minimization LP.
#[derive(Debug, Clone, PartialEq)]
pub struct LpProblem<T> {
    pub name: String,
    pub vars: Vec<Variable<T>>,
    pub rows: Vec<Constraint<T>>,
}

impl<T: Scalar> LpProblem<T> {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            vars: Vec::new(),
            rows: Vec::new(),
        }
    }

    pub fn add_var(&mut self, name: impl Into<String>, lower: T, upper: T, cost: T) -> VarId {
        self.vars.push(Variable {
            name: name.into(),
            lower,
            upper,
            cost,
        });
        VarId(self.vars.len() - 1)
    }

    pub fn add_row(
        &mut self,
        name: impl Into<String>,
        terms: Vec<(VarId, T)>,
        sense: Sense,
        rhs: T,
    ) -> RowId {
        self.rows.push(Constraint {
            name: name.into(),
            terms,
            sense,
            rhs,
        });
        RowId(self.rows.len() - 1)
    }

    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn num_nonzeros(&self) -> usize {
        self.rows.iter().map(|r| r.terms.len()).sum()
    }

    pub fn var_by_name(&self, name: &str) -> Option<VarId> {
        self.vars.iter().position(|v| v.name == name).map(VarId)
    }

    /// Checks that every row references declared variables and that no data is NaN.
    /// Infinite bounds are allowed; infinite coefficients, costs and right-hand sides are not.
    pub fn validate(&self) -> Result<(), ProblemError> {
        for v in &self.vars {
            if v.lower.is_nan() || v.upper.is_nan() || !v.cost.is_finite() {
                return Err(ProblemError::BadVariable(v.name.clone()));
            }
            if v.lower > v.upper || v.lower == T::infinity() || v.upper == T::neg_infinity() {
                return Err(ProblemError::CrossedBounds {
                    name: v.name.clone(),
                    lower: v.lower.to_f64_lossy(),
                    upper: v.upper.to_f64_lossy(),
                });
            }
        }
        for r in &self.rows {
            if !r.rhs.is_finite() {
                return Err(ProblemError::NonFiniteCoefficient(r.name.clone()));
            }
            for &(v, a) in &r.terms {
                if v.0 >= self.vars.len() {
                    return Err(ProblemError::UndeclaredVariable {
                        row: r.name.clone(),
                        var: v.0,
                    });
                }
                if !a.is_finite() {
                    return Err(ProblemError::NonFiniteCoefficient(r.name.clone()));
                }
            }
        }
        Ok(())
    }

    /// Like [`validate`](Self::validate), and additionally rejects duplicate names,
    /// which the interchange format cannot represent.
    pub fn validate_names(&self) -> Result<(), ProblemError> {
        self.validate()?;
        let mut seen = std::collections::HashSet::new();
        for v in &self.vars {
            if !seen.insert(v.name.as_str()) {
                return Err(ProblemError::DuplicateName {
                    kind: "variable",
                    name: v.name.clone(),
                });
            }
        }
        seen.clear();
        for r in &self.rows {
            if !seen.insert(r.name.as_str()) {
                return Err(ProblemError::DuplicateName {
                    kind: "row",
                    name: r.name.clone(),
                });
            }
        }
        Ok(())
    }

    pub fn objective_value(&self, values: &[T]) -> T {
        self.vars
            .iter()
            .zip(values)
            .map(|(v, &x)| v.cost * x)
            .fold(T::zero(), |acc, x| acc + x)
    }

    /// Largest bound or row violation of `values`, in absolute units.
    pub fn max_violation(&self, values: &[T]) -> T {
        let bounds = self
            .vars
            .iter()
            .zip(values)
            .map(|(v, &x)| (v.lower - x).max(x - v.upper).max(T::zero()));
        let rows = self.rows.iter().map(|r| r.violation(values));
        bounds.chain(rows).fold(T::zero(), T::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn violation_by_sense() {
        let mut lp = LpProblem::<f64>::new("t");
        let x = lp.add_var("x", 0.0, 10.0, 1.0);
        lp.add_row("le", vec![(x, 1.0)], Sense::Le, 2.0);
        lp.add_row("ge", vec![(x, 1.0)], Sense::Ge, 4.0);
        lp.add_row("eq", vec![(x, 2.0)], Sense::Eq, 6.0);
        let vals = [3.0];
        assert_eq!(lp.rows[0].violation(&vals), 1.0);
        assert_eq!(lp.rows[1].violation(&vals), 1.0);
        assert_eq!(lp.rows[2].violation(&vals), 0.0);
        assert_eq!(lp.max_violation(&vals), 1.0);
        assert_eq!(lp.objective_value(&vals), 3.0);
    }

    #[test]
    fn validate_rejects_bad_rows() {
        let mut lp = LpProblem::<f64>::new("t");
        let x = lp.add_var("x", 0.0, f64::INFINITY, 1.0);
        lp.add_row("r", vec![(VarId(3), 1.0)], Sense::Le, 1.0);
        assert!(matches!(
            lp.validate(),
            Err(ProblemError::UndeclaredVariable { .. })
        ));
        lp.rows[0].terms = vec![(x, f64::NAN)];
        assert!(matches!(
            lp.validate(),
            Err(ProblemError::NonFiniteCoefficient(_))
        ));
        lp.rows[0].terms = vec![(x, 1.0)];
        assert!(lp.validate().is_ok());
        lp.vars[0].lower = 5.0;
        lp.vars[0].upper = 1.0;
        assert!(matches!(lp.validate(), Err(ProblemError::CrossedBounds { .. })));
    }

    #[test]
    fn duplicate_names_rejected_for_interchange() {
        let mut lp = LpProblem::<f64>::new("t");
        lp.add_var("x", 0.0, 1.0, 0.0);
        lp.add_var("x", 0.0, 1.0, 0.0);
        assert!(lp.validate().is_ok());
        assert!(matches!(
            lp.validate_names(),
            Err(ProblemError::DuplicateName { .. })
        ));
    }
}
