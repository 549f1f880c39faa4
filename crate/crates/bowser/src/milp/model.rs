use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    Continuous,
    Binary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

/// Handle into a model's variable table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct VarId(pub(crate) usize);

impl VarId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("duplicate variable name `{0}`")]
    DuplicateVariable(String),
    #[error("duplicate constraint name `{0}`")]
    DuplicateConstraint(String),
    #[error("binary variable `{name}` needs bounds within [0, 1], got [{lb}, {ub}]")]
    BadBinaryBounds { name: String, lb: f64, ub: f64 },
    #[error("variable `{name}` has crossing bounds [{lb}, {ub}]")]
    CrossingBounds { name: String, lb: f64, ub: f64 },
}

#[derive(Debug, Clone)]
pub struct Variable {
    pub name: String,
    pub lb: f64,
    pub ub: f64,
    pub kind: VarKind,
}

#[derive(Debug, Clone)]
pub struct Constraint {
    pub name: String,
    pub terms: Vec<(VarId, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

/// A minimization MILP: variables with bounds and integrality, sparse linear
/// constraints, and a sparse linear objective.
#[derive(Debug, Clone, Default)]
pub struct MilpModel {
    vars: Vec<Variable>,
    cons: Vec<Constraint>,
    objective: Vec<(VarId, f64)>,
    by_name: HashMap<String, VarId>,
    con_names: HashMap<String, usize>,
}

impl MilpModel {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_var(
        &mut self,
        name: impl Into<String>,
        lb: f64,
        ub: f64,
        kind: VarKind,
    ) -> Result<VarId, ModelError> {
        let name = name.into();
        if self.by_name.contains_key(&name) {
            return Err(ModelError::DuplicateVariable(name));
        }
        if kind == VarKind::Binary && !(lb >= 0.0 && ub <= 1.0) {
            return Err(ModelError::BadBinaryBounds { name, lb, ub });
        }
        if lb > ub {
            return Err(ModelError::CrossingBounds { name, lb, ub });
        }
        let id = VarId(self.vars.len());
        self.by_name.insert(name.clone(), id);
        self.vars.push(Variable { name, lb, ub, kind });
        Ok(id)
    }

    pub fn add_constraint(
        &mut self,
        name: impl Into<String>,
        terms: Vec<(VarId, f64)>,
        sense: Sense,
        rhs: f64,
    ) -> Result<usize, ModelError> {
        let name = name.into();
        if self.con_names.contains_key(&name) {
            return Err(ModelError::DuplicateConstraint(name));
        }
        debug_assert!(terms.iter().all(|(v, _)| v.0 < self.vars.len()));
        let idx = self.cons.len();
        self.con_names.insert(name.clone(), idx);
        self.cons.push(Constraint { name, terms, sense, rhs });
        Ok(idx)
    }

    /// Adds `coef * var` to the objective (coefficients accumulate).
    pub fn add_objective_term(&mut self, var: VarId, coef: f64) {
        if coef == 0.0 {
            return;
        }
        if let Some(entry) = self.objective.iter_mut().find(|(v, _)| *v == var) {
            entry.1 += coef;
        } else {
            self.objective.push((var, coef));
        }
    }

    pub fn var(&self, id: VarId) -> &Variable {
        &self.vars[id.0]
    }

    /// Tightens or relocates a variable's lower bound (pins and branching
    /// fixtures); stays within [0, 1] for binaries by construction of use.
    pub fn set_var_lb(&mut self, id: VarId, lb: f64) {
        self.vars[id.0].lb = lb;
    }

    pub fn set_var_ub(&mut self, id: VarId, ub: f64) {
        self.vars[id.0].ub = ub;
    }

    pub fn var_by_name(&self, name: &str) -> Option<VarId> {
        self.by_name.get(name).copied()
    }

    pub fn vars(&self) -> &[Variable] {
        &self.vars
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.cons
    }

    pub fn objective(&self) -> &[(VarId, f64)] {
        &self.objective
    }

    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.cons.len()
    }

    /// Objective value of an assignment indexed by variable.
    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().map(|&(v, c)| c * x[v.0]).sum()
    }

    /// Largest constraint violation and bound violation of an assignment.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst = 0.0f64;
        for (i, v) in self.vars.iter().enumerate() {
            worst = worst.max(v.lb - x[i]).max(x[i] - v.ub);
        }
        for c in &self.cons {
            let lhs: f64 = c.terms.iter().map(|&(v, a)| a * x[v.0]).sum();
            let viol = match c.sense {
                Sense::Le => lhs - c.rhs,
                Sense::Ge => c.rhs - lhs,
                Sense::Eq => (lhs - c.rhs).abs(),
            };
            worst = worst.max(viol);
        }
        worst
    }
}
