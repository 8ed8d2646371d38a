//! Backend-agnostic optimization models.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VarId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VarKind {
    Continuous,
    Binary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    pub kind: VarKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RowSense {
    Le,
    Ge,
    Eq,
}

/// `Σ coef·var + Σ coef·var·var  (sense)  rhs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub name: String,
    pub terms: Vec<(VarId, f64)>,
    pub bilinear: Vec<(VarId, VarId, f64)>,
    pub sense: RowSense,
    pub rhs: f64,
}

impl Constraint {
    pub fn linear(name: impl Into<String>, terms: Vec<(VarId, f64)>, sense: RowSense, rhs: f64) -> Self {
        Constraint {
            name: name.into(),
            terms,
            bilinear: Vec::new(),
            sense,
            rhs,
        }
    }

    pub fn is_bilinear(&self) -> bool {
        !self.bilinear.is_empty()
    }

    /// Left-hand side evaluated at a full assignment.
    pub fn activity(&self, values: &[f64]) -> f64 {
        let lin: f64 = self.terms.iter().map(|(v, c)| c * values[v.0]).sum();
        let quad: f64 = self
            .bilinear
            .iter()
            .map(|(a, b, c)| c * values[a.0] * values[b.0])
            .sum();
        lin + quad
    }

    /// Amount by which the row is violated (0 when satisfied).
    pub fn violation(&self, values: &[f64]) -> f64 {
        let lhs = self.activity(values);
        match self.sense {
            RowSense::Le => (lhs - self.rhs).max(0.0),
            RowSense::Ge => (self.rhs - lhs).max(0.0),
            RowSense::Eq => (lhs - self.rhs).abs(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum ObjectiveSense {
    #[default]
    Minimize,
    Maximize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Objective {
    pub sense: ObjectiveSense,
    pub terms: Vec<(VarId, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct OptModel {
    pub name: String,
    pub variables: Vec<Variable>,
    pub constraints: Vec<Constraint>,
    pub objective: Objective,
}

impl OptModel {
    pub fn new(name: impl Into<String>) -> Self {
        OptModel {
            name: name.into(),
            ..Default::default()
        }
    }

    pub fn add_continuous(&mut self, name: impl Into<String>, lower: f64, upper: f64) -> VarId {
        self.variables.push(Variable {
            name: name.into(),
            lower,
            upper,
            kind: VarKind::Continuous,
        });
        VarId(self.variables.len() - 1)
    }

    pub fn add_binary(&mut self, name: impl Into<String>) -> VarId {
        self.variables.push(Variable {
            name: name.into(),
            lower: 0.0,
            upper: 1.0,
            kind: VarKind::Binary,
        });
        VarId(self.variables.len() - 1)
    }

    pub fn add_constraint(&mut self, c: Constraint) -> usize {
        self.constraints.push(c);
        self.constraints.len() - 1
    }

    pub fn set_objective(&mut self, sense: ObjectiveSense, terms: Vec<(VarId, f64)>) {
        self.objective = Objective { sense, terms };
    }

    pub fn num_binaries(&self) -> usize {
        self.variables.iter().filter(|v| v.kind == VarKind::Binary).count()
    }

    pub fn num_continuous(&self) -> usize {
        self.variables.len() - self.num_binaries()
    }

    pub fn has_bilinear(&self) -> bool {
        self.constraints.iter().any(Constraint::is_bilinear)
    }

    pub fn has_integers(&self) -> bool {
        self.num_binaries() > 0
    }

    /// Name → id lookup table.
    pub fn name_index(&self) -> HashMap<&str, VarId> {
        self.variables
            .iter()
            .enumerate()
            .map(|(i, v)| (v.name.as_str(), VarId(i)))
            .collect()
    }

    pub fn var(&self, name: &str) -> Option<VarId> {
        self.variables.iter().position(|v| v.name == name).map(VarId)
    }

    pub fn objective_value(&self, values: &[f64]) -> f64 {
        self.objective.terms.iter().map(|(v, c)| c * values[v.0]).sum()
    }

    /// Largest violation of any row or bound, plus integrality for binaries.
    pub fn max_violation(&self, values: &[f64]) -> f64 {
        let rows = self
            .constraints
            .iter()
            .map(|c| c.violation(values))
            .fold(0.0, f64::max);
        let bounds = self
            .variables
            .iter()
            .zip(values)
            .map(|(v, &x)| {
                let b = (v.lower - x).max(x - v.upper).max(0.0);
                match v.kind {
                    VarKind::Binary => b.max((x - x.round()).abs()),
                    VarKind::Continuous => b,
                }
            })
            .fold(0.0, f64::max);
        rows.max(bounds)
    }

    /// Checks references, bounds, names and binary domains.
    pub fn validate(&self) -> Result<()> {
        let n = self.variables.len();
        let mut seen = HashMap::new();
        for (i, v) in self.variables.iter().enumerate() {
            if v.name.is_empty() || v.name.contains(char::is_whitespace) {
                return Err(Error::Parameter(format!("bad variable name {:?}", v.name)));
            }
            if seen.insert(v.name.as_str(), i).is_some() {
                return Err(Error::Parameter(format!("duplicate variable name {}", v.name)));
            }
            if v.lower > v.upper || v.lower.is_nan() || v.upper.is_nan() {
                return Err(Error::Parameter(format!("empty domain for {}", v.name)));
            }
            if v.kind == VarKind::Binary && (v.lower != 0.0 || v.upper != 1.0) {
                return Err(Error::Parameter(format!("binary {} must have bounds {{0,1}}", v.name)));
            }
        }
        let check = |id: VarId, row: &str| {
            if id.0 >= n {
                Err(Error::Parameter(format!("row {row} references undeclared variable {}", id.0)))
            } else {
                Ok(())
            }
        };
        for c in &self.constraints {
            for (v, _) in &c.terms {
                check(*v, &c.name)?;
            }
            for (a, b, _) in &c.bilinear {
                check(*a, &c.name)?;
                check(*b, &c.name)?;
            }
            if !c.rhs.is_finite() {
                return Err(Error::Parameter(format!("row {} has non-finite rhs", c.name)));
            }
        }
        for (v, _) in &self.objective.terms {
            check(*v, "objective")?;
        }
        Ok(())
    }
}
