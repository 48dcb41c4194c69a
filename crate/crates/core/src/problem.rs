//! Residual bundles with sparse gradients, and the problem interface the
//! augmented-Lagrangian solver consumes.

use std::fmt;

use serde::Serialize;

/// Which constraint family a residual row comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintKind {
    InitialUav,
    FinalUav,
    InitialUgv,
    FinalUgv,
    InitialBattery,
    Complementarity,
    UavSpeed,
    UgvSpeed,
    BatteryLower,
    BatteryUpper,
    DurationLower,
    DurationUpper,
    ArmLower,
    ArmUpper,
    TaskVisit,
    ArmVisit,
    Battery,
    TaskGate,
    ArmGate,
    DischargeGate,
    ChargeRateGate,
    RendezvousGate,
    /// Rows of hand-written test problems.
    Generic,
}

/// Provenance of one residual: constraint family, stamp `k`, and the task,
/// arm or component index it refers to (all zero-based).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct Label {
    pub kind: ConstraintKind,
    pub stamp: Option<usize>,
    pub item: Option<usize>,
}

impl Label {
    pub fn new(kind: ConstraintKind) -> Self {
        Self { kind, stamp: None, item: None }
    }

    pub fn at(kind: ConstraintKind, stamp: usize) -> Self {
        Self { kind, stamp: Some(stamp), item: None }
    }

    pub fn item(kind: ConstraintKind, item: usize) -> Self {
        Self { kind, stamp: None, item: Some(item) }
    }

    pub fn at_item(kind: ConstraintKind, stamp: usize, item: usize) -> Self {
        Self { kind, stamp: Some(stamp), item: Some(item) }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.kind)?;
        if let Some(k) = self.stamp {
            write!(f, "[k={k}]")?;
        }
        if let Some(i) = self.item {
            write!(f, "[{i}]")?;
        }
        Ok(())
    }
}

/// Residual values with labels and a CSR gradient per row.
#[derive(Clone, Debug, Default)]
pub struct Rows {
    values: Vec<f64>,
    labels: Vec<Label>,
    starts: Vec<usize>,
    cols: Vec<usize>,
    coefs: Vec<f64>,
}

impl Rows {
    pub fn clear(&mut self) {
        self.values.clear();
        self.labels.clear();
        self.starts.clear();
        self.cols.clear();
        self.coefs.clear();
    }

    pub fn push(&mut self, label: Label, value: f64, partials: &[(usize, f64)]) {
        self.starts.push(self.cols.len());
        self.values.push(value);
        self.labels.push(label);
        for &(c, v) in partials {
            self.cols.push(c);
            self.coefs.push(v);
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    /// Sparse gradient of row `i` as (column, coefficient) pairs.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let end = self.starts.get(i + 1).copied().unwrap_or(self.cols.len());
        let start = self.starts[i];
        self.cols[start..end].iter().copied().zip(self.coefs[start..end].iter().copied())
    }

    /// `out += Jᵀ w`.
    pub fn add_transpose_product(&self, weights: &[f64], out: &mut [f64]) {
        debug_assert_eq!(weights.len(), self.len());
        for (i, &w) in weights.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            for (c, v) in self.row(i) {
                out[c] += w * v;
            }
        }
    }

    pub fn extend_from(&mut self, other: &Rows) {
        for i in 0..other.len() {
            self.starts.push(self.cols.len());
            self.values.push(other.values[i]);
            self.labels.push(other.labels[i]);
            for (c, v) in other.row(i) {
                self.cols.push(c);
                self.coefs.push(v);
            }
        }
    }
}

/// Objective, equality residuals (target 0) and inequality residuals
/// (target ≤ 0) at one point, with gradients.
#[derive(Clone, Debug, Default)]
pub struct Evaluation {
    pub objective: f64,
    pub objective_grad: Vec<(usize, f64)>,
    pub eq: Rows,
    pub ineq: Rows,
}

impl Evaluation {
    pub fn clear(&mut self) {
        self.objective = 0.0;
        self.objective_grad.clear();
        self.eq.clear();
        self.ineq.clear();
    }

    /// Gradient of `w_obj·f + Σ w_eq·h + Σ w_ineq·g`, written into `out`.
    pub fn weighted_gradient(&self, weights: &Weights, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for &(c, v) in &self.objective_grad {
            out[c] += weights.objective * v;
        }
        self.eq.add_transpose_product(&weights.eq, out);
        self.ineq.add_transpose_product(&weights.ineq, out);
    }

    pub fn is_finite(&self) -> bool {
        self.objective.is_finite()
            && self.eq.values().iter().all(|v| v.is_finite())
            && self.ineq.values().iter().all(|v| v.is_finite())
    }
}

/// Multipliers for [`Evaluation::weighted_gradient`].
#[derive(Clone, Debug, PartialEq)]
pub struct Weights {
    pub objective: f64,
    pub eq: Vec<f64>,
    pub ineq: Vec<f64>,
}

impl Weights {
    pub fn objective_only(n_eq: usize, n_ineq: usize) -> Self {
        Self { objective: 1.0, eq: vec![0.0; n_eq], ineq: vec![0.0; n_ineq] }
    }
}

/// A smooth constrained minimization problem in residual form.
pub trait ConstrainedProblem {
    fn dim(&self) -> usize;

    /// Fills `out` with the objective, residuals and gradients at `x`.
    /// Row counts and labels must not depend on `x`.
    fn evaluate(&self, x: &[f64], out: &mut Evaluation);

    /// Unsmoothed constraint violation used for stopping and reporting.
    fn violation(&self, x: &[f64]) -> f64;
}
