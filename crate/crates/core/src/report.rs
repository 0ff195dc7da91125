//! Summary of a map construction.

use std::fmt::Write as _;

use crate::io::fmt_real;

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationReport {
    /// Final objective (sum over components for inverse builds).
    pub objective: f64,
    pub gradient_norm: f64,
    /// Iterations (maximum over components for inverse builds).
    pub iterations: usize,
    pub converged: bool,
    /// 1-based components whose optimization did not converge.
    pub unconverged_components: Vec<usize>,
    /// Objective after each accepted step (direct builds).
    pub trace: Vec<f64>,
    /// Variance-based KL estimate, when a target density was available.
    pub kl_variance: Option<f64>,
    /// `log beta`, direct builds only.
    pub log_normalizing_constant: Option<f64>,
    /// Number of `(point, component)` pairs with a non-positive diagonal partial.
    pub violations: usize,
    /// Integration nodes or samples the diagnostics were computed on.
    pub nodes: usize,
}

impl OptimizationReport {
    /// `key = value` lines.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "objective = {}", fmt_real(self.objective));
        let _ = writeln!(s, "gradient_norm = {}", fmt_real(self.gradient_norm));
        let _ = writeln!(s, "iterations = {}", self.iterations);
        let _ = writeln!(s, "converged = {}", self.converged);
        if !self.unconverged_components.is_empty() {
            let list: Vec<String> = self.unconverged_components.iter().map(|k| k.to_string()).collect();
            let _ = writeln!(s, "unconverged_components = {}", list.join(","));
        }
        if let Some(kl) = self.kl_variance {
            let _ = writeln!(s, "kl_variance = {}", fmt_real(kl));
        }
        if let Some(lb) = self.log_normalizing_constant {
            let _ = writeln!(s, "log_normalizing_constant = {}", fmt_real(lb));
        }
        let _ = writeln!(s, "monotonicity_violations = {}", self.violations);
        let _ = writeln!(s, "nodes = {}", self.nodes);
        s
    }
}
