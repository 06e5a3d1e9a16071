//! Pass/fail certification reports shared by the model and weight checks.

use std::fmt;

/// Margin below which a strict inequality (`> 0`) is not accepted.
pub const STRICT_MARGIN: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    /// Worst-case value of the checked quantity (sign convention: the check
    /// wants it positive, or non-negative for non-strict conditions).
    pub margin: f64,
    /// Grid nodes where the condition fails.
    pub failing_nodes: Vec<usize>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Certification {
    pub checks: Vec<Check>,
}

impl Certification {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records a strict condition `margin > STRICT_MARGIN`.
    pub fn strict(&mut self, name: impl Into<String>, margin: f64, failing_nodes: Vec<usize>) {
        let passed = margin > STRICT_MARGIN && failing_nodes.is_empty();
        self.checks.push(Check { name: name.into(), passed, margin, failing_nodes });
    }

    /// Records a non-strict condition `margin ≥ -STRICT_MARGIN`.
    pub fn non_strict(&mut self, name: impl Into<String>, margin: f64, failing_nodes: Vec<usize>) {
        let passed = margin >= -STRICT_MARGIN && failing_nodes.is_empty();
        self.checks.push(Check { name: name.into(), passed, margin, failing_nodes });
    }

    pub fn push(&mut self, check: Check) {
        self.checks.push(check);
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

impl fmt::Display for Certification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(f, "{:<4} {:<40} margin={}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.margin)?;
        }
        Ok(())
    }
}
