//! Configuration Bayes factors: for each pattern of subgroups in which the
//! effect is active, the Bayes factor computed from the active subgroups alone.

use std::fmt;

use crate::abf::{BFResult, Method};
use crate::par::{ordered_map_range, Parallelism};
use crate::priors::{cefn_grid, Family, PriorGrid, EQTL_MARGINALS};
use crate::record::{evaluate_grid, BfMethod, SnpRecord};
use crate::{Error, Result};

pub const MAX_CONFIG_SUBGROUPS: usize = 20;
pub const DEFAULT_CONFIG_K: f64 = 0.314;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Configuration {
    pub active: Vec<bool>,
}

impl Configuration {
    /// Binary counting order: bit `i` of `index` is subgroup `i`.
    pub fn from_index(index: usize, s: usize) -> Self {
        Self { active: (0..s).map(|i| index >> i & 1 == 1).collect() }
    }

    pub fn is_null(&self) -> bool {
        !self.active.iter().any(|&a| a)
    }

    pub fn n_active(&self) -> usize {
        self.active.iter().filter(|&&a| a).count()
    }
}

impl fmt::Display for Configuration {
    /// Subgroups left to right, e.g. `110` for the first two active.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &a in &self.active {
            f.write_str(if a { "1" } else { "0" })?;
        }
        Ok(())
    }
}

/// CEFN-ES with `k = 0.314` over the expression QTL marginal set.
pub fn default_config_grid() -> PriorGrid {
    cefn_grid(Family::CefnEs, &EQTL_MARGINALS, DEFAULT_CONFIG_K).expect("built-in grid is valid")
}

pub fn config_bf(record: &SnpRecord, c: &Configuration, grid: &PriorGrid, method: BfMethod) -> Result<BFResult> {
    if c.active.len() != record.n_subgroups() {
        return Err(Error::LengthMismatch(c.active.len(), record.n_subgroups()));
    }
    if c.is_null() {
        return Ok(BFResult { log10_bf: 0.0, method: Method::Abf, prior: None, fallback: false });
    }
    evaluate_grid(&record.restrict(&c.active)?, grid, method)
}

/// Bayes factors for all `2^S` configurations in binary counting order.
///
/// Configurations whose active subgroups carry no informative data yield an
/// error entry rather than aborting the scan.
pub fn config_scan(
    record: &SnpRecord,
    grid: &PriorGrid,
    method: BfMethod,
    par: Parallelism,
) -> Result<Vec<(Configuration, Result<BFResult>)>> {
    let s = record.n_subgroups();
    if s > MAX_CONFIG_SUBGROUPS {
        return Err(Error::TooManySubgroups(s, MAX_CONFIG_SUBGROUPS));
    }
    Ok(ordered_map_range(1 << s, par, |i| {
        let c = Configuration::from_index(i, s);
        let r = config_bf(record, &c, grid, method);
        (c, r)
    }))
}
