//! Finitary codes as progressive local rules.
//!
//! A rule reads a recentered window `B(0, n)` through a [`WindowView`] and
//! either resolves to a range symbol or asks for a larger window. Rules must
//! be progressive: once resolved, every extension of the window resolves to
//! the same symbol. Translation equivariance is imposed by construction —
//! rules are only ever evaluated at the origin of a recentered window.

mod builtin;
mod meshalkin;

pub use builtin::{block_table, identity, permutation, synthetic_radius, xor_window, SyntheticLaw};
pub use meshalkin::meshalkin;

use std::cell::Cell;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{Coord, Site};
use crate::process::{Configuration, Marginal, Symbol};

/// Maximum supported lattice dimension (keeps window reads allocation-free).
pub const MAX_DIM: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RuleOutcome {
    Resolved(Symbol),
    NeedMore,
}

/// Read access to the recentered window `B(0, n)` during rule evaluation.
pub struct WindowView<'a> {
    d: usize,
    half_width: usize,
    read: &'a dyn Fn(&[Coord]) -> Option<Symbol>,
    missing: Cell<bool>,
}

impl<'a> WindowView<'a> {
    fn new(d: usize, half_width: usize, read: &'a dyn Fn(&[Coord]) -> Option<Symbol>) -> Self {
        WindowView {
            d,
            half_width,
            read,
            missing: Cell::new(false),
        }
    }

    pub fn dimension(&self) -> usize {
        self.d
    }

    pub fn half_width(&self) -> usize {
        self.half_width
    }

    /// Symbol at `offset` relative to the window center. A read outside the
    /// underlying configuration poisons the evaluation; the caller turns
    /// that into an insufficient-window error.
    pub fn get(&self, offset: &[Coord]) -> Symbol {
        debug_assert_eq!(offset.len(), self.d);
        debug_assert!(
            offset.iter().all(|&c| c.unsigned_abs() as usize <= self.half_width),
            "rule read outside its window"
        );
        match (self.read)(offset) {
            Some(s) => s,
            None => {
                self.missing.set(true);
                0
            }
        }
    }
}

/// A deterministic progressive local rule.
pub trait CodeRule: Send + Sync {
    fn evaluate(&self, view: &WindowView<'_>) -> RuleOutcome;
}

/// Smallest resolving window half-width, or censoring at the probe cap.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RadiusResult {
    Resolved(usize),
    Censored(usize),
}

impl RadiusResult {
    pub fn value(&self) -> Option<usize> {
        match self {
            RadiusResult::Resolved(n) => Some(*n),
            RadiusResult::Censored(_) => None,
        }
    }

    pub fn is_censored(&self) -> bool {
        matches!(self, RadiusResult::Censored(_))
    }
}

type MarginalMap = Arc<dyn Fn(&Marginal) -> Result<Marginal> + Send + Sync>;

/// A finitary code: alphabets, dimension, and the local rule, together with
/// optional structural facts (constant radius, known pushforward marginal).
#[derive(Clone)]
pub struct FinitaryCode {
    name: String,
    dimension: usize,
    domain_labels: Vec<String>,
    range_labels: Vec<String>,
    constant_radius: Option<usize>,
    rule: Arc<dyn CodeRule>,
    range_marginal_fn: Option<MarginalMap>,
}

impl std::fmt::Debug for FinitaryCode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FinitaryCode")
            .field("name", &self.name)
            .field("dimension", &self.dimension)
            .field("domain_size", &self.domain_labels.len())
            .field("range_size", &self.range_labels.len())
            .field("constant_radius", &self.constant_radius)
            .finish()
    }
}

impl FinitaryCode {
    pub fn new(
        name: impl Into<String>,
        dimension: usize,
        domain_labels: Vec<String>,
        range_labels: Vec<String>,
        rule: Arc<dyn CodeRule>,
    ) -> Result<Self> {
        if dimension == 0 || dimension > MAX_DIM {
            return Err(Error::InvalidCode(format!(
                "dimension must be in 1..={MAX_DIM}"
            )));
        }
        if domain_labels.is_empty() || range_labels.is_empty() {
            return Err(Error::InvalidCode("alphabets must be nonempty".into()));
        }
        Ok(FinitaryCode {
            name: name.into(),
            dimension,
            domain_labels,
            range_labels,
            constant_radius: None,
            rule,
            range_marginal_fn: None,
        })
    }

    pub(crate) fn with_constant_radius(mut self, r: usize) -> Self {
        self.constant_radius = Some(r);
        self
    }

    pub(crate) fn with_range_marginal(mut self, f: MarginalMap) -> Self {
        self.range_marginal_fn = Some(f);
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn domain_size(&self) -> usize {
        self.domain_labels.len()
    }

    pub fn range_size(&self) -> usize {
        self.range_labels.len()
    }

    pub fn domain_labels(&self) -> &[String] {
        &self.domain_labels
    }

    pub fn range_labels(&self) -> &[String] {
        &self.range_labels
    }

    /// `Some(r)` when the rule resolves at exactly half-width `r` on every
    /// input (block codes).
    pub fn constant_radius(&self) -> Option<usize> {
        self.constant_radius
    }

    /// The pushforward marginal of `p` under the code, when known in closed
    /// form.
    pub fn range_marginal(&self, p: &Marginal) -> Result<Option<Marginal>> {
        if p.len() != self.domain_size() {
            return Err(Error::Precondition(format!(
                "marginal has {} symbols but the code's domain alphabet has {}",
                p.len(),
                self.domain_size()
            )));
        }
        match &self.range_marginal_fn {
            Some(f) => f(p).map(Some),
            None => Ok(None),
        }
    }

    /// One rule evaluation on the window `B(0, half_width)` read through
    /// `read`. `Ok(None)` means the rule asked for a larger window.
    pub fn evaluate_window(
        &self,
        half_width: usize,
        read: &dyn Fn(&[Coord]) -> Option<Symbol>,
    ) -> Result<Option<Symbol>> {
        let view = WindowView::new(self.dimension, half_width, read);
        let outcome = self.rule.evaluate(&view);
        if view.missing.get() {
            return Err(Error::InsufficientWindow { site: vec![] });
        }
        match outcome {
            RuleOutcome::Resolved(b) => {
                if b >= self.range_size() {
                    return Err(Error::Internal(format!(
                        "rule produced out-of-alphabet symbol {b}"
                    )));
                }
                Ok(Some(b))
            }
            RuleOutcome::NeedMore => Ok(None),
        }
    }
}

fn evaluate_recentered(
    code: &FinitaryCode,
    config: &dyn Configuration,
    at: &Site,
    half_width: usize,
) -> Result<Option<Symbol>> {
    let d = code.dimension();
    let read = |offset: &[Coord]| -> Option<Symbol> {
        let mut buf = [0 as Coord; MAX_DIM];
        for i in 0..d {
            buf[i] = at.coords[i].checked_add(offset[i])?;
        }
        config.get(&buf[..d])
    };
    code.evaluate_window(half_width, &read).map_err(|e| match e {
        Error::InsufficientWindow { .. } => Error::InsufficientWindow {
            site: at.coords.clone(),
        },
        other => other,
    })
}

/// Single rule evaluation at `at` on the window `B(at, half_width)`.
pub fn evaluate_at(
    code: &FinitaryCode,
    config: &dyn Configuration,
    at: &Site,
    half_width: usize,
) -> Result<Option<Symbol>> {
    check_dims(code, config, at)?;
    evaluate_recentered(code, config, at, half_width)
}

fn check_dims(code: &FinitaryCode, config: &dyn Configuration, at: &Site) -> Result<()> {
    if config.dimension() != code.dimension() {
        return Err(Error::DimensionMismatch {
            expected: code.dimension(),
            found: config.dimension(),
        });
    }
    if at.dimension() != code.dimension() {
        return Err(Error::DimensionMismatch {
            expected: code.dimension(),
            found: at.dimension(),
        });
    }
    Ok(())
}

/// Smallest resolving half-width at `at` together with the resolved symbol,
/// probing by doubling and then bisecting. Requires the configuration to be
/// defined on all of `B(at, n)` for each probed `n <= cap`.
pub fn resolve_at(
    code: &FinitaryCode,
    config: &dyn Configuration,
    at: &Site,
    cap: usize,
) -> Result<(RadiusResult, Option<Symbol>)> {
    check_dims(code, config, at)?;
    if let Some(sym) = evaluate_recentered(code, config, at, 0)? {
        return Ok((RadiusResult::Resolved(0), Some(sym)));
    }
    if cap == 0 {
        return Ok((RadiusResult::Censored(0), None));
    }
    let mut lo = 0usize;
    let mut hi = 1usize;
    let mut hi_sym;
    loop {
        let n = hi.min(cap);
        match evaluate_recentered(code, config, at, n)? {
            Some(sym) => {
                hi = n;
                hi_sym = sym;
                break;
            }
            None => {
                if n == cap {
                    return Ok((RadiusResult::Censored(cap), None));
                }
                lo = n;
                hi = n.saturating_mul(2);
            }
        }
    }
    // Progressiveness makes resolution monotone in the half-width, so the
    // smallest resolving width can be bisected in (lo, hi].
    while hi > lo + 1 {
        let mid = lo + (hi - lo) / 2;
        match evaluate_recentered(code, config, at, mid)? {
            Some(sym) => {
                hi = mid;
                hi_sym = sym;
            }
            None => lo = mid,
        }
    }
    Ok((RadiusResult::Resolved(hi), Some(hi_sym)))
}

/// Coding radius of the code at `at`, censored at `cap`.
pub fn coding_radius(
    code: &FinitaryCode,
    config: &dyn Configuration,
    at: &Site,
    cap: usize,
) -> Result<RadiusResult> {
    resolve_at(code, config, at, cap).map(|(r, _)| r)
}

/// The truncated code at a single site: the code's output at `at` when the
/// coding radius there is at most `n`, and `None` (the deferral symbol `*`)
/// otherwise.
pub fn phi_n_site(
    code: &FinitaryCode,
    config: &dyn Configuration,
    at: &Site,
    n: usize,
) -> Result<Option<Symbol>> {
    match resolve_at(code, config, at, n)? {
        (RadiusResult::Resolved(_), sym) => Ok(sym),
        (RadiusResult::Censored(_), _) => Ok(None),
    }
}

/// JSON wire format for codes: `{"name": ..., "params": {...}}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "name", content = "params", rename_all = "snake_case")]
pub enum CodeSpec {
    Identity {
        alphabet: usize,
        #[serde(default = "default_dim")]
        d: usize,
    },
    Permutation {
        table: Vec<usize>,
        #[serde(default = "default_dim")]
        d: usize,
    },
    XorWindow {
        r: usize,
        #[serde(default = "default_dim")]
        d: usize,
    },
    Meshalkin,
    SyntheticRadius {
        law: SyntheticLaw,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        alpha: Option<f64>,
    },
    BlockTable {
        d: usize,
        r: usize,
        domain: Vec<String>,
        range: Vec<String>,
        table: Vec<usize>,
    },
}

fn default_dim() -> usize {
    1
}

/// Builds one of the named reference codes.
pub fn make_builtin(spec: &CodeSpec) -> Result<FinitaryCode> {
    match spec {
        CodeSpec::Identity { alphabet, d } => identity(*alphabet, *d),
        CodeSpec::Permutation { table, d } => permutation(table.clone(), *d),
        CodeSpec::XorWindow { r, d } => xor_window(*r, *d),
        CodeSpec::Meshalkin => meshalkin(),
        CodeSpec::SyntheticRadius { law, alpha } => synthetic_radius(*law, *alpha),
        CodeSpec::BlockTable {
            d,
            r,
            domain,
            range,
            table,
        } => block_table(*d, *r, domain.clone(), range.clone(), table.clone()),
    }
}

impl FinitaryCode {
    pub fn from_spec_json(text: &str) -> Result<Self> {
        let spec: CodeSpec = serde_json::from_str(text)?;
        make_builtin(&spec)
    }
}
