//! Exact cylinder measures and exhaustive verification of the measure
//! inequality `mu([x]) <= nu([y])`.
//!
//! Everything here runs in arbitrary-precision rational arithmetic; no
//! floating point enters the comparison. Domain cylinder measures are plain
//! products. Factor cylinder measures are computed for constant-radius
//! block codes by a layer-by-layer transfer sum over the extended window,
//! which handles every instance the flat enumeration guard would admit and
//! more (the active state space, not the whole window, is what must stay
//! enumerable).
//!
//! Patterns use the same 0-based row-major grids as torus configurations;
//! the measures are translation invariant, so the choice of window origin
//! is immaterial.

use std::collections::HashMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde::Serialize;

use crate::codes::FinitaryCode;
use crate::error::{Error, Result};
use crate::lattice::{Coord, TorusGeometry};
use crate::process::{Marginal, Symbol};
use crate::torus_model::{model_apply, ModelOutput, TorusConfig};

/// An exact probability in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct ExactMeasure(BigRational);

impl ExactMeasure {
    pub fn new(value: BigRational) -> Result<Self> {
        if value.is_negative() || value > BigRational::one() {
            return Err(Error::Internal(format!("measure {value} outside [0, 1]")));
        }
        Ok(ExactMeasure(value))
    }

    pub fn value(&self) -> &BigRational {
        &self.0
    }

    pub fn into_value(self) -> BigRational {
        self.0
    }

    pub fn to_f64(&self) -> f64 {
        num_traits::ToPrimitive::to_f64(&self.0).unwrap_or(f64::NAN)
    }
}

impl std::fmt::Display for ExactMeasure {
    fmt_display_body!();
}

macro_rules! fmt_display_body {
    () => {
        fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
            write!(f, "{}", self.0)
        }
    };
}
use fmt_display_body;

/// A window pattern over the range alphabet extended by `*` (`None`), on
/// the cubic 0-based window `[0, side)^d`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CylinderPattern {
    d: usize,
    side: Coord,
    cells: Vec<Option<Symbol>>,
}

impl CylinderPattern {
    pub fn new(d: usize, side: Coord, cells: Vec<Option<Symbol>>) -> Result<Self> {
        let geom = TorusGeometry::new(d, side)?;
        if cells.len() != geom.site_count()? {
            return Err(Error::Precondition(format!(
                "pattern needs {} cells, got {}",
                geom.site_count()?,
                cells.len()
            )));
        }
        Ok(CylinderPattern { d, side, cells })
    }

    pub fn all_star(d: usize, side: Coord) -> Result<Self> {
        let geom = TorusGeometry::new(d, side)?;
        let count = geom.site_count()?;
        Self::new(d, side, vec![None; count])
    }

    pub fn from_model_output(out: &ModelOutput) -> Self {
        CylinderPattern {
            d: out.geometry().dimension(),
            side: out.geometry().side(),
            cells: out.values().to_vec(),
        }
    }

    pub fn dimension(&self) -> usize {
        self.d
    }

    pub fn side(&self) -> Coord {
        self.side
    }

    pub fn cells(&self) -> &[Option<Symbol>] {
        &self.cells
    }

    pub fn constrained_count(&self) -> usize {
        self.cells.iter().filter(|c| c.is_some()).count()
    }

    /// Copy with the cell at flat index `idx` relaxed to `*`.
    pub fn relaxed_at(&self, idx: usize) -> Self {
        let mut cells = self.cells.clone();
        cells[idx] = None;
        CylinderPattern {
            d: self.d,
            side: self.side,
            cells,
        }
    }
}

/// `mu([x]) = prod_u p(x_u)`, exactly. Requires a rational marginal.
pub fn domain_cylinder_measure(p: &Marginal, x: &TorusConfig) -> Result<ExactMeasure> {
    let exact = p
        .exact_probs()
        .ok_or_else(|| Error::Precondition("exact cylinder measures need a rational marginal".into()))?;
    let mut product = BigRational::one();
    for &s in x.values() {
        let prob = exact
            .get(s)
            .ok_or(Error::UnknownSymbol { index: s, alphabet: exact.len() })?;
        product *= prob;
    }
    ExactMeasure::new(product)
}

const STATE_GUARD: u64 = 1 << 20;
const LAYER_GUARD: u64 = 1 << 16;
const CONFIG_GUARD: u64 = 1 << 24;

fn checked_pow(base: u64, exp: u64, guard: u64) -> Option<u64> {
    let mut acc: u64 = 1;
    for _ in 0..exp {
        acc = acc.checked_mul(base)?;
        if acc > guard {
            return None;
        }
    }
    Some(acc)
}

/// Exact `nu([pattern])`: the probability that the code's output agrees
/// with the pattern at every non-`*` site, over an i.i.d. input with
/// marginal `p`. Only constant-radius codes are admitted; the transfer sum
/// runs layer by layer along the first axis.
pub fn factor_cylinder_measure(
    code: &FinitaryCode,
    p: &Marginal,
    pattern: &CylinderPattern,
) -> Result<ExactMeasure> {
    let r = code.constant_radius().ok_or_else(|| {
        Error::Precondition(
            "exact factor measures need a constant-radius block code".into(),
        )
    })?;
    if pattern.dimension() != code.dimension() {
        return Err(Error::DimensionMismatch {
            expected: code.dimension(),
            found: pattern.dimension(),
        });
    }
    let exact = p
        .exact_probs()
        .ok_or_else(|| Error::Precondition("exact cylinder measures need a rational marginal".into()))?;
    if p.len() != code.domain_size() {
        return Err(Error::Precondition(format!(
            "marginal size {} does not match the domain alphabet size {}",
            p.len(),
            code.domain_size()
        )));
    }

    let d = pattern.dimension();
    let n_side = pattern.side() as usize;
    let a = code.domain_size() as u64;
    let ext = n_side + 2 * r; // extended side along every axis
    let cross_sites = (ext as u64).pow(d as u32 - 1); // sites per layer
    let layer_combos = checked_pow(a, cross_sites, LAYER_GUARD).ok_or_else(|| {
        Error::GuardExceeded(format!(
            "layer assignments |A|^{cross_sites} exceed {LAYER_GUARD}"
        ))
    })? as usize;
    let state_layers = 2 * r;
    let state_count = checked_pow(a, state_layers as u64 * cross_sites, STATE_GUARD)
        .ok_or_else(|| {
            Error::GuardExceeded(format!(
                "transfer states |A|^{} exceed {STATE_GUARD}",
                state_layers as u64 * cross_sites
            ))
        })? as usize;
    let _ = state_count;
    let cross_sites = cross_sites as usize;

    // Weight of a layer assignment: product of site probabilities.
    let mut layer_weights = Vec::with_capacity(layer_combos);
    for combo in 0..layer_combos {
        let mut weight = BigRational::one();
        let mut rem = combo;
        for _ in 0..cross_sites {
            weight *= &exact[rem % code.domain_size()];
            rem /= code.domain_size();
        }
        layer_weights.push(weight);
    }

    // Decode a packed assignment into symbols, most significant digit first.
    let decode = |mut packed: usize, len: usize, out: &mut Vec<Symbol>| {
        out.clear();
        out.resize(len, 0);
        for slot in (0..len).rev() {
            out[slot] = packed % code.domain_size();
            packed /= code.domain_size();
        }
    };

    // Flat index of a cross-section coordinate tuple (axes 1..d, each value
    // in [-r, n_side - 1 + r]).
    let cross_index = |coords: &[Coord]| -> usize {
        let mut idx = 0usize;
        for &c in coords {
            idx = idx * ext + (c + r as Coord) as usize;
        }
        idx
    };

    // Pattern cells indexed row-major over [0, n_side)^d.
    let pattern_index = |coords: &[Coord]| -> usize {
        let mut idx = 0usize;
        for &c in coords {
            idx = idx * n_side + c as usize;
        }
        idx
    };

    // Enumerate the pattern sites of one slab u_0 = layer.
    let slab_sites = |layer: usize| -> Vec<Vec<Coord>> {
        let mut out = Vec::new();
        if d == 1 {
            out.push(vec![layer as Coord]);
        } else {
            crate::lattice::for_each_cube_point(d - 1, 0, n_side as Coord - 1, |rest| {
                let mut coords = Vec::with_capacity(d);
                coords.push(layer as Coord);
                coords.extend_from_slice(rest);
                out.push(coords);
            });
        }
        out
    };

    let total_layers = ext; // axis-0 values -r ..= n_side - 1 + r
    let mut dp: HashMap<u64, BigRational> = HashMap::new();
    dp.insert(0, BigRational::one());
    let mut state_buf: Vec<Symbol> = Vec::new();
    let mut layer_buf: Vec<Symbol> = Vec::new();

    for step in 0..total_layers {
        let newest_layer = step as Coord - r as Coord; // axis-0 value being placed
        let placed_before = step.min(state_layers);
        // Sites whose window completes once this layer is placed.
        let check_layer: Option<usize> = {
            let u0 = newest_layer - r as Coord;
            (u0 >= 0 && (u0 as usize) < n_side).then_some(u0 as usize)
        };
        let constraints: Vec<(Vec<Coord>, Symbol)> = match check_layer {
            Some(u0) => slab_sites(u0)
                .into_iter()
                .filter_map(|coords| {
                    pattern.cells()[pattern_index(&coords)].map(|b| (coords, b))
                })
                .collect(),
            None => Vec::new(),
        };

        let mut next: HashMap<u64, BigRational> = HashMap::new();
        for (&state, weight) in &dp {
            decode(state as usize, placed_before * cross_sites, &mut state_buf);
            for (combo, layer_weight) in layer_weights.iter().enumerate() {
                decode(combo, cross_sites, &mut layer_buf);
                // Window read across the last placed_before + 1 layers.
                let read = |offset: &[Coord]| -> Option<Symbol> {
                    // offset is relative to the constraint site; translate
                    // to absolute coordinates against the newest layer.
                    unreachable!("window reads are bound per constraint")
                };
                let _ = &read;
                let mut ok = true;
                for (coords, expect) in &constraints {
                    let read = |offset: &[Coord]| -> Option<Symbol> {
                        let layer_abs = coords[0] + offset[0];
                        let slot = step as i64 + (layer_abs - newest_layer) as i64;
                        let mut cross = Vec::with_capacity(d.max(1) - 1);
                        for axis in 1..d {
                            cross.push(coords[axis] + offset[axis]);
                        }
                        let intra = if d == 1 { 0 } else { cross_index(&cross) };
                        if slot == step as i64 {
                            Some(layer_buf[intra])
                        } else {
                            let layer_slot = placed_before as i64 - (step as i64 - slot);
                            if layer_slot < 0 {
                                return None;
                            }
                            Some(state_buf[layer_slot as usize * cross_sites + intra])
                        }
                    };
                    let site = crate::lattice::Site::new(coords.clone());
                    let _ = &site;
                    match code.evaluate_window(r, &read)? {
                        Some(b) if b == *expect => {}
                        Some(_) => {
                            ok = false;
                            break;
                        }
                        None => {
                            return Err(Error::Internal(
                                "constant-radius rule did not resolve at its radius".into(),
                            ))
                        }
                    }
                }
                if !ok {
                    continue;
                }
                // Roll the state window forward.
                let kept = if placed_before == state_layers && state_layers > 0 {
                    // Drop the oldest layer.
                    let modulus = (code.domain_size() as u64)
                        .pow(((state_layers - 1) * cross_sites) as u32);
                    state % modulus
                } else {
                    state
                };
                let new_state = if state_layers == 0 {
                    0
                } else {
                    kept * (code.domain_size() as u64).pow(cross_sites as u32) + combo as u64
                };
                let contribution = weight * layer_weight;
                next.entry(new_state)
                    .and_modify(|w| *w += &contribution)
                    .or_insert(contribution);
            }
        }
        dp = next;
        if dp.is_empty() {
            return ExactMeasure::new(BigRational::zero());
        }
    }

    let total: BigRational = dp.into_values().sum();
    ExactMeasure::new(total)
}

/// Exhaustive verification report in the spec's wire format.
#[derive(Debug, Clone, Serialize)]
pub struct InequalityReport {
    pub configs: u64,
    pub violations: u64,
    pub min_slack: RatioRepr,
    pub argmin_config: Vec<Symbol>,
}

/// An exact rational as decimal strings.
#[derive(Debug, Clone, Serialize)]
pub struct RatioRepr {
    pub num: String,
    pub den: String,
}

impl RatioRepr {
    pub fn from_rational(r: &BigRational) -> Self {
        RatioRepr {
            num: r.numer().to_string(),
            den: r.denom().to_string(),
        }
    }
}

/// Iterates every torus configuration in row-major order, computes both
/// sides of the measure inequality exactly, and reports violations (none
/// expected) together with the minimum slack `nu - mu` and the
/// configuration attaining it.
pub fn verify_measure_inequality(
    code: &FinitaryCode,
    p: &Marginal,
    geom: TorusGeometry,
    n: usize,
) -> Result<InequalityReport> {
    let exact = p
        .exact_probs()
        .ok_or_else(|| Error::Precondition("exhaustive verification needs a rational marginal".into()))?;
    if p.len() != code.domain_size() {
        return Err(Error::Precondition(format!(
            "marginal size {} does not match the domain alphabet size {}",
            p.len(),
            code.domain_size()
        )));
    }
    let sites = geom.site_count()?;
    let configs = checked_pow(code.domain_size() as u64, sites as u64, CONFIG_GUARD)
        .ok_or_else(|| {
            Error::GuardExceeded(format!(
                "|A|^{sites} torus configurations exceed {CONFIG_GUARD}"
            ))
        })?;

    let mut digits: Vec<Symbol> = vec![0; sites];
    let mut nu_memo: HashMap<Vec<Option<Symbol>>, BigRational> = HashMap::new();
    let mut violations = 0u64;
    let mut min_slack: Option<BigRational> = None;
    let mut argmin: Vec<Symbol> = Vec::new();
    let mut total_mu = BigRational::zero();

    for _ in 0..configs {
        let x = TorusConfig::new(geom, digits.clone())?;
        let mu = domain_cylinder_measure(p, &x)?.into_value();
        total_mu += &mu;
        let out = model_apply(code, n, &x)?;
        let key = out.values().to_vec();
        let nu = match nu_memo.get(&key) {
            Some(v) => v.clone(),
            None => {
                let pattern = CylinderPattern::from_model_output(&out);
                let v = factor_cylinder_measure(code, p, &pattern)?.into_value();
                nu_memo.insert(key, v.clone());
                v
            }
        };
        let slack = &nu - &mu;
        if slack.is_negative() {
            violations += 1;
        }
        let better = match &min_slack {
            Some(current) => slack < *current,
            None => true,
        };
        if better {
            min_slack = Some(slack);
            argmin = digits.clone();
        }
        // Row-major increment: last site varies fastest.
        for slot in (0..sites).rev() {
            digits[slot] += 1;
            if digits[slot] < code.domain_size() {
                break;
            }
            digits[slot] = 0;
        }
    }
    let _ = exact;
    if !total_mu.is_one() {
        return Err(Error::Internal(
            "domain cylinder measures did not sum to 1".into(),
        ));
    }
    Ok(InequalityReport {
        configs,
        violations,
        min_slack: RatioRepr::from_rational(&min_slack.unwrap_or_else(BigRational::zero)),
        argmin_config: argmin,
    })
}
