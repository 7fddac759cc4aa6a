//! The bracket-matching code on four symbols.
//!
//! Domain symbols are read as two bits `(b1, b2)`: `b1 = 0` marks an open
//! bracket, `b1 = 1` a close bracket, and `b2` is a payload bit. A close
//! bracket matches the nearest preceding unmatched open bracket (Dyck
//! matching). The output at an open site is the marker `o`; at a close site
//! it is `c_{ij}` where `i` is the partner's payload and `j` the local one.
//!
//! With a uniform domain marginal the range marginal is
//! `(1/2, 1/8, 1/8, 1/8, 1/8)` — equal entropy to the domain — while the
//! coding radius at a close site is the distance to the matching bracket,
//! distributed like a simple random walk's first passage time with
//! `P[R > n] ~ n^{-1/2}` tails.

use std::sync::Arc;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::ToPrimitive;

use crate::error::{Error, Result};
use crate::lattice::Coord;
use crate::process::Marginal;

use super::{CodeRule, FinitaryCode, RuleOutcome, WindowView};

const OPEN_MARK: usize = 0;

fn is_close(symbol: usize) -> bool {
    symbol >> 1 == 1
}

fn payload(symbol: usize) -> usize {
    symbol & 1
}

struct MeshalkinRule;

impl CodeRule for MeshalkinRule {
    fn evaluate(&self, view: &WindowView<'_>) -> RuleOutcome {
        let here = view.get(&[0]);
        if !is_close(here) {
            return RuleOutcome::Resolved(OPEN_MARK);
        }
        // Scan left for the nearest unmatched open bracket.
        let mut pending = 0usize;
        for j in 1..=view.half_width() as Coord {
            let s = view.get(&[-j]);
            if is_close(s) {
                pending += 1;
            } else if pending == 0 {
                return RuleOutcome::Resolved(1 + 2 * payload(s) + payload(here));
            } else {
                pending -= 1;
            }
        }
        RuleOutcome::NeedMore
    }
}

/// Builds the bracket-matching code over `{0, 1, 2, 3}`.
pub fn meshalkin() -> Result<FinitaryCode> {
    let domain: Vec<String> = (0..4).map(|i| i.to_string()).collect();
    let range: Vec<String> = ["o", "c00", "c01", "c10", "c11"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    Ok(FinitaryCode::new(
        "meshalkin",
        1,
        domain,
        range.clone(),
        Arc::new(MeshalkinRule),
    )?
    .with_range_marginal(Arc::new(move |p: &Marginal| range_marginal(p, &range))))
}

/// `q_o = p_0 + p_1` and `q_{c_ij} = p_i * p_{2+j} / q_o`: the partner of a
/// close site is an open site whose payload is distributed like an open
/// site's payload, independently of the local payload.
fn range_marginal(p: &Marginal, labels: &[String]) -> Result<Marginal> {
    if p.len() != 4 {
        return Err(Error::Precondition(
            "bracket-matching code expects a four-symbol marginal".into(),
        ));
    }
    let open_mass = p.probs()[0] + p.probs()[1];
    if open_mass < 0.5 {
        return Err(Error::Precondition(
            "open-bracket mass below 1/2: matching is not almost-surely finite".into(),
        ));
    }
    match p.exact_probs() {
        Some(exact) => {
            let po = &exact[0] + &exact[1];
            let mut probs: Vec<BigRational> = vec![po.clone()];
            for i in 0..2usize {
                for j in 0..2usize {
                    probs.push(&exact[i] * &exact[2 + j] / &po);
                }
            }
            Marginal::from_rationals(labels.to_vec(), probs, p.log_base())
        }
        None => {
            let po = open_mass;
            let mut probs = vec![po];
            for i in 0..2usize {
                for j in 0..2usize {
                    probs.push(p.probs()[i] * p.probs()[2 + j] / po);
                }
            }
            Marginal::from_floats(labels.to_vec(), probs, p.log_base())
        }
    }
}
