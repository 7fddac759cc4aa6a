//! Reference codes: relabelings, parity block codes, synthetic radius laws,
//! and explicit truth tables.

use std::sync::Arc;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{for_each_cube_point, Coord};
use crate::process::{LogBase, Marginal, Symbol};

use super::{CodeRule, FinitaryCode, RuleOutcome, WindowView, MAX_DIM};

fn index_labels(size: usize) -> Vec<String> {
    (0..size).map(|i| i.to_string()).collect()
}

fn origin_symbol(view: &WindowView<'_>) -> Symbol {
    let zeros = [0 as Coord; MAX_DIM];
    view.get(&zeros[..view.dimension()])
}

struct IdentityRule;

impl CodeRule for IdentityRule {
    fn evaluate(&self, view: &WindowView<'_>) -> RuleOutcome {
        RuleOutcome::Resolved(origin_symbol(view))
    }
}

/// The identity code: radius 0, output equal to the input symbol.
pub fn identity(alphabet: usize, d: usize) -> Result<FinitaryCode> {
    if alphabet == 0 {
        return Err(Error::InvalidCode("alphabet must be nonempty".into()));
    }
    Ok(FinitaryCode::new(
        format!("identity_{alphabet}_d{d}"),
        d,
        index_labels(alphabet),
        index_labels(alphabet),
        Arc::new(IdentityRule),
    )?
    .with_constant_radius(0)
    .with_range_marginal(Arc::new(|p: &Marginal| Ok(p.clone()))))
}

struct PermutationRule {
    table: Vec<Symbol>,
}

impl CodeRule for PermutationRule {
    fn evaluate(&self, view: &WindowView<'_>) -> RuleOutcome {
        RuleOutcome::Resolved(self.table[origin_symbol(view)])
    }
}

/// A radius-0 relabeling given by a bijection table `a -> table[a]`.
pub fn permutation(table: Vec<Symbol>, d: usize) -> Result<FinitaryCode> {
    let m = table.len();
    if m == 0 {
        return Err(Error::InvalidCode("permutation table must be nonempty".into()));
    }
    let mut seen = vec![false; m];
    for &b in &table {
        if b >= m || seen[b] {
            return Err(Error::InvalidCode(
                "permutation table must be a bijection on 0..len".into(),
            ));
        }
        seen[b] = true;
    }
    let pushforward = table.clone();
    Ok(FinitaryCode::new(
        format!("permutation_{m}_d{d}"),
        d,
        index_labels(m),
        index_labels(m),
        Arc::new(PermutationRule { table }),
    )?
    .with_constant_radius(0)
    .with_range_marginal(Arc::new(move |p: &Marginal| {
        let mut probs = vec![0.0; pushforward.len()];
        for (a, &b) in pushforward.iter().enumerate() {
            probs[b] = p.probs()[a];
        }
        match p.exact_probs() {
            Some(exact) => {
                let mut out = vec![BigRational::one(); pushforward.len()];
                for (a, &b) in pushforward.iter().enumerate() {
                    out[b] = exact[a].clone();
                }
                Marginal::from_rationals(index_labels(pushforward.len()), out, p.log_base())
            }
            None => Marginal::from_floats(index_labels(pushforward.len()), probs, p.log_base()),
        }
    })))
}

struct XorWindowRule {
    d: usize,
    r: usize,
}

impl CodeRule for XorWindowRule {
    fn evaluate(&self, view: &WindowView<'_>) -> RuleOutcome {
        if view.half_width() < self.r {
            return RuleOutcome::NeedMore;
        }
        let mut parity = 0usize;
        for_each_cube_point(self.d, -(self.r as Coord), self.r as Coord, |offset| {
            parity ^= view.get(offset) & 1;
        });
        RuleOutcome::Resolved(parity)
    }
}

/// Parity of the bits in `B(0, r)`; a constant-radius factor onto `{0, 1}`.
pub fn xor_window(r: usize, d: usize) -> Result<FinitaryCode> {
    let window_sites = (2 * r as u64 + 1).checked_pow(d as u32).ok_or_else(|| {
        Error::InvalidCode("window too large".into())
    })?;
    Ok(FinitaryCode::new(
        format!("xor_window_r{r}_d{d}"),
        d,
        index_labels(2),
        index_labels(2),
        Arc::new(XorWindowRule { d, r }),
    )?
    .with_constant_radius(r)
    .with_range_marginal(Arc::new(move |p: &Marginal| {
        if p.len() != 2 {
            return Err(Error::Precondition(
                "xor_window expects a binary marginal".into(),
            ));
        }
        // P[parity = 1] = (1 - (1 - 2 p_1)^w) / 2 over w independent bits.
        match p.exact_probs() {
            Some(exact) => {
                let one = BigRational::one();
                let two = BigRational::from_integer(BigInt::from(2));
                let skew = (&one - &two * &exact[1]).pow(window_sites as i32);
                let q1 = (&one - &skew) / &two;
                let q0 = &one - &q1;
                Marginal::from_rationals(index_labels(2), vec![q0, q1], p.log_base())
            }
            None => {
                let skew = (1.0 - 2.0 * p.probs()[1]).powi(window_sites as i32);
                let q1 = (1.0 - skew) / 2.0;
                Marginal::from_floats(index_labels(2), vec![1.0 - q1, q1], p.log_base())
            }
        }
    })))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SyntheticLaw {
    /// `P[R > n] = (1 - p_0)^n`: the radius is the offset of the first
    /// stop symbol to the right of the origin.
    Geometric,
    /// `P[R > n] = n^{-alpha} + O(2^{-n})`: the bits right of the origin
    /// form a uniform `U` and the radius is the first `n` whose n-bit
    /// lower bound for `U` clears the threshold `n^{-alpha}`.
    Power,
}

struct SyntheticGeometricRule;

impl CodeRule for SyntheticGeometricRule {
    fn evaluate(&self, view: &WindowView<'_>) -> RuleOutcome {
        for j in 1..=view.half_width() as Coord {
            if view.get(&[j]) == 0 {
                return RuleOutcome::Resolved(0);
            }
        }
        RuleOutcome::NeedMore
    }
}

struct SyntheticPowerRule {
    alpha: f64,
}

impl CodeRule for SyntheticPowerRule {
    fn evaluate(&self, view: &WindowView<'_>) -> RuleOutcome {
        let mut u_lo = 0.0f64;
        for j in 1..=view.half_width() {
            if view.get(&[j as Coord]) != 0 {
                u_lo += (2.0f64).powi(-(j as i32));
            }
            if u_lo >= (j as f64).powf(-self.alpha) {
                return RuleOutcome::Resolved(0);
            }
        }
        RuleOutcome::NeedMore
    }
}

/// A one-dimensional wrapper with constant output whose reported radius
/// realizes a prescribed tail law; exercises the tail estimators against
/// closed forms.
pub fn synthetic_radius(law: SyntheticLaw, alpha: Option<f64>) -> Result<FinitaryCode> {
    let (name, rule): (String, Arc<dyn CodeRule>) = match law {
        SyntheticLaw::Geometric => {
            ("synthetic_geometric".to_string(), Arc::new(SyntheticGeometricRule))
        }
        SyntheticLaw::Power => {
            let alpha = alpha.ok_or_else(|| {
                Error::InvalidCode("power law needs an alpha parameter".into())
            })?;
            if !(alpha > 0.0) {
                return Err(Error::InvalidCode("alpha must be positive".into()));
            }
            (
                format!("synthetic_power_{alpha}"),
                Arc::new(SyntheticPowerRule { alpha }),
            )
        }
    };
    Ok(FinitaryCode::new(
        name,
        1,
        index_labels(2),
        vec!["out".to_string()],
        rule,
    )?
    .with_range_marginal(Arc::new(|p: &Marginal| {
        Marginal::from_floats(vec!["out"], vec![1.0], p.log_base())
    })))
}

struct TruthTableRule {
    d: usize,
    r: usize,
    domain_size: usize,
    table: Vec<Symbol>,
}

impl CodeRule for TruthTableRule {
    fn evaluate(&self, view: &WindowView<'_>) -> RuleOutcome {
        if view.half_width() < self.r {
            return RuleOutcome::NeedMore;
        }
        let mut idx = 0usize;
        for_each_cube_point(self.d, -(self.r as Coord), self.r as Coord, |offset| {
            idx = idx * self.domain_size + view.get(offset);
        });
        RuleOutcome::Resolved(self.table[idx])
    }
}

const TABLE_GUARD: u64 = 1 << 24;

/// A custom radius-`r` block code given by an explicit truth table over
/// `A^{B(0,r)}`, indexed row-major over the window offsets.
pub fn block_table(
    d: usize,
    r: usize,
    domain: Vec<String>,
    range: Vec<String>,
    table: Vec<Symbol>,
) -> Result<FinitaryCode> {
    let domain_size = domain.len();
    let range_size = range.len();
    if domain_size == 0 || range_size == 0 {
        return Err(Error::InvalidCode("alphabets must be nonempty".into()));
    }
    let window_sites = (2u64 * r as u64 + 1)
        .checked_pow(d as u32)
        .ok_or_else(|| Error::InvalidCode("window too large".into()))?;
    let expected = (domain_size as u64)
        .checked_pow(window_sites as u32)
        .filter(|&n| n <= TABLE_GUARD)
        .ok_or_else(|| {
            Error::GuardExceeded(format!(
                "truth table over {window_sites} sites exceeds {TABLE_GUARD} rows"
            ))
        })?;
    if table.len() as u64 != expected {
        return Err(Error::InvalidCode(format!(
            "truth table must have {expected} rows, got {}",
            table.len()
        )));
    }
    if table.iter().any(|&b| b >= range_size) {
        return Err(Error::InvalidCode(
            "truth table entry outside the range alphabet".into(),
        ));
    }
    let marginal_table = table.clone();
    let marginal_window_sites = window_sites as usize;
    Ok(FinitaryCode::new(
        format!("block_table_d{d}_r{r}"),
        d,
        domain,
        range,
        Arc::new(TruthTableRule {
            d,
            r,
            domain_size,
            table,
        }),
    )?
    .with_constant_radius(r)
    .with_range_marginal(Arc::new(move |p: &Marginal| {
        pushforward_by_enumeration(
            p,
            &marginal_table,
            marginal_window_sites,
            range_size,
        )
    })))
}

/// Exact pushforward of an i.i.d. window through a truth table.
fn pushforward_by_enumeration(
    p: &Marginal,
    table: &[Symbol],
    window_sites: usize,
    range_size: usize,
) -> Result<Marginal> {
    let m = p.len();
    match p.exact_probs() {
        Some(exact) => {
            let zero = BigRational::from_integer(BigInt::from(0));
            let mut acc = vec![zero; range_size];
            for (idx, &b) in table.iter().enumerate() {
                let mut weight = BigRational::one();
                let mut rem = idx;
                for _ in 0..window_sites {
                    weight *= &exact[rem % m];
                    rem /= m;
                }
                acc[b] += weight;
            }
            Marginal::from_rationals(index_labels(range_size), acc, p.log_base())
        }
        None => {
            let mut acc = vec![0.0f64; range_size];
            for (idx, &b) in table.iter().enumerate() {
                let mut weight = 1.0;
                let mut rem = idx;
                for _ in 0..window_sites {
                    weight *= p.probs()[rem % m];
                    rem /= m;
                }
                acc[b] += weight;
            }
            let total: f64 = acc.iter().sum();
            for a in &mut acc {
                *a /= total;
            }
            Marginal::from_floats(index_labels(range_size), acc, p.log_base())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codes::{phi_n_site, resolve_at, RadiusResult};
    use crate::lattice::{BoxWindow, Site};
    use crate::process::{Configuration, LazyIidConfig, WindowConfig};
    use crate::rng::{stream_rng, Phase};

    #[test]
    fn permutation_requires_bijection() {
        assert!(permutation(vec![0, 0], 1).is_err());
        assert!(permutation(vec![0, 2], 1).is_err());
        assert!(permutation(vec![1, 0], 1).is_ok());
    }

    #[test]
    fn permutation_pushforward_permutes_probs() {
        let p = Marginal::from_floats(vec!["a", "b", "c"], vec![0.5, 0.3, 0.2], LogBase::Base2)
            .unwrap();
        let code = permutation(vec![2, 0, 1], 1).unwrap();
        let q = code.range_marginal(&p).unwrap().unwrap();
        assert_eq!(q.probs(), &[0.3, 0.2, 0.5]);
    }

    #[test]
    fn xor_pushforward_of_uniform_is_uniform() {
        let p = Marginal::uniform(2, LogBase::Base2).unwrap();
        let code = xor_window(1, 1).unwrap();
        let q = code.range_marginal(&p).unwrap().unwrap();
        assert_eq!(q.probs(), &[0.5, 0.5]);
        assert!(q.exact_probs().is_some());
    }

    #[test]
    fn xor_pushforward_of_biased_bits() {
        let p = Marginal::from_floats(vec!["0", "1"], vec![0.9, 0.1], LogBase::Base2).unwrap();
        let code = xor_window(1, 1).unwrap();
        let q = code.range_marginal(&p).unwrap().unwrap();
        // (1 - 0.8^3) / 2 = 0.244
        assert!((q.probs()[1] - 0.244).abs() < 1e-12);
    }

    #[test]
    fn synthetic_geometric_radius_counts_leading_nonzeros() {
        let code = synthetic_radius(SyntheticLaw::Geometric, None).unwrap();
        let cfg = WindowConfig {
            window: BoxWindow::new(Site::new(vec![-9]), 17).unwrap(),
            values: vec![1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 0, 1, 1, 1, 1, 1],
        };
        // Offsets 1, 2 hold 1, offset 3 holds 0 => radius 3.
        let (r, _) = resolve_at(&code, &cfg, &Site::origin(1), 8).unwrap();
        assert_eq!(r, RadiusResult::Resolved(3));
    }

    #[test]
    fn synthetic_power_tail_matches_closed_form() {
        let alpha = 0.5;
        let code = synthetic_radius(SyntheticLaw::Power, Some(alpha)).unwrap();
        let p = Marginal::uniform(2, LogBase::Base2).unwrap();
        let samples = 20_000usize;
        let mut exceed_16 = 0usize;
        for rep in 0..samples {
            let cfg = LazyIidConfig::new(&p, 1, stream_rng(17, Phase::Sample, rep as u64));
            let (r, _) = resolve_at(&code, &cfg, &Site::origin(1), 1 << 12).unwrap();
            match r {
                RadiusResult::Resolved(n) => {
                    if n > 16 {
                        exceed_16 += 1;
                    }
                }
                RadiusResult::Censored(_) => exceed_16 += 1,
            }
        }
        let expect = (16.0f64).powf(-alpha);
        let got = exceed_16 as f64 / samples as f64;
        let sigma = (expect * (1.0 - expect) / samples as f64).sqrt();
        assert!(
            (got - expect).abs() < 4.0 * sigma + 0.01,
            "P[R > 16] = {got}, expected {expect}"
        );
    }

    #[test]
    fn block_table_reproduces_xor() {
        // Truth table for xor over [-1, 0, 1].
        let mut table = Vec::new();
        for idx in 0..8usize {
            let bits = [(idx >> 2) & 1, (idx >> 1) & 1, idx & 1];
            table.push(bits[0] ^ bits[1] ^ bits[2]);
        }
        let code = block_table(
            1,
            1,
            vec!["0".into(), "1".into()],
            vec!["0".into(), "1".into()],
            table,
        )
        .unwrap();
        let cfg = WindowConfig {
            window: BoxWindow::new(Site::new(vec![-2]), 3).unwrap(),
            values: vec![1, 0, 1],
        };
        assert_eq!(phi_n_site(&code, &cfg, &Site::origin(1), 1).unwrap(), Some(0));
        let p = Marginal::uniform(2, LogBase::Base2).unwrap();
        let q = code.range_marginal(&p).unwrap().unwrap();
        assert_eq!(q.probs(), &[0.5, 0.5]);
    }

    #[test]
    fn block_table_validates_shape() {
        assert!(block_table(1, 1, index_labels(2), index_labels(2), vec![0; 7]).is_err());
        assert!(block_table(1, 1, index_labels(2), index_labels(2), vec![9; 8]).is_err());
    }

    #[test]
    fn lazy_config_dimension_matches() {
        let p = Marginal::uniform(2, LogBase::Base2).unwrap();
        let cfg = LazyIidConfig::new(&p, 2, stream_rng(3, Phase::Sample, 0));
        assert_eq!(cfg.dimension(), 2);
        assert!(cfg.get(&[3, -4]).is_some());
    }
}
