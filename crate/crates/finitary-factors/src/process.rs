//! Finite-alphabet marginals, information functions, and i.i.d. sampling.
//!
//! A [`Marginal`] carries strictly positive probabilities, optionally exact
//! rationals (required by the exact oracle), and a log base. Information
//! values `-log p_a` are cached at construction; dyadic probabilities get
//! exact base-2 logarithms so that equalities promised as exact by the
//! moment reports hold bit-for-bit.

use std::cell::RefCell;
use std::collections::HashMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{BoxWindow, Coord};

/// Index into an alphabet's label list.
pub type Symbol = usize;

/// Read access to a (possibly partial) symbol configuration on `Z^d`.
pub trait Configuration {
    fn dimension(&self) -> usize;
    /// `None` when the configuration is undefined at `coords`.
    fn get(&self, coords: &[Coord]) -> Option<Symbol>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LogBase {
    Natural,
    Base2,
}

impl LogBase {
    pub fn log(&self, x: f64) -> f64 {
        match self {
            LogBase::Natural => x.ln(),
            LogBase::Base2 => log2_precise(x),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            LogBase::Natural => "natural",
            LogBase::Base2 => "base2",
        }
    }
}

/// `log2` that is exact on powers of two.
fn log2_precise(x: f64) -> f64 {
    if x > 0.0 && x.is_finite() {
        let bits = x.to_bits();
        let mantissa = bits & ((1u64 << 52) - 1);
        let exponent = (bits >> 52) & 0x7ff;
        if mantissa == 0 && exponent != 0 {
            return exponent as f64 - 1023.0;
        }
    }
    x.log2()
}

/// A probability distribution on a finite alphabet.
#[derive(Debug, Clone)]
pub struct Marginal {
    labels: Vec<String>,
    probs: Vec<f64>,
    exact: Option<Vec<BigRational>>,
    log_base: LogBase,
    /// Cached `-log p_a` in `log_base` units.
    info: Vec<f64>,
    /// Symbol order of ascending probability; summations run in this order
    /// so that relabeled marginals produce bit-identical moments.
    sum_order: Vec<usize>,
    cdf: Vec<f64>,
}

impl Marginal {
    pub fn from_floats<S: Into<String>>(
        labels: Vec<S>,
        probs: Vec<f64>,
        log_base: LogBase,
    ) -> Result<Self> {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        Self::build(labels, probs, None, log_base)
    }

    pub fn from_rationals<S: Into<String>>(
        labels: Vec<S>,
        probs: Vec<BigRational>,
        log_base: LogBase,
    ) -> Result<Self> {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        let sum: BigRational = probs.iter().cloned().sum();
        if !sum.is_one() {
            return Err(Error::InvalidMarginal(format!(
                "rational probabilities must sum to 1 exactly, got {sum}"
            )));
        }
        if probs.iter().any(|p| !p.is_positive()) {
            return Err(Error::InvalidMarginal(
                "probabilities must be strictly positive".into(),
            ));
        }
        let floats = probs
            .iter()
            .map(|p| p.to_f64().ok_or_else(|| {
                Error::InvalidMarginal("rational probability out of f64 range".into())
            }))
            .collect::<Result<Vec<_>>>()?;
        Self::build(labels, floats, Some(probs), log_base)
    }

    /// Uniform distribution on `m` symbols labeled `0..m`.
    pub fn uniform(m: usize, log_base: LogBase) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidMarginal("alphabet must be nonempty".into()));
        }
        let labels: Vec<String> = (0..m).map(|i| i.to_string()).collect();
        let one_over_m = BigRational::new(BigInt::one(), BigInt::from(m));
        Self::from_rationals(labels, vec![one_over_m; m], log_base)
    }

    fn build(
        labels: Vec<String>,
        probs: Vec<f64>,
        exact: Option<Vec<BigRational>>,
        log_base: LogBase,
    ) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::InvalidMarginal("alphabet must be nonempty".into()));
        }
        if labels.len() != probs.len() {
            return Err(Error::InvalidMarginal(format!(
                "{} symbols but {} probabilities",
                labels.len(),
                probs.len()
            )));
        }
        {
            let mut seen = std::collections::BTreeSet::new();
            for l in &labels {
                if !seen.insert(l) {
                    return Err(Error::InvalidMarginal(format!("duplicate symbol {l:?}")));
                }
            }
        }
        if probs.iter().any(|&p| !(p > 0.0) || !p.is_finite()) {
            return Err(Error::InvalidMarginal(
                "probabilities must be strictly positive".into(),
            ));
        }
        if exact.is_none() {
            let sum: f64 = probs.iter().sum();
            if (sum - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidMarginal(format!(
                    "probabilities must sum to 1 within 1e-12, got {sum}"
                )));
            }
        }
        let info: Vec<f64> = probs.iter().map(|&p| -log_base.log(p)).collect();
        let mut sum_order: Vec<usize> = (0..probs.len()).collect();
        sum_order.sort_by(|&a, &b| probs[a].total_cmp(&probs[b]).then(a.cmp(&b)));
        let mut cdf = Vec::with_capacity(probs.len());
        let mut acc = 0.0;
        for &p in &probs {
            acc += p;
            cdf.push(acc);
        }
        *cdf.last_mut().expect("nonempty") = 1.0;
        Ok(Marginal {
            labels,
            probs,
            exact,
            log_base,
            info,
            sum_order,
            cdf,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, a: Symbol) -> Result<f64> {
        self.check(a)?;
        Ok(self.probs[a])
    }

    pub fn exact_probs(&self) -> Option<&[BigRational]> {
        self.exact.as_deref()
    }

    pub fn log_base(&self) -> LogBase {
        self.log_base
    }

    /// Same distribution with information values in another base.
    pub fn with_log_base(&self, log_base: LogBase) -> Self {
        let mut out = self.clone();
        out.log_base = log_base;
        out.info = out.probs.iter().map(|&p| -log_base.log(p)).collect();
        out
    }

    fn check(&self, a: Symbol) -> Result<()> {
        if a >= self.len() {
            return Err(Error::UnknownSymbol {
                index: a,
                alphabet: self.len(),
            });
        }
        Ok(())
    }

    /// `I_p(a) = -log p_a` in the configured base.
    pub fn information(&self, a: Symbol) -> Result<f64> {
        self.check(a)?;
        Ok(self.info[a])
    }

    /// Unchecked information lookup for sampling loops.
    #[inline]
    pub fn information_unchecked(&self, a: Symbol) -> f64 {
        self.info[a]
    }

    /// `E[I_p^k]`, summed in ascending-probability order.
    pub fn info_moment(&self, k: u32) -> f64 {
        self.sum_order
            .iter()
            .map(|&a| self.probs[a] * self.info[a].powi(k as i32))
            .sum()
    }

    /// Shannon entropy `h(p)` in the configured base.
    pub fn entropy(&self) -> f64 {
        self.info_moment(1)
    }

    /// `Var(I_p) = E[I_p^2] - h(p)^2`, clamped to be nonnegative.
    pub fn info_variance(&self) -> f64 {
        let h = self.entropy();
        (self.info_moment(2) - h * h).max(0.0)
    }

    pub fn info_stats(&self, k_max: u32) -> InfoStats {
        let moments: Vec<f64> = (1..=k_max.max(2)).map(|k| self.info_moment(k)).collect();
        InfoStats {
            entropy: self.entropy(),
            variance: self.info_variance(),
            moments: moments[..k_max.max(1) as usize].to_vec(),
            log_base: self.log_base.name().to_string(),
        }
    }

    /// One draw from the marginal.
    #[inline]
    pub fn sample(&self, rng: &mut impl Rng) -> Symbol {
        let r: f64 = rng.gen();
        let idx = self.cdf.partition_point(|&c| c <= r);
        idx.min(self.len() - 1)
    }

    pub fn sample_iid(&self, count: usize, rng: &mut impl Rng) -> Vec<Symbol> {
        (0..count).map(|_| self.sample(rng)).collect()
    }

    pub fn to_spec(&self) -> MarginalSpec {
        let probs = match &self.exact {
            Some(rs) => rs.iter().map(|r| ProbSpec::Rational(r.to_string())).collect(),
            None => self.probs.iter().map(|&p| ProbSpec::Float(p)).collect(),
        };
        MarginalSpec {
            symbols: self.labels.clone(),
            probs,
            log_base: Some(self.log_base),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_spec()).expect("marginal serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: MarginalSpec = serde_json::from_str(text)?;
        spec.build()
    }
}

/// JSON wire format: `{"symbols": [...], "probs": [...], "log_base": ...}`.
/// Probabilities are numbers or exact-rational strings like `"1/8"`; a
/// marginal is exact when every entry is a string.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MarginalSpec {
    pub symbols: Vec<String>,
    pub probs: Vec<ProbSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub log_base: Option<LogBase>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProbSpec {
    Float(f64),
    Rational(String),
}

impl MarginalSpec {
    pub fn build(&self) -> Result<Marginal> {
        let base = self.log_base.unwrap_or(LogBase::Natural);
        let all_rational = self
            .probs
            .iter()
            .all(|p| matches!(p, ProbSpec::Rational(_)));
        if all_rational {
            let rationals = self
                .probs
                .iter()
                .map(|p| match p {
                    ProbSpec::Rational(s) => s.parse::<BigRational>().map_err(|e| {
                        Error::InvalidMarginal(format!("bad rational {s:?}: {e}"))
                    }),
                    ProbSpec::Float(_) => unreachable!(),
                })
                .collect::<Result<Vec<_>>>()?;
            Marginal::from_rationals(self.symbols.clone(), rationals, base)
        } else {
            let floats = self
                .probs
                .iter()
                .map(|p| match p {
                    ProbSpec::Float(f) => Ok(*f),
                    ProbSpec::Rational(s) => {
                        let r: BigRational = s.parse().map_err(|e| {
                            Error::InvalidMarginal(format!("bad rational {s:?}: {e}"))
                        })?;
                        r.to_f64().ok_or_else(|| {
                            Error::InvalidMarginal("rational out of f64 range".into())
                        })
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            Marginal::from_floats(self.symbols.clone(), floats, base)
        }
    }
}

/// Entropy, informational variance, and raw moments of the information
/// function.
#[derive(Debug, Clone, Serialize)]
pub struct InfoStats {
    pub entropy: f64,
    pub variance: f64,
    /// `moments[k-1] = E[I^k]` for `k = 1..`.
    pub moments: Vec<f64>,
    pub log_base: String,
}

/// True when the two probability multisets agree entrywise within `tol`
/// after sorting. Alphabet labels are ignored; differing sizes compare
/// unequal.
pub fn permutation_equivalent(p: &Marginal, q: &Marginal, tol: f64) -> bool {
    if p.len() != q.len() {
        return false;
    }
    let mut ps = p.probs().to_vec();
    let mut qs = q.probs().to_vec();
    ps.sort_by(f64::total_cmp);
    qs.sort_by(f64::total_cmp);
    ps.iter().zip(&qs).all(|(a, b)| (a - b).abs() <= tol)
}

/// An i.i.d. draw over a finite window, stored row-major.
#[derive(Debug, Clone)]
pub struct WindowConfig {
    pub window: BoxWindow,
    pub values: Vec<Symbol>,
}

impl WindowConfig {
    fn flat_index(&self, coords: &[Coord]) -> Option<usize> {
        if !self.window.contains(coords) {
            return None;
        }
        let side = self.window.side as usize;
        let mut idx = 0usize;
        for (&c, &v) in coords.iter().zip(&self.window.corner.coords) {
            idx = idx * side + (c - v - 1) as usize;
        }
        Some(idx)
    }
}

impl Configuration for WindowConfig {
    fn dimension(&self) -> usize {
        self.window.dimension()
    }

    fn get(&self, coords: &[Coord]) -> Option<Symbol> {
        self.flat_index(coords).map(|i| self.values[i])
    }
}

/// i.i.d. draws from `p` at each site of `window`; deterministic given the
/// RNG state.
pub fn sample_window(p: &Marginal, window: &BoxWindow, rng: &mut impl Rng) -> Result<WindowConfig> {
    let count = window.site_count()?;
    Ok(WindowConfig {
        window: window.clone(),
        values: p.sample_iid(count, rng),
    })
}

/// A lazily sampled i.i.d. configuration on all of `Z^d`: sites are drawn
/// on first access and memoized, so radius probes touch only what they read.
pub struct LazyIidConfig<'a> {
    p: &'a Marginal,
    d: usize,
    cells: RefCell<HashMap<Vec<Coord>, Symbol>>,
    rng: RefCell<ChaCha8Rng>,
}

impl<'a> LazyIidConfig<'a> {
    pub fn new(p: &'a Marginal, d: usize, rng: ChaCha8Rng) -> Self {
        LazyIidConfig {
            p,
            d,
            cells: RefCell::new(HashMap::new()),
            rng: RefCell::new(rng),
        }
    }

    pub fn cells_drawn(&self) -> usize {
        self.cells.borrow().len()
    }
}

impl Configuration for LazyIidConfig<'_> {
    fn dimension(&self) -> usize {
        self.d
    }

    fn get(&self, coords: &[Coord]) -> Option<Symbol> {
        if let Some(&s) = self.cells.borrow().get(coords) {
            return Some(s);
        }
        let s = self.p.sample(&mut *self.rng.borrow_mut());
        self.cells.borrow_mut().insert(coords.to_vec(), s);
        Some(s)
    }
}

/// The five-symbol skewed marginal `(1/2, 1/8, 1/8, 1/8, 1/8)` used by the
/// bracket-matching code's range; entropy 2 bits, informational variance
/// 1 bit^2.
pub fn half_eighths(log_base: LogBase) -> Marginal {
    let half = BigRational::new(BigInt::one(), BigInt::from(2));
    let eighth = BigRational::new(BigInt::one(), BigInt::from(8));
    Marginal::from_rationals(
        vec!["o", "c00", "c01", "c10", "c11"],
        vec![half, eighth.clone(), eighth.clone(), eighth.clone(), eighth],
        log_base,
    )
    .expect("valid marginal")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::Site;
    use crate::rng::{stream_rng, Phase};

    fn fair() -> Marginal {
        Marginal::uniform(2, LogBase::Base2).unwrap()
    }

    #[test]
    fn entropy_examples() {
        assert_eq!(fair().entropy(), 1.0);
        assert_eq!(Marginal::uniform(4, LogBase::Base2).unwrap().entropy(), 2.0);
        assert_eq!(half_eighths(LogBase::Base2).entropy(), 2.0);
    }

    #[test]
    fn information_examples() {
        assert_eq!(fair().information(0).unwrap(), 1.0);
        let p = half_eighths(LogBase::Base2);
        assert_eq!(p.information(0).unwrap(), 1.0);
        assert_eq!(p.information(1).unwrap(), 3.0);
        assert!(matches!(
            p.information(9),
            Err(Error::UnknownSymbol { .. })
        ));
    }

    #[test]
    fn info_moment_examples() {
        let u4 = Marginal::uniform(4, LogBase::Base2).unwrap();
        assert_eq!(u4.info_moment(3), 8.0);
        assert_eq!(half_eighths(LogBase::Base2).info_moment(2), 5.0);
        let p = Marginal::from_floats(vec!["a", "b"], vec![0.3, 0.7], LogBase::Natural).unwrap();
        assert_eq!(p.info_moment(1), p.entropy());
    }

    #[test]
    fn info_variance_examples() {
        for m in 1..6 {
            assert_eq!(Marginal::uniform(m, LogBase::Base2).unwrap().info_variance(), 0.0);
        }
        assert_eq!(half_eighths(LogBase::Base2).info_variance(), 1.0);
        assert_eq!(fair().info_variance(), 0.0);
    }

    #[test]
    fn base_change_scales_moments() {
        let p = Marginal::from_floats(vec!["a", "b", "c"], vec![0.2, 0.3, 0.5], LogBase::Natural)
            .unwrap();
        let q = p.with_log_base(LogBase::Base2);
        let ln2 = std::f64::consts::LN_2;
        for k in 1..=4u32 {
            let scaled = p.info_moment(k) / ln2.powi(k as i32);
            assert!(
                (q.info_moment(k) - scaled).abs() <= 1e-12 * scaled.abs().max(1.0),
                "k={k}"
            );
        }
        assert!((q.entropy() - p.entropy() / ln2).abs() <= 1e-12);
    }

    #[test]
    fn moments_invariant_under_relabeling() {
        let p = Marginal::from_floats(vec!["a", "b", "c"], vec![0.5, 0.3, 0.2], LogBase::Base2)
            .unwrap();
        let q = Marginal::from_floats(vec!["x", "y", "z"], vec![0.2, 0.5, 0.3], LogBase::Base2)
            .unwrap();
        for k in 1..=5u32 {
            assert_eq!(p.info_moment(k), q.info_moment(k), "k={k}");
        }
    }

    #[test]
    fn permutation_equivalence_examples() {
        let p = Marginal::from_floats(vec!["a", "b", "c"], vec![0.5, 0.3, 0.2], LogBase::Base2)
            .unwrap();
        let q = Marginal::from_floats(vec!["x", "y", "z"], vec![0.2, 0.5, 0.3], LogBase::Base2)
            .unwrap();
        assert!(permutation_equivalent(&p, &q, 0.0));
        assert!(permutation_equivalent(&q, &p, 0.0));
        assert!(permutation_equivalent(&p, &p, 0.0));
        let u4 = Marginal::uniform(4, LogBase::Base2).unwrap();
        assert!(!permutation_equivalent(&half_eighths(LogBase::Base2), &u4, 0.1));
    }

    #[test]
    fn rejects_invalid_marginals() {
        assert!(Marginal::from_floats(vec!["a", "b"], vec![0.5, 0.6], LogBase::Natural).is_err());
        assert!(Marginal::from_floats(vec!["a", "b"], vec![1.0, 0.0], LogBase::Natural).is_err());
        assert!(Marginal::from_floats(vec!["a"], vec![0.5, 0.5], LogBase::Natural).is_err());
        let bad = BigRational::new(BigInt::from(1), BigInt::from(3));
        assert!(Marginal::from_rationals(vec!["a", "b"], vec![bad.clone(), bad], LogBase::Natural)
            .is_err());
    }

    #[test]
    fn marginal_json_round_trip() {
        let text = r#"{"symbols":["a","b"],"probs":["1/2","1/2"],"log_base":"base2"}"#;
        let p = Marginal::from_json(text).unwrap();
        assert!(p.exact_probs().is_some());
        assert_eq!(p.entropy(), 1.0);
        let back = Marginal::from_json(&p.to_json()).unwrap();
        assert_eq!(back.probs(), p.probs());

        let float_text = r#"{"symbols":["a","b"],"probs":[0.25,0.75]}"#;
        let q = Marginal::from_json(float_text).unwrap();
        assert!(q.exact_probs().is_none());
        assert_eq!(q.log_base(), LogBase::Natural);
    }

    #[test]
    fn sampling_is_deterministic_and_unbiased() {
        let p = fair();
        let window = BoxWindow::new(Site::origin(1), 1_000_000).unwrap();
        let a = sample_window(&p, &window, &mut stream_rng(9, Phase::Sample, 0)).unwrap();
        let b = sample_window(&p, &window, &mut stream_rng(9, Phase::Sample, 0)).unwrap();
        assert_eq!(a.values, b.values);
        let freq = a.values.iter().filter(|&&s| s == 0).count() as f64 / 1e6;
        assert!((freq - 0.5).abs() < 0.002, "freq = {freq}");
    }

    #[test]
    fn point_mass_sampling_is_constant() {
        let p = Marginal::uniform(1, LogBase::Natural).unwrap();
        let window = BoxWindow::new(Site::origin(2), 8).unwrap();
        let cfg = sample_window(&p, &window, &mut stream_rng(1, Phase::Sample, 0)).unwrap();
        assert!(cfg.values.iter().all(|&s| s == 0));
        assert_eq!(p.entropy(), 0.0);
    }

    #[test]
    fn window_config_reports_missing_sites() {
        let p = fair();
        let window = BoxWindow::new(Site::origin(1), 4).unwrap();
        let cfg = sample_window(&p, &window, &mut stream_rng(2, Phase::Sample, 0)).unwrap();
        assert!(cfg.get(&[1]).is_some());
        assert!(cfg.get(&[4]).is_some());
        assert!(cfg.get(&[0]).is_none());
        assert!(cfg.get(&[5]).is_none());
    }

    #[test]
    fn lazy_config_memoizes() {
        let p = fair();
        let cfg = LazyIidConfig::new(&p, 1, stream_rng(3, Phase::Sample, 0));
        let first = cfg.get(&[10]).unwrap();
        for _ in 0..5 {
            assert_eq!(cfg.get(&[10]).unwrap(), first);
        }
        assert_eq!(cfg.cells_drawn(), 1);
    }
}
