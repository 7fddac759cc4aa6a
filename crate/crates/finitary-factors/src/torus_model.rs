//! Applying a truncated code on the discrete torus.
//!
//! A code with rule radius truncated at `n` maps a torus configuration to a
//! grid over the range alphabet extended by the deferral symbol `*`
//! (represented as `None`): site `u` resolves from the periodic extension of
//! the configuration exactly when the coding radius there is at most `n`.
//! The defect set collects the `*`-sites.

use std::cell::RefCell;
use std::collections::HashMap;

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codes::{phi_n_site, resolve_at, FinitaryCode, RadiusResult};
use crate::error::{Error, Result};
use crate::lattice::{
    canonical_site_set, enclosing_window, window_representative, Coord, Site, TorusGeometry,
};
use crate::process::{Configuration, Marginal, Symbol};
use crate::rng::{stream_rng, Phase};

/// A fully populated configuration on `T_N^d`, stored row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TorusConfig {
    geom: TorusGeometry,
    values: Vec<Symbol>,
}

impl TorusConfig {
    pub fn new(geom: TorusGeometry, values: Vec<Symbol>) -> Result<Self> {
        if values.len() != geom.site_count()? {
            return Err(Error::Precondition(format!(
                "expected {} values for the torus, got {}",
                geom.site_count()?,
                values.len()
            )));
        }
        Ok(TorusConfig { geom, values })
    }

    /// i.i.d. draw from `p` at every torus site.
    pub fn sample(p: &Marginal, geom: TorusGeometry, rng: &mut impl rand::Rng) -> Result<Self> {
        let count = geom.site_count()?;
        Ok(TorusConfig {
            geom,
            values: p.sample_iid(count, rng),
        })
    }

    pub fn geometry(&self) -> TorusGeometry {
        self.geom
    }

    pub fn values(&self) -> &[Symbol] {
        &self.values
    }

    pub fn value_at(&self, site: &Site) -> Symbol {
        self.values[self.geom.flat_index(&site.coords)]
    }

    /// The configuration `v -> self(v + shift)`.
    pub fn translated(&self, shift: &[Coord]) -> Result<Self> {
        if shift.len() != self.geom.dimension() {
            return Err(Error::DimensionMismatch {
                expected: self.geom.dimension(),
                found: shift.len(),
            });
        }
        let count = self.values.len();
        let mut values = vec![0; count];
        for (idx, slot) in values.iter_mut().enumerate() {
            let site = self.geom.site_at(idx);
            let mut coords = site.coords;
            for (c, &s) in coords.iter_mut().zip(shift) {
                *c += s;
            }
            *slot = self.values[self.geom.flat_index(&coords)];
        }
        TorusConfig::new(self.geom, values)
    }

    pub fn to_spec(&self, alphabet: &[String]) -> TorusConfigSpec {
        TorusConfigSpec {
            d: self.geom.dimension(),
            n_side: self.geom.side(),
            alphabet: alphabet.to_vec(),
            values: self.values.clone(),
        }
    }

    pub fn from_spec(spec: &TorusConfigSpec) -> Result<Self> {
        let geom = TorusGeometry::new(spec.d, spec.n_side)?;
        if spec.values.iter().any(|&s| s >= spec.alphabet.len()) {
            return Err(Error::Precondition(
                "configuration value outside the alphabet".into(),
            ));
        }
        TorusConfig::new(geom, spec.values.clone())
    }
}

impl Configuration for TorusConfig {
    fn dimension(&self) -> usize {
        self.geom.dimension()
    }

    fn get(&self, coords: &[Coord]) -> Option<Symbol> {
        Some(self.values[self.geom.flat_index(coords)])
    }
}

/// Wire format: flat row-major symbol indices plus a small header.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TorusConfigSpec {
    pub d: usize,
    #[serde(rename = "N")]
    pub n_side: Coord,
    pub alphabet: Vec<String>,
    pub values: Vec<Symbol>,
}

/// Output of the truncated code on the torus: a grid over the range
/// alphabet plus `*` (`None`), with the defect set `J^c` recorded as flat
/// indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelOutput {
    geom: TorusGeometry,
    values: Vec<Option<Symbol>>,
    defects: Vec<usize>,
}

impl ModelOutput {
    pub fn geometry(&self) -> TorusGeometry {
        self.geom
    }

    pub fn values(&self) -> &[Option<Symbol>] {
        &self.values
    }

    pub fn value_at(&self, site: &Site) -> Option<Symbol> {
        self.values[self.geom.flat_index(&site.coords)]
    }

    /// Flat indices of the `*`-sites.
    pub fn defects(&self) -> &[usize] {
        &self.defects
    }

    pub fn defect_count(&self) -> usize {
        self.defects.len()
    }

    pub fn translated(&self, shift: &[Coord]) -> Result<Self> {
        if shift.len() != self.geom.dimension() {
            return Err(Error::DimensionMismatch {
                expected: self.geom.dimension(),
                found: shift.len(),
            });
        }
        let mut values = vec![None; self.values.len()];
        for (idx, slot) in values.iter_mut().enumerate() {
            let site = self.geom.site_at(idx);
            let mut coords = site.coords;
            for (c, &s) in coords.iter_mut().zip(shift) {
                *c += s;
            }
            *slot = self.values[self.geom.flat_index(&coords)];
        }
        let defects = values
            .iter()
            .enumerate()
            .filter_map(|(i, v)| v.is_none().then_some(i))
            .collect();
        Ok(ModelOutput {
            geom: self.geom,
            values,
            defects,
        })
    }

    /// Values rendered with range labels and `"*"` for defects.
    pub fn to_labelled(&self, range_labels: &[String]) -> Vec<String> {
        self.values
            .iter()
            .map(|v| match v {
                Some(b) => range_labels[*b].clone(),
                None => "*".to_string(),
            })
            .collect()
    }
}

/// Number of `*`-sites in a model output.
pub fn defect_count(out: &ModelOutput) -> usize {
    out.defect_count()
}

/// Applies the radius-`n` truncation of the code at every site of the
/// periodic extension of `x`. Requires `N >= 2n + 1` so that windows do not
/// wrap onto themselves.
pub fn model_apply(code: &FinitaryCode, n: usize, x: &TorusConfig) -> Result<ModelOutput> {
    let geom = x.geometry();
    if geom.dimension() != code.dimension() {
        return Err(Error::DimensionMismatch {
            expected: code.dimension(),
            found: geom.dimension(),
        });
    }
    if (geom.side() as u64) < 2 * n as u64 + 1 {
        return Err(Error::Precondition(format!(
            "torus side {} is smaller than the window side {}",
            geom.side(),
            2 * n + 1
        )));
    }
    let count = geom.site_count()?;
    let mut values = Vec::with_capacity(count);
    let mut defects = Vec::new();
    for idx in 0..count {
        let site = geom.site_at(idx);
        let out = phi_n_site(code, x, &site, n)?;
        if out.is_none() {
            defects.push(idx);
        }
        values.push(out);
    }
    Ok(ModelOutput {
        geom,
        values,
        defects,
    })
}

/// The box `corner + [1, N]^d` read from a torus configuration, extended
/// outside the box by lazily drawn i.i.d. symbols. Realizes a point of the
/// full-lattice process whose restriction to the box is the periodization's
/// preimage.
struct BoxExtendedConfig<'a> {
    torus: &'a TorusConfig,
    corner: &'a Site,
    p: &'a Marginal,
    overflow: RefCell<HashMap<Vec<Coord>, Symbol>>,
    rng: RefCell<ChaCha8Rng>,
}

impl Configuration for BoxExtendedConfig<'_> {
    fn dimension(&self) -> usize {
        self.torus.dimension()
    }

    fn get(&self, coords: &[Coord]) -> Option<Symbol> {
        let n = self.torus.geometry().side();
        let in_box = coords
            .iter()
            .zip(&self.corner.coords)
            .all(|(&c, &v)| c > v && c <= v + n);
        if in_box {
            return self.torus.get(coords);
        }
        if let Some(&s) = self.overflow.borrow().get(coords) {
            return Some(s);
        }
        let s = self.p.sample(&mut *self.rng.borrow_mut());
        self.overflow.borrow_mut().insert(coords.to_vec(), s);
        Some(s)
    }
}

/// One draw from the coupling of the truncated torus output with the true
/// factor process on a site set.
#[derive(Debug, Clone)]
pub struct CoupledSample {
    /// Canonical (projected, deduplicated, sorted) site set.
    pub sites: Vec<Site>,
    /// Truncated output at each site; `None` is the deferral symbol.
    pub model: Vec<Option<Symbol>>,
    /// Factor output at each site; `None` when resolution exceeded the cap.
    pub factor: Vec<Option<Symbol>>,
    /// Corner of the enclosing window used for the construction.
    pub window_corner: Site,
}

impl CoupledSample {
    /// Sites where the truncated output lies in the range alphabet yet
    /// differs from the (resolved) factor output. The coupling contract
    /// demands zero.
    pub fn contract_violations(&self) -> usize {
        self.model
            .iter()
            .zip(&self.factor)
            .filter(|(m, f)| {
                matches!((m, f), (Some(a), Some(b)) if a != b)
            })
            .count()
    }

    /// Non-censored sites where the two margins differ (these are exactly
    /// the `*`-sites when the contract holds).
    pub fn disagreements(&self) -> usize {
        self.model
            .iter()
            .zip(&self.factor)
            .filter(|(m, f)| f.is_some() && m != f)
            .count()
    }

    pub fn defect_sites(&self) -> usize {
        self.model.iter().filter(|m| m.is_none()).count()
    }

    pub fn censored_sites(&self) -> usize {
        self.factor.iter().filter(|f| f.is_none()).count()
    }
}

/// Samples the coupling on `sites`: the torus is drawn i.i.d., the box
/// `u0 + [1, N]^d` supplied by per-axis residue avoidance is read off the
/// torus, and the factor output is resolved by extending the box lazily.
/// Requires `B(sites, n)` to fit inside such a box.
pub fn coupled_sample(
    code: &FinitaryCode,
    n: usize,
    geom: TorusGeometry,
    sites: &[Site],
    p: &Marginal,
    mut rng: ChaCha8Rng,
    cap: usize,
) -> Result<CoupledSample> {
    if geom.dimension() != code.dimension() {
        return Err(Error::DimensionMismatch {
            expected: code.dimension(),
            found: geom.dimension(),
        });
    }
    if p.len() != code.domain_size() {
        return Err(Error::Precondition(format!(
            "marginal size {} does not match the domain alphabet size {}",
            p.len(),
            code.domain_size()
        )));
    }
    let canonical = canonical_site_set(sites, &geom)?;
    let corner = enclosing_window(&canonical, &geom, n)?;
    let torus = TorusConfig::sample(p, geom, &mut rng)?;
    let mut model = Vec::with_capacity(canonical.len());
    for u in &canonical {
        model.push(phi_n_site(code, &torus, u, n)?);
    }
    let extended = BoxExtendedConfig {
        torus: &torus,
        corner: &corner,
        p,
        overflow: RefCell::new(HashMap::new()),
        rng: RefCell::new(rng),
    };
    let mut factor = Vec::with_capacity(canonical.len());
    for u in &canonical {
        let rep = window_representative(u, &corner, &geom);
        let value = match resolve_at(code, &extended, &rep, cap)? {
            (RadiusResult::Resolved(_), Some(b)) => Some(b),
            _ => None,
        };
        factor.push(value);
    }
    Ok(CoupledSample {
        sites: canonical,
        model,
        factor,
        window_corner: corner,
    })
}

/// Aggregated coupling statistics over independent repetitions.
#[derive(Debug, Clone, Serialize)]
pub struct CouplingReport {
    pub reps: usize,
    pub sites_per_rep: usize,
    pub total_sites: usize,
    pub defect_sites: usize,
    pub disagreements: usize,
    pub contract_violations: usize,
    pub censored_sites: usize,
    pub disagreement_fraction: f64,
    pub defect_fraction: f64,
    pub censored_fraction: f64,
}

/// Runs `reps` independent coupled samples; repetitions use per-index RNG
/// streams and can be scheduled across any number of workers.
pub fn coupling_driver(
    code: &FinitaryCode,
    n: usize,
    geom: TorusGeometry,
    sites: &[Site],
    p: &Marginal,
    reps: usize,
    seed: u64,
    cap: usize,
) -> Result<CouplingReport> {
    if reps == 0 {
        return Err(Error::Precondition("reps must be >= 1".into()));
    }
    let per_rep: Result<Vec<(usize, usize, usize, usize, usize)>> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let rng = stream_rng(seed, Phase::Couple, rep as u64);
            let sample = coupled_sample(code, n, geom, sites, p, rng, cap)?;
            Ok((
                sample.sites.len(),
                sample.defect_sites(),
                sample.disagreements(),
                sample.contract_violations(),
                sample.censored_sites(),
            ))
        })
        .collect();
    let per_rep = per_rep?;
    let sites_per_rep = per_rep.first().map(|t| t.0).unwrap_or(0);
    let total_sites: usize = per_rep.iter().map(|t| t.0).sum();
    let defect_sites: usize = per_rep.iter().map(|t| t.1).sum();
    let disagreements: usize = per_rep.iter().map(|t| t.2).sum();
    let contract_violations: usize = per_rep.iter().map(|t| t.3).sum();
    let censored_sites: usize = per_rep.iter().map(|t| t.4).sum();
    let uncensored = (total_sites - censored_sites).max(1);
    Ok(CouplingReport {
        reps,
        sites_per_rep,
        total_sites,
        defect_sites,
        disagreements,
        contract_violations,
        censored_sites,
        disagreement_fraction: disagreements as f64 / uncensored as f64,
        defect_fraction: defect_sites as f64 / total_sites as f64,
        censored_fraction: censored_sites as f64 / total_sites as f64,
    })
}

/// Per-repetition defect fractions of the torus model.
#[derive(Debug, Clone, Serialize)]
pub struct DefectStats {
    pub reps: usize,
    pub site_count: usize,
    pub mean_defect_fraction: f64,
    pub std_error: f64,
    pub mean_defect_count: f64,
}

/// Monte Carlo estimate of the per-site defect rate `P[output = *]`.
pub fn defect_statistics(
    code: &FinitaryCode,
    p: &Marginal,
    geom: TorusGeometry,
    n: usize,
    reps: usize,
    seed: u64,
) -> Result<DefectStats> {
    if reps == 0 {
        return Err(Error::Precondition("reps must be >= 1".into()));
    }
    if p.len() != code.domain_size() {
        return Err(Error::Precondition(format!(
            "marginal size {} does not match the domain alphabet size {}",
            p.len(),
            code.domain_size()
        )));
    }
    let site_count = geom.site_count()?;
    let fractions: Result<Vec<f64>> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let mut rng = stream_rng(seed, Phase::Model, rep as u64);
            let x = TorusConfig::sample(p, geom, &mut rng)?;
            let out = model_apply(code, n, &x)?;
            Ok(out.defect_count() as f64 / site_count as f64)
        })
        .collect();
    let fractions = fractions?;
    let mean = fractions.iter().sum::<f64>() / reps as f64;
    let var = fractions.iter().map(|f| (f - mean) * (f - mean)).sum::<f64>()
        / (reps.max(2) - 1) as f64;
    Ok(DefectStats {
        reps,
        site_count,
        mean_defect_fraction: mean,
        std_error: (var / reps as f64).sqrt(),
        mean_defect_count: mean * site_count as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codes::{identity, meshalkin, xor_window};
    use crate::process::LogBase;

    fn fair() -> Marginal {
        Marginal::uniform(2, LogBase::Base2).unwrap()
    }

    fn u4() -> Marginal {
        Marginal::uniform(4, LogBase::Base2).unwrap()
    }

    #[test]
    fn identity_model_is_the_identity() {
        let geom = TorusGeometry::new(1, 8).unwrap();
        let mut rng = stream_rng(1, Phase::Model, 0);
        let x = TorusConfig::sample(&fair(), geom, &mut rng).unwrap();
        let out = model_apply(&identity(2, 1).unwrap(), 0, &x).unwrap();
        assert_eq!(out.defect_count(), 0);
        let values: Vec<Symbol> = out.values().iter().map(|v| v.unwrap()).collect();
        assert_eq!(values, x.values());
    }

    #[test]
    fn xor3_hand_computed_output() {
        let geom = TorusGeometry::new(1, 6).unwrap();
        let x = TorusConfig::new(geom, vec![1, 0, 0, 0, 0, 0]).unwrap();
        let out = model_apply(&xor_window(1, 1).unwrap(), 1, &x).unwrap();
        let values: Vec<Symbol> = out.values().iter().map(|v| v.unwrap()).collect();
        assert_eq!(values, vec![1, 1, 0, 0, 0, 1]);
        assert_eq!(defect_count(&out), 0);
    }

    #[test]
    fn window_must_fit_on_the_torus() {
        let geom = TorusGeometry::new(1, 6).unwrap();
        let x = TorusConfig::new(geom, vec![0; 6]).unwrap();
        assert!(matches!(
            model_apply(&xor_window(3, 1).unwrap(), 3, &x),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn all_star_output_counts_every_site() {
        // A bracket configuration of all closes never resolves at close
        // sites; make every site a close bracket.
        let geom = TorusGeometry::new(1, 9).unwrap();
        let x = TorusConfig::new(geom, vec![2; 9]).unwrap();
        let out = model_apply(&meshalkin().unwrap(), 3, &x).unwrap();
        assert_eq!(out.defect_count(), 9);
    }

    #[test]
    fn model_commutes_with_translation() {
        let geom = TorusGeometry::new(1, 16).unwrap();
        let code = meshalkin().unwrap();
        for rep in 0..20 {
            let mut rng = stream_rng(5, Phase::Model, rep);
            let x = TorusConfig::sample(&u4(), geom, &mut rng).unwrap();
            let shifted = x.translated(&[3]).unwrap();
            let a = model_apply(&code, 4, &shifted).unwrap();
            let b = model_apply(&code, 4, &x).unwrap().translated(&[3]).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn model_commutes_with_translation_2d() {
        let geom = TorusGeometry::new(2, 6).unwrap();
        let code = xor_window(1, 2).unwrap();
        for rep in 0..10 {
            let mut rng = stream_rng(6, Phase::Model, rep);
            let x = TorusConfig::sample(&fair(), geom, &mut rng).unwrap();
            let shifted = x.translated(&[2, 5]).unwrap();
            let a = model_apply(&code, 1, &shifted).unwrap();
            let b = model_apply(&code, 1, &x).unwrap().translated(&[2, 5]).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn resolved_sites_match_untruncated_output() {
        let geom = TorusGeometry::new(1, 32).unwrap();
        let code = meshalkin().unwrap();
        for rep in 0..50 {
            let mut rng = stream_rng(7, Phase::Model, rep);
            let x = TorusConfig::sample(&u4(), geom, &mut rng).unwrap();
            let out = model_apply(&code, 5, &x).unwrap();
            for idx in 0..geom.site_count().unwrap() {
                if let Some(b) = out.values()[idx] {
                    let site = geom.site_at(idx);
                    let (_, full) = resolve_at(&code, &x, &site, 4 * 32).unwrap();
                    assert_eq!(full, Some(b));
                }
            }
        }
    }

    #[test]
    fn coupling_identity_always_agrees() {
        let geom = TorusGeometry::new(1, 12).unwrap();
        let code = identity(2, 1).unwrap();
        let sites = vec![Site::new(vec![2]), Site::new(vec![5])];
        for rep in 0..50 {
            let rng = stream_rng(8, Phase::Couple, rep);
            let s = coupled_sample(&code, 0, geom, &sites, &fair(), rng, 4).unwrap();
            assert_eq!(s.model, s.factor);
            assert_eq!(s.disagreements(), 0);
            assert_eq!(s.censored_sites(), 0);
        }
    }

    #[test]
    fn coupling_contract_holds_per_sample() {
        let geom = TorusGeometry::new(1, 32).unwrap();
        let code = meshalkin().unwrap();
        let sites = vec![Site::new(vec![3]), Site::new(vec![7])];
        for rep in 0..300 {
            let rng = stream_rng(9, Phase::Couple, rep);
            let s = coupled_sample(&code, 4, geom, &sites, &u4(), rng, 1 << 12).unwrap();
            assert_eq!(s.contract_violations(), 0);
            // Non-censored disagreements happen only at *-sites.
            for (m, f) in s.model.iter().zip(&s.factor) {
                if f.is_some() && m != f {
                    assert!(m.is_none());
                }
            }
        }
    }

    #[test]
    fn coupling_rejects_unplaceable_sets() {
        let geom = TorusGeometry::new(1, 16).unwrap();
        let code = meshalkin().unwrap();
        // Sites spread so that every residue is occupied at radius 4.
        let sites: Vec<Site> = (0..16).step_by(4).map(|c| Site::new(vec![c])).collect();
        let rng = stream_rng(10, Phase::Couple, 0);
        assert!(coupled_sample(&code, 4, geom, &sites, &u4(), rng, 64).is_err());
    }

    #[test]
    fn defect_rate_matches_direct_radius_estimate() {
        use crate::process::LazyIidConfig;
        let geom = TorusGeometry::new(1, 32).unwrap();
        let code = meshalkin().unwrap();
        let p = u4();
        let n = 4;
        let reps = 2000;
        let stats = defect_statistics(&code, &p, geom, n, reps, 11).unwrap();
        // Independent estimate of P[R > n] from lazily sampled windows.
        let draws = 4000;
        let mut exceed = 0usize;
        for rep in 0..draws {
            let cfg = LazyIidConfig::new(&p, 1, stream_rng(12, Phase::Tail, rep as u64));
            let r = crate::codes::coding_radius(&code, &cfg, &Site::origin(1), n).unwrap();
            if r.is_censored() {
                exceed += 1;
            }
        }
        let tail = exceed as f64 / draws as f64;
        let tail_se = (tail * (1.0 - tail) / draws as f64).sqrt();
        let combined = (stats.std_error.powi(2) + tail_se.powi(2)).sqrt();
        assert!(
            (stats.mean_defect_fraction - tail).abs() <= 4.0 * combined,
            "defect {} vs tail {tail} (se {combined})",
            stats.mean_defect_fraction
        );
    }

    #[test]
    fn torus_config_spec_round_trip() {
        let geom = TorusGeometry::new(2, 3).unwrap();
        let x = TorusConfig::new(geom, vec![0, 1, 0, 1, 1, 0, 0, 0, 1]).unwrap();
        let spec = x.to_spec(&["a".to_string(), "b".to_string()]);
        let text = serde_json::to_string(&spec).unwrap();
        let parsed: TorusConfigSpec = serde_json::from_str(&text).unwrap();
        let back = TorusConfig::from_spec(&parsed).unwrap();
        assert_eq!(back, x);
    }
}
