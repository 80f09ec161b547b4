use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::profiles::{adapt, classify, AdaptationConfig, BackgroundSource, Profile};
use crate::scalar::Scalar;

use super::evaluate;

/// An ordered list of tau values within [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauGrid(pub Vec<f64>);

impl Default for TauGrid {
    /// 0.0, 0.1, ..., 1.0
    fn default() -> Self {
        parse_grid("0:1:0.1").expect("default grid is valid")
    }
}

/// Parse `start:stop:step` (inclusive) into a grid. Values are rounded to
/// 12 decimals so that `0:1:0.1` yields exactly the literals 0.1, 0.2, ...
pub fn parse_grid(spec: &str) -> Result<TauGrid> {
    let parts: Vec<&str> = spec.split(':').collect();
    let [start, stop, step] = parts.as_slice() else {
        return Err(Error::InvalidGrid(format!("`{spec}` is not start:stop:step")));
    };
    let num = |s: &str| {
        s.trim()
            .parse::<f64>()
            .map_err(|_| Error::InvalidGrid(format!("`{s}` is not a number")))
    };
    let (start, stop, step) = (num(start)?, num(stop)?, num(step)?);
    if !(0.0..=1.0).contains(&start) || !(0.0..=1.0).contains(&stop) || stop < start {
        return Err(Error::InvalidGrid(format!("`{spec}` must satisfy 0 <= start <= stop <= 1")));
    }
    if start == stop {
        return Ok(TauGrid(vec![start]));
    }
    if step.is_nan() || step <= 0.0 {
        return Err(Error::InvalidGrid("step must be positive".into()));
    }
    let steps = (stop - start) / step;
    let n = steps.round();
    if (steps - n).abs() > 1e-9 {
        return Err(Error::InvalidGrid(format!("step {step} does not divide [{start}, {stop}]")));
    }
    let n = n as usize;
    let values = (0..=n)
        .map(|i| {
            let v = start + (stop - start) * i as f64 / n as f64;
            format!("{v:.12}").parse::<f64>().unwrap()
        })
        .collect();
    Ok(TauGrid(values))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauSearchResult {
    pub grid: Vec<f64>,
    pub accuracy_per_tau: Vec<f64>,
    pub best_tau: f64,
    pub best_accuracy: f64,
    pub background_source: BackgroundSource,
    #[serde(default)]
    pub fingerprint: BTreeMap<String, serde_json::Value>,
}

/// Tau search with one background profile shared by every test profile.
pub fn grid_search_tau<T: Scalar>(
    test_profiles: &[Profile<T>],
    p_b: &Profile<T>,
    truths: &[String],
    grid: &TauGrid,
    source: BackgroundSource,
) -> Result<TauSearchResult> {
    let backgrounds = vec![p_b; test_profiles.len()];
    grid_search_tau_per_sample(test_profiles, &backgrounds, truths, grid, source)
}

/// Tau search where every test profile has its own background profile.
/// For each tau: adapt, classify, evaluate. Ties in accuracy go to the smaller tau.
pub fn grid_search_tau_per_sample<T: Scalar>(
    test_profiles: &[Profile<T>],
    backgrounds: &[&Profile<T>],
    truths: &[String],
    grid: &TauGrid,
    source: BackgroundSource,
) -> Result<TauSearchResult> {
    if grid.0.is_empty() {
        return Err(Error::EmptyGrid);
    }
    if test_profiles.is_empty() {
        return Err(Error::EmptyInput);
    }
    if backgrounds.len() != test_profiles.len() || truths.len() != test_profiles.len() {
        return Err(Error::InvalidArgument("profiles, backgrounds and truths differ in length".into()));
    }
    let vocabulary = test_profiles[0].class_ids.clone();
    let ids: Vec<String> = (0..test_profiles.len()).map(|i| format!("{i:08}")).collect();
    let truth_map: BTreeMap<String, String> = ids.iter().cloned().zip(truths.iter().cloned()).collect();
    let accuracy_per_tau = grid
        .0
        .par_iter()
        .map(|&tau| {
            let cfg = AdaptationConfig::new(tau, source)?;
            let preds = test_profiles
                .iter()
                .zip(backgrounds)
                .zip(&ids)
                .map(|((p, b), id)| Ok((id.clone(), classify(&adapt(p, b, &cfg)?)?.to_string())))
                .collect::<Result<BTreeMap<_, _>>>()?;
            Ok(evaluate(&preds, &truth_map, &vocabulary)?.accuracy)
        })
        .collect::<Result<Vec<f64>>>()?;
    let mut best = 0;
    for i in 1..grid.0.len() {
        let (a, b) = (accuracy_per_tau[i], accuracy_per_tau[best]);
        if a > b || (a == b && grid.0[i] < grid.0[best]) {
            best = i;
        }
    }
    Ok(TauSearchResult {
        grid: grid.0.clone(),
        best_tau: grid.0[best],
        best_accuracy: accuracy_per_tau[best],
        accuracy_per_tau,
        background_source: source,
        fingerprint: BTreeMap::new(),
    })
}
