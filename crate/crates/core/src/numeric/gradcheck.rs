use std::collections::BTreeMap;

use rand::seq::index::sample;

use super::store::ParameterStore;
use super::tape::{Tape, Var};
use super::NumericError;
use crate::seeding::labelled_rng;

#[derive(Clone, Copy, Debug)]
pub struct GradCheckConfig {
    /// Central-difference step.
    pub epsilon: f64,
    /// Pass threshold on the maximum relative error.
    pub tolerance: f64,
    /// Coordinates sampled per parameter; `None` checks every coordinate.
    pub max_coords_per_param: Option<usize>,
    /// Denominator floor for the relative error, so coordinates whose true
    /// gradient vanishes are judged on absolute error below this scale.
    pub abs_floor: f64,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            epsilon: 1e-5,
            tolerance: 1e-4,
            max_coords_per_param: None,
            abs_floor: 1e-6,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParameterCheck {
    pub coords_checked: usize,
    pub max_rel_error: f64,
    /// Coordinate achieving the maximum.
    pub worst_coord: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub per_parameter: BTreeMap<String, ParameterCheck>,
    pub max_rel_error: f64,
    pub tolerance: f64,
    pub skipped_frozen: Vec<String>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error < self.tolerance
    }

    pub fn coords_checked(&self) -> usize {
        self.per_parameter.values().map(|c| c.coords_checked).sum()
    }
}

pub(crate) fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compares reverse-mode gradients of `loss_fn` against central differences
/// `(L(θ+ε) − L(θ−ε)) / 2ε`, coordinate by coordinate.
///
/// `loss_fn` records the loss on the given tape from the given store and
/// must be deterministic. The store is restored bit-exactly before return.
pub fn grad_check<F, E>(
    store: &mut ParameterStore,
    mut loss_fn: F,
    config: &GradCheckConfig,
) -> Result<GradCheckReport, E>
where
    F: FnMut(&mut Tape, &ParameterStore) -> Result<Var, E>,
    E: From<NumericError>,
{
    let mut tape = Tape::new();
    let loss = loss_fn(&mut tape, store)?;
    let value = tape.scalar(loss);
    if !value.is_finite() {
        return Err(NumericError::NonFiniteLoss { value }.into());
    }
    let grads = tape.backward(loss);
    let mut analytic: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for (name, v) in tape.parameter_vars() {
        let len = store.value(name).map(|t| t.len()).unwrap_or(0);
        let g = grads.get(v).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; len]);
        analytic.insert(name.to_string(), g);
    }
    drop(tape);

    let names: Vec<String> = store.names().map(str::to_string).collect();
    let mut report = GradCheckReport {
        per_parameter: BTreeMap::new(),
        max_rel_error: 0.0,
        tolerance: config.tolerance,
        skipped_frozen: Vec::new(),
    };
    let mut eval = |store: &ParameterStore| -> Result<f64, E> {
        let mut t = Tape::new();
        let l = loss_fn(&mut t, store)?;
        let v = t.scalar(l);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(NumericError::NonFiniteLoss { value: v }.into())
        }
    };

    for name in names {
        if store.is_frozen(&name) {
            report.skipped_frozen.push(name);
            continue;
        }
        let len = store.value(&name).map(|t| t.len()).unwrap_or(0);
        if len == 0 {
            continue;
        }
        let coords: Vec<usize> = match config.max_coords_per_param {
            Some(k) if k < len => {
                let mut rng = labelled_rng(config.seed, &name);
                let mut c = sample(&mut rng, len, k).into_vec();
                c.sort_unstable();
                c
            }
            _ => (0..len).collect(),
        };
        let zeros = vec![0.0; len];
        let g = analytic.get(&name).unwrap_or(&zeros);
        let mut check = ParameterCheck {
            coords_checked: 0,
            max_rel_error: 0.0,
            worst_coord: 0,
            analytic: 0.0,
            numeric: 0.0,
        };
        for &i in &coords {
            let original = store.value(&name).expect("listed").data()[i];
            store.value_mut(&name).expect("listed").data_mut()[i] = original + config.epsilon;
            let plus = eval(store);
            store.value_mut(&name).expect("listed").data_mut()[i] = original - config.epsilon;
            let minus = eval(store);
            store.value_mut(&name).expect("listed").data_mut()[i] = original;
            let numeric = (plus? - minus?) / (2.0 * config.epsilon);
            let err = relative_error(g[i], numeric, config.abs_floor);
            check.coords_checked += 1;
            if err > check.max_rel_error || check.coords_checked == 1 {
                check.max_rel_error = err;
                check.worst_coord = i;
                check.analytic = g[i];
                check.numeric = numeric;
            }
        }
        report.max_rel_error = report.max_rel_error.max(check.max_rel_error);
        report.per_parameter.insert(name, check);
    }
    Ok(report)
}
