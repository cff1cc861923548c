use serde::Serialize;

use super::{DiffError, ParamStore, Tape, Var};

#[derive(Clone, Copy, Debug)]
pub struct GradCheckConfig {
    /// Central-difference step.
    pub step: f64,
    /// Maximum accepted relative error.
    pub tolerance: f64,
    /// Denominator floor so coordinates with near-zero gradient are judged
    /// on absolute error.
    pub floor: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            step: 1e-5,
            tolerance: 1e-4,
            floor: 1e-6,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CoordinateError {
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_error: f64,
    pub worst: Option<CoordinateError>,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.checked > 0 && self.max_rel_error <= self.tolerance
    }
}

/// Compares reverse-mode gradients of a scalar function of the trainable
/// parameters in `store` against central finite differences, coordinate by
/// coordinate.
pub fn grad_check<Func>(store: &ParamStore<f64>, f: Func, config: GradCheckConfig) -> Result<GradCheckReport, DiffError>
where
    Func: for<'g> Fn(&'g Tape<'g, f64>) -> Result<Var<'g, f64>, DiffError>,
{
    let analytic = {
        let tape = Tape::new(store);
        let out = f(&tape)?;
        tape.backward(out)?.into_params()
    };
    let eval = |s: &ParamStore<f64>| -> Result<f64, DiffError> {
        let tape = Tape::inference(s);
        Ok(f(&tape)?.item())
    };

    let mut probe = store.clone();
    let mut report = GradCheckReport {
        checked: 0,
        max_rel_error: 0.0,
        worst: None,
        tolerance: config.tolerance,
    };
    for id in store.ids() {
        if !store.is_trainable(id) {
            continue;
        }
        for k in 0..store.get(id).numel() {
            let orig = store.get(id).data()[k];
            probe.get_mut(id).data_mut()[k] = orig + config.step;
            let plus = eval(&probe)?;
            probe.get_mut(id).data_mut()[k] = orig - config.step;
            let minus = eval(&probe)?;
            probe.get_mut(id).data_mut()[k] = orig;

            let numeric = (plus - minus) / (2.0 * config.step);
            let a = analytic.get(&id).map_or(0.0, |g| g.data()[k]);
            let denom = a.abs().max(numeric.abs()).max(config.floor);
            let rel = (a - numeric).abs() / denom;
            report.checked += 1;
            if rel > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = report.max_rel_error.max(rel);
                report.worst = Some(CoordinateError {
                    param: store.name(id).to_string(),
                    index: k,
                    analytic: a,
                    numeric,
                    rel_error: rel,
                });
            }
        }
    }
    Ok(report)
}
