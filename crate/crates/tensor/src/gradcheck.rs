//! Central finite-difference verification of analytic gradients.

use crate::error::{Result, TensorError};
use crate::params::{ParamId, ParamSet};
use crate::tape::{Tape, Var};
use crate::Tensor;

/// Default central-difference step for wide-precision checks.
pub const FD_STEP: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    /// `max |analytic − numeric| / max(|analytic|, |numeric|, 1e-8)`.
    pub max_rel_error: f64,
    /// `(input, coordinate)` where the maximum occurred.
    pub worst: Option<(usize, usize)>,
    /// `max |analytic − numeric| / (1 + max(|analytic|, |numeric|))`. Unlike the
    /// relative error it stays at roundoff level on near-zero gradients.
    pub max_mixed_error: f64,
    pub coordinates: usize,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

pub fn mixed_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (1.0 + analytic.abs().max(numeric.abs()))
}

fn scalar_of(var: Var<'_, f64>) -> Result<f64> {
    let v = var.value();
    if v.len() != 1 {
        return Err(TensorError::NotScalar {
            shape: v.shape().to_vec(),
        });
    }
    Ok(v.data()[0])
}

struct Tracker {
    report: GradCheckReport,
}

impl Tracker {
    fn new() -> Self {
        Self {
            report: GradCheckReport {
                max_rel_error: 0.0,
                worst: None,
                max_mixed_error: 0.0,
                coordinates: 0,
            },
        }
    }
    fn record(&mut self, input: usize, coord: usize, analytic: f64, numeric: f64) {
        let e = relative_error(analytic, numeric);
        self.report.coordinates += 1;
        self.report.max_mixed_error = self
            .report
            .max_mixed_error
            .max(mixed_error(analytic, numeric));
        if self.report.worst.is_none() || e > self.report.max_rel_error {
            self.report.max_rel_error = e;
            self.report.worst = Some((input, coord));
        }
    }
}

/// Compares the tape gradient of a scalar function against central differences
/// with respect to every coordinate of every input.
pub fn grad_check<F>(f: F, inputs: &[Tensor<f64>], step: f64) -> Result<GradCheckReport>
where
    F: for<'t> Fn(&'t Tape<f64>, &[Var<'t, f64>]) -> Result<Var<'t, f64>>,
{
    let eval = |xs: &[Tensor<f64>]| -> Result<f64> {
        let tape = Tape::new();
        let vars: Vec<_> = xs.iter().map(|x| tape.constant(x.clone())).collect();
        scalar_of(f(&tape, &vars)?)
    };

    let tape = Tape::new();
    let vars: Vec<_> = inputs.iter().map(|x| tape.var(x.clone())).collect();
    let out = f(&tape, &vars)?;
    scalar_of(out)?;
    let grads = tape.backward(out)?;

    let mut tracker = Tracker::new();
    let mut work = inputs.to_vec();
    for (i, var) in vars.iter().enumerate() {
        let analytic = grads.wrt(*var).map(|g| g.to_vec());
        for c in 0..inputs[i].len() {
            let orig = work[i].data()[c];
            work[i].data_mut()[c] = orig + step;
            let plus = eval(&work)?;
            work[i].data_mut()[c] = orig - step;
            let minus = eval(&work)?;
            work[i].data_mut()[c] = orig;
            let numeric = (plus - minus) / (2.0 * step);
            let a = analytic.as_ref().map_or(0.0, |g| g[c]);
            tracker.record(i, c, a, numeric);
        }
    }
    Ok(tracker.report)
}

/// Like [`grad_check`] but perturbs the parameters of a [`ParamSet`].
/// `input` in the report is the parameter index.
pub fn grad_check_params<F>(params: &ParamSet<f64>, f: F, step: f64) -> Result<GradCheckReport>
where
    F: for<'t> Fn(&'t Tape<f64>, &ParamSet<f64>) -> Result<Var<'t, f64>>,
{
    let tape = Tape::new();
    let out = f(&tape, params)?;
    scalar_of(out)?;
    let grads = tape.backward(out)?;
    let mut analytic = params.clone();
    analytic.clear_grads();
    analytic.accumulate(&grads);

    let mut tracker = Tracker::new();
    let mut work = params.clone();
    for p in 0..params.len() {
        let id = ParamId(p);
        for c in 0..params.value(id).len() {
            let orig = work.value(id).data()[c];
            let mut eval = |v: f64| -> Result<f64> {
                work.value_mut(id).data_mut()[c] = v;
                let tape = Tape::new();
                scalar_of(f(&tape, &work)?)
            };
            let plus = eval(orig + step)?;
            let minus = eval(orig - step)?;
            work.value_mut(id).data_mut()[c] = orig;
            let numeric = (plus - minus) / (2.0 * step);
            let a = analytic.get(id).grad.as_ref().map_or(0.0, |g| g[c]);
            tracker.record(p, c, a, numeric);
        }
    }
    Ok(tracker.report)
}
