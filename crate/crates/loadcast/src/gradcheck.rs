//! Central-finite-difference verification of analytic gradients.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::NumError;
use crate::params::ParamStore;
use crate::scalar::Scalar;

/// Loss value plus analytic gradients aligned with the parameter store
/// (one optional buffer per entry; `None` for parameters without gradient).
pub type LossAndGrads<S> = (S, Vec<Option<Vec<S>>>);

#[derive(Debug, Clone)]
pub struct GradCheckOptions {
    /// Relative-error threshold used by [`GradCheckReport::passed`].
    pub tolerance: f64,
    /// Cap on checked coordinates per tensor; `None` checks all of them.
    pub max_coords_per_tensor: Option<usize>,
    /// Seed for coordinate sampling when a cap is set.
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            tolerance: 1e-6,
            max_coords_per_tensor: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub tolerance: f64,
    /// Worst relative error over all checked coordinates.
    pub max_rel_err: f64,
    /// Parameter name and coordinate of the worst error.
    pub worst: Option<(String, usize)>,
    /// Worst relative error per parameter tensor.
    pub per_param: Vec<(String, f64)>,
    pub coords_checked: usize,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_err < self.tolerance
    }
}

/// Compares analytic gradients of a scalar loss against central differences.
///
/// The perturbation per coordinate is `1e-6 * max(1, |theta|)` and the error
/// is `|analytic - cd| / max(|analytic|, |cd|, 1e-8)`. The loss function is
/// evaluated twice at the base point first; if the two values disagree the
/// forward pass is not deterministic and an error is returned.
pub fn gradient_check<S: Scalar>(
    params: &mut ParamStore<S>,
    mut f: impl FnMut(&ParamStore<S>) -> Result<LossAndGrads<S>, NumError>,
    opts: &GradCheckOptions,
) -> Result<GradCheckReport, NumError> {
    let (l0, base_grads) = f(params)?;
    let (l1, _) = f(params)?;
    if l0.as_f64().to_bits() != l1.as_f64().to_bits() {
        return Err(NumError::NonDeterministic(l0.as_f64(), l1.as_f64()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut max_rel = 0.0f64;
    let mut worst = None;
    let mut per_param = Vec::new();
    let mut checked = 0usize;

    for idx in params.trainable_indices() {
        let name = params.get(idx).name.clone();
        let len = params.get(idx).tensor.len();
        let analytic = base_grads[idx].clone().unwrap_or_else(|| vec![S::zero(); len]);
        if analytic.len() != len {
            return Err(NumError::ShapeMismatch {
                op: "gradient_check",
                expected: format!("{len} gradient entries for `{name}`"),
                got: format!("{}", analytic.len()),
            });
        }

        let mut coords: Vec<usize> = (0..len).collect();
        if let Some(cap) = opts.max_coords_per_tensor {
            if cap < len {
                coords.shuffle(&mut rng);
                coords.truncate(cap);
                coords.sort_unstable();
            }
        }

        let mut tensor_max = 0.0f64;
        for &c in &coords {
            let theta = params.get(idx).tensor.data()[c].as_f64();
            let h = 1e-6 * theta.abs().max(1.0);

            params.get_mut(idx).tensor.data_mut()[c] = S::from_f64(theta + h);
            let (lp, _) = f(params)?;
            params.get_mut(idx).tensor.data_mut()[c] = S::from_f64(theta - h);
            let (lm, _) = f(params)?;
            params.get_mut(idx).tensor.data_mut()[c] = S::from_f64(theta);

            let cd = (lp.as_f64() - lm.as_f64()) / (2.0 * h);
            let a = analytic[c].as_f64();
            let rel = (a - cd).abs() / a.abs().max(cd.abs()).max(1e-8);
            checked += 1;
            if rel > tensor_max {
                tensor_max = rel;
            }
            if rel > max_rel {
                max_rel = rel;
                worst = Some((name.clone(), c));
            }
        }
        per_param.push((name, tensor_max));
    }

    Ok(GradCheckReport {
        tolerance: opts.tolerance,
        max_rel_err: max_rel,
        worst,
        per_param,
        coords_checked: checked,
    })
}
