use super::Tensor;
use crate::error::Result;

/// Outcome of comparing an analytic gradient to central differences.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// Flat index of the worst entry.
    pub worst_index: usize,
    pub checked: usize,
    pub passed: bool,
}

/// `|a - n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(floor);
    if denom == 0.0 {
        0.0
    } else {
        (analytic - numeric).abs() / denom
    }
}

/// Compares `analytic` (the gradient of `loss` at `input`) with central
/// differences of step `h` at the flat indices in `probes` (every index when
/// `None`).
///
/// Entries whose magnitude is below a thousandth of the largest analytic
/// entry are measured against that floor instead, so that rounding noise on
/// near-zero entries does not dominate.
pub fn grad_check<F>(
    mut loss: F,
    input: &Tensor<f64>,
    analytic: &Tensor<f64>,
    h: f64,
    tol: f64,
    probes: Option<&[usize]>,
) -> Result<GradCheckReport>
where
    F: FnMut(&Tensor<f64>) -> Result<f64>,
{
    input.check_same_shape("grad_check", analytic)?;
    let floor = 1e-3 * analytic.max_abs();
    let all: Vec<usize>;
    let probes = match probes {
        Some(p) => p,
        None => {
            all = (0..input.len()).collect();
            &all
        }
    };
    let mut x = input.clone();
    let mut worst = (0.0f64, 0usize);
    for &i in probes {
        let orig = x.data()[i];
        x.data_mut()[i] = orig + h;
        let up = loss(&x)?;
        x.data_mut()[i] = orig - h;
        let down = loss(&x)?;
        x.data_mut()[i] = orig;
        let numeric = (up - down) / (2.0 * h);
        let err = relative_error(analytic.data()[i], numeric, floor);
        if err > worst.0 {
            worst = (err, i);
        }
    }
    Ok(GradCheckReport {
        max_relative_error: worst.0,
        worst_index: worst.1,
        checked: probes.len(),
        passed: worst.0 < tol,
    })
}
