//! Central finite-difference checks for analytic gradients.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::model::Model;
use super::tape::{NodeId, Tape};
use crate::error::Result;

/// Floor in the relative-error denominator.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-12;

/// `|a − d| / (|a| + |d| + 1e-12)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs() + RELATIVE_ERROR_FLOOR)
}

/// `(f(x + h·eᵢ) − f(x − h·eᵢ)) / 2h` for one coordinate.
pub fn central_difference<F>(point: &[f64], index: usize, h: f64, f: &mut F) -> Result<f64>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let mut x = point.to_vec();
    x[index] = point[index] + h;
    let plus = f(&x)?;
    x[index] = point[index] - h;
    let minus = f(&x)?;
    Ok((plus - minus) / (2.0 * h))
}

/// Max relative error between `analytic` and central differences of `f`
/// over every coordinate of `point`. Zero for an empty point.
pub fn max_relative_error<F>(point: &[f64], analytic: &[f64], h: f64, mut f: F) -> Result<f64>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let mut worst = 0.0f64;
    for (i, &a) in analytic.iter().enumerate().take(point.len()) {
        let numeric = central_difference(point, i, h, &mut f)?;
        worst = worst.max(relative_error(a, numeric));
    }
    Ok(worst)
}

fn analytic_gradient<F>(model: &Model, loss: &F) -> Result<Vec<f64>>
where
    F: Fn(&Model, &mut Tape) -> Result<NodeId>,
{
    let mut tape = Tape::new();
    let node = loss(model, &mut tape)?;
    Ok(tape.backward(node)?.for_model(model).to_flat())
}

fn loss_value<F>(model: &Model, loss: &F) -> Result<f64>
where
    F: Fn(&Model, &mut Tape) -> Result<NodeId>,
{
    let mut tape = Tape::new();
    let node = loss(model, &mut tape)?;
    tape.scalar(node)
}

/// Compares the tape gradient of `loss` against central differences on
/// every parameter coordinate.
pub fn grad_check<F>(model: &Model, loss: F, h: f64) -> Result<f64>
where
    F: Fn(&Model, &mut Tape) -> Result<NodeId>,
{
    let coords: Vec<usize> = (0..model.param_count()).collect();
    check_coords(model, &loss, h, &coords)
}

/// Like [`grad_check`] but on at most `max_coords` coordinates drawn
/// without replacement from a seeded generator.
pub fn grad_check_sampled<F>(model: &Model, loss: F, h: f64, max_coords: usize, seed: u64) -> Result<f64>
where
    F: Fn(&Model, &mut Tape) -> Result<NodeId>,
{
    let total = model.param_count();
    let mut coords: Vec<usize> = if total <= max_coords {
        (0..total).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        sample(&mut rng, total, max_coords).into_vec()
    };
    coords.sort_unstable();
    check_coords(model, &loss, h, &coords)
}

fn check_coords<F>(model: &Model, loss: &F, h: f64, coords: &[usize]) -> Result<f64>
where
    F: Fn(&Model, &mut Tape) -> Result<NodeId>,
{
    let analytic = analytic_gradient(model, loss)?;
    let mut probe = model.clone();
    let mut worst = 0.0f64;
    for &i in coords {
        let original = model.get_flat(i);
        probe.set_flat(i, original + h);
        let plus = loss_value(&probe, loss)?;
        probe.set_flat(i, original - h);
        let minus = loss_value(&probe, loss)?;
        probe.set_flat(i, original);
        let numeric = (plus - minus) / (2.0 * h);
        worst = worst.max(relative_error(analytic[i], numeric));
    }
    Ok(worst)
}
