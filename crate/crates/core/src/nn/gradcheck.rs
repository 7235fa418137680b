//! Central finite-difference verification of [`Mlp::backward`].

use ndarray::Array2;
use rand::Rng;

use super::{Mlp, MlpSpec};
use crate::error::{Error, Result};
use crate::rng::seeded;

/// `|a − n| / max(|a|, |n|, 1)`: relative for gradients of unit size or
/// larger, absolute below that, so near-zero gradients cannot blow it up.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1.0)
}

fn scalar_objective(net: &Mlp, x: &Array2<f64>, upstream: &Array2<f64>) -> f64 {
    let y = net.forward_batch(x).expect("shape checked by caller");
    (&y * upstream).sum()
}

/// Builds a seeded random network for `spec` and returns the worst relative
/// error between backprop and central differences over every parameter and
/// every input component.
pub fn grad_check(spec: &MlpSpec, seed: u64, epsilon: f64) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon <= 1e-2) {
        return Err(Error::invalid(format!("epsilon {epsilon} outside (0, 1e-2]")));
    }
    let mut rng = seeded(seed);
    let mut net = Mlp::new(spec.clone(), &mut rng)?;
    let batch = 3;
    let x = Array2::from_shape_fn((batch, spec.input_dim()), |_| rng.random_range(-1.0..1.0));
    let upstream = Array2::from_shape_fn((batch, spec.output_dim()), |_| rng.random_range(-1.0..1.0));

    let cache = net.forward_cached(x.clone())?;
    let (grads, input_grad) = net.backward(&cache, &upstream)?;

    let mut worst: f64 = 0.0;
    for i in 0..net.params.num_params() {
        let orig = net.params.get(i);
        net.params.set(i, orig + epsilon);
        let plus = scalar_objective(&net, &x, &upstream);
        net.params.set(i, orig - epsilon);
        let minus = scalar_objective(&net, &x, &upstream);
        net.params.set(i, orig);
        let numeric = (plus - minus) / (2.0 * epsilon);
        worst = worst.max(relative_error(grads.get(i), numeric));
    }
    let mut xp = x.clone();
    for idx in 0..x.len() {
        let (r, c) = (idx / x.ncols(), idx % x.ncols());
        xp[(r, c)] = x[(r, c)] + epsilon;
        let plus = scalar_objective(&net, &xp, &upstream);
        xp[(r, c)] = x[(r, c)] - epsilon;
        let minus = scalar_objective(&net, &xp, &upstream);
        xp[(r, c)] = x[(r, c)];
        let numeric = (plus - minus) / (2.0 * epsilon);
        worst = worst.max(relative_error(input_grad[(r, c)], numeric));
    }
    Ok(worst)
}
