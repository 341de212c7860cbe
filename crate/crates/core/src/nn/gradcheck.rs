//! Central finite-difference gradients, used as an oracle for the analytic
//! backward passes. Only forward evaluations of the loss are used here.

use crate::nn::network::{Gradients, Network};

/// Models made of one or more networks.
pub trait HasNetworks {
    fn networks(&self) -> Vec<&Network>;
    fn networks_mut(&mut self) -> Vec<&mut Network>;
}

impl HasNetworks for Network {
    fn networks(&self) -> Vec<&Network> {
        vec![self]
    }

    fn networks_mut(&mut self) -> Vec<&mut Network> {
        vec![self]
    }
}

/// `(L(θ + h) − L(θ − h)) / 2h` for every parameter of every network.
pub fn numeric_gradients<M, F>(model: &mut M, h: f64, mut loss: F) -> Vec<Vec<f64>>
where
    M: HasNetworks,
    F: FnMut(&M) -> f64,
{
    let counts: Vec<usize> = model.networks().iter().map(|n| n.param_count()).collect();
    let mut out = Vec::with_capacity(counts.len());
    for (k, &count) in counts.iter().enumerate() {
        let mut grads = Vec::with_capacity(count);
        for i in 0..count {
            let orig = model.networks()[k].param(i);
            model.networks_mut()[k].set_param(i, orig + h);
            let up = loss(model);
            model.networks_mut()[k].set_param(i, orig - h);
            let down = loss(model);
            model.networks_mut()[k].set_param(i, orig);
            grads.push((up - down) / (2.0 * h));
        }
        out.push(grads);
    }
    out
}

/// Largest `|a − n| / max(|a| + |n|, floor)` over all parameters.
pub fn max_relative_error(analytic: &[Gradients], numeric: &[Vec<f64>], floor: f64) -> f64 {
    assert_eq!(analytic.len(), numeric.len(), "network count mismatch");
    analytic
        .iter()
        .zip(numeric)
        .flat_map(|(a, n)| {
            let a = a.flatten();
            assert_eq!(a.len(), n.len(), "parameter count mismatch");
            a.into_iter()
                .zip(n.clone())
                .map(move |(a, n)| (a - n).abs() / (a.abs() + n.abs()).max(floor))
        })
        .fold(0.0, f64::max)
}
