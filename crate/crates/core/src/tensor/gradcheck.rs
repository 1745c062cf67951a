//! Central-difference verification of the tape's analytic gradients.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Graph, Scalar, Tensor, Var};
use crate::error::Result;

/// Compares the analytic gradient of a scalar loss against central finite
/// differences, both evaluated in the graph's own element type (use `f64`
/// tensors for a 64-bit replay).
///
/// `build` must be deterministic: it is re-run twice per sampled coordinate
/// with a perturbed copy of `params`. When the total coordinate count exceeds
/// `max_coords`, a seeded subset is sampled. Returns the maximum over sampled
/// coordinates of `|analytic - numeric| / max(1e-8, |analytic| + |numeric|)`.
pub fn grad_check<T, F>(
    build: F,
    params: &[Tensor<T>],
    epsilon: T,
    max_coords: usize,
    seed: u64,
) -> Result<T>
where
    T: Scalar,
    F: Fn(&mut Graph<T>, &[Var]) -> Result<Var>,
{
    let eval = |tensors: &[Tensor<T>]| -> Result<(Graph<T>, Vec<Var>, Var)> {
        let mut g = Graph::new();
        let vars: Vec<Var> = tensors
            .iter()
            .map(|t| g.leaf_raw(t.shape().to_vec(), t.data().to_vec(), true))
            .collect::<Result<_>>()?;
        let loss = build(&mut g, &vars)?;
        Ok((g, vars, loss))
    };

    let (mut graph, vars, loss) = eval(params)?;
    graph.backward(loss)?;
    let analytic: Vec<Vec<T>> = vars.iter().map(|&v| graph.grad_or_zeros(v)).collect();

    let mut coords: Vec<(usize, usize)> = params
        .iter()
        .enumerate()
        .flat_map(|(ti, t)| (0..t.len()).map(move |ci| (ti, ci)))
        .collect();
    if coords.len() > max_coords {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        coords.shuffle(&mut rng);
        coords.truncate(max_coords);
    }

    let mut worst = T::zero();
    let mut work: Vec<Tensor<T>> = params.to_vec();
    for (ti, ci) in coords {
        let original = work[ti].data()[ci];

        work[ti].data_mut()[ci] = original + epsilon;
        let (g_plus, _, l_plus) = eval(&work)?;
        let plus = g_plus.value(l_plus)[0];

        work[ti].data_mut()[ci] = original - epsilon;
        let (g_minus, _, l_minus) = eval(&work)?;
        let minus = g_minus.value(l_minus)[0];

        work[ti].data_mut()[ci] = original;

        let numeric = (plus - minus) / (epsilon + epsilon);
        let a = analytic[ti][ci];
        let denom = T::from_f64(1e-8).max(a.abs() + numeric.abs());
        let rel = (a - numeric).abs() / denom;
        worst = worst.max(rel);
    }
    Ok(worst)
}
