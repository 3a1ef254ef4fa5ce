use rayon::prelude::*;

use super::params::{Grads, ParamStore};
use super::ModelError;
use crate::Scalar;

/// Evaluates `f` on every item and sums losses and gradients in item order.
/// With `workers > 1` the items are evaluated on a dedicated pool; the sum
/// is still taken serially so the result does not depend on `workers`.
pub fn accumulate<S, T, E, F>(params: &ParamStore<S>, items: &[T], workers: usize, f: F) -> Result<(S, Grads<S>), E>
where
    S: Scalar,
    T: Sync,
    E: Send + From<ModelError>,
    F: Fn(&T) -> Result<(S, Grads<S>), E> + Sync,
{
    let parts: Vec<Result<(S, Grads<S>), E>> = if workers > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| E::from(ModelError::Config(e.to_string())))?;
        pool.install(|| items.par_iter().map(&f).collect())
    } else {
        items.iter().map(&f).collect()
    };
    let mut grads = Grads::zeros_like(params);
    let mut loss = S::zero();
    for part in parts {
        let (l, g) = part?;
        loss += l;
        grads.add_assign(&g);
    }
    Ok((loss, grads))
}
