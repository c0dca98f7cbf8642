use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Denominator floor for the relative error, so coordinates whose true
/// gradient is ~0 are judged on absolute error instead.
pub const REL_ERROR_FLOOR: f64 = 1e-6;

/// Compares analytic gradients against central finite differences.
///
/// `loss_fn` maps a flat parameter vector to `(loss, analytic_gradient)`.
/// At most `max_coords` coordinates are checked, sampled with `seed`; the
/// result is the maximum of `|analytic - numeric| / max(|analytic|, |numeric|, 1e-6)`.
pub fn grad_check<F>(mut loss_fn: F, params: &[f64], epsilon: f64, max_coords: usize, seed: u64) -> f64
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let (_, analytic) = loss_fn(params);
    assert_eq!(analytic.len(), params.len(), "gradient length must match parameter count");

    let coords: Vec<usize> = if max_coords >= params.len() {
        (0..params.len()).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut c = sample(&mut rng, params.len(), max_coords).into_vec();
        c.sort_unstable();
        c
    };

    let mut probe = params.to_vec();
    let mut worst: f64 = 0.0;
    for i in coords {
        let orig = probe[i];
        probe[i] = orig + epsilon;
        let (plus, _) = loss_fn(&probe);
        probe[i] = orig - epsilon;
        let (minus, _) = loss_fn(&probe);
        probe[i] = orig;
        let numeric = (plus - minus) / (2.0 * epsilon);
        let denom = analytic[i].abs().max(numeric.abs()).max(REL_ERROR_FLOOR);
        worst = worst.max((analytic[i] - numeric).abs() / denom);
    }
    worst
}
