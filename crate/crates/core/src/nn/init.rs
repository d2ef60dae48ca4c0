use rand::Rng;

use crate::error::{invalid, Result};
use crate::tensor::Tensor;

/// Half-width of the Glorot uniform interval, `sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_limit(fan_in: usize, fan_out: usize) -> Result<f64> {
    if fan_in == 0 || fan_out == 0 {
        return Err(invalid(format!(
            "glorot init needs positive fans, got fan_in={fan_in} fan_out={fan_out}"
        )));
    }
    Ok((6.0 / (fan_in + fan_out) as f64).sqrt())
}

/// Draws `shape` values uniformly from `[-L, L]` with `L` the Glorot limit.
pub fn glorot_uniform<R: Rng + ?Sized>(
    fan_in: usize,
    fan_out: usize,
    shape: &[usize],
    rng: &mut R,
) -> Result<Tensor> {
    let limit = glorot_limit(fan_in, fan_out)?;
    let len: usize = shape.iter().product();
    let data = (0..len).map(|_| rng.random_range(-limit..=limit)).collect();
    Tensor::new(shape.to_vec(), data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn limits() {
        assert_eq!(glorot_limit(3, 3).unwrap(), 1.0);
        assert!((glorot_limit(100, 200).unwrap() - 0.141_421_356).abs() < 1e-9);
        assert!(glorot_limit(0, 3).is_err());
    }

    #[test]
    fn values_within_limit_and_deterministic() {
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            glorot_uniform(100, 200, &[100, 200], &mut rng).unwrap()
        };
        let a = draw(7);
        let limit = glorot_limit(100, 200).unwrap();
        assert!(a.data().iter().all(|v| v.abs() <= limit));
        let b = draw(7);
        assert!(a
            .data()
            .iter()
            .zip(b.data())
            .all(|(x, y)| x.to_bits() == y.to_bits()));

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let small = glorot_uniform(3, 3, &[3, 3], &mut rng).unwrap();
        assert!(small.data().iter().all(|v| (-1.0..=1.0).contains(v)));
    }
}
