use rand::Rng;

/// Denoising plan for one sequence.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Corruption {
    /// Positions whose token becomes the mask token.
    pub masked: Vec<bool>,
    /// Class ids fed to the network; prediction targets stay untouched.
    pub forced_classes: Vec<usize>,
}

impl Corruption {
    pub fn identity(classes: &[usize]) -> Self {
        Self {
            masked: vec![false; classes.len()],
            forced_classes: classes.to_vec(),
        }
    }
}

/// Masks each token with probability `mask_rate` and replaces each
/// teacher-forced class by a uniform random class with probability
/// `noise_rate`.
pub fn corrupt<R: Rng + ?Sized>(
    classes: &[usize],
    num_classes: usize,
    mask_rate: f64,
    noise_rate: f64,
    rng: &mut R,
) -> Corruption {
    let mut masked = Vec::with_capacity(classes.len());
    let mut forced = Vec::with_capacity(classes.len());
    for &c in classes {
        masked.push(mask_rate > 0.0 && rng.gen::<f64>() < mask_rate);
        let noisy = noise_rate > 0.0 && num_classes > 0 && rng.gen::<f64>() < noise_rate;
        forced.push(if noisy { rng.gen_range(0..num_classes) } else { c });
    }
    Corruption {
        masked,
        forced_classes: forced,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn zero_rates_are_identity() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let classes = vec![3, 1, 4, 1, 5];
        assert_eq!(corrupt(&classes, 6, 0.0, 0.0, &mut rng), Corruption::identity(&classes));
    }

    #[test]
    fn full_rates_mask_everything() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let c = corrupt(&[0; 50], 7, 1.0, 1.0, &mut rng);
        assert!(c.masked.iter().all(|&m| m));
        assert!(c.forced_classes.iter().any(|&k| k != 0));
    }

    #[test]
    fn mask_fraction_matches_rate() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let c = corrupt(&vec![0; 100_000], 5, 0.05, 0.0, &mut rng);
        let frac = c.masked.iter().filter(|&&m| m).count() as f64 / 1e5;
        assert!((frac - 0.05).abs() < 0.005, "{frac}");
    }
}
