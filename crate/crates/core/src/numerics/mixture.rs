//! Discretized mixture of logistics over `[-1, 1]`.
//!
//! A parameter row has `3K` entries: `K` mixture logits, `K` means, and `K`
//! log-scales. The interval is cut into uniform bins and the two edge bins
//! absorb the tails, so the bin probabilities sum to one.

use rand::Rng;

use crate::scalar::Scalar;

/// Number of bins used unless a config overrides it.
pub const DEFAULT_BINS: usize = 256;
/// Lower bound added to every logistic scale.
pub const SCALE_FLOOR: f64 = 1e-3;

#[inline]
pub fn log_sigmoid<T: Scalar>(x: T) -> T {
    x.min(T::zero()) - (-x.abs()).exp().ln_1p()
}

#[inline]
pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Bin containing `h`. Values outside `[-1, 1]` land in the edge bins.
pub fn bin_index<T: Scalar>(h: T, bins: usize) -> usize {
    let w = 2.0 / bins as f64;
    let raw = ((h.as_f64() + 1.0) / w).floor();
    if raw.is_nan() || raw < 0.0 {
        0
    } else {
        (raw as usize).min(bins - 1)
    }
}

/// Bin edges, with `None` standing for an infinite tail.
pub fn bin_edges<T: Scalar>(index: usize, bins: usize) -> (Option<T>, Option<T>) {
    let w = 2.0 / bins as f64;
    let lower = (index > 0).then(|| T::lit(-1.0 + index as f64 * w));
    let upper = (index + 1 < bins).then(|| T::lit(-1.0 + (index + 1) as f64 * w));
    (lower, upper)
}

/// Center of a bin.
pub fn bin_center<T: Scalar>(index: usize, bins: usize) -> T {
    let w = 2.0 / bins as f64;
    T::lit(-1.0 + (index as f64 + 0.5) * w)
}

/// Log-mass of one logistic component on a bin, with derivatives with
/// respect to its mean and its scale.
fn component_log_mass<T: Scalar>(mu: T, s: T, lower: Option<T>, upper: Option<T>) -> (T, T, T) {
    let (mut f, mut fu, mut fl) = (T::zero(), T::zero(), T::zero());
    let u = upper.map(|v| (v - mu) / s);
    let l = lower.map(|v| (v - mu) / s);
    match (l, u) {
        (Some(l), Some(u)) => {
            let delta = u - l;
            f = log_sigmoid(u) + log_sigmoid(-l) + (-(-delta).exp_m1()).ln();
            let r = T::one() / delta.exp_m1();
            fu = sigmoid(-u) + r;
            fl = -sigmoid(l) - r;
        }
        (None, Some(u)) => {
            f = log_sigmoid(u);
            fu = sigmoid(-u);
        }
        (Some(l), None) => {
            f = log_sigmoid(-l);
            fl = -sigmoid(l);
        }
        (None, None) => {}
    }
    let (u, l) = (u.unwrap_or(T::zero()), l.unwrap_or(T::zero()));
    let dmu = -(fu + fl) / s;
    let ds = -(fu * u + fl * l) / s;
    (f, dmu, ds)
}

fn softmax_in_place<T: Scalar>(v: &mut [T]) {
    let m = v.iter().copied().fold(T::neg_infinity(), T::max);
    let mut z = T::zero();
    for x in v.iter_mut() {
        *x = (*x - m).exp();
        z += *x;
    }
    v.iter_mut().for_each(|x| *x /= z);
}

/// Mixture weights of a parameter row.
pub fn weights<T: Scalar>(row: &[T]) -> Vec<T> {
    let k = row.len() / 3;
    let mut w = row[..k].to_vec();
    softmax_in_place(&mut w);
    w
}

/// Logistic scales of a parameter row.
pub fn scales<T: Scalar>(row: &[T]) -> Vec<T> {
    let k = row.len() / 3;
    row[2 * k..].iter().map(|&ls| T::lit(SCALE_FLOOR) + ls.exp()).collect()
}

/// `-log P(bin(target))` and its gradient with respect to the row.
pub fn nll_with_grad<T: Scalar>(row: &[T], target: T, bins: usize) -> (T, Vec<T>) {
    let k = row.len() / 3;
    let (lower, upper) = bin_edges::<T>(bin_index(target, bins), bins);
    let alpha = weights(row);
    let s = scales(row);
    let mut joint = Vec::with_capacity(k);
    let mut dmu = Vec::with_capacity(k);
    let mut ds = Vec::with_capacity(k);
    for j in 0..k {
        let (f, gm, gs) = component_log_mass(row[k + j], s[j], lower, upper);
        joint.push(alpha[j].ln() + f);
        dmu.push(gm);
        ds.push(gs);
    }
    let m = joint.iter().copied().fold(T::neg_infinity(), T::max);
    let z: T = joint.iter().map(|&v| (v - m).exp()).sum();
    let logp = m + z.ln();
    let mut grad = vec![T::zero(); 3 * k];
    for j in 0..k {
        let gamma = (joint[j] - logp).exp();
        grad[j] = alpha[j] - gamma;
        grad[k + j] = -gamma * dmu[j];
        grad[2 * k + j] = -gamma * ds[j] * (s[j] - T::lit(SCALE_FLOOR));
    }
    (-logp, grad)
}

/// Probability of every bin.
pub fn bin_probabilities<T: Scalar>(row: &[T], bins: usize) -> Vec<T> {
    let k = row.len() / 3;
    let alpha = weights(row);
    let s = scales(row);
    (0..bins)
        .map(|b| {
            let (lower, upper) = bin_edges::<T>(b, bins);
            (0..k)
                .map(|j| alpha[j] * component_log_mass(row[k + j], s[j], lower, upper).0.exp())
                .sum()
        })
        .collect()
}

/// Draws a value in `[-1, 1]`: pick a component, then invert its CDF.
pub fn sample<T: Scalar, R: Rng + ?Sized>(row: &[T], rng: &mut R) -> T {
    let k = row.len() / 3;
    let alpha = weights(row);
    let s = scales(row);
    let draw: f64 = rng.gen();
    let mut acc = 0.0;
    let mut j = k - 1;
    for (i, a) in alpha.iter().enumerate() {
        acc += a.as_f64();
        if draw < acc {
            j = i;
            break;
        }
    }
    let u: f64 = rng.gen_range(1e-5..1.0 - 1e-5);
    let x = row[k + j] + s[j] * T::lit((u / (1.0 - u)).ln());
    x.max(-T::one()).min(T::one())
}

/// Mean of the most heavily weighted component, clamped to `[-1, 1]`.
pub fn mode<T: Scalar>(row: &[T]) -> T {
    let k = row.len() / 3;
    let alpha = weights(row);
    let j = (0..k)
        .max_by(|&a, &b| alpha[a].partial_cmp(&alpha[b]).unwrap_or(std::cmp::Ordering::Equal))
        .unwrap_or(0);
    row[k + j].max(-T::one()).min(T::one())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bins_cover_interval() {
        assert_eq!(bin_index(-1.0f64, 256), 0);
        assert_eq!(bin_index(1.0f64, 256), 255);
        assert_eq!(bin_index(0.0f64, 256), 128);
        assert_eq!(bin_index(-3.0f64, 256), 0);
        let (l, u) = bin_edges::<f64>(0, 256);
        assert!(l.is_none() && u.is_some());
        let (l, u) = bin_edges::<f64>(255, 256);
        assert!(l.is_some() && u.is_none());
    }

    #[test]
    fn log_sigmoid_stable() {
        assert!((log_sigmoid(0.0f64) - 0.5f64.ln()).abs() < 1e-12);
        assert!((log_sigmoid(-800.0f64) + 800.0).abs() < 1e-9);
        assert!(log_sigmoid(800.0f64).abs() < 1e-12);
    }

    #[test]
    fn probabilities_sum_to_one() {
        let row = [0.3, -0.2, 0.1, -0.5, 0.0, 0.7, -2.0, -3.0, -1.0];
        let p: f64 = bin_probabilities(&row, 256).iter().sum();
        assert!((p - 1.0).abs() < 1e-9, "{p}");
    }

    #[test]
    fn gradient_matches_finite_difference() {
        let row: Vec<f64> = vec![0.3, -0.2, 0.1, -0.5, 0.05, 0.7, -2.0, -3.0, -1.0];
        for &target in &[-1.0, -0.47, 0.0, 0.31, 0.999] {
            let (_, g) = nll_with_grad(&row, target, 256);
            for i in 0..row.len() {
                let h = 1e-6;
                let mut a = row.clone();
                let mut b = row.clone();
                a[i] += h;
                b[i] -= h;
                let fd = (nll_with_grad(&a, target, 256).0 - nll_with_grad(&b, target, 256).0)
                    / (2.0 * h);
                assert!((fd - g[i]).abs() < 1e-5 * (1.0 + fd.abs()), "{i} {fd} {}", g[i]);
            }
        }
    }

    #[test]
    fn samples_stay_in_range() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let row = [0.0, 0.0, -0.95, 0.95, 1.0, 1.0];
        for _ in 0..500 {
            let x = sample(&row, &mut rng);
            assert!((-1.0..=1.0).contains(&x));
        }
    }
}
