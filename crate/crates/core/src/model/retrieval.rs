use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::SceneObject;
use crate::scalar::Scalar;

/// Catalog entry: a furniture model of a given class and bounding size.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Asset {
    pub asset_id: String,
    pub class: String,
    pub size: [f64; 3],
}

/// Same-class asset with the nearest size vector; ties go to the smaller
/// asset id.
pub fn retrieve_asset<'c, T: Scalar>(obj: &SceneObject<T>, vocab: &[String], catalog: &'c [Asset]) -> Result<&'c Asset> {
    let class = vocab
        .get(obj.class_id)
        .ok_or_else(|| Error::Unknown {
            kind: "class id",
            value: obj.class_id.to_string(),
        })?;
    let dist = |a: &Asset| -> f64 {
        (0..3)
            .map(|k| (a.size[k] - obj.size[k].as_f64()).powi(2))
            .sum::<f64>()
            .sqrt()
    };
    catalog
        .iter()
        .filter(|a| &a.class == class)
        .min_by(|a, b| dist(a).total_cmp(&dist(b)).then_with(|| a.asset_id.cmp(&b.asset_id)))
        .ok_or_else(|| Error::MissingClass(class.clone()))
}

/// A few size variants per class around `base_sizes`, for demos and tests.
pub fn synthetic_catalog(vocab: &[String], base_sizes: &[[f64; 3]], per_class: usize, seed: u64) -> Vec<Asset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for (c, name) in vocab.iter().enumerate() {
        let base = base_sizes.get(c).copied().unwrap_or([1.0, 1.0, 1.0]);
        for i in 0..per_class {
            let size = base.map(|v| (v * rng.gen_range(0.8..1.2) * 100.0).round() / 100.0);
            out.push(Asset {
                asset_id: format!("{name}-{i:03}"),
                class: name.clone(),
                size,
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab() -> Vec<String> {
        vec!["sofa".into(), "lamp".into()]
    }

    fn asset(id: &str, class: &str, size: [f64; 3]) -> Asset {
        Asset {
            asset_id: id.into(),
            class: class.into(),
            size,
        }
    }

    #[test]
    fn nearest_size_wins() {
        let cat = vec![asset("a", "sofa", [2.0, 1.0, 1.0]), asset("b", "sofa", [1.0, 1.0, 1.0])];
        let o = SceneObject::new(0, [0.0f64; 3], [1.9, 0.9, 0.8], 0.0).unwrap();
        assert_eq!(retrieve_asset(&o, &vocab(), &cat).unwrap().asset_id, "a");
    }

    #[test]
    fn single_asset_and_missing_class() {
        let cat = vec![asset("only", "sofa", [9.0, 9.0, 9.0])];
        let o = SceneObject::new(0, [0.0f64; 3], [1.0, 1.0, 1.0], 0.0).unwrap();
        assert_eq!(retrieve_asset(&o, &vocab(), &cat).unwrap().asset_id, "only");
        let lamp = SceneObject::new(1, [0.0f64; 3], [0.3, 1.5, 0.3], 0.0).unwrap();
        let err = retrieve_asset(&lamp, &vocab(), &cat).unwrap_err();
        assert!(err.to_string().contains("lamp"));
    }
}
