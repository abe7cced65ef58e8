use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::{FRAC_PI_2, PI};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::io::{ObjectRecord, SceneDocument};
use crate::error::{Error, Result};
use crate::geometry::{giou, project_topdown, Box2D, SceneObject};
use crate::ordering::{derive_seed, rng_from_seed, Parent, SceneTree};

const RETRIES: usize = 100;
const SCENE_ATTEMPTS: usize = 1000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassSpec {
    pub name: String,
    /// Nominal full extents in meters.
    pub size: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SatelliteSpec {
    pub class: String,
    /// Relative weight; normalized over the zone.
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZoneTemplate {
    pub anchor: String,
    pub satellites: Vec<SatelliteSpec>,
    /// Inclusive satellite count range.
    pub count: [usize; 2],
    /// Nominal anchor-to-satellite center distance in meters.
    pub radius: f64,
}

/// Procedural room grammar. Generated rooms keep every satellite within the
/// clustering radius of its anchor and every other pair beyond it, so the
/// constructed hierarchy is what the parser should find.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GrammarSpec {
    pub room_type: String,
    pub classes: Vec<ClassSpec>,
    pub zones: Vec<ZoneTemplate>,
    pub zones_per_scene: [usize; 2],
    pub outlier_classes: Vec<String>,
    /// Chance that each outlier slot is filled.
    pub outlier_rate: f64,
    pub max_outliers: usize,
    pub room_width: [f64; 2],
    pub room_depth: [f64; 2],
    /// Relative uniform jitter on every extent.
    pub size_jitter: f64,
    /// Relative uniform jitter on satellite distance.
    pub radius_jitter: f64,
    /// Clustering geometry the layouts are built against.
    pub eps: f64,
    pub lambda: f64,
    /// Minimum slack between a constrained distance and `eps`.
    pub margin: f64,
    pub seed: u64,
}

fn class(name: &str, size: [f64; 3]) -> ClassSpec {
    ClassSpec {
        name: name.into(),
        size,
    }
}

fn sat(class: &str, weight: f64) -> SatelliteSpec {
    SatelliteSpec {
        class: class.into(),
        weight,
    }
}

impl Default for GrammarSpec {
    fn default() -> Self {
        let zone = |anchor: &str, satellites, count, radius| ZoneTemplate {
            anchor: String::from(anchor),
            satellites,
            count,
            radius,
        };
        Self {
            room_type: "living_room".into(),
            classes: vec![
                class("dining_table", [1.5, 0.75, 0.9]),
                class("chair", [0.45, 0.9, 0.45]),
                class("sofa", [2.0, 0.85, 0.9]),
                class("coffee_table", [1.0, 0.45, 0.6]),
                class("desk", [1.4, 0.75, 0.7]),
                class("floor_lamp", [0.4, 1.6, 0.4]),
                class("plant", [0.4, 0.9, 0.4]),
                class("bookshelf", [0.9, 1.8, 0.35]),
            ],
            zones: vec![
                zone("dining_table", vec![sat("chair", 1.0)], [2, 4], 0.9),
                zone("sofa", vec![sat("chair", 0.7), sat("coffee_table", 0.3)], [1, 3], 1.05),
                zone("desk", vec![sat("chair", 0.85), sat("floor_lamp", 0.15)], [1, 2], 0.8),
            ],
            zones_per_scene: [2, 3],
            outlier_classes: vec!["plant".into(), "bookshelf".into()],
            outlier_rate: 0.15,
            max_outliers: 2,
            room_width: [8.0, 10.0],
            room_depth: [7.0, 9.0],
            size_jitter: 0.1,
            radius_jitter: 0.15,
            eps: 0.15,
            lambda: 0.02,
            margin: 0.005,
            seed: 0,
        }
    }
}

impl GrammarSpec {
    /// Class names in id order.
    pub fn vocab(&self) -> Vec<String> {
        self.classes.iter().map(|c| c.name.clone()).collect()
    }

    fn class_index(&self) -> BTreeMap<&str, usize> {
        self.classes.iter().enumerate().map(|(i, c)| (c.name.as_str(), i)).collect()
    }

    /// Satellite class ids for each anchor class id.
    pub fn satellite_classes(&self) -> BTreeMap<usize, BTreeSet<usize>> {
        let idx = self.class_index();
        self.zones
            .iter()
            .map(|z| (idx[z.anchor.as_str()], z.satellites.iter().map(|s| idx[s.class.as_str()]).collect()))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        let idx = self.class_index();
        if idx.len() != self.classes.len() {
            return bad("duplicate class names".into());
        }
        for c in &self.classes {
            if c.size.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
                return bad(format!("class `{}` needs positive extents", c.name));
            }
        }
        let known = |n: &str| -> Result<usize> {
            idx.get(n).copied().ok_or_else(|| Error::Unknown {
                kind: "grammar class",
                value: n.to_string(),
            })
        };
        if self.zones.is_empty() {
            return bad("no zone templates".into());
        }
        let j = self.size_jitter;
        if !(0.0..0.5).contains(&j) || !(0.0..0.5).contains(&self.radius_jitter) {
            return bad("jitters must lie in [0, 0.5)".into());
        }
        let mut anchors = BTreeSet::new();
        for z in &self.zones {
            let a = known(&z.anchor)?;
            if !anchors.insert(a) {
                return bad(format!("anchor `{}` used by two zones", z.anchor));
            }
            if !(z.radius.is_finite() && z.radius > 0.0) {
                return bad(format!("zone `{}` needs a positive radius", z.anchor));
            }
            if z.count[0] == 0 || z.count[0] > z.count[1] {
                return bad(format!("zone `{}` count range must satisfy 1 <= lo <= hi", z.anchor));
            }
            if z.satellites.is_empty() || z.satellites.iter().any(|s| !(s.weight.is_finite() && s.weight > 0.0)) {
                return bad(format!("zone `{}` needs satellites with positive weights", z.anchor));
            }
            let min_anchor = volume(self.classes[a].size) * (1.0 - j).powi(3);
            for s in &z.satellites {
                let c = known(&s.class)?;
                if volume(self.classes[c].size) * (1.0 + j).powi(3) >= min_anchor {
                    return bad(format!("satellite `{}` can outgrow anchor `{}`", s.class, z.anchor));
                }
            }
        }
        for o in &self.outlier_classes {
            known(o)?;
        }
        if !(0.0..=1.0).contains(&self.outlier_rate) || (self.max_outliers > 0 && self.outlier_classes.is_empty() && self.outlier_rate > 0.0) {
            return bad("outlier rate must lie in [0, 1] with at least one outlier class".into());
        }
        let [lo, hi] = self.zones_per_scene;
        if lo == 0 || lo > hi || hi > self.zones.len() {
            return bad("zones_per_scene must satisfy 1 <= lo <= hi <= number of zones".into());
        }
        for r in [self.room_width, self.room_depth] {
            if !(r[0] > 0.0 && r[0] <= r[1] && r[1].is_finite()) {
                return bad("room ranges must be positive and ordered".into());
            }
        }
        if !(self.eps > 2.0 * self.margin && self.margin >= 0.0 && self.lambda >= 0.0) {
            return bad("need eps > 2 margin >= 0 and lambda >= 0".into());
        }
        Ok(())
    }
}

fn volume(s: [f64; 3]) -> f64 {
    s[0] * s[1] * s[2]
}

/// Placed object plus its group (zone index, or a fresh id per outlier).
struct Placed {
    obj: SceneObject<f64>,
    footprint: Box2D<f64>,
    group: usize,
}

struct Room<'s> {
    spec: &'s GrammarSpec,
    half: [f64; 2],
    diag: f64,
    placed: Vec<Placed>,
    parents: Vec<Parent>,
}

impl Room<'_> {
    fn medc(&self, a: &Box2D<f64>, b: &Box2D<f64>) -> (f64, f64) {
        let [ax, az] = a.center();
        let [bx, bz] = b.center();
        let d = (ax - bx).hypot(az - bz) / self.diag;
        (d, d + self.spec.lambda * (1.0 - giou(a, b)))
    }

    /// Accepts `obj` into `group` if it fits the room, overlaps nothing and
    /// keeps the clustering structure; `anchor` is the slot it must stay
    /// close to.
    fn admissible(&self, obj: &SceneObject<f64>, group: usize, anchor: Option<usize>) -> Option<Box2D<f64>> {
        let fp = project_topdown(obj);
        let (eps, m) = (self.spec.eps, self.spec.margin);
        if fp.min[0] < -self.half[0] || fp.min[1] < -self.half[1] || fp.max[0] > self.half[0] || fp.max[1] > self.half[1] {
            return None;
        }
        for p in &self.placed {
            if fp.intersection_area(&p.footprint) > 0.0 {
                return None;
            }
            let (d, medc) = self.medc(&fp, &p.footprint);
            if p.group != group && (d < eps - 3.0 * m || medc < eps + m) {
                return None;
            }
        }
        if let Some(a) = anchor {
            if self.medc(&fp, &self.placed[a].footprint).1 > eps - m {
                return None;
            }
        }
        Some(fp)
    }

    fn push(&mut self, obj: SceneObject<f64>, footprint: Box2D<f64>, group: usize, parent: Parent) {
        self.placed.push(Placed { obj, footprint, group });
        self.parents.push(parent);
    }
}

fn jittered<R: Rng + ?Sized>(size: [f64; 3], j: f64, rng: &mut R) -> [f64; 3] {
    size.map(|s| s * rng.gen_range(1.0 - j..=1.0 + j))
}

fn quarter_turn<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    [-PI, -FRAC_PI_2, 0.0, FRAC_PI_2][rng.gen_range(0..4)]
}

fn pick_weighted<R: Rng + ?Sized>(sats: &[SatelliteSpec], rng: &mut R) -> usize {
    let total: f64 = sats.iter().map(|s| s.weight).sum();
    let mut u = rng.gen::<f64>() * total;
    for (i, s) in sats.iter().enumerate() {
        if u < s.weight {
            return i;
        }
        u -= s.weight;
    }
    sats.len() - 1
}

fn try_scene<R: Rng + ?Sized>(spec: &GrammarSpec, idx: &BTreeMap<&str, usize>, rng: &mut R) -> Option<(Vec<[f64; 2]>, Vec<SceneObject<f64>>, Vec<Parent>)> {
    let w = rng.gen_range(spec.room_width[0]..=spec.room_width[1]);
    let d = rng.gen_range(spec.room_depth[0]..=spec.room_depth[1]);
    let mut room = Room {
        spec,
        half: [w / 2.0, d / 2.0],
        diag: w.hypot(d),
        placed: Vec::new(),
        parents: Vec::new(),
    };
    let n_zones = rng.gen_range(spec.zones_per_scene[0]..=spec.zones_per_scene[1]);
    let mut zones: Vec<usize> = (0..spec.zones.len()).collect();
    zones.shuffle(rng);
    let sample_obj = |class_id: usize, at: [f64; 2], yaw: f64, rng: &mut R| {
        let size = jittered(spec.classes[class_id].size, spec.size_jitter, rng);
        SceneObject::new(class_id, [at[0], size[1] / 2.0, at[1]], size, yaw).expect("valid grammar object")
    };
    for (group, &z) in zones[..n_zones].iter().enumerate() {
        let t = &spec.zones[z];
        let anchor_class = idx[t.anchor.as_str()];
        let mut anchor_slot = None;
        for _ in 0..RETRIES {
            let at = [rng.gen_range(-room.half[0]..room.half[0]), rng.gen_range(-room.half[1]..room.half[1])];
            let obj = sample_obj(anchor_class, at, quarter_turn(rng), rng);
            if let Some(fp) = room.admissible(&obj, group, None) {
                anchor_slot = Some(room.placed.len());
                room.push(obj, fp, group, Parent::Root);
                break;
            }
        }
        let a = anchor_slot?;
        let center = room.placed[a].obj.center_xz();
        let count = rng.gen_range(t.count[0]..=t.count[1]);
        for _ in 0..count {
            let class_id = idx[t.satellites[pick_weighted(&t.satellites, rng)].class.as_str()];
            let mut ok = false;
            for _ in 0..RETRIES {
                let theta = rng.gen_range(-PI..PI);
                let r = t.radius * rng.gen_range(1.0 - spec.radius_jitter..=1.0 + spec.radius_jitter);
                let at = [center[0] + r * theta.cos(), center[1] + r * theta.sin()];
                // face the anchor, snapped to a quarter turn
                let facing = (center[0] - at[0]).atan2(center[1] - at[1]);
                let yaw = crate::scalar::wrap_angle((facing / FRAC_PI_2).round() * FRAC_PI_2);
                let obj = sample_obj(class_id, at, yaw, rng);
                if let Some(fp) = room.admissible(&obj, group, Some(a)) {
                    room.push(obj, fp, group, Parent::Node(a));
                    ok = true;
                    break;
                }
            }
            if !ok {
                return None;
            }
        }
    }
    for k in 0..spec.max_outliers {
        if spec.outlier_classes.is_empty() || rng.gen::<f64>() >= spec.outlier_rate {
            continue;
        }
        let class_id = idx[spec.outlier_classes[rng.gen_range(0..spec.outlier_classes.len())].as_str()];
        let group = n_zones + k;
        let mut ok = false;
        for _ in 0..RETRIES {
            let at = [rng.gen_range(-room.half[0]..room.half[0]), rng.gen_range(-room.half[1]..room.half[1])];
            let obj = sample_obj(class_id, at, quarter_turn(rng), rng);
            if let Some(fp) = room.admissible(&obj, group, None) {
                room.push(obj, fp, group, Parent::Root);
                ok = true;
                break;
            }
        }
        if !ok {
            return None;
        }
    }
    let [hx, hz] = room.half;
    let floor = vec![[-hx, -hz], [hx, -hz], [hx, hz], [-hx, hz]];
    let objects = room.placed.into_iter().map(|p| p.obj).collect();
    Some((floor, objects, room.parents))
}

/// Generates `count` rooms with their constructed hierarchies. Objects are
/// listed in shuffled order so indices carry no structure.
pub fn generate_grammar_dataset(spec: &GrammarSpec, count: usize) -> Result<Vec<SceneDocument>> {
    spec.validate()?;
    let idx = spec.class_index();
    let vocab = spec.vocab();
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        let mut made = None;
        for attempt in 0..SCENE_ATTEMPTS {
            let mut rng = rng_from_seed(derive_seed(spec.seed, &[i as u64, attempt as u64]));
            if let Some((floor, objects, parents)) = try_scene(spec, &idx, &mut rng) {
                let mut perm: Vec<usize> = (0..objects.len()).collect();
                perm.shuffle(&mut rng);
                // perm[new] = old
                let mut new_of = vec![0; perm.len()];
                for (n, &o) in perm.iter().enumerate() {
                    new_of[o] = n;
                }
                let mut tree = SceneTree::empty(objects.len());
                let by_depth = |o: usize| matches!(parents[o], Parent::Root);
                for pass in [true, false] {
                    for &o in &perm {
                        if by_depth(o) == pass {
                            let parent = match parents[o] {
                                Parent::Root => Parent::Root,
                                Parent::Node(p) => Parent::Node(new_of[p]),
                            };
                            tree.attach(new_of[o], parent)?;
                        }
                    }
                }
                let records = perm
                    .iter()
                    .map(|&o| {
                        let obj = &objects[o];
                        ObjectRecord {
                            class: vocab[obj.class_id].clone(),
                            t: obj.translation,
                            b: obj.size,
                            r: obj.rotation,
                        }
                    })
                    .collect();
                made = Some(SceneDocument {
                    scene_id: Some(format!("grammar-{:05}", i)),
                    room_type: spec.room_type.clone(),
                    floor,
                    objects: records,
                    ground_truth_tree: Some(tree.to_parent_map()),
                });
                break;
            }
        }
        out.push(made.ok_or_else(|| Error::Config(format!("grammar could not place scene {i} in {SCENE_ATTEMPTS} attempts")))?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::ahd;
    use crate::ordering::{parse_scene, OrderingConfig};

    #[test]
    fn default_spec_is_valid() {
        GrammarSpec::default().validate().unwrap();
        let mut s = GrammarSpec::default();
        s.classes[1].size = [3.0, 3.0, 3.0];
        assert!(s.validate().is_err());
        let mut s = GrammarSpec::default();
        s.zones[0].anchor = "piano".into();
        assert!(s.validate().is_err());
        let mut s = GrammarSpec::default();
        s.zones_per_scene = [2, 4];
        assert!(s.validate().is_err());
    }

    #[test]
    fn seeded_and_well_formed() {
        let spec = GrammarSpec::default();
        let a = generate_grammar_dataset(&spec, 20).unwrap();
        let b = generate_grammar_dataset(&spec, 20).unwrap();
        assert_eq!(a, b);
        for doc in &a {
            let tree = doc.ground_truth().unwrap().unwrap();
            tree.validate().unwrap();
            assert!(tree.is_complete());
            assert!(tree.max_depth() <= 2);
        }
    }

    #[test]
    fn parser_recovers_constructed_trees() {
        let spec = GrammarSpec::default();
        let vocab = spec.vocab();
        for doc in generate_grammar_dataset(&spec, 30).unwrap() {
            let scene = doc.to_scene::<f64>(&vocab).unwrap();
            let parsed = parse_scene(&scene, &OrderingConfig::default()).unwrap();
            let truth = doc.ground_truth().unwrap().unwrap();
            let score = ahd(&parsed.forest.outliers_at_root(), &truth).unwrap();
            assert_eq!(score, 1.0, "{:?}", doc.scene_id);
        }
    }
}
