use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::raster::validate_polygon;
use crate::error::{Error, Result};
use crate::geometry::SceneObject;
use crate::ordering::SceneTree;
use crate::scalar::Scalar;
use crate::scene::Scene;

/// One object as stored on disk.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectRecord {
    pub class: String,
    /// Center, meters, y up.
    pub t: [f64; 3],
    /// Full extents, meters.
    pub b: [f64; 3],
    /// Yaw about y, radians.
    pub r: f64,
}

/// On-disk scene.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneDocument {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scene_id: Option<String>,
    pub room_type: String,
    pub floor: Vec<[f64; 2]>,
    pub objects: Vec<ObjectRecord>,
    /// Object index to parent index, `-1` for the virtual root.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth_tree: Option<BTreeMap<usize, i64>>,
}

impl SceneDocument {
    /// Parses and validates one document.
    pub fn from_json_str(s: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(s);
        let doc: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::schema(path, e.into_inner().to_string())
        })?;
        doc.validate()?;
        Ok(doc)
    }

    /// Pretty JSON with a trailing newline.
    pub fn to_json_string(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("documents serialize");
        s.push('\n');
        s
    }

    /// Semantic checks the type system cannot express.
    pub fn validate(&self) -> Result<()> {
        if self.floor.len() < 3 {
            return Err(Error::schema(
                "floor",
                format!("polygon needs at least 3 vertices, got {}", self.floor.len()),
            ));
        }
        validate_polygon(&self.floor).map_err(|e| Error::schema("floor", e.to_string()))?;
        for (i, o) in self.objects.iter().enumerate() {
            if o.class.is_empty() {
                return Err(Error::schema(format!("objects[{i}].class"), "empty class name"));
            }
            if o.t.iter().any(|v| !v.is_finite()) {
                return Err(Error::schema(format!("objects[{i}].t"), "non-finite translation"));
            }
            if o.b.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                return Err(Error::schema(
                    format!("objects[{i}].b"),
                    format!("size components must be positive, got {:?}", o.b),
                ));
            }
            if !o.r.is_finite() {
                return Err(Error::schema(format!("objects[{i}].r"), "non-finite rotation"));
            }
        }
        if let Some(map) = &self.ground_truth_tree {
            SceneTree::from_parent_map(self.objects.len(), map)
                .and_then(|t| t.validate())
                .map_err(|e| Error::schema("ground_truth_tree", e.to_string()))?;
        }
        Ok(())
    }

    pub fn ground_truth(&self) -> Result<Option<SceneTree>> {
        self.ground_truth_tree
            .as_ref()
            .map(|m| SceneTree::from_parent_map(self.objects.len(), m))
            .transpose()
    }

    /// Resolves class names against `vocab`.
    pub fn to_scene<T: Scalar>(&self, vocab: &[String]) -> Result<Scene<T>> {
        let index: BTreeMap<&str, usize> = vocab.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect();
        let objects = self
            .objects
            .iter()
            .enumerate()
            .map(|(i, o)| {
                let class_id = *index
                    .get(o.class.as_str())
                    .ok_or_else(|| Error::schema(format!("objects[{i}].class"), format!("class `{}` is not in the vocabulary", o.class)))?;
                SceneObject::new(class_id, o.t.map(T::lit), o.b.map(T::lit), T::lit(o.r))
                    .map_err(|e| Error::schema(format!("objects[{i}]"), e.to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Scene::new(
            self.scene_id.clone().unwrap_or_default(),
            self.room_type.clone(),
            self.floor.iter().map(|p| p.map(T::lit)).collect(),
            objects,
        ))
    }

    pub fn from_scene<T: Scalar>(scene: &Scene<T>, vocab: &[String], tree: Option<&SceneTree>) -> Result<Self> {
        let objects = scene
            .objects
            .iter()
            .map(|o| {
                let class = vocab.get(o.class_id).ok_or_else(|| Error::Unknown {
                    kind: "class id",
                    value: o.class_id.to_string(),
                })?;
                Ok(ObjectRecord {
                    class: class.clone(),
                    t: o.translation.map(|v| v.as_f64()),
                    b: o.size.map(|v| v.as_f64()),
                    r: o.rotation.as_f64(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            scene_id: (!scene.scene_id.is_empty()).then(|| scene.scene_id.clone()),
            room_type: scene.room_type.clone(),
            floor: scene.floor.iter().map(|p| p.map(|v| v.as_f64())).collect(),
            objects,
            ground_truth_tree: tree.map(SceneTree::to_parent_map),
        })
    }
}

pub fn load_scene(path: impl AsRef<Path>) -> Result<SceneDocument> {
    SceneDocument::from_json_str(&fs::read_to_string(path)?)
}

pub fn save_scene(path: impl AsRef<Path>, doc: &SceneDocument) -> Result<()> {
    fs::write(path, doc.to_json_string())?;
    Ok(())
}

/// One document per line; errors name the 1-based line.
pub fn parse_ndjson(s: &str) -> Result<Vec<SceneDocument>> {
    s.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            SceneDocument::from_json_str(l).map_err(|e| match e {
                Error::Schema { path, message } => Error::Schema {
                    path: if path == "." { format!("line {}", i + 1) } else { format!("line {}: {path}", i + 1) },
                    message,
                },
                other => other,
            })
        })
        .collect()
}

pub fn to_ndjson(docs: &[SceneDocument]) -> String {
    let mut out = String::new();
    for d in docs {
        out.push_str(&serde_json::to_string(d).expect("documents serialize"));
        out.push('\n');
    }
    out
}

/// Reads a scene collection: NDJSON for `.ndjson`/`.jsonl`, otherwise a
/// JSON array of documents or a single document.
pub fn load_scenes(path: impl AsRef<Path>) -> Result<Vec<SceneDocument>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
    if ext == "ndjson" || ext == "jsonl" {
        return parse_ndjson(&text);
    }
    if text.trim_start().starts_with('[') {
        let de = &mut serde_json::Deserializer::from_str(&text);
        let docs: Vec<SceneDocument> = serde_path_to_error::deserialize(de)
            .map_err(|e| Error::schema(e.path().to_string(), e.into_inner().to_string()))?;
        for (i, d) in docs.iter().enumerate() {
            d.validate().map_err(|e| match e {
                Error::Schema { path, message } => Error::Schema {
                    path: format!("[{i}].{path}"),
                    message,
                },
                other => other,
            })?;
        }
        return Ok(docs);
    }
    Ok(vec![SceneDocument::from_json_str(&text)?])
}

pub fn save_scenes(path: impl AsRef<Path>, docs: &[SceneDocument]) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(to_ndjson(docs).as_bytes())?;
    Ok(())
}

pub fn load_vocab(path: impl AsRef<Path>) -> Result<Vec<String>> {
    let text = fs::read_to_string(path)?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    let vocab: Vec<String> =
        serde_path_to_error::deserialize(de).map_err(|e| Error::schema(e.path().to_string(), e.into_inner().to_string()))?;
    validate_vocab(&vocab)?;
    Ok(vocab)
}

pub fn save_vocab(path: impl AsRef<Path>, vocab: &[String]) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(vocab)? + "\n")?;
    Ok(())
}

pub fn validate_vocab(vocab: &[String]) -> Result<()> {
    if vocab.is_empty() {
        return Err(Error::EmptyInput("class vocabulary"));
    }
    let mut seen = BTreeSet::new();
    for (i, c) in vocab.iter().enumerate() {
        if c.is_empty() || !seen.insert(c) {
            return Err(Error::schema(format!("[{i}]"), format!("empty or duplicate class name `{c}`")));
        }
    }
    Ok(())
}

/// Sorted distinct class names over a document set.
pub fn vocab_from_documents(docs: &[SceneDocument]) -> Vec<String> {
    let names: BTreeSet<&str> = docs.iter().flat_map(|d| d.objects.iter().map(|o| o.class.as_str())).collect();
    names.into_iter().map(str::to_string).collect()
}
