//! Scene files, floor rasterization, dataset splits and the synthetic scene
//! grammar.

mod grammar;
mod io;
mod raster;
mod split;

pub use grammar::{generate_grammar_dataset, ClassSpec, GrammarSpec, SatelliteSpec, ZoneTemplate};
pub use io::{
    load_scene, load_scenes, load_vocab, parse_ndjson, save_scene, save_scenes, save_vocab, to_ndjson, validate_vocab,
    vocab_from_documents, ObjectRecord, SceneDocument,
};
pub use raster::{rasterize_floor, validate_polygon, LayoutMask, DEFAULT_RESOLUTION};
pub use split::{split_dataset, Split};
