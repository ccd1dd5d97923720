//! Deterministic paired exocentric/egocentric scenes.

mod augment;
mod dataset;
mod render;
mod scene;

pub use augment::{augment, flip_pair, AugmentConfig, CROP_FRACTION, FLIP_PROBABILITY};
pub use dataset::{
    read_dataset, read_manifest, rgb_to_tensor, seg_to_tensor, tensor_to_rgb, write_dataset, Dataset, DatasetManifest, Mode, RecordEntry,
    Split, SynthConfig, ViewPair, DEFAULT_RESOLUTION, DEFAULT_TEST_SIZE, DEFAULT_TRAIN_SIZE, MANIFEST_FILE, TEST_SEED_OFFSET,
};
pub use render::{render_ego, render_exo, ExoMode, CAMERA_HEIGHT, NEAR_PLANE, SIDE_FORESHORTENING};
pub use scene::{
    class_of, hsv_to_rgb, sample_scene, Agent, SceneObject, SceneSpec, ShapeKind, EGO_FOV, MAX_OBJECTS, NUM_CLASSES, NUM_SEG_CLASSES,
};
