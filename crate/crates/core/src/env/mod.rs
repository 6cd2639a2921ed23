//! Synthetic environment: observation schema, hierarchical action space
//! constants, frame generation, and legality-mask machinery.

pub mod actions;
pub mod frames;
pub mod masks;
pub mod schema;

pub use actions::{
    expand_legality_row, Activation, Button, TargetCategory, ACTIVATION_MAP, BUTTON_DIM,
    BUTTON_NAMES, HEAD_COUNT, HEAD_DIMS, LEGALITY_MATRIX, MOVE_DIM, OFFSET_DIM,
    TARGET_CATEGORY_EXTENTS, TARGET_DIM,
};
pub use frames::{generate_frames, FrameGenerator, FrameGroup};
pub use masks::{derive_masks, derive_masks_for_hero, MaskSet, MASK_PACKED_BYTES};
pub use schema::{make_schema, CategoryOffsets, ObservationSchema, EPISODE_LEN, HEROES_PER_TEAM};
