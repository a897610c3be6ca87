//! Score pages, alignments, ground-truth masks, the synthetic piece
//! generator and augmentation.

mod augment;
mod generate;
mod image;
mod position;
mod types;
mod validate;

pub use augment::{augment_shift, augment_tempo, shift_image, stretch_features, tempo_factors};
pub use generate::{
    bar_extent, generate_piece, midi_to_hz, synthesize, GenConfig, GenError, PITCH_STEPS,
};
pub use image::{GrayImage, InkImage};
pub use position::{
    interpolate_position, map_to_time, render_target_mask, Mask, Position, Unrolled, MASK_LEFT,
    MASK_RIGHT,
};
pub use types::{
    AlignEvent, AlignmentTrack, ModelPiece, Piece, PieceAudio, ScorePage, Staff, SynthNote,
};
pub use validate::{validate_piece, Violation};
