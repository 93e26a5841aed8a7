//! Procedural gridworld: map generation, egocentric rendering, A* planning
//! with replanning, and trajectory synthesis.

mod frame;
mod plan;
mod pose;
mod render;
mod trajectory;
mod world;

pub use frame::EgoFrame;
pub use plan::{cell_length, navigate_with_replanning, plan_path, ObstacleEvent};
pub use pose::{Heading, Move, Pose};
pub use render::{render_ego, wall_fill_frame, RenderConfig};
pub use trajectory::{
    generate_trajectory, label_runs, sample_trajectories, segment_scenes, traj_id_for, SceneSegment, TrajConfig,
    Trajectory,
};
pub use world::{
    build_world, Cell, CellKind, Landmark, Palette, WorldMap, WorldSpec, WorldStyle, LANDMARK_COLORS,
    LANDMARK_OBJECTS, ROOM_NAMES,
};

#[derive(Debug, thiserror::Error)]
pub enum WorldError {
    #[error("invalid world spec: {0}")]
    InvalidSpec(String),
    #[error("world generation failed: {0}")]
    GenerationFailed(String),
    #[error("pose ({x}, {y}) is not on a free cell")]
    InvalidPose { x: usize, y: usize },
    #[error("no path from ({}, {}) to ({}, {})", from.x, from.y, to.x, to.y)]
    NoPath { from: Cell, to: Cell },
    #[error("trajectory length {len} outside [{min}, {max}]")]
    LengthOutOfRange { len: usize, min: usize, max: usize },
    #[error("invalid frame: {0}")]
    InvalidFrame(String),
    #[error("png: {0}")]
    Png(String),
}

/// Every word the instruction templates can emit.
pub fn instruction_words() -> Vec<&'static str> {
    let mut words = vec!["go", "straight", "until", "the", "turn", "left", "right", "around", "enter", "leave", "and", "then"];
    words.extend(ROOM_NAMES);
    words.extend(LANDMARK_COLORS);
    words.extend(LANDMARK_OBJECTS);
    words
}
