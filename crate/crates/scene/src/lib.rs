//! Simulated acoustic scenes: image-method rooms, conversational speech,
//! speech-shaped noise and scene rendering for the hearing-aid and remote
//! channels.

pub mod conversation;
pub mod convolve;
pub mod error;
pub mod export;
pub mod layout;
pub mod noise;
pub mod render;
pub mod room;
pub mod scenario;
pub mod seeds;
pub mod speech;

pub use error::{Result, SceneError};
