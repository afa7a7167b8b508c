//! Complex-baseband frame generation through flat fading channels.

pub mod channel;
pub mod constellation;
pub mod frameset;

pub use channel::{apply_channel, draw_gain, ChannelConfig, ChannelModel, Fading};
pub use constellation::{modulate, Constellation};
pub use frameset::{gen_frameset, Frame, FrameSet};
