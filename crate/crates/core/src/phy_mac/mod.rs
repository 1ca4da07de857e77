//! Physical placement, mobility and the shared-medium MAC.

mod mac;
mod node;

pub use mac::{
    decodable, intervals_overlap, resolve_reception, BackoffPolicy, Frame, FrameKind, Incoming,
    LinkAddr, MacConfig, MacSdu, MacState, MacStatus,
};
pub use node::{
    draw_leg, in_range, mobility_step, points_in_range, MobilityParams, NodeId, NodeState, Point,
    Role,
};
