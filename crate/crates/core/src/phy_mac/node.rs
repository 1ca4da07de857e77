//! Node geometry, unit-disk connectivity and random-waypoint mobility.

use std::fmt;
use std::time::Duration;

use crate::sim::{RngStream, SimTime};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    fn clamp_to(self, side: f64) -> Point {
        Point::new(self.x.clamp(0.0, side), self.y.clamp(0.0, side))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    Sensor,
    Proxy,
    Sink,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeState {
    pub id: NodeId,
    pub position: Point,
    pub waypoint: Point,
    /// Metres per second; zero while paused or for stationary nodes.
    pub speed: f64,
    pub pause_until: SimTime,
    pub role: Role,
    pub section: usize,
    pub mobile: bool,
}

impl NodeState {
    /// A node parked at `position` with no pending movement.
    pub fn stationary(id: NodeId, position: Point, role: Role) -> Self {
        NodeState {
            id,
            position,
            waypoint: position,
            speed: 0.0,
            pause_until: SimTime::ZERO,
            role,
            section: 0,
            mobile: false,
        }
    }

    pub fn is_paused(&self, now: SimTime) -> bool {
        now < self.pause_until || self.speed == 0.0
    }
}

/// Closed-boundary unit-disk test: nodes exactly `range` apart can talk.
pub fn in_range(a: &NodeState, b: &NodeState, range: f64) -> bool {
    points_in_range(&a.position, &b.position, range)
}

pub fn points_in_range(a: &Point, b: &Point, range: f64) -> bool {
    a.distance(b) <= range
}

#[derive(Debug, Clone, PartialEq)]
pub struct MobilityParams {
    pub area_side: f64,
    pub speed_min: f64,
    pub speed_max: f64,
    pub pause: Duration,
}

impl Default for MobilityParams {
    fn default() -> Self {
        MobilityParams {
            area_side: 1000.0,
            speed_min: 1.0,
            speed_max: 5.0,
            pause: Duration::from_secs(2),
        }
    }
}

/// Draws a fresh waypoint and speed for a node leaving a pause.
pub fn draw_leg(node: &mut NodeState, params: &MobilityParams, rng: &mut RngStream) {
    node.waypoint = Point::new(
        rng.uniform(0.0, params.area_side),
        rng.uniform(0.0, params.area_side),
    );
    node.speed = rng.uniform(params.speed_min, params.speed_max);
}

/// Advances a random-waypoint node from `now` by `dt`.
///
/// The node travels in a straight line toward its waypoint; on arrival it
/// stops for `params.pause`, after which a new waypoint and speed are drawn
/// from `rng`. Several legs may complete inside one step.
pub fn mobility_step(
    node: &NodeState,
    now: SimTime,
    dt: Duration,
    params: &MobilityParams,
    rng: &mut RngStream,
) -> NodeState {
    let mut next = node.clone();
    if !next.mobile {
        return next;
    }
    let end = now + dt;
    let mut t = now;
    while t < end {
        if next.speed == 0.0 {
            if next.pause_until > t {
                if next.pause_until >= end {
                    break;
                }
                t = next.pause_until;
            }
            draw_leg(&mut next, params, rng);
            continue;
        }
        let remaining = next.position.distance(&next.waypoint);
        let available = (end - t).as_secs_f64();
        let needed = remaining / next.speed;
        if needed <= available {
            next.position = next.waypoint;
            t = t + Duration::from_secs_f64(needed);
            next.speed = 0.0;
            next.pause_until = t + params.pause;
        } else {
            let frac = (next.speed * available) / remaining;
            next.position = Point::new(
                next.position.x + (next.waypoint.x - next.position.x) * frac,
                next.position.y + (next.waypoint.y - next.position.y) * frac,
            );
            t = end;
        }
        next.position = next.position.clamp_to(params.area_side);
    }
    next
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::StreamKind;

    fn at(x: f64, y: f64) -> NodeState {
        NodeState::stationary(NodeId(0), Point::new(x, y), Role::Sensor)
    }

    #[test]
    fn range_is_closed_at_the_boundary() {
        let a = at(0.0, 0.0);
        assert!(in_range(&a, &at(0.0, 0.0), 100.0));
        assert!(in_range(&a, &at(100.0, 0.0), 100.0));
        assert!(in_range(&a, &at(60.0, 80.0), 100.0));
        assert!(!in_range(&a, &at(100.000001, 0.0), 100.0));
    }

    fn walker(pos: Point, waypoint: Point, speed: f64) -> NodeState {
        NodeState {
            waypoint,
            speed,
            mobile: true,
            ..NodeState::stationary(NodeId(1), pos, Role::Sensor)
        }
    }

    #[test]
    fn arrives_and_pauses() {
        let n = walker(Point::new(0.0, 0.0), Point::new(3.0, 4.0), 1.0);
        let mut rng = RngStream::new(1, StreamKind::Mobility);
        let p = MobilityParams::default();
        let m = mobility_step(&n, SimTime::ZERO, Duration::from_secs(5), &p, &mut rng);
        assert_eq!(m.position, Point::new(3.0, 4.0));
        assert_eq!(m.speed, 0.0);
        assert_eq!(m.pause_until, SimTime::from_secs(7));
    }

    #[test]
    fn partial_leg_moves_along_the_segment() {
        let n = walker(Point::new(0.0, 0.0), Point::new(30.0, 40.0), 2.0);
        let mut rng = RngStream::new(1, StreamKind::Mobility);
        let p = MobilityParams::default();
        let m = mobility_step(&n, SimTime::ZERO, Duration::from_secs(10), &p, &mut rng);
        assert!((m.position.x - 12.0).abs() < 1e-9);
        assert!((m.position.y - 16.0).abs() < 1e-9);
        assert_eq!(m.speed, 2.0);
    }

    #[test]
    fn pause_expiry_draws_next_leg_from_the_stream() {
        // 5 s travel + 2 s pause, then 1 s on a freshly drawn leg.
        let n = walker(Point::new(0.0, 0.0), Point::new(3.0, 4.0), 1.0);
        let p = MobilityParams::default();
        let mut rng = RngStream::new(9, StreamKind::Mobility);
        let m = mobility_step(&n, SimTime::ZERO, Duration::from_secs(8), &p, &mut rng);

        let mut oracle = RngStream::new(9, StreamKind::Mobility);
        let wx = oracle.uniform(0.0, 1000.0);
        let wy = oracle.uniform(0.0, 1000.0);
        let v = oracle.uniform(1.0, 5.0);
        assert_eq!(m.waypoint, Point::new(wx, wy));
        assert_eq!(m.speed, v);
        let d = Point::new(3.0, 4.0).distance(&m.waypoint);
        let expect = Point::new(3.0 + (wx - 3.0) * v / d, 4.0 + (wy - 4.0) * v / d);
        assert!(m.position.distance(&expect) < 1e-6);
    }

    #[test]
    fn stationary_nodes_never_move() {
        let n = at(500.0, 500.0);
        let mut rng = RngStream::new(1, StreamKind::Mobility);
        let m = mobility_step(
            &n,
            SimTime::ZERO,
            Duration::from_secs(100),
            &MobilityParams::default(),
            &mut rng,
        );
        assert_eq!(m, n);
    }
}
