//! Egocentric ray-cast rendering.
//!
//! Each pixel column casts one ray inside a 90 degree horizontal field of
//! view. Rays march the grid in the agent's local frame (forward, lateral) and
//! stop at the first wall or after `depth` cells. Walls take the color of the
//! room the ray was in when it hit them; floor and ceiling are tiled in world
//! coordinates so a forward step visibly shifts the pattern. Everything is
//! shaded by distance.

use serde::{Deserialize, Serialize};

use super::frame::EgoFrame;
use super::pose::{Heading, Pose};
use super::world::{Cell, CellKind, WorldMap};
use super::WorldError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RenderConfig {
    /// Frame side in pixels; frames are square.
    pub size: u32,
    /// Sight depth in cells.
    pub depth: usize,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self { size: 32, depth: 5 }
    }
}

const SIDE_SHADE: f64 = 0.8;
const TILE_SHADE: f64 = 0.8;

fn right_of(h: Heading) -> (i64, i64) {
    match h {
        Heading::N => (1, 0),
        Heading::E => (0, 1),
        Heading::S => (-1, 0),
        Heading::W => (0, -1),
    }
}

fn local_to_world(pose: &Pose, forward: i64, lateral: i64) -> (i64, i64) {
    let (fx, fy) = pose.heading.delta();
    let (rx, ry) = right_of(pose.heading);
    (pose.x as i64 + forward * fx + lateral * rx, pose.y as i64 + forward * fy + lateral * ry)
}

fn brightness(dist: f64, depth: usize) -> f64 {
    1.0 - 0.55 * (dist / (depth as f64 + 0.5)).min(1.0)
}

fn shade(rgb: [u8; 3], factor: f64) -> [u8; 3] {
    rgb.map(|c| (c as f64 * factor).round().clamp(0.0, 255.0) as u8)
}

fn tile_factor(x: i64, y: i64) -> f64 {
    if (x + y).rem_euclid(2) == 0 {
        1.0
    } else {
        TILE_SHADE
    }
}

struct Hit {
    dist: f64,
    side: bool,
    room: Cell,
}

fn cast(world: &WorldMap, pose: &Pose, slope: f64, sign: i64, depth: usize) -> Option<Hit> {
    let max_t = depth as f64 + 0.5;
    let (mut f, mut l) = (0i64, 0i64);
    let mut next_f = 0.5;
    let mut next_l = if slope > 0.0 { 0.5 / slope } else { f64::INFINITY };
    let mut last_free = pose.cell();
    loop {
        let (t, side) = if next_f <= next_l {
            f += 1;
            let t = next_f;
            next_f += 1.0;
            (t, false)
        } else {
            l += 1;
            let t = next_l;
            next_l += 1.0 / slope;
            (t, true)
        };
        if t > max_t {
            return None;
        }
        let (wx, wy) = local_to_world(pose, f, sign * l);
        if !world.in_bounds(wx, wy) || world.kind(Cell::new(wx as usize, wy as usize)) == CellKind::Wall {
            return Some(Hit { dist: t, side, room: last_free });
        }
        last_free = Cell::new(wx as usize, wy as usize);
    }
}

fn noise(world: &WorldMap, pose: &Pose, px: u32, py: u32, ch: usize) -> i32 {
    let amp = world.palette.noise as i32;
    if amp == 0 {
        return 0;
    }
    let mut h = world.seed ^ 0x9e37_79b9_7f4a_7c15;
    for v in [pose.x as u64, pose.y as u64, pose.heading.index() as u64, px as u64, py as u64, ch as u64] {
        h = (h ^ v).wrapping_mul(0x100_0000_01b3).rotate_left(23);
    }
    (h % (2 * amp as u64 + 1)) as i32 - amp
}

fn wall_color(world: &WorldMap, cell: Cell) -> [u8; 3] {
    let label = world.room_label(cell).unwrap_or(0);
    world.palette.wall[world.room_kinds[label as usize] as usize % world.palette.wall.len()]
}

/// Render the view from `pose`. Pure function of its inputs.
pub fn render_ego(world: &WorldMap, pose: &Pose, cfg: &RenderConfig) -> Result<EgoFrame, WorldError> {
    if !world.is_free(pose.cell()) {
        return Err(WorldError::InvalidPose { x: pose.x, y: pose.y });
    }
    if cfg.size == 0 || cfg.depth == 0 {
        return Err(WorldError::InvalidFrame(format!("bad render config {cfg:?}")));
    }
    let size = cfg.size;
    let half = size as f64 / 2.0;
    let max_d = cfg.depth as f64 + 0.5;
    let pal = &world.palette;
    let mut frame = EgoFrame::filled(size, size, pal.fog);

    for c in 0..size {
        let u = (2.0 * c as f64 + 1.0) / size as f64 - 1.0;
        let (slope, sign) = (u.abs(), if u < 0.0 { -1 } else { 1 });
        let hit = cast(world, pose, slope, sign, cfg.depth);
        let half_wall = hit.as_ref().map_or(0.0, |h| half * 0.5 / h.dist);
        for r in 0..size {
            let yc = r as f64 + 0.5 - half;
            let rgb = match &hit {
                Some(h) if yc.abs() < half_wall => {
                    let side = if h.side { SIDE_SHADE } else { 1.0 };
                    Some(shade(wall_color(world, h.room), brightness(h.dist, cfg.depth) * side))
                }
                _ => {
                    let d = half * 0.5 / yc.abs();
                    if d > max_d {
                        None
                    } else {
                        let f = (d + 0.5).floor() as i64;
                        let l = sign * (slope * d + 0.5).floor() as i64;
                        let (wx, wy) = local_to_world(pose, f, l);
                        if !world.in_bounds(wx, wy) {
                            None
                        } else {
                            let cell = Cell::new(wx as usize, wy as usize);
                            let base = if yc < 0.0 {
                                pal.ceiling
                            } else if let Some(lm) = world.landmark_at(cell) {
                                pal.landmark[lm.color as usize % pal.landmark.len()]
                            } else if let Some(label) = world.room_label(cell) {
                                pal.floor[world.room_kinds[label as usize] as usize % pal.floor.len()]
                            } else {
                                wall_color(world, pose.cell())
                            };
                            Some(shade(base, brightness(d, cfg.depth) * tile_factor(wx, wy)))
                        }
                    }
                }
            };
            if let Some(rgb) = rgb {
                frame.set_pixel(c, r, rgb);
            }
        }
    }
    if pal.noise > 0 {
        for r in 0..size {
            for c in 0..size {
                let px = frame.pixel(c, r);
                let mut out = [0u8; 3];
                for (ch, v) in px.iter().enumerate() {
                    out[ch] = (*v as i32 + noise(world, pose, c, r, ch)).clamp(0, 255) as u8;
                }
                frame.set_pixel(c, r, out);
            }
        }
    }
    Ok(frame)
}

/// The frame seen when a wall is directly ahead of an agent standing in room
/// `label`: every pixel is the nearest-distance wall shade.
pub fn wall_fill_frame(world: &WorldMap, label: u8, cfg: &RenderConfig) -> EgoFrame {
    let kind = world.room_kinds[label as usize] as usize % world.palette.wall.len();
    EgoFrame::filled(cfg.size, cfg.size, shade(world.palette.wall[kind], brightness(0.5, cfg.depth)))
}
