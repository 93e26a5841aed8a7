use std::collections::VecDeque;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::WorldError;

pub const ROOM_NAMES: [&str; 8] =
    ["hallway", "kitchen", "bedroom", "bathroom", "office", "lounge", "library", "garage"];
pub const LANDMARK_OBJECTS: [&str; 6] = ["chair", "table", "lamp", "plant", "sofa", "painting"];
pub const LANDMARK_COLORS: [&str; 6] = ["red", "green", "blue", "yellow", "white", "orange"];

const ROOM_FLOOR: [[u8; 3]; 8] = [
    [150, 130, 100],
    [90, 140, 160],
    [170, 110, 150],
    [110, 170, 120],
    [160, 150, 70],
    [120, 100, 170],
    [180, 120, 80],
    [100, 110, 110],
];
const ROOM_WALL: [[u8; 3]; 8] = [
    [210, 200, 180],
    [170, 210, 230],
    [230, 180, 210],
    [180, 230, 190],
    [230, 220, 150],
    [190, 180, 235],
    [235, 190, 150],
    [170, 180, 180],
];
const LANDMARK_RGB: [[u8; 3]; 6] =
    [[210, 40, 40], [40, 190, 60], [50, 70, 220], [230, 210, 40], [245, 245, 245], [240, 130, 20]];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CellKind {
    Free,
    Wall,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Cell {
    pub x: usize,
    pub y: usize,
}

impl Cell {
    pub fn new(x: usize, y: usize) -> Self {
        Self { x, y }
    }

    pub fn manhattan(self, other: Cell) -> usize {
        self.x.abs_diff(other.x) + self.y.abs_diff(other.y)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Landmark {
    pub cell: Cell,
    /// Index into [`LANDMARK_OBJECTS`].
    pub object: u8,
    /// Index into [`LANDMARK_COLORS`].
    pub color: u8,
}

impl Landmark {
    pub fn name(&self) -> String {
        format!("{} {}", LANDMARK_COLORS[self.color as usize], LANDMARK_OBJECTS[self.object as usize])
    }
}

/// Generator preset. `RealLike` swaps the palette and adds per-pixel noise.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum WorldStyle {
    #[default]
    Standard,
    RealLike,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Palette {
    pub ceiling: [u8; 3],
    pub fog: [u8; 3],
    /// Floor color per room kind.
    pub floor: Vec<[u8; 3]>,
    /// Wall color per room kind.
    pub wall: Vec<[u8; 3]>,
    pub landmark: Vec<[u8; 3]>,
    /// Peak amplitude of deterministic per-pixel noise.
    pub noise: u8,
}

impl Palette {
    pub fn for_style(style: WorldStyle) -> Self {
        match style {
            WorldStyle::Standard => Self {
                ceiling: [200, 200, 205],
                fog: [24, 24, 32],
                floor: ROOM_FLOOR.to_vec(),
                wall: ROOM_WALL.to_vec(),
                landmark: LANDMARK_RGB.to_vec(),
                noise: 0,
            },
            WorldStyle::RealLike => {
                let warm = |c: [u8; 3]| {
                    let g = (c[0] as u32 + c[1] as u32 + c[2] as u32) / 3;
                    [
                        ((c[0] as u32 + 2 * g) / 3 + 12).min(255) as u8,
                        ((c[1] as u32 + 2 * g) / 3 + 4).min(255) as u8,
                        ((c[2] as u32 + 2 * g) / 3).min(255) as u8,
                    ]
                };
                Self {
                    ceiling: [180, 176, 168],
                    fog: [40, 36, 30],
                    floor: ROOM_FLOOR.iter().copied().map(warm).collect(),
                    wall: ROOM_WALL.iter().copied().map(warm).collect(),
                    landmark: LANDMARK_RGB.iter().copied().map(warm).collect(),
                    noise: 10,
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct WorldSpec {
    pub width: usize,
    pub height: usize,
    pub room_count: usize,
    pub landmark_count: usize,
    pub seed: u64,
    #[serde(default)]
    pub style: WorldStyle,
}

impl WorldSpec {
    pub fn new(width: usize, height: usize, room_count: usize, landmark_count: usize, seed: u64) -> Self {
        Self { width, height, room_count, landmark_count, seed, style: WorldStyle::Standard }
    }

    pub fn with_style(mut self, style: WorldStyle) -> Self {
        self.style = style;
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorldMap {
    pub width: usize,
    pub height: usize,
    pub seed: u64,
    pub cells: Vec<CellKind>,
    /// Scene label per cell; `None` exactly on walls.
    pub room_labels: Vec<Option<u8>>,
    /// Room kind (index into [`ROOM_NAMES`]) per scene label.
    pub room_kinds: Vec<u8>,
    pub landmarks: Vec<Landmark>,
    pub palette: Palette,
}

#[derive(Clone, Copy, Debug)]
struct Rect {
    x0: usize,
    y0: usize,
    x1: usize,
    y1: usize,
}

impl Rect {
    fn w(&self) -> usize {
        self.x1 - self.x0 + 1
    }
    fn h(&self) -> usize {
        self.y1 - self.y0 + 1
    }
}

pub fn build_world(spec: &WorldSpec) -> Result<WorldMap, WorldError> {
    if spec.width < 8 || spec.height < 8 {
        return Err(WorldError::InvalidSpec(format!(
            "world must be at least 8x8, got {}x{}",
            spec.width, spec.height
        )));
    }
    if spec.room_count == 0 {
        return Err(WorldError::InvalidSpec("room_count must be at least 1".into()));
    }
    if spec.width > 255 || spec.height > 255 {
        return Err(WorldError::InvalidSpec("world dimensions above 255 are not supported".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    for _ in 0..16 {
        if let Some(world) = try_build(spec, &mut rng)? {
            return Ok(world);
        }
    }
    Err(WorldError::GenerationFailed(format!(
        "could not partition {}x{} into {} connected rooms",
        spec.width, spec.height, spec.room_count
    )))
}

fn try_build(spec: &WorldSpec, rng: &mut ChaCha8Rng) -> Result<Option<WorldMap>, WorldError> {
    let (w, h) = (spec.width, spec.height);
    let mut cells = vec![CellKind::Wall; w * h];
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            cells[y * w + x] = CellKind::Free;
        }
    }
    let mut rects = vec![Rect { x0: 1, y0: 1, x1: w - 2, y1: h - 2 }];
    // (door cell, cell on the first side of the wall)
    let mut doors: Vec<(Cell, Cell)> = Vec::new();

    while rects.len() < spec.room_count {
        let mut order: Vec<usize> = (0..rects.len()).collect();
        order.sort_by_key(|&i| std::cmp::Reverse(rects[i].w() * rects[i].h()));
        let mut split = None;
        for &ri in &order {
            let r = rects[ri];
            let mut axes = Vec::new();
            if r.w() >= r.h() {
                axes.extend([true, false]);
            } else {
                axes.extend([false, true]);
            }
            if r.w() == r.h() && rng.gen_bool(0.5) {
                axes.reverse();
            }
            for vertical in axes {
                let candidates: Vec<usize> = if vertical {
                    if r.w() < 5 {
                        continue;
                    }
                    (r.x0 + 2..=r.x1 - 2)
                        .filter(|&sx| {
                            !doors.iter().any(|(d, _)| {
                                d.x == sx && (d.y + 1 == r.y0 || d.y == r.y1 + 1)
                            })
                        })
                        .collect()
                } else {
                    if r.h() < 5 {
                        continue;
                    }
                    (r.y0 + 2..=r.y1 - 2)
                        .filter(|&sy| {
                            !doors.iter().any(|(d, _)| {
                                d.y == sy && (d.x + 1 == r.x0 || d.x == r.x1 + 1)
                            })
                        })
                        .collect()
                };
                if let Some(&pos) = candidates.choose(rng) {
                    split = Some((ri, vertical, pos));
                    break;
                }
            }
            if split.is_some() {
                break;
            }
        }
        let Some((ri, vertical, pos)) = split else {
            return Ok(None);
        };
        let r = rects[ri];
        if vertical {
            let door_y = rng.gen_range(r.y0..=r.y1);
            for y in r.y0..=r.y1 {
                if y != door_y {
                    cells[y * w + pos] = CellKind::Wall;
                }
            }
            doors.push((Cell::new(pos, door_y), Cell::new(pos - 1, door_y)));
            rects[ri] = Rect { x1: pos - 1, ..r };
            rects.push(Rect { x0: pos + 1, ..r });
        } else {
            let door_x = rng.gen_range(r.x0..=r.x1);
            for x in r.x0..=r.x1 {
                if x != door_x {
                    cells[pos * w + x] = CellKind::Wall;
                }
            }
            doors.push((Cell::new(door_x, pos), Cell::new(door_x, pos - 1)));
            rects[ri] = Rect { y1: pos - 1, ..r };
            rects.push(Rect { y0: pos + 1, ..r });
        }
    }

    let mut room_labels = vec![None; w * h];
    for (label, r) in rects.iter().enumerate() {
        for y in r.y0..=r.y1 {
            for x in r.x0..=r.x1 {
                room_labels[y * w + x] = Some(label as u8);
            }
        }
    }
    for (door, side) in &doors {
        room_labels[door.y * w + door.x] = room_labels[side.y * w + side.x];
    }

    let mut kinds: Vec<u8> = (0..ROOM_NAMES.len() as u8).collect();
    kinds.shuffle(rng);
    let room_kinds = (0..rects.len()).map(|i| kinds[i % kinds.len()]).collect();

    let mut world = WorldMap {
        width: w,
        height: h,
        seed: spec.seed,
        cells,
        room_labels,
        room_kinds,
        landmarks: Vec::new(),
        palette: Palette::for_style(spec.style),
    };
    if !world.is_connected() {
        return Ok(None);
    }

    let door_cells: Vec<Cell> = doors.iter().map(|(d, _)| *d).collect();
    let mut spots: Vec<Cell> = world.free_cells().into_iter().filter(|c| !door_cells.contains(c)).collect();
    if spots.len() < spec.landmark_count {
        return Err(WorldError::InvalidSpec(format!(
            "{} landmarks requested but only {} free cells available",
            spec.landmark_count,
            spots.len()
        )));
    }
    spots.shuffle(rng);
    world.landmarks = spots[..spec.landmark_count]
        .iter()
        .map(|&cell| Landmark {
            cell,
            object: rng.gen_range(0..LANDMARK_OBJECTS.len() as u8),
            color: rng.gen_range(0..LANDMARK_COLORS.len() as u8),
        })
        .collect();
    world.landmarks.sort_by_key(|l| (l.cell.y, l.cell.x));
    Ok(Some(world))
}

impl WorldMap {
    /// Build a map from ASCII rows: `#` is a wall, `a`..`h` are free cells
    /// carrying scene labels 0..7. Room kinds follow label order.
    pub fn from_ascii(rows: &[&str], seed: u64) -> Result<Self, WorldError> {
        let height = rows.len();
        let width = rows.first().map_or(0, |r| r.len());
        if width < 4 || height < 4 {
            return Err(WorldError::InvalidSpec("ascii map must be at least 4x4".into()));
        }
        let mut cells = Vec::with_capacity(width * height);
        let mut room_labels = Vec::with_capacity(width * height);
        let mut max_label = 0u8;
        for (y, row) in rows.iter().enumerate() {
            if row.len() != width {
                return Err(WorldError::InvalidSpec(format!("row {y} has length {}, expected {width}", row.len())));
            }
            for ch in row.bytes() {
                match ch {
                    b'#' => {
                        cells.push(CellKind::Wall);
                        room_labels.push(None);
                    }
                    b'a'..=b'h' => {
                        let label = ch - b'a';
                        max_label = max_label.max(label);
                        cells.push(CellKind::Free);
                        room_labels.push(Some(label));
                    }
                    other => {
                        return Err(WorldError::InvalidSpec(format!("unknown map character {:?}", other as char)))
                    }
                }
            }
        }
        let world = WorldMap {
            width,
            height,
            seed,
            cells,
            room_labels,
            room_kinds: (0..=max_label).collect(),
            landmarks: Vec::new(),
            palette: Palette::for_style(WorldStyle::Standard),
        };
        world.validate()?;
        Ok(world)
    }

    pub fn with_landmark(mut self, cell: Cell, object: u8, color: u8) -> Result<Self, WorldError> {
        if !self.is_free(cell) {
            return Err(WorldError::InvalidSpec(format!("landmark cell ({}, {}) is not free", cell.x, cell.y)));
        }
        self.landmarks.retain(|l| l.cell != cell);
        self.landmarks.push(Landmark { cell, object, color });
        self.landmarks.sort_by_key(|l| (l.cell.y, l.cell.x));
        Ok(self)
    }

    fn validate(&self) -> Result<(), WorldError> {
        for y in 0..self.height {
            for x in 0..self.width {
                let border = x == 0 || y == 0 || x + 1 == self.width || y + 1 == self.height;
                let i = y * self.width + x;
                if border && self.cells[i] != CellKind::Wall {
                    return Err(WorldError::InvalidSpec(format!("border cell ({x}, {y}) must be a wall")));
                }
                if (self.cells[i] == CellKind::Free) != self.room_labels[i].is_some() {
                    return Err(WorldError::InvalidSpec(format!("cell ({x}, {y}) label does not match kind")));
                }
            }
        }
        Ok(())
    }

    pub fn in_bounds(&self, x: i64, y: i64) -> bool {
        x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height
    }

    pub fn kind(&self, cell: Cell) -> CellKind {
        self.cells[cell.y * self.width + cell.x]
    }

    pub fn is_free(&self, cell: Cell) -> bool {
        cell.x < self.width && cell.y < self.height && self.kind(cell) == CellKind::Free
    }

    pub fn room_label(&self, cell: Cell) -> Option<u8> {
        self.room_labels[cell.y * self.width + cell.x]
    }

    pub fn room_name(&self, label: u8) -> &'static str {
        ROOM_NAMES[self.room_kinds[label as usize] as usize % ROOM_NAMES.len()]
    }

    pub fn room_count(&self) -> usize {
        self.room_kinds.len()
    }

    pub fn landmark_at(&self, cell: Cell) -> Option<&Landmark> {
        self.landmarks.iter().find(|l| l.cell == cell)
    }

    pub fn free_cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for y in 0..self.height {
            for x in 0..self.width {
                if self.cells[y * self.width + x] == CellKind::Free {
                    out.push(Cell::new(x, y));
                }
            }
        }
        out
    }

    pub fn neighbors(&self, c: Cell) -> impl Iterator<Item = Cell> + '_ {
        let (x, y) = (c.x as i64, c.y as i64);
        [(x, y - 1), (x + 1, y), (x, y + 1), (x - 1, y)]
            .into_iter()
            .filter(|&(nx, ny)| self.in_bounds(nx, ny))
            .map(|(nx, ny)| Cell::new(nx as usize, ny as usize))
            .filter(|&n| self.is_free(n))
    }

    /// Cells reachable from `start` through free cells.
    pub fn flood_fill(&self, start: Cell) -> Vec<bool> {
        let mut seen = vec![false; self.width * self.height];
        if !self.is_free(start) {
            return seen;
        }
        let mut queue = VecDeque::from([start]);
        seen[start.y * self.width + start.x] = true;
        while let Some(c) = queue.pop_front() {
            for n in self.neighbors(c) {
                let i = n.y * self.width + n.x;
                if !seen[i] {
                    seen[i] = true;
                    queue.push_back(n);
                }
            }
        }
        seen
    }

    pub fn is_connected(&self) -> bool {
        let free = self.free_cells();
        let Some(&first) = free.first() else {
            return false;
        };
        let seen = self.flood_fill(first);
        free.iter().all(|c| seen[c.y * self.width + c.x])
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("world serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, WorldError> {
        let world: Self = serde_json::from_str(s).map_err(|e| WorldError::InvalidSpec(e.to_string()))?;
        world.validate()?;
        Ok(world)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_room_is_open_interior() {
        let w = build_world(&WorldSpec::new(8, 8, 1, 0, 1)).unwrap();
        for y in 0..8 {
            for x in 0..8 {
                let border = x == 0 || y == 0 || x == 7 || y == 7;
                assert_eq!(w.is_free(Cell::new(x, y)), !border, "({x},{y})");
            }
        }
        assert_eq!(w.room_count(), 1);
    }

    #[test]
    fn multi_room_connected_by_flood_fill() {
        let w = build_world(&WorldSpec::new(16, 16, 4, 6, 7)).unwrap();
        assert_eq!(w.room_count(), 4);
        assert_eq!(w.landmarks.len(), 6);
        let free = w.free_cells();
        for start in [free[0], free[free.len() / 2], *free.last().unwrap()] {
            let seen = w.flood_fill(start);
            assert!(free.iter().all(|c| seen[c.y * w.width + c.x]));
        }
    }

    #[test]
    fn deterministic_for_seed() {
        let spec = WorldSpec::new(16, 16, 4, 6, 7);
        assert_eq!(build_world(&spec).unwrap().to_json(), build_world(&spec).unwrap().to_json());
        let other = build_world(&WorldSpec { seed: 8, ..spec }).unwrap();
        assert_ne!(other.to_json(), build_world(&spec).unwrap().to_json());
    }

    #[test]
    fn invalid_specs() {
        assert!(matches!(build_world(&WorldSpec::new(7, 8, 1, 0, 0)), Err(WorldError::InvalidSpec(_))));
        assert!(matches!(build_world(&WorldSpec::new(8, 8, 0, 0, 0)), Err(WorldError::InvalidSpec(_))));
        assert!(matches!(
            build_world(&WorldSpec::new(8, 8, 12, 0, 0)),
            Err(WorldError::GenerationFailed(_))
        ));
    }

    #[test]
    fn invariants_hold_over_many_seeds() {
        for seed in 0..60 {
            let rooms = 1 + (seed as usize % 5);
            let w = build_world(&WorldSpec::new(16, 16, rooms, 5, seed)).unwrap();
            assert!(w.is_connected());
            for l in &w.landmarks {
                assert!(w.is_free(l.cell));
            }
            for c in w.free_cells() {
                assert!((w.room_label(c).unwrap() as usize) < w.room_count());
            }
        }
    }

    #[test]
    fn json_round_trip() {
        let w = build_world(&WorldSpec::new(12, 10, 2, 3, 4)).unwrap();
        assert_eq!(WorldMap::from_json(&w.to_json()).unwrap(), w);
    }
}
