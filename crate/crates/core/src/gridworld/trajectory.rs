use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::frame::EgoFrame;
use super::plan::{navigate_with_replanning, ObstacleEvent};
use super::pose::{Heading, Move, Pose};
use super::render::{render_ego, RenderConfig};
use super::world::WorldMap;
use super::WorldError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajConfig {
    pub min_len: usize,
    pub max_len: usize,
    pub render: RenderConfig,
    /// Obstacles revealed while walking; the route is replanned around them.
    #[serde(default)]
    pub obstacles: Vec<ObstacleEvent>,
    /// Sampling rejects trajectories where an earlier frame already has SSIM
    /// above this value against the goal frame.
    #[serde(default = "default_goal_similarity")]
    pub max_goal_similarity: Option<f64>,
}

fn default_goal_similarity() -> Option<f64> {
    Some(0.7)
}

impl Default for TrajConfig {
    fn default() -> Self {
        Self {
            min_len: 8,
            max_len: 29,
            render: RenderConfig::default(),
            obstacles: Vec::new(),
            max_goal_similarity: default_goal_similarity(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SceneSegment {
    pub room_label: u8,
    pub room: String,
    pub start: usize,
    pub end: usize,
    pub instruction: String,
}

impl SceneSegment {
    pub fn range(&self) -> Range<usize> {
        self.start..self.end
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub traj_id: String,
    pub world_seed: u64,
    pub poses: Vec<Pose>,
    #[serde(skip)]
    pub frames: Vec<EgoFrame>,
    /// Scene label of the cell under each pose.
    pub room_labels: Vec<u8>,
    pub instruction: String,
    pub segments: Vec<SceneSegment>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    pub fn goal_frame(&self) -> &EgoFrame {
        self.frames.last().expect("trajectory has frames")
    }

    /// The task input: the first `n` observations plus the goal observation.
    pub fn task_input(&self, n: usize) -> Option<(&[EgoFrame], &EgoFrame)> {
        (self.frames.len() > n).then(|| (&self.frames[..n], self.goal_frame()))
    }

    /// Concatenated sub-instructions of every segment that starts at or
    /// before `frame`.
    pub fn instruction_through(&self, frame: usize) -> String {
        self.segments
            .iter()
            .filter(|s| s.start <= frame)
            .map(|s| s.instruction.as_str())
            .collect::<Vec<_>>()
            .join(" then ")
    }
}

/// Maximal runs of equal labels, as half-open index ranges.
pub fn label_runs(labels: &[u8]) -> Vec<Range<usize>> {
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..=labels.len() {
        if i == labels.len() || labels[i] != labels[start] {
            out.push(start..i);
            start = i;
        }
    }
    out
}

pub fn segment_scenes(traj: &Trajectory) -> Vec<Range<usize>> {
    label_runs(&traj.room_labels)
}

fn forward_phrase(world: &WorldMap, end: &Pose) -> String {
    match world.landmark_at(end.cell()) {
        Some(l) => format!("go straight until the {}", l.name()),
        None => "go straight".to_string(),
    }
}

/// Template phrases for the moves `poses[i] -> poses[i + 1]`, `i` in `moves`.
fn describe_moves(world: &WorldMap, poses: &[Pose], moves: Range<usize>) -> Vec<String> {
    let mut phrases = Vec::new();
    let mut i = moves.start;
    while i < moves.end {
        let mv = poses[i].move_to(&poses[i + 1]).expect("consecutive poses differ by one move");
        match mv {
            Move::Forward => {
                let mut j = i;
                while j + 1 < moves.end && poses[j + 1].move_to(&poses[j + 2]) == Some(Move::Forward) {
                    j += 1;
                }
                phrases.push(forward_phrase(world, &poses[j + 1]));
                i = j + 1;
            }
            turn => {
                let again = i + 1 < moves.end && poses[i + 1].move_to(&poses[i + 2]) == Some(turn);
                if again {
                    phrases.push("turn around".into());
                    i += 2;
                } else {
                    phrases.push(if turn == Move::TurnLeft { "turn left".into() } else { "turn right".into() });
                    i += 1;
                }
            }
        }
    }
    phrases
}

fn build_segments(world: &WorldMap, poses: &[Pose], labels: &[u8]) -> Vec<SceneSegment> {
    let runs = label_runs(labels);
    runs.iter()
        .enumerate()
        .map(|(si, run)| {
            let label = labels[run.start];
            let room = world.room_name(label).to_string();
            let mut phrases = Vec::new();
            let first_move = if si == 0 {
                0
            } else {
                phrases.push(format!("enter the {room}"));
                run.start
            };
            phrases.extend(describe_moves(world, poses, first_move..run.end - 1));
            if phrases.is_empty() {
                phrases.push(format!("leave the {room}"));
            }
            SceneSegment { room_label: label, room, start: run.start, end: run.end, instruction: phrases.join(" and ") }
        })
        .collect()
}

fn turn_towards(poses: &mut Vec<Pose>, heading: Heading) {
    let last = *poses.last().expect("non-empty");
    if last.heading == heading {
        return;
    }
    if last.heading.right() == heading {
        poses.push(last.apply(Move::TurnRight).expect("turn"));
    } else {
        let l = last.apply(Move::TurnLeft).expect("turn");
        poses.push(l);
        if l.heading != heading {
            poses.push(l.apply(Move::TurnLeft).expect("turn"));
        }
    }
}

pub fn traj_id_for(world: &WorldMap, start: &Pose, goal: &Pose) -> String {
    format!(
        "w{}-{}-{}{:?}-{}-{}{:?}",
        world.seed, start.x, start.y, start.heading, goal.x, goal.y, goal.heading
    )
}

pub fn generate_trajectory(
    world: &WorldMap,
    start: &Pose,
    goal: &Pose,
    cfg: &TrajConfig,
) -> Result<Trajectory, WorldError> {
    let mut poses = navigate_with_replanning(world, start, goal, &cfg.obstacles)?;
    turn_towards(&mut poses, goal.heading);
    if poses.len() < cfg.min_len || poses.len() > cfg.max_len {
        return Err(WorldError::LengthOutOfRange { len: poses.len(), min: cfg.min_len, max: cfg.max_len });
    }
    let frames = poses.iter().map(|p| render_ego(world, p, &cfg.render)).collect::<Result<Vec<_>, _>>()?;
    let room_labels: Vec<u8> =
        poses.iter().map(|p| world.room_label(p.cell()).expect("poses sit on free cells")).collect();
    let segments = build_segments(world, &poses, &room_labels);
    let instruction = segments.iter().map(|s| s.instruction.as_str()).collect::<Vec<_>>().join(" then ");
    Ok(Trajectory {
        traj_id: traj_id_for(world, start, goal),
        world_seed: world.seed,
        poses,
        frames,
        room_labels,
        instruction,
        segments,
    })
}

/// Sample `count` distinct trajectories with uniformly drawn start poses and
/// goal cells. The goal heading is the heading on arrival.
pub fn sample_trajectories(
    world: &WorldMap,
    count: usize,
    cfg: &TrajConfig,
    seed: u64,
) -> Result<Vec<Trajectory>, WorldError> {
    let free = world.free_cells();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ world.seed.rotate_left(17));
    let mut out: Vec<Trajectory> = Vec::with_capacity(count);
    let max_attempts = 400 * count.max(1);
    let plan_cfg = TrajConfig { min_len: 1, max_len: usize::MAX, max_goal_similarity: None, ..cfg.clone() };
    for _ in 0..max_attempts {
        if out.len() == count {
            break;
        }
        let s = free[rng.gen_range(0..free.len())];
        let g = free[rng.gen_range(0..free.len())];
        if s == g {
            continue;
        }
        let start = Pose::new(s.x, s.y, Heading::ALL[rng.gen_range(0..4)]);
        let probe = Pose::new(g.x, g.y, Heading::N);
        let path = match navigate_with_replanning(world, &start, &probe, &plan_cfg.obstacles) {
            Ok(p) => p,
            Err(_) => continue,
        };
        if path.len() < cfg.min_len || path.len() > cfg.max_len {
            continue;
        }
        let goal = *path.last().expect("non-empty path");
        let traj = generate_trajectory(world, &start, &goal, cfg)?;
        if out.iter().any(|t| t.traj_id == traj.traj_id) {
            continue;
        }
        if let Some(limit) = cfg.max_goal_similarity {
            let goal_frame = traj.goal_frame();
            let ambiguous = traj.frames[..traj.len() - 1]
                .iter()
                .any(|f| crate::metrics::ssim(f, goal_frame).map_or(true, |s| s > limit));
            if ambiguous {
                continue;
            }
        }
        out.push(traj);
    }
    if out.len() < count {
        return Err(WorldError::GenerationFailed(format!(
            "only {} of {count} trajectories satisfied the constraints in world {}",
            out.len(),
            world.seed
        )));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridworld::world::{build_world, Cell, WorldSpec};

    fn corridor() -> WorldMap {
        WorldMap::from_ascii(&["###########", "#aaaaaaaaa#", "###########", "###########"], 2)
            .unwrap()
            .with_landmark(Cell::new(9, 1), 2, 0)
            .unwrap()
    }

    #[test]
    fn straight_corridor_single_segment() {
        let w = corridor();
        let t = generate_trajectory(&w, &Pose::new(1, 1, Heading::E), &Pose::new(9, 1, Heading::E), &TrajConfig::default())
            .unwrap();
        assert_eq!(t.len(), 9);
        assert_eq!(t.segments.len(), 1);
        assert_eq!(t.instruction, "go straight until the red lamp");
        assert_eq!(t.segments[0].range(), 0..9);
    }

    #[test]
    fn too_short_is_rejected() {
        let w = corridor();
        let err = generate_trajectory(&w, &Pose::new(1, 1, Heading::E), &Pose::new(4, 1, Heading::E), &TrajConfig::default())
            .unwrap_err();
        assert!(matches!(err, WorldError::LengthOutOfRange { len: 4, .. }));
    }

    #[test]
    fn three_rooms_three_segments() {
        let w = WorldMap::from_ascii(&["##############", "#aaaabbbbcccc#", "##############", "##############"], 0)
            .unwrap();
        let t = generate_trajectory(&w, &Pose::new(1, 1, Heading::E), &Pose::new(12, 1, Heading::E), &TrajConfig::default())
            .unwrap();
        let transitions = t.room_labels.windows(2).filter(|p| p[0] != p[1]).count();
        assert_eq!(t.segments.len(), transitions + 1);
        assert_eq!(t.segments.len(), 3);
        let ranges: Vec<_> = t.segments.iter().map(|s| s.range()).collect();
        assert_eq!(ranges, vec![0..4, 4..8, 8..12]);
        assert_eq!(t.segments[1].instruction, format!("enter the {} and go straight", w.room_name(1)));
    }

    #[test]
    fn label_runs_definition() {
        assert_eq!(label_runs(&[0, 0, 1, 1, 1, 0]), vec![0..2, 2..5, 5..6]);
        assert_eq!(label_runs(&[3; 7]), vec![0..7]);
        assert!(label_runs(&[]).is_empty());
    }

    #[test]
    fn generation_is_deterministic_and_valid() {
        let w = build_world(&WorldSpec::new(16, 16, 4, 6, 21)).unwrap();
        let cfg = TrajConfig::default();
        let a = sample_trajectories(&w, 6, &cfg, 5).unwrap();
        let b = sample_trajectories(&w, 6, &cfg, 5).unwrap();
        assert_eq!(a, b);
        for t in &a {
            assert!((8..=29).contains(&t.len()));
            assert_eq!(t.frames.len(), t.len());
            assert!(t.poses.windows(2).all(|p| p[0].move_to(&p[1]).is_some()));
            let mut next = 0;
            for s in &t.segments {
                assert_eq!(s.start, next);
                assert!(s.end > s.start);
                next = s.end;
            }
            assert_eq!(next, t.len());
            let (init, goal) = t.task_input(6).unwrap();
            assert_eq!(init.len(), 6);
            assert_eq!(goal, t.frames.last().unwrap());
            assert_eq!(t.instruction_through(t.len() - 1), t.instruction);
        }
    }
}
