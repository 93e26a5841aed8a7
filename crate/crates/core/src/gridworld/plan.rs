use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashSet};

use serde::{Deserialize, Serialize};

use super::pose::{Move, Pose};
use super::world::{Cell, WorldMap};
use super::WorldError;

fn state_index(world: &WorldMap, p: &Pose) -> usize {
    (p.y * world.width + p.x) * 4 + p.heading.index()
}

/// A* over (cell, heading) with moves {forward, turn-left, turn-right}.
///
/// The cost is lexicographic: fewest cells traversed first, then fewest
/// turns. Equal-cost alternatives resolve by expansion order, so the result
/// is a pure function of the inputs. The goal heading is ignored; the path
/// ends on the first pose reaching the goal cell.
pub fn plan_path(
    world: &WorldMap,
    start: &Pose,
    goal: &Pose,
    blocked: Option<&HashSet<Cell>>,
) -> Result<Vec<Pose>, WorldError> {
    for p in [start, goal] {
        if !world.is_free(p.cell()) {
            return Err(WorldError::InvalidPose { x: p.x, y: p.y });
        }
    }
    let is_blocked = |c: Cell| blocked.is_some_and(|b| b.contains(&c));
    if is_blocked(goal.cell()) {
        return Err(WorldError::InvalidPose { x: goal.x, y: goal.y });
    }

    let n_states = world.width * world.height * 4;
    // One forward step outweighs any number of turns on a simple path.
    let step_cost = n_states as u64 + 1;
    let goal_cell = goal.cell();
    let h = |p: &Pose| p.cell().manhattan(goal_cell) as u64 * step_cost;

    let mut best = vec![u64::MAX; n_states];
    let mut parent: Vec<Option<Pose>> = vec![None; n_states];
    let mut closed = vec![false; n_states];
    let mut heap = BinaryHeap::new();
    let mut counter = 0u64;

    best[state_index(world, start)] = 0;
    heap.push(Reverse((h(start), counter, 0u64, *start)));

    while let Some(Reverse((_, _, g, pose))) = heap.pop() {
        let si = state_index(world, &pose);
        if closed[si] {
            continue;
        }
        closed[si] = true;
        if pose.cell() == goal_cell {
            let mut path = vec![pose];
            let mut cur = pose;
            while let Some(prev) = parent[state_index(world, &cur)] {
                path.push(prev);
                cur = prev;
            }
            path.reverse();
            return Ok(path);
        }
        for mv in Move::ORDER {
            let Some(next) = pose.apply(mv) else { continue };
            if mv == Move::Forward && (!world.is_free(next.cell()) || is_blocked(next.cell())) {
                continue;
            }
            let cost = g + if mv == Move::Forward { step_cost } else { 1 };
            let ni = state_index(world, &next);
            if cost < best[ni] {
                best[ni] = cost;
                parent[ni] = Some(pose);
                counter += 1;
                heap.push(Reverse((cost + h(&next), counter, cost, next)));
            }
        }
    }
    Err(WorldError::NoPath { from: start.cell(), to: goal_cell })
}

/// Number of distinct cells entered along a pose path (forward moves).
pub fn cell_length(path: &[Pose]) -> usize {
    path.windows(2).filter(|w| w[0].cell() != w[1].cell()).count()
}

/// An obstacle that becomes known once `step` moves have been executed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ObstacleEvent {
    pub step: usize,
    pub cell: Cell,
}

/// Follow the A* plan and replan from the current pose whenever a newly
/// revealed obstacle sits on the remaining route.
pub fn navigate_with_replanning(
    world: &WorldMap,
    start: &Pose,
    goal: &Pose,
    events: &[ObstacleEvent],
) -> Result<Vec<Pose>, WorldError> {
    let mut blocked = HashSet::new();
    let mut executed = vec![*start];
    let mut plan = plan_path(world, start, goal, None)?;
    let mut cursor = 0;
    loop {
        let step = executed.len() - 1;
        let mut revealed = false;
        for ev in events.iter().filter(|e| e.step == step) {
            if ev.cell == goal.cell() {
                return Err(WorldError::NoPath { from: executed[step].cell(), to: goal.cell() });
            }
            revealed |= blocked.insert(ev.cell);
        }
        if revealed && plan[cursor..].iter().any(|p| blocked.contains(&p.cell())) {
            plan = plan_path(world, &executed[step], goal, Some(&blocked))?;
            cursor = 0;
        }
        if cursor + 1 >= plan.len() {
            return Ok(executed);
        }
        cursor += 1;
        executed.push(plan[cursor]);
    }
}

#[cfg(test)]
mod tests {
    use std::collections::VecDeque;

    use super::*;
    use crate::gridworld::pose::Heading;
    use crate::gridworld::world::{build_world, WorldSpec};

    fn bfs_cells(world: &WorldMap, from: Cell, to: Cell, blocked: &HashSet<Cell>) -> Option<usize> {
        let mut dist = vec![usize::MAX; world.width * world.height];
        dist[from.y * world.width + from.x] = 0;
        let mut q = VecDeque::from([from]);
        while let Some(c) = q.pop_front() {
            if c == to {
                return Some(dist[c.y * world.width + c.x]);
            }
            for n in world.neighbors(c) {
                let i = n.y * world.width + n.x;
                if dist[i] == usize::MAX && !blocked.contains(&n) {
                    dist[i] = dist[c.y * world.width + c.x] + 1;
                    q.push_back(n);
                }
            }
        }
        None
    }

    fn assert_legal(world: &WorldMap, path: &[Pose]) {
        for w in path.windows(2) {
            assert!(w[0].move_to(&w[1]).is_some(), "{:?} -> {:?}", w[0], w[1]);
            assert!(world.is_free(w[1].cell()));
        }
    }

    #[test]
    fn straight_line_when_facing_goal() {
        let world = build_world(&WorldSpec::new(12, 8, 1, 0, 0)).unwrap();
        let path = plan_path(&world, &Pose::new(1, 3, Heading::E), &Pose::new(9, 3, Heading::E), None).unwrap();
        assert_eq!(path.len(), 9);
        assert!(path.windows(2).all(|w| w[0].move_to(&w[1]) == Some(Move::Forward)));
        assert_eq!(cell_length(&path), 8);
    }

    #[test]
    fn detour_matches_bfs() {
        let world = WorldMap::from_ascii(
            &["#########", "#aaaaaaa#", "#aaa#aaa#", "#aaa#aaa#", "#aaa#aaa#", "#########"],
            0,
        )
        .unwrap();
        let start = Pose::new(3, 3, Heading::E);
        let goal = Pose::new(5, 3, Heading::E);
        let path = plan_path(&world, &start, &goal, None).unwrap();
        assert_legal(&world, &path);
        assert_eq!(cell_length(&path), bfs_cells(&world, start.cell(), goal.cell(), &HashSet::new()).unwrap());
        assert_eq!(cell_length(&path), 6);
    }

    #[test]
    fn enclosed_goal_has_no_path() {
        let world = WorldMap::from_ascii(&["#######", "#aa#aa#", "#aa#aa#", "#aa#aa#", "#######"], 0).unwrap();
        let err = plan_path(&world, &Pose::new(1, 1, Heading::E), &Pose::new(5, 2, Heading::N), None).unwrap_err();
        assert!(matches!(err, WorldError::NoPath { .. }));
    }

    #[test]
    fn blocked_goal_is_rejected() {
        let world = build_world(&WorldSpec::new(8, 8, 1, 0, 1)).unwrap();
        let blocked = HashSet::from([Cell::new(4, 4)]);
        assert!(plan_path(&world, &Pose::new(1, 1, Heading::E), &Pose::new(4, 4, Heading::E), Some(&blocked)).is_err());
    }

    #[test]
    fn optimal_on_random_worlds() {
        for seed in 0..30u64 {
            let world = build_world(&WorldSpec::new(16, 16, 1 + seed as usize % 4, 0, seed)).unwrap();
            let free = world.free_cells();
            let a = free[(seed as usize * 7) % free.len()];
            let b = free[(seed as usize * 31 + 5) % free.len()];
            let path = plan_path(&world, &Pose::new(a.x, a.y, Heading::N), &Pose::new(b.x, b.y, Heading::N), None).unwrap();
            assert_legal(&world, &path);
            assert_eq!(path.last().unwrap().cell(), b);
            assert_eq!(cell_length(&path), bfs_cells(&world, a, b, &HashSet::new()).unwrap());
        }
    }

    #[test]
    fn replanning_avoids_revealed_obstacle() {
        let world = build_world(&WorldSpec::new(10, 10, 1, 0, 0)).unwrap();
        let start = Pose::new(1, 4, Heading::E);
        let goal = Pose::new(8, 4, Heading::E);
        let events = [ObstacleEvent { step: 2, cell: Cell::new(5, 4) }];
        let path = navigate_with_replanning(&world, &start, &goal, &events).unwrap();
        assert_legal(&world, &path);
        assert_eq!(path.last().unwrap().cell(), goal.cell());
        assert!(path.iter().all(|p| p.cell() != Cell::new(5, 4)));
        assert!(cell_length(&path) > 7);
        // An obstacle off the route changes nothing.
        let calm = navigate_with_replanning(&world, &start, &goal, &[ObstacleEvent { step: 1, cell: Cell::new(2, 8) }]).unwrap();
        assert_eq!(calm, plan_path(&world, &start, &goal, None).unwrap());
    }
}
