//! Build a world, walk a planned route and save the egocentric frames.
//!
//! cargo run --example gridworld_tour -- [out_dir]

use std::path::PathBuf;

use govig::gridworld::{build_world, cell_length, generate_trajectory, plan_path, CellKind, Heading, Pose, TrajConfig, WorldSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "tour_frames".into()));
    let world = build_world(&WorldSpec::new(16, 16, 3, 4, 7))?;

    for y in 0..world.height {
        let row: String = (0..world.width)
            .map(|x| {
                let c = govig::gridworld::Cell::new(x, y);
                match world.kind(c) {
                    CellKind::Wall => '#',
                    _ if world.landmark_at(c).is_some() => '*',
                    _ => char::from(b'a' + world.room_label(c).unwrap_or(0)),
                }
            })
            .collect();
        println!("{row}");
    }

    let free = world.free_cells();
    let (a, b) = (free[0], free[free.len() - 1]);
    let start = Pose::new(a.x, a.y, Heading::E);
    let probe = Pose::new(b.x, b.y, Heading::N);
    let path = plan_path(&world, &start, &probe, None)?;
    println!("route from {:?} to {:?}: {} poses, {} cells", a, b, path.len(), cell_length(&path));

    let cfg = TrajConfig { max_len: usize::MAX, ..TrajConfig::default() };
    let traj = generate_trajectory(&world, &start, path.last().unwrap(), &cfg)?;
    println!("instruction: {}", traj.instruction);
    for seg in &traj.segments {
        println!("  frames {}..{} in the {}: {}", seg.start, seg.end, seg.room, seg.instruction);
    }
    std::fs::create_dir_all(&out)?;
    for (i, f) in traj.frames.iter().enumerate() {
        f.save_png(&out.join(format!("{i:03}.png")))?;
    }
    println!("wrote {} frames to {}", traj.len(), out.display());
    Ok(())
}
