//! A route that meets an obstacle halfway and is replanned around it.

use govig::gridworld::{build_world, cell_length, navigate_with_replanning, plan_path, Heading, ObstacleEvent, Pose, WorldSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let world = build_world(&WorldSpec::new(12, 12, 1, 0, 3))?;
    let start = Pose::new(1, 5, Heading::E);
    let goal = Pose::new(10, 5, Heading::E);
    let planned = plan_path(&world, &start, &goal, None)?;
    println!("planned: {} cells", cell_length(&planned));

    let blocker = planned[planned.len() / 2].cell();
    let events = [ObstacleEvent { step: 2, cell: blocker }];
    let walked = navigate_with_replanning(&world, &start, &goal, &events)?;
    println!("obstacle at {blocker:?} revealed after 2 moves");
    println!("walked: {} cells, never entering the obstacle: {}", cell_length(&walked), walked.iter().all(|p| p.cell() != blocker));
    for p in &walked {
        print!("({},{}){:?} ", p.x, p.y, p.heading);
    }
    println!();
    Ok(())
}
