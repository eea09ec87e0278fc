// Parse a map and a plan, then find vertex and swap conflicts.

use difflns::grid::{detect_conflicts, sum_of_costs, Cell, GridMap, Plan};

pub fn run_example() -> difflns::Result<()> {
    let map = GridMap::parse("3 4\n....\n.@..\n....\n")?;
    println!("map {}x{} with {} obstacle(s)", map.height(), map.width(), map.obstacle_count());

    // agents 0 and 1 trade cells between t = 0 and t = 1
    let plan = Plan::parse("0,0 0,1 0,2\n0,1 0,0 1,0\n2,0 2,1 2,2\n")?;
    let report = detect_conflicts(&plan);
    println!(
        "vertex conflicts {:?}\nswaps {:?}\ncolliding pairs {}",
        report.vertex_conflicts, report.edge_conflicts, report.colliding_pairs
    );
    assert_eq!(report.pairs(), vec![(0, 1)]);

    let goals = [Cell::new(0, 2), Cell::new(1, 0), Cell::new(2, 2)];
    println!("sum of costs {}", sum_of_costs(&plan, &goals)?);
    Ok(())
}

#[allow(dead_code)]
fn main() -> difflns::Result<()> {
    run_example()
}
