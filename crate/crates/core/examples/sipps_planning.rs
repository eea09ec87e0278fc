// Plan one agent around another with soft collisions.

use difflns::grid::{Cell, GridMap};
use difflns::single_agent::{sipps, SafeIntervalTable};

pub fn run_example() -> difflns::Result<()> {
    let map = GridMap::parse("3 5\n.....\n.@@@.\n.....\n")?;
    let start = Cell::new(0, 0);
    let goal = Cell::new(0, 4);

    let free = SafeIntervalTable::new(&map);
    let alone = sipps(&map, start, goal, &free, None)?;
    println!("alone: {} steps, {} collisions", alone.path.len() - 1, alone.soft_collisions);

    // another agent parks in the middle of the top row
    let parked = vec![Cell::new(0, 2)];
    let table = SafeIntervalTable::from_paths(&map, [(0, parked.as_slice())]);
    let detour = sipps(&map, start, goal, &table, None)?;
    println!("with blocker: {} steps, {} collisions", detour.path.len() - 1, detour.soft_collisions);
    assert_eq!(detour.soft_collisions, 0);
    assert!(detour.path.len() > alone.path.len());
    Ok(())
}

#[allow(dead_code)]
fn main() -> difflns::Result<()> {
    run_example()
}
