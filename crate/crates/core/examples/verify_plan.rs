// Check plan files against a map and scenario, as the CLI verifier does.

use difflns::bench::verify_solution;

pub fn run_example() -> difflns::Result<()> {
    let map = "2 3\n...\n.@.\n";
    let scenario = "0 0 0 2\n0 2 1 2\n";

    let good = verify_solution(map, scenario, "0,0 0,1 0,2\n0,2 1,2\n")?;
    println!("good plan: {good}");
    assert!(good.is_ok());

    // agent 1 lingers on the cell agent 0 walks into
    let clash = verify_solution(map, scenario, "0,0 0,1 0,2\n0,2 0,2 0,2 1,2\n")?;
    println!("clashing plan: {clash}");
    assert!(!clash.is_ok());

    let through_wall = verify_solution(map, scenario, "0,0 1,1 0,2\n0,2 1,2\n")?;
    println!("plan through an obstacle: {through_wall}");
    assert!(!through_wall.is_ok());
    Ok(())
}

#[allow(dead_code)]
fn main() -> difflns::Result<()> {
    run_example()
}
