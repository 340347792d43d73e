//! Finite-difference check of every analytic gradient in the pipeline.
//!
//! Pass `full` to run at the full scale (slower).

use advsticker::gradcheck::{run, GradcheckOptions, Scale};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let scale: Scale = std::env::args().nth(1).as_deref().unwrap_or("reduced").parse()?;
    let results = run(&GradcheckOptions::new(scale))?;
    for r in &results {
        println!("{r}");
    }
    let failed = results.iter().filter(|r| !r.passed()).count();
    println!("{} components, {failed} failed", results.len());
    if failed > 0 {
        std::process::exit(1);
    }
    Ok(())
}
