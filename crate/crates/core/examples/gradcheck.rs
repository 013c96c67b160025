//! Run the finite-difference gradient battery and print one row per check:
//! the tensor-wise relative error that decides pass/fail, then the worst
//! single component.

use rapnet::autodiff::suite::{run_suite, Scope, GRADCHECK_TOL};

fn main() -> rapnet::Result<()> {
    let rows = run_suite(Scope::All, &[0])?;
    for r in &rows {
        let verdict = if r.passed() { "ok" } else { "FAIL" };
        println!("{:<28} {:.3e} {:.1e} {verdict}", r.name, r.max_rel_error, r.max_component_error);
    }
    let worst = rows.iter().map(|r| r.max_rel_error).fold(0.0, f64::max);
    println!("worst {worst:.3e} (bound {GRADCHECK_TOL:e})");
    Ok(())
}
