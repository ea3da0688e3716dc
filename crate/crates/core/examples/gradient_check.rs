//! Backprop against central finite differences on random small networks.
use c2st::checks::gradient_check;

fn main() -> c2st::Result<()> {
    let report = gradient_check(10, 0)?;
    println!(
        "{} networks, {} parameters, max relative error {:.3e}",
        report.networks, report.parameters, report.max_relative_error
    );
    Ok(())
}
