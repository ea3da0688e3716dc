//! Phase 1 alone: fit the autoencoder on unlabeled HDGM points and print the loss curve.
use c2st::hdgm::{sample_hdgm, HdgmSpec};
use c2st::pipeline::train_autoencoder;
use c2st::{Level, TrainConfig};

fn main() -> c2st::Result<()> {
    let x = sample_hdgm(&HdgmSpec::p(10, Level::Hard), 1000, 7)?;
    let cfg = TrainConfig {
        epochs_autoencoder: 30,
        ..TrainConfig::default()
    };
    let ae = train_autoencoder(&x, &cfg)?;
    for (epoch, loss) in ae.loss_trace.iter().enumerate().step_by(5) {
        println!("epoch {epoch:3}  mse {loss:.4}");
    }
    println!("final  mse {:.4}", ae.loss_trace.last().unwrap());
    Ok(())
}
