//! Train a reduction of `q3`, report its errors and global indices.
//!
//! `cargo run --release --example quickstart -- [epochs]`

use neuram::models;
use neuram::neuram::{reduction_errors, train_neuram, Architecture, SearchConfig, TrainConfig};
use neuram::nn::FitConfig;
use neuram::sensitivity::{global_indices, sobol_first_order, ArcLength};

fn main() -> neuram::Result<()> {
    let epochs = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(2000);
    let model = models::model("q3")?;
    let cfg = TrainConfig {
        seed: 0,
        fit: FitConfig { epochs, ..FitConfig::default() },
        architecture: Architecture::uniform(2, 10),
        search: SearchConfig::disabled(),
    };
    let artifact = train_neuram(&model, 1000, &cfg)?;
    let errors = reduction_errors(&artifact, &model, &model.sample(1000, 1)?)?;
    println!("latent interval [{:.4}, {:.4}]", artifact.latent_interval.lo, artifact.latent_interval.hi);
    println!("MSE e1 {:.3e}, MSE e2 {:.3e}", errors.mse_e1, errors.mse_e2);

    let theta = global_indices(&artifact, 1000, ArcLength::Chord)?.global;
    let sobol = sobol_first_order(models::q3, &model.dist, 1 << 14, 2)?;
    for (i, name) in model.input_names.iter().enumerate() {
        println!("{name}: manifold index {:.3}, Sobol' index {:.3}", theta[i], sobol.clipped[i]);
    }
    Ok(())
}
