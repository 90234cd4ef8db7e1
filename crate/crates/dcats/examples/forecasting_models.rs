//! Pretrain each model kind on all locations and compare validation error.
//!
//! Run with: `cargo run --example forecasting_models`

use dcats::forecast::{evaluate, init_model, train, ModelConfig, ModelKind, TrainConfig};
use dcats::tsdata::{fit_scaler, generate_synthetic, make_windows, split, SyntheticSpec};

fn main() -> dcats::Result<()> {
    let data = generate_synthetic(&SyntheticSpec {
        n_clusters: 2,
        series_per_cluster: 5,
        n_steps: 2400,
        noise_sigma: 20.0,
        seed: 5,
    })?;
    let sv = split(&data.store, (6, 2, 2))?;
    let scaler = fit_scaler(&data.store, &sv.train)?;
    let ids = data.store.location_ids().to_vec();
    let train_ws = make_windows(&data.store, &sv.train, &ids, 96, 12, 4)?;
    let val_ws = make_windows(&data.store, &sv.val, &ids, 96, 12, 4)?;

    for kind in ModelKind::ALL {
        let cfg = ModelConfig {
            kind,
            input_len: 96,
            horizon: 12,
            hidden: 32,
            period: 12,
            seed: 1,
        };
        let mut model = init_model(&cfg)?;
        let tc = TrainConfig {
            epochs: 15,
            ..TrainConfig::pretrain()
        };
        let t0 = std::time::Instant::now();
        let report = train(&mut model, &data.store, &scaler, &train_ws, Some(&val_ws), &tc)?;
        let metrics = evaluate(&model, &data.store, &scaler, &val_ws)?;
        println!(
            "{:<10} {:>6} params  val MAE {:>8.4}  RMSE {:>8.4}  MAPE {:>6.2}%  ({} epochs, {:.1}s)",
            kind.as_str(),
            cfg.param_count(),
            metrics.mae,
            metrics.rmse,
            metrics.mape_percent,
            report.epoch_losses.len(),
            t0.elapsed().as_secs_f64()
        );
    }
    Ok(())
}
