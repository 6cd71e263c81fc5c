//! Overfit sanity: the full-size network must drive its reconstruction
//! error on a fixed four-segment fixture to near zero within 200 epochs.

use std::time::Instant;

use skna_denoiser::{build_model, toy_training_fixture, train, TrainConfig};
use skna_nn::{mse_loss, Mode, Tensor3};

#[test]
fn four_segment_toy_reaches_tiny_mse_in_200_epochs() {
    let start = Instant::now();
    let (noisy, clean) = toy_training_fixture(2048);
    let mut model = build_model(0xAE01);
    let cfg = TrainConfig {
        epochs: 200,
        batch_size: 2,
        lr: 1e-3,
        seed: 0xAE02,
    };
    let report = train(&mut model, &noisy, &clean, &cfg).unwrap();

    // Final fit measured without dropout, on the whole fixture at once.
    let w = noisy.window_len;
    let mut x = Tensor3::zeros(noisy.len(), 1, w);
    let mut t = Tensor3::zeros(noisy.len(), 1, w);
    for i in 0..noisy.len() {
        x.data[i * w..(i + 1) * w].copy_from_slice(noisy.segment(i));
        t.data[i * w..(i + 1) * w].copy_from_slice(clean.segment(i));
    }
    let y = model.forward(&x, Mode::Eval).unwrap();
    let (mse, _) = mse_loss(&y, &t).unwrap();
    let elapsed = start.elapsed();
    println!(
        "toy overfit: train loss {:.5} -> {:.5}, eval MSE {:.5}, wall {:.1}s",
        report.epoch_losses[0],
        report.final_loss(),
        mse,
        elapsed.as_secs_f64()
    );
    assert!(
        mse <= 0.01,
        "eval MSE {mse:.5} after 200 epochs exceeds 0.01"
    );
    assert!(
        report.final_loss() <= report.epoch_losses[0],
        "training loss failed to decrease"
    );
    assert!(
        elapsed.as_secs() < 120,
        "toy overfit took {elapsed:?}, budget is two minutes"
    );
}
