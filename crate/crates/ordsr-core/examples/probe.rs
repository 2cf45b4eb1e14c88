// temporary probe: steps to beat bicubic
use ordsr_core::nn::Variant;
use ordsr_core::trainer::*;
use ordsr_core::*;
use std::time::Instant;

fn eval_gain(net: &nn::Network, seeds: &[u64]) -> f64 {
    let mut gain = 0.0;
    for &s in seeds {
        let hr = ordsr_core::synth::scene(66, 66, s);
        let hr = trainer::crop_to_multiple(&hr, 3);
        let lr = trainer::degrade(&hr, 3).unwrap();
        let out = net.infer(&lr).unwrap();
        gain += psnr(&out, &hr, 3).unwrap() - psnr(&lr, &hr, 3).unwrap();
    }
    gain / seeds.len() as f64
}

fn main() {
    let data = ordsr_core::synth::dataset(8, 56, 56, 500);
    let held: Vec<u64> = vec![900, 901, 902, 903];
    for (lr0, epochs) in [(1e-3, 25usize), (1e-3, 50)] {
        let cfg = TrainConfig {
            variant: Variant::Ordsr,
            depth: 5,
            filters: 16,
            epochs_per_phase: epochs,
            lr_decay_every: epochs / 2,
            batch: 16,
            patch: 40,
            overlap: 10,
            augment: false,
            lr0,
            seed: 7,
            ..TrainConfig::default()
        };
        let t0 = Instant::now();
        let out = train(&cfg, &data, None).unwrap();
        let n = out.history.len();
        let last: f64 = out.history[n - 4..].iter().map(|r| r.loss.mse).sum::<f64>() / 4.0;
        println!(
            "lr0={lr0:.0e} epochs={epochs}: {} steps in {:?}; final mse {last:.3}; held-out gain {:+.3} dB",
            n, t0.elapsed(), eval_gain(&out.net, &held)
        );
    }
}
