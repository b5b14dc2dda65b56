use rand::seq::SliceRandom;

use sdegan::gan::{stream_rng, streams, train, TrainConfig};
use sdegan::preprocess::build_training_set;
use sdegan::{GanVariant, PairingMode, SdeModel, TransformKind};

#[test]
fn supervised_discriminator_prefers_paired_noise() {
    let m = SdeModel::default_gbm();
    let mut rng = stream_rng(4, streams::TRAINING_SET);
    let dts = [0.25, 0.5, 1.0];
    let set = build_training_set(&m, TransformKind::LogReturn, &dts, &[], 6000, PairingMode::InverseCdf, &mut rng).unwrap();
    let cfg = TrainConfig {
        batch_size: 200,
        epochs: 20,
        hidden_layers: 2,
        hidden_width: 32,
        eval_every: 100,
        eval_samples: 2000,
        checkpoint_every_epochs: 0,
        seed: 4,
        ..TrainConfig::default()
    };
    let out = train(GanVariant::Supervised, &set, &cfg).unwrap();
    assert!(out.log.iter().all(|r| r.d_loss.is_finite() && r.g_loss.is_finite()));
    let d = out.discriminator();

    let n = 3000;
    let r = &set.r[..n];
    let z = &set.z[..n];
    let mut shuffled = z.to_vec();
    shuffled.shuffle(&mut rng);
    let mut paired = 0.0;
    let mut mispaired = 0.0;
    for &dt in &dts {
        let idx: Vec<usize> = (0..n).filter(|&i| set.dt[i] == dt).collect();
        let pick = |v: &[f64]| idx.iter().map(|&i| v[i]).collect::<Vec<_>>();
        let st = vec![1.0; idx.len()];
        paired += d.evaluate(&pick(r), &pick(z), &st, dt).unwrap().iter().sum::<f64>();
        mispaired += d.evaluate(&pick(r), &pick(&shuffled), &st, dt).unwrap().iter().sum::<f64>();
    }
    assert!(paired > mispaired, "paired {} vs mispaired {}", paired / n as f64, mispaired / n as f64);
}
