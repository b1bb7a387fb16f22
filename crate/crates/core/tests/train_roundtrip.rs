use spikeforce::checkpoint;
use spikeforce::network::NetworkParams;
use spikeforce::trainer::final_evaluation;
use spikeforce::{train, Coding, Procedure, SignalKind, SignalSpec, TrainConfig};

fn small(procedure: Procedure, neurons: usize) -> TrainConfig {
    let mut cfg = TrainConfig::for_procedure(procedure);
    cfg.signal = SignalSpec::new(SignalKind::Sine);
    cfg.signal.duration = 1.0;
    cfg.network.neurons = neurons;
    cfg.epochs = 3;
    cfg.seed = 11;
    cfg
}

#[test]
fn same_seed_same_run() {
    let cfg = small(Procedure::FullForceRate, 80);
    let a = train(&cfg).unwrap();
    let b = train(&cfg).unwrap();
    assert_eq!(a.report.final_mse.to_bits(), b.report.final_mse.to_bits());
    assert_eq!(a.report.epoch_spikes, b.report.epoch_spikes);
    assert_eq!(checkpoint::to_bytes(&a.model), checkpoint::to_bytes(&b.model));
}

#[test]
fn saved_model_scores_like_the_trained_one() {
    let cfg = small(Procedure::ForceRate, 60);
    let trained = train(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    checkpoint::save(&trained.model, &path).unwrap();
    let loaded = checkpoint::load(&path).unwrap();
    let eval = final_evaluation(&cfg, &loaded).unwrap();
    assert_eq!(eval.mse.to_bits(), trained.report.final_mse.to_bits());
}

#[test]
fn ttfs_run_keeps_one_spike_per_window() {
    let mut cfg = small(Procedure::FullForceTtfs, 60);
    cfg.network = NetworkParams { neurons: 60, ..NetworkParams::for_coding(Coding::Ttfs) };
    let trained = train(&cfg).unwrap();
    assert_eq!(trained.report.window_violations, 0);
    let windows = (cfg.signal.duration / cfg.network.ttfs.window).round() as u64;
    for &s in &trained.report.epoch_spikes {
        assert!(s <= (windows + 1) * 60, "{s} spikes");
    }
    assert!(trained.report.final_mse.is_finite());
}
