use spacnet_model::checkpoint::{read_model, save_model, load_model, write_model};
use spacnet_model::train::mean_missing_cd;
use spacnet_model::{overfit_dataset, train, Error, ModelConfig, SpacNet, TrainConfig};

fn quick(epochs: usize) -> TrainConfig {
    TrainConfig { epochs, optimizer: spacnet_tensor::AdamW { lr: 2e-3, ..Default::default() }, ..Default::default() }
}

#[test]
fn learning_rate_decays_geometrically() {
    let cfg = TrainConfig::default();
    assert_eq!(cfg.lr_at(0), 5e-4);
    for e in [1usize, 10, 299] {
        let expected = 5e-4 * 0.9995f64.powi(e as i32);
        assert!((cfg.lr_at(e) - expected).abs() <= 1e-12 * expected);
    }
    let model = ModelConfig::toy();
    let data = overfit_dataset(&model, 1, 1, 0).unwrap();
    let (net, mut store) = SpacNet::init(&model).unwrap();
    let report = train(&net, &mut store, &data, &TrainConfig { epochs: 3, ..cfg.clone() }, |_, _| Ok(())).unwrap();
    let lrs: Vec<f64> = report.epochs.iter().map(|s| s.lr).collect();
    assert_eq!(lrs, vec![cfg.lr_at(0), cfg.lr_at(1), cfg.lr_at(2)]);
}

#[test]
fn overfit_losses_fall_window_by_window() {
    let model = ModelConfig::toy();
    let data = overfit_dataset(&model, 4, 1, 1).unwrap();
    assert_eq!(data.len(), 4);
    let (net, mut store) = SpacNet::init(&model).unwrap();
    let report = train(&net, &mut store, &data, &quick(80), |_, _| Ok(())).unwrap();
    let means: Vec<f64> = report.epochs.chunks(20).map(|w| w.iter().map(|s| s.loss).sum::<f64>() / 20.0).collect();
    for w in means.windows(2) {
        assert!(w[1] <= w[0], "{means:?}");
    }
    assert!(report.last().unwrap().cd_missing < report.first().unwrap().cd_missing);
}

#[test]
fn fold_moves_points_off_their_centres() {
    let model = ModelConfig::toy();
    let data = overfit_dataset(&model, 1, 1, 2).unwrap();
    let (net, mut store) = SpacNet::init(&model).unwrap();
    train(&net, &mut store, &data, &quick(20), |_, _| Ok(())).unwrap();
    let out = net.forward(&store, &data[0].partial, &data[0].interface).unwrap();
    let centres = out.refined_stages.last().unwrap();
    let r = model.upsample_factor;
    let offsets: Vec<f64> = out
        .missing_pred
        .iter()
        .enumerate()
        .map(|(i, p)| (*p - centres[i / r]).norm())
        .collect();
    let mean = offsets.iter().sum::<f64>() / offsets.len() as f64;
    let var = offsets.iter().map(|o| (o - mean).powi(2)).sum::<f64>() / offsets.len() as f64;
    assert!(var > 0.0);
}

#[test]
fn same_seed_gives_identical_checkpoints() {
    let model = ModelConfig::toy();
    let data = overfit_dataset(&model, 2, 2, 3).unwrap();
    let run = || {
        let (net, mut store) = SpacNet::init(&model).unwrap();
        let report = train(&net, &mut store, &data, &quick(5), |_, _| Ok(())).unwrap();
        let mut bytes = Vec::new();
        write_model(&mut bytes, &model, &store).unwrap();
        (report, bytes)
    };
    let (ra, a) = run();
    let (rb, b) = run();
    assert_eq!(ra, rb);
    assert_eq!(a, b);
}

#[test]
fn checkpoint_round_trip_preserves_predictions() {
    let model = ModelConfig::toy();
    let data = overfit_dataset(&model, 1, 2, 4).unwrap();
    let (net, mut store) = SpacNet::init(&model).unwrap();
    train(&net, &mut store, &data, &quick(3), |_, _| Ok(())).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("toy.ckpt");
    save_model(&path, &model, &store).unwrap();
    let (net2, store2) = load_model(&path).unwrap();
    assert_eq!(net2.config, model);
    let before = mean_missing_cd(&net, &store, &data).unwrap();
    let after = mean_missing_cd(&net2, &store2, &data).unwrap();
    assert_eq!(before, after);

    let mut bytes = std::fs::read(&path).unwrap();
    let n = bytes.len();
    bytes.truncate(n - 2);
    assert!(read_model(&mut bytes.as_slice()).is_err());
}

#[test]
fn non_finite_parameters_abort_with_sample_id() {
    let model = ModelConfig::toy();
    let data = overfit_dataset(&model, 1, 1, 5).unwrap();
    let (net, mut store) = SpacNet::init(&model).unwrap();
    store.get_mut("fold2.2.bias").unwrap().data_mut()[0] = f32::NAN;
    let err = train(&net, &mut store, &data, &quick(2), |_, _| Ok(())).unwrap_err();
    match err {
        Error::NonFiniteLoss { sample_id, epoch } => {
            assert_eq!(sample_id, data[0].id);
            assert_eq!(epoch, 1);
        }
        other => panic!("unexpected error {other}"),
    }
}

#[test]
fn overfit_dataset_sizes_match_config() {
    let model = ModelConfig::desk();
    let data = overfit_dataset(&model, 4, 2, 6).unwrap();
    assert_eq!(data.len(), 8);
    for s in &data {
        assert_eq!(s.partial.len(), model.n_input);
        assert_eq!(s.interface.len(), model.n_t);
        assert_eq!(s.gt_missing.len(), model.missing_count());
        assert_eq!(s.target_coarse.len(), model.n_t);
    }
}
