use std::collections::BTreeMap;

use mmsa_core::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
use mmsa_core::data::{
    assemble, disassemble, load_feature_file, load_labels, resample_to_t, synth_dataset,
    write_dataset_dir, FeatureSequence, Modality, SynthConfig,
};
use mmsa_core::layers::Module;
use mmsa_core::model::{ModelConfig, SmpModel};
use mmsa_core::rng::Rng;
use mmsa_core::tensor::Tensor;
use proptest::prelude::*;

fn small_synth(seed: u64) -> mmsa_core::data::Dataset {
    synth_dataset(&SynthConfig {
        seed,
        n_per_class: 5,
        ..Default::default()
    })
}

#[test]
fn dataset_directory_round_trips_exactly() {
    let data = small_synth(7);
    let dir = tempfile::tempdir().unwrap();
    let files = write_dataset_dir(dir.path(), &data).unwrap();
    assert_eq!(files.len(), 8);
    for (split, records) in [("train", &data.train), ("test", &data.test)] {
        let feats: Vec<_> = Modality::ALL
            .iter()
            .map(|&m| {
                load_feature_file(&dir.path().join(format!("{split}_{}.feat", m.letter()))).unwrap()
            })
            .collect();
        let labels = load_labels(&dir.path().join(format!("{split}.labels"))).unwrap();
        let back = assemble(&feats, &labels).unwrap();
        assert_eq!(&back, records);
        let (f, l) = disassemble(&back);
        assert_eq!(f, feats);
        assert_eq!(l, labels);
    }
}

#[test]
fn checkpoint_file_round_trips_exactly() {
    let cfg = ModelConfig {
        d_model: 16,
        heads: 4,
        seq_len: 8,
        ..Default::default()
    };
    let model = SmpModel::new(cfg.clone(), &mut Rng::new(1)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    save_checkpoint(&model, &path).unwrap();
    let mut other = SmpModel::new(cfg, &mut Rng::new(2)).unwrap();
    load_checkpoint(&path).unwrap().apply(&mut other).unwrap();
    let bits = |m: &SmpModel| -> Vec<u64> {
        m.params()
            .iter()
            .flat_map(|p| p.value.data().iter().map(|v| v.to_bits()))
            .collect()
    };
    assert_eq!(bits(&model), bits(&other));
    assert_eq!(
        Checkpoint::capture(&other).to_text(),
        std::fs::read_to_string(&path).unwrap()
    );
}

proptest! {
    #[test]
    fn resample_always_yields_32_and_is_idempotent(len in 1usize..100, dim in 1usize..5, seed in any::<u64>()) {
        let mut rng = Rng::new(seed);
        let seq = FeatureSequence::new(Modality::Audio, Tensor::rand_uniform(&mut rng, &[len, dim], -5.0, 5.0).unwrap());
        let once = resample_to_t(&seq).unwrap();
        prop_assert_eq!(once.len(), 32);
        prop_assert_eq!(once.dim(), dim);
        let twice = resample_to_t(&once).unwrap();
        prop_assert_eq!(&twice, &once);
    }

    #[test]
    fn feature_values_survive_text(values in prop::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 1..20)) {
        use mmsa_core::data::FeatureFile;
        let n = values.len();
        let seq = FeatureSequence::new(Modality::Text, Tensor::matrix(n, 1, values).unwrap());
        let file = FeatureFile { modality: Modality::Text, dim: 1, entries: vec![("x".into(), seq)] };
        let back = FeatureFile::parse(&file.to_text()).unwrap();
        prop_assert_eq!(back, file);
    }
}

#[test]
fn label_map_round_trips() {
    use mmsa_core::data::{labels_to_text, parse_labels, Label};
    let mut labels = BTreeMap::new();
    labels.insert(
        "a".to_string(),
        Label {
            score: -1.0 / 3.0,
            class: 2,
        },
    );
    labels.insert(
        "b".to_string(),
        Label {
            score: 1.8,
            class: 0,
        },
    );
    assert_eq!(parse_labels(&labels_to_text(&labels)).unwrap(), labels);
}
