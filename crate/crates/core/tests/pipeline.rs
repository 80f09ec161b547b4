use bgprofile::profiles::{
    adapt, background_profile_from_audio, classify, classify_multilabel, compute_profiles, AdaptationConfig,
    BackgroundSource, MultiLabelConfig,
};
use bgprofile::prototypes::{build_prototypes, load_prototypes, save_prototypes, PrototypeMode, TgapConfig};
use bgprofile::store::{load_store, save_store};
use bgprofile::{Embedding, EmbeddingSet};

fn text(id: &str, label: &str, v: Vec<f64>) -> Embedding<f64> {
    Embedding::text(id, Some(label.to_string()), v).unwrap()
}

fn audio(id: &str, v: Vec<f64>) -> Embedding<f64> {
    Embedding::audio(id, None, v).unwrap()
}

#[test]
fn stores_to_adapted_prediction() {
    let dir = tempfile::tempdir().unwrap();
    let prompts = EmbeddingSet::from_records(vec![
        text("p_dog", "dog", vec![1.0, 0.0, 0.0]),
        text("p_cat", "cat", vec![0.0, 1.0, 0.0]),
        text("p_rain", "rain", vec![0.0, 0.0, 1.0]),
    ])
    .unwrap();
    let test = EmbeddingSet::from_records(vec![audio("x0", vec![0.6, 0.0, 0.8]), audio("x1", vec![0.1, 0.9, 0.3])]).unwrap();
    let rain = EmbeddingSet::from_records(vec![audio("b0", vec![0.0, 0.1, 1.0]), audio("b1", vec![0.1, 0.0, 1.0])]).unwrap();

    for (name, set) in [("prompts", &prompts), ("test", &test), ("rain", &rain)] {
        save_store(set, dir.path().join(format!("{name}.atpe"))).unwrap();
    }
    let prompts: EmbeddingSet<f32> = load_store(dir.path().join("prompts.atpe")).unwrap();
    let test: EmbeddingSet<f32> = load_store(dir.path().join("test.atpe")).unwrap();
    let rain: EmbeddingSet<f32> = load_store(dir.path().join("rain.atpe")).unwrap();

    let protos = build_prototypes(PrototypeMode::TextAnchor, &prompts, None, None, &TgapConfig::default()).unwrap();
    let written = save_prototypes(&protos, dir.path().join("protos.atpe")).unwrap();
    assert_eq!(written.len(), 2);
    let protos = load_prototypes::<f32>(dir.path().join("protos.atpe")).unwrap();
    assert_eq!(protos.class_ids(), vec!["cat", "dog", "rain"]);

    let profiles = compute_profiles(test.records(), &protos).unwrap();
    assert_eq!(classify(&profiles[0]).unwrap(), "rain");
    assert_eq!(classify(&profiles[1]).unwrap(), "cat");

    let bg = background_profile_from_audio(rain.iter(), &protos).unwrap();
    let cfg = AdaptationConfig::with_default_tau(BackgroundSource::Audio);
    assert_eq!(cfg.tau, 0.7);
    let adapted: Vec<_> = profiles.iter().map(|p| adapt(p, &bg, &cfg).unwrap()).collect();
    assert_eq!(classify(&adapted[0]).unwrap(), "dog");
    assert_eq!(classify(&adapted[1]).unwrap(), "cat");

    let ml = MultiLabelConfig::new(0.5).unwrap();
    assert_eq!(classify_multilabel(&profiles[0], &ml).unwrap(), vec!["dog", "rain"]);
}

#[test]
fn tgap_and_supervised_from_stores() {
    let prompts = EmbeddingSet::from_records(vec![
        text("p_a", "a", vec![1.0, 0.2, 0.0]),
        text("p_b", "b", vec![0.2, 1.0, 0.0]),
    ])
    .unwrap();
    let labeled = EmbeddingSet::from_records(
        (0..6)
            .map(|i| {
                let (label, v) = if i % 2 == 0 { ("a", vec![1.0, 0.0, 0.5]) } else { ("b", vec![0.0, 1.0, 0.5]) };
                Embedding::audio(format!("s{i}"), Some(label.to_string()), v).unwrap()
            })
            .collect(),
    )
    .unwrap();
    let pool = labeled.filter(|_| true);
    let tgap = build_prototypes(PrototypeMode::Tgap, &prompts, Some(&pool), None, &TgapConfig { n_neighbors: 3 }).unwrap();
    let sup = build_prototypes(PrototypeMode::Supervised, &prompts, None, Some(&labeled), &TgapConfig::default()).unwrap();
    for (t, s) in tgap.iter().zip(sup.iter()) {
        assert_eq!(t.class_id, s.class_id);
        for (x, y) in t.vector().iter().zip(s.vector()) {
            assert!((x - y).abs() < 1e-12);
        }
    }
    assert!(build_prototypes(PrototypeMode::Tgap, &prompts, None, None, &TgapConfig::default()).is_err());
}
