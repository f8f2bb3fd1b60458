use gutcheck_cli::{make_extractor, parse_sample_file_name, run_from, sample_file_name};
use gutcheck_core::gan::Backend;
use gutcheck_core::LabelClass;

#[test]
fn sample_names_round_trip() {
    for backend in [Backend::Dcgan, Backend::Cgan, Backend::Stylegan2Diffaug] {
        for class in LabelClass::ALL {
            let name = sample_file_name(backend, class.as_str(), 17, 3);
            let (b, c, seed, i) = parse_sample_file_name(&name).unwrap();
            assert_eq!((b.as_str(), c, seed, i), (backend.as_str(), class, 17, 3), "{name}");
        }
    }
    assert!(parse_sample_file_name("dcgan_any_1_2.png").is_none());
    assert!(parse_sample_file_name("normal_1_2.png").is_none());
    assert!(parse_sample_file_name("cgan_normal_x_2.png").is_none());
}

#[test]
fn extractor_specs() {
    assert_eq!(make_extractor("toy").unwrap().output_dim(), 64);
    assert_eq!(make_extractor("pixels:4").unwrap().output_dim(), 16);
    assert!(make_extractor("inception").is_err());
    assert!(make_extractor("vgg").is_err());
}

#[test]
fn synth_split_and_bad_arguments() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let d = data.to_str().unwrap();
    run_from(["gutcheck", "synth", "--out", d, "--per-class", "6", "--seed", "1"]).unwrap();
    assert_eq!(std::fs::read_dir(data.join("no_stool")).unwrap().count(), 6);

    let split = dir.path().join("split.json");
    let s = split.to_str().unwrap();
    run_from(["gutcheck", "split", "--data", d, "--test", "abnormal=2,normal=2,no_stool=2", "--k", "2", "--out", s]).unwrap();
    let plan: gutcheck_core::SplitPlan = serde_json::from_slice(&std::fs::read(&split).unwrap()).unwrap();
    assert_eq!(plan.test_ids.len(), 6);
    assert_eq!(plan.non_test_len(), 12);

    let err = run_from(["gutcheck", "split", "--data", d, "--test", "abnormal", "--out", s]).unwrap_err();
    assert!(err.to_string().contains("class=value"), "{err}");
    assert!(run_from(["gutcheck", "split", "--data", d, "--test", "polyp=2", "--out", s]).is_err());
    assert!(run_from(["gutcheck", "split", "--data", d, "--test", "abnormal=7", "--out", s]).is_err());
    assert!(run_from(["gutcheck", "train-gan", "--data", d, "--backend", "dcgan", "--out", s]).is_err());
    assert!(run_from(["gutcheck", "bogus"]).is_err());
}
