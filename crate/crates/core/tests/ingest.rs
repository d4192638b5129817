mod common;

use std::path::Path;

use common::*;
use crowdmix::ingest::{
    format_annotations, load_label_matrix_csv, load_mulan_arff, parse_mulan_arff, read_annotations,
    read_profiles, write_annotations, write_label_matrix_csv, write_profiles, AnnotationDims,
};
use crowdmix::sim::{sample_annotator_pool, Ratio, SimConfig};
use crowdmix::{Annotation, AnnotationSet, Error};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Exactly `count` distinct (annotator, instance) pairs with random labels.
fn random_records(
    rng: &mut ChaCha8Rng,
    count: usize,
    n: usize,
    c: usize,
    l: usize,
) -> AnnotationSet {
    let cells = rand::seq::index::sample(rng, n * l, count);
    let records = cells
        .iter()
        .map(|cell| Annotation {
            annotator: cell / n,
            instance: cell % n,
            labels: (0..c).map(|_| rng.gen_range(0..2u8)).collect(),
        })
        .collect();
    AnnotationSet::new(n, c, l, records).unwrap()
}

#[test]
fn thousand_record_file_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let y = random_records(&mut rng, 1000, 200, 7, 40);
    let path = dir.path().join("annotations.csv");
    write_annotations(&y, &path).unwrap();
    let dims = AnnotationDims {
        instances: Some(200),
        labels: Some(7),
        annotators: Some(40),
    };
    let back = read_annotations(&path, dims).unwrap();
    assert_eq!(back, y);
    assert_eq!(
        std::fs::read_to_string(&path).unwrap(),
        format_annotations(&back)
    );
}

#[test]
fn inferred_sizes_cover_every_id() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.csv");
    std::fs::write(&path, "annotator,instance,labels\n4,9,011\n0,2,100\n").unwrap();
    let y = read_annotations(&path, AnnotationDims::default()).unwrap();
    assert_eq!(
        (y.num_annotators(), y.num_instances(), y.num_labels()),
        (5, 10, 3)
    );
}

#[test]
fn label_csv_and_profiles_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let z = random_label_matrix(&mut rng, 50, 6);
    let names = label_names(6);
    let path = dir.path().join("labels.csv");
    write_label_matrix_csv(&path, &names, &z).unwrap();
    let (desc, back) = load_label_matrix_csv(&path).unwrap();
    assert_eq!(back, z);
    assert_eq!(desc.label_names, names);
    assert_eq!(desc.name, "labels");

    let cfg = SimConfig {
        ratio: Ratio([2, 3, 1]),
        per_annotator: 5,
        num_annotators: 12,
        seed: 22,
    };
    let profiles = sample_annotator_pool(&cfg, 6);
    let path = dir.path().join("profiles.csv");
    write_profiles(&profiles, &path).unwrap();
    assert_eq!(read_profiles(&path).unwrap(), profiles);
}

#[test]
fn arff_file_with_mixed_label_types() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("scene.arff");
    let text = "\
@relation scene
@attribute f0 numeric
@attribute 'Beach' {0,1}
@attribute Sunset numeric
@attribute tag string
@data
0.5,1,0,'a b'
{1 1,2 1}
";
    std::fs::write(&path, text).unwrap();
    let names = vec!["Beach".to_string(), "Sunset".to_string()];
    let (desc, z) = load_mulan_arff(&path, &names).unwrap();
    assert_eq!(desc.name, "scene");
    assert_eq!(z.to_rows(), vec![vec![1, 0], vec![1, 1]]);
}

#[test]
fn missing_files_report_the_path() {
    let err = read_annotations("/nonexistent/a.csv", AnnotationDims::default()).unwrap_err();
    assert!(matches!(err, Error::Io { .. }));
    assert!(err.to_string().contains("/nonexistent/a.csv"));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dense_and_sparse_arff_agree(seed in any::<u64>(), n in 0usize..30, c in 1usize..10, features in 0usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z = random_label_matrix(&mut rng, n, c);
        let (dense, sparse) = arff_pair(&mut rng, &z, features);
        let names = label_names(c);
        let (_, a) = parse_mulan_arff(&dense, Path::new("d.arff"), &names).unwrap();
        let (_, b) = parse_mulan_arff(&sparse, Path::new("s.arff"), &names).unwrap();
        prop_assert_eq!(&a, &z);
        prop_assert_eq!(&b, &z);
    }

    #[test]
    fn annotation_text_round_trips(seed in any::<u64>(), count in 0usize..300) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let y = random_records(&mut rng, count, 30, 4, 10);
        let dims = AnnotationDims { instances: Some(30), labels: Some(4), annotators: Some(10) };
        let back = crowdmix::ingest::parse_annotations(&format_annotations(&y), Path::new("p.csv"), dims).unwrap();
        prop_assert_eq!(back, y);
    }
}
