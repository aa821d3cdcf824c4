use std::fs;

use glioma_core::features::FeatureVector;
use glioma_core::nn::{Network, NetworkSpec};
use glioma_core::phantom::{phantom_case, PhantomConfig};
use glioma_core::{Error, LabelMap, Modality, ResectionStatus, SubregionId, Volume};
use glioma_pipeline::artifacts;
use glioma_pipeline::dataset::{self, CaseLayout};
use glioma_pipeline::nifti_io;
use glioma_pipeline::tables::{self, FeatureTable, SurvivalColumns};
use glioma_pipeline::PipelineError;

fn small_case(id: &str) -> glioma_core::Case {
    let cfg = PhantomConfig {
        dims: [12, 10, 14],
        spacing: [1.0, 1.5, 2.0],
        ..PhantomConfig::default()
    };
    phantom_case(id, &cfg, 5)
}

#[test]
fn volumes_round_trip_with_spacing() {
    let dir = tempfile::tempdir().unwrap();
    let v = Volume::from_fn([5, 4, 3], |[i, j, k]| (i * 100 + j * 10 + k) as f32 * 0.5);
    let path = dir.path().join("v.nii.gz");
    nifti_io::write_volume(&path, &v, [0.9, 1.1, 2.5]).unwrap();
    let (back, spacing) = nifti_io::read_volume(&path).unwrap();
    assert_eq!(back, v);
    assert_eq!(spacing, [0.9f32 as f64, 1.1f32 as f64, 2.5]);
}

#[test]
fn label_maps_round_trip_bit_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let grid = Volume::from_fn([6, 5, 4], |[i, j, k]| [0u8, 1, 2, 4][(i + 2 * j + 3 * k) % 4]);
    let labels = LabelMap::new("c", grid, [1.0; 3]).unwrap();
    for name in ["l.nii", "l.nii.gz"] {
        let path = dir.path().join(name);
        nifti_io::write_label_map(&path, &labels).unwrap();
        let back = nifti_io::read_label_map(&path, "c").unwrap();
        assert_eq!(back, labels);
    }
}

#[test]
fn compressed_output_is_byte_stable() {
    let dir = tempfile::tempdir().unwrap();
    let v = Volume::from_fn([7, 7, 7], |[i, j, k]| (i ^ j ^ k) as f32);
    let a = dir.path().join("a.nii.gz");
    let b = dir.path().join("b.nii.gz");
    nifti_io::write_volume(&a, &v, [1.0; 3]).unwrap();
    nifti_io::write_volume(&b, &v, [1.0; 3]).unwrap();
    assert_eq!(fs::read(a).unwrap(), fs::read(b).unwrap());
}

#[test]
fn label_three_is_rejected_with_count() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.nii");
    let v = Volume::from_fn([4, 4, 4], |[i, _, _]| if i == 0 { 3.0f32 } else { 1.0 });
    nifti_io::write_volume(&path, &v, [1.0; 3]).unwrap();
    match nifti_io::read_label_map(&path, "c") {
        Err(PipelineError::Core(Error::InvalidLabel { value: 3, count: 16 })) => {}
        other => panic!("unexpected {other:?}"),
    }
    let zeros = dir.path().join("zeros.nii");
    nifti_io::write_volume(&zeros, &Volume::filled([3, 3, 3], 0.0), [1.0; 3]).unwrap();
    assert_eq!(nifti_io::read_label_map(&zeros, "c").unwrap().count(0), 27);
}

#[test]
fn case_directories_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let layout = CaseLayout::default();
    let case = small_case("case_a");
    let case_dir = dataset::save_case(dir.path(), &case, &layout).unwrap();
    let back = dataset::load_case(&case_dir, &layout).unwrap();
    assert_eq!(back.scan, case.scan);
    assert_eq!(back.labels, case.labels);
    assert_eq!(dataset::list_cases(dir.path()).unwrap(), vec![case_dir]);
}

#[test]
fn missing_modality_and_shape_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let layout = CaseLayout::default();
    let case = small_case("case_b");
    let case_dir = dataset::save_case(dir.path(), &case, &layout).unwrap();
    let flair = layout.modality_path(&case_dir, "case_b", Modality::Flair);
    fs::remove_file(&flair).unwrap();
    assert!(matches!(
        dataset::load_scan(&case_dir, &layout),
        Err(PipelineError::MissingModality { modality: Modality::Flair, .. })
    ));
    nifti_io::write_volume(&flair, &Volume::filled([12, 10, 13], 1.0), [1.0; 3]).unwrap();
    assert!(matches!(dataset::load_scan(&case_dir, &layout), Err(PipelineError::ShapeMismatch { .. })));
}

#[test]
fn unreadable_volume_is_an_io_or_format_error() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("junk.nii");
    fs::write(&p, b"not a volume").unwrap();
    assert!(matches!(
        nifti_io::read_volume(&p),
        Err(PipelineError::Io { .. } | PipelineError::Format { .. })
    ));
    assert!(matches!(nifti_io::read_volume(&dir.path().join("absent.nii")), Err(PipelineError::Io { .. })));
}

#[test]
fn survival_table_parsing() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("s.csv");
    fs::write(&p, "BraTS19ID,Age,Survival,ResectionStatus\ncase_001,62.3,410,GTR\ncase_002,50,,STR\ncase_003,70,99,\n").unwrap();
    let r = tables::load_survival_table(&p, &SurvivalColumns::default()).unwrap();
    assert_eq!(r.len(), 3);
    assert_eq!((r[0].age, r[0].survival_days, r[0].resection), (62.3, Some(410.0), ResectionStatus::GTR));
    assert_eq!(r[1].survival_days, None);
    assert_eq!(r[2].resection, ResectionStatus::NA);

    fs::write(&p, "BraTS19ID,Age,Survival,ResectionStatus\ncase_002,abc,410,GTR\n").unwrap();
    match tables::load_survival_table(&p, &SurvivalColumns::default()) {
        Err(PipelineError::Parse { line: 2, .. }) => {}
        other => panic!("unexpected {other:?}"),
    }

    fs::write(&p, "id;age\n").unwrap();
    assert!(matches!(
        tables::load_survival_table(&p, &SurvivalColumns::default()),
        Err(PipelineError::Parse { line: 1, .. })
    ));

    fs::write(&p, "pid,years,os,status\nx,40,100,GTR\n").unwrap();
    let cols = SurvivalColumns {
        case_id: "pid".into(),
        age: "years".into(),
        survival_days: "os".into(),
        resection_status: "status".into(),
    };
    assert_eq!(tables::load_survival_table(&p, &cols).unwrap()[0].case_id, "x");
}

#[test]
fn feature_tables_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("f.csv");
    let rows = vec![
        FeatureVector {
            case_id: "a".into(),
            values: (0..17).map(|i| i as f64 / 3.0).collect(),
            empty_core: false,
        },
        FeatureVector {
            case_id: "b".into(),
            values: (0..17).map(|i| (i as f64).sqrt() * 1e-7).collect(),
            empty_core: true,
        },
    ];
    let table = FeatureTable::new(rows);
    tables::write_features(&p, &table).unwrap();
    assert_eq!(tables::read_features(&p).unwrap(), table);
    let header = fs::read_to_string(&p).unwrap();
    assert!(header.starts_with("case_id,edema_voxels,necrosis_voxels,"));
}

fn tiny_spec() -> NetworkSpec {
    NetworkSpec {
        height: 8,
        width: 8,
        in_channels: 4,
        encoder_maps: vec![3, 4, 5],
        decoder_maps: vec![4, 3],
        dense_block_depth: 2,
    }
}

#[test]
fn weight_files_round_trip_and_reject_damage() {
    let dir = tempfile::tempdir().unwrap();
    let spec = tiny_spec();
    let w = Network::<f32>::new(&spec, 3).unwrap().get_weights();
    let header = artifacts::header_for(&spec, &w, SubregionId::ET, Some((SubregionId::WT, "abc".into())));
    let p = dir.path().join("ET.glwt");
    let sha = artifacts::save_weights(&p, &header, &w).unwrap();
    assert_eq!(sha, glioma_pipeline::fsutil::sha256_file(&p).unwrap());
    let back = artifacts::load_weights(&p).unwrap();
    assert_eq!(back.weights, w);
    assert_eq!(back.header.parent_checksum.as_deref(), Some("abc"));

    let bytes = fs::read(&p).unwrap();
    for cut in [3, 20, bytes.len() - 1] {
        assert!(matches!(artifacts::decode_weights(&p, &bytes[..cut]), Err(PipelineError::Format { .. })));
    }
    let mut extra = bytes.clone();
    extra.push(0);
    assert!(artifacts::decode_weights(&p, &extra).is_err());

    let other = NetworkSpec {
        encoder_maps: vec![3, 4, 6],
        decoder_maps: vec![4, 3],
        ..tiny_spec()
    };
    let mut net = Network::<f32>::new(&other, 0).unwrap();
    assert!(matches!(net.set_weights(&back.weights), Err(Error::IncompatibleWeights(_))));
}

#[test]
fn model_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let x: Vec<Vec<f64>> = (0..12).map(|i| vec![i as f64, (i * i) as f64]).collect();
    let y: Vec<f64> = (0..12).map(|i| 100.0 + 10.0 * i as f64).collect();
    let model = glioma_core::survival::fit_rfr(&["a", "b"], &x, &y, &Default::default(), 4).unwrap();
    let p = dir.path().join("m.bin");
    artifacts::save_model(&p, &model).unwrap();
    assert_eq!(artifacts::load_model(&p).unwrap(), model);
    fs::write(&p, b"GLRF\x09\x00\x00\x00").unwrap();
    assert!(artifacts::load_model(&p).is_err());
}
