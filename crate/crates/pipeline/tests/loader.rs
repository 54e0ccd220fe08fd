use std::fs;
use std::path::Path;

use causalnet_core::image::Label;
use causalnet_pipeline::data::{load_trials, read_trial, write_trial_set, Split, Trial, TrialSet};
use causalnet_pipeline::PipelineError;
use ndarray::Array2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn write(path: &Path, text: &str) {
    fs::create_dir_all(path.parent().unwrap()).unwrap();
    fs::write(path, text).unwrap();
}

fn random_set(names: &[&str], trials: usize, samples: usize, seed: u64) -> TrialSet {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    TrialSet {
        channel_names: names.iter().map(|s| s.to_string()).collect(),
        sampling_rate: 250.0,
        trials: (0..trials)
            .map(|id| Trial {
                id,
                label: Label::from_index(id % 2),
                split: if id < trials / 2 { Split::Train } else { Split::Test },
                data: Array2::from_shape_fn((names.len(), samples), |_| r.random_range(-50.0..50.0)),
            })
            .collect(),
    }
}

const FIVE: [&str; 5] = ["Fz", "C3", "Cz", "C4", "Pz"];

#[test]
fn full_competition_sized_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let set = random_set(&FIVE, 288, 8, 1);
    let manifest = write_trial_set(&set, dir.path()).unwrap();
    let back = load_trials(&manifest).unwrap();
    assert_eq!(back.count(Split::Train), 144);
    assert_eq!(back.count(Split::Test), 144);
    assert_eq!(back, set);
}

#[test]
fn empty_manifest_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let m = dir.path().join("manifest.csv");
    write(&m, "trial_file,label,split\n");
    assert!(matches!(load_trials(&m), Err(PipelineError::Empty(_))));
}

#[test]
fn superset_channels_load_and_select() {
    let mut names: Vec<String> = (1..=22).map(|i| format!("EEG{i}")).collect();
    for (slot, n) in [(0, "Fz"), (7, "C3"), (9, "Cz"), (11, "C4"), (19, "Pz")] {
        names[slot] = n.to_string();
    }
    let refs: Vec<&str> = names.iter().map(|s| s.as_str()).collect();
    let dir = tempfile::tempdir().unwrap();
    let set = random_set(&refs, 4, 20, 2);
    let back = load_trials(&write_trial_set(&set, dir.path()).unwrap()).unwrap();
    assert_eq!(back.channel_names.len(), 22);
    let wanted: Vec<String> = ["fz", "C3", "CZ", "c4", "Pz"].iter().map(|s| s.to_string()).collect();
    let five = back.select(&wanted).unwrap();
    assert_eq!(five.channel_names, FIVE.map(String::from).to_vec());
    assert_eq!(five.trials[2].data.row(3), set.trials[2].data.row(11));
    assert!(back.select(&["Oz".to_string()]).is_err());
}

#[test]
fn later_trials_may_reorder_channels() {
    let dir = tempfile::tempdir().unwrap();
    write(&dir.path().join("a.csv"), "# sampling_rate = 100\nA,B\n1,2\n3,4\n");
    write(&dir.path().join("b.csv"), "# sampling_rate = 100\nB,A\n20,10\n40,30\n");
    let m = dir.path().join("m.csv");
    write(&m, "trial_file,label,split\na.csv,left,train\nb.csv,right,test\n");
    let set = load_trials(&m).unwrap();
    assert_eq!(set.channel_names, vec!["A", "B"]);
    assert_eq!(set.trials[1].data, ndarray::array![[10.0, 30.0], [20.0, 40.0]]);
    assert_eq!(set.trials[1].label, Label::Right);
    assert_eq!(set.sampling_rate, 100.0);
}

fn load_error(files: &[(&str, &str)], manifest: &str) -> (String, usize) {
    let dir = tempfile::tempdir().unwrap();
    for (name, text) in files {
        write(&dir.path().join(name), text);
    }
    let m = dir.path().join("m.csv");
    write(&m, manifest);
    match load_trials(&m) {
        Err(PipelineError::Load { path, line, .. }) => (path.file_name().unwrap().to_string_lossy().into_owned(), line),
        other => panic!("expected a load error, got {other:?}"),
    }
}

#[test]
fn load_errors_name_file_and_line() {
    let ok = "# sampling_rate = 250\nA,B\n1,2\n";
    let m1 = "trial_file,label,split\na.csv,left,train\n";
    assert_eq!(load_error(&[("a.csv", "# sampling_rate = 250\nA,B\n1,2\n3,x\n")], m1), ("a.csv".into(), 4));
    assert_eq!(load_error(&[("a.csv", "A,B\n1,2\n")], m1), ("a.csv".into(), 1));
    assert_eq!(load_error(&[("a.csv", "# sampling_rate = 250\nA,B\n1,2,3\n")], m1), ("a.csv".into(), 3));
    assert_eq!(load_error(&[("a.csv", "# sampling_rate = 250\nA,A\n1,2\n")], m1), ("a.csv".into(), 2));
    // Header mismatch and inconsistent sampling rate against the first trial.
    let m2 = "trial_file,label,split\na.csv,left,train\nb.csv,right,train\n";
    assert_eq!(load_error(&[("a.csv", ok), ("b.csv", "# sampling_rate = 250\nA,C\n1,2\n")], m2), ("b.csv".into(), 2));
    assert_eq!(load_error(&[("a.csv", ok), ("b.csv", "# sampling_rate = 500\nA,B\n1,2\n")], m2), ("b.csv".into(), 1));
    // Bad label on the manifest's third line.
    let m3 = "trial_file,label,split\na.csv,left,train\na.csv,up,train\n";
    assert_eq!(load_error(&[("a.csv", ok)], m3), ("m.csv".into(), 3));
    let m4 = "file,label,split\na.csv,left,train\n";
    assert_eq!(load_error(&[("a.csv", ok)], m4), ("m.csv".into(), 1));
}

#[test]
fn missing_trial_file_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let m = dir.path().join("m.csv");
    write(&m, "trial_file,label,split\nnope.csv,left,train\n");
    assert!(matches!(load_trials(&m), Err(PipelineError::Io { .. })));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn trial_files_round_trip_bit_exactly(seed in 0u64..10_000, samples in 1usize..30, tiny in any::<bool>()) {
        let mut set = random_set(&["x", "y", "z"], 1, samples, seed);
        if tiny {
            set.trials[0].data.mapv_inplace(|v| v * 1e-300);
        }
        let dir = tempfile::tempdir().unwrap();
        let manifest = write_trial_set(&set, dir.path()).unwrap();
        let (_, fs_hz, data) = read_trial(&dir.path().join("trials/trial_0000.csv")).unwrap();
        prop_assert_eq!(fs_hz, 250.0);
        prop_assert_eq!(&data, &set.trials[0].data);
        prop_assert_eq!(load_trials(&manifest).unwrap(), set);
    }
}
