use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use annobias::format::{self, split_counts, LoadOptions, Preprocessing};
use annobias::preset::Preset;
use annobias::{IngestError, LoadedDataset};
use annobias_core::text::PreprocessConfig;
use annobias_core::{AnnotatedDataset, Annotation, Instance, LabelId, LabelSet, Split};
use proptest::prelude::*;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn lewidi_dir(dir: &str) -> Vec<PathBuf> {
    let mut files: Vec<PathBuf> = fs::read_dir(fixture(dir)).unwrap().map(|e| e.unwrap().path()).collect();
    files.sort();
    files
}

fn load_with(paths: &[PathBuf], preset: Option<&str>) -> LoadedDataset {
    let options = LoadOptions { preset: preset.map(|p| Preset::by_name(p).unwrap()), ..LoadOptions::default() };
    format::load(paths, &options).unwrap()
}

fn roundtrip(loaded: &LoadedDataset) {
    let dir = tempfile::tempdir().unwrap();
    let first = format::to_jsonl(&loaded.dataset, &loaded.extras);
    let path = dir.path().join("a.jsonl");
    fs::write(&path, &first).unwrap();
    let again = format::load(&[path], &LoadOptions::default()).unwrap();
    assert_eq!(again.dataset, loaded.dataset);
    assert_eq!(again.extras, loaded.extras);
    assert_eq!(format::to_jsonl(&again.dataset, &again.extras), first);
}

fn every_fixture() -> Vec<(Vec<PathBuf>, Option<&'static str>)> {
    vec![
        (lewidi_dir("mini_armis"), Some("armis")),
        (lewidi_dir("mini_convabuse"), Some("convabuse")),
        (vec![fixture("mini_hsbrexit.csv")], Some("hsbrexit")),
        (vec![fixture("mini_mdagreement.jsonl")], Some("mdagreement")),
        (vec![fixture("mini_mdagreement.jsonl")], None),
        (vec![fixture("toy_unanimous.jsonl")], None),
        (vec![fixture("iterative.jsonl")], None),
    ]
}

#[test]
fn every_fixture_round_trips() {
    for (paths, preset) in every_fixture() {
        roundtrip(&load_with(&paths, preset));
    }
}

#[test]
fn miniature_counts() {
    let cases: [(Vec<PathBuf>, &str, [usize; 3], usize, (usize, usize)); 4] = [
        (lewidi_dir("mini_armis"), "armis", [8, 3, 3], 3, (3, 3)),
        (lewidi_dir("mini_convabuse"), "convabuse", [6, 2, 2], 8, (2, 7)),
        (vec![fixture("mini_hsbrexit.csv")], "hsbrexit", [5, 2, 2], 6, (6, 6)),
        (vec![fixture("mini_mdagreement.jsonl")], "mdagreement", [6, 2, 3], 12, (5, 5)),
    ];
    for (paths, preset, splits, total, range) in cases {
        let ds = load_with(&paths, Some(preset)).dataset;
        let found = [Split::Train, Split::Dev, Split::Test].map(|s| ds.split_count(s));
        assert_eq!(found, splits, "{preset}");
        assert_eq!(ds.annotators().len(), total, "{preset}");
        assert_eq!(ds.annotator_range(), Some(range), "{preset}");
    }
}

#[test]
fn split_counts_match_line_counts() {
    let path = fixture("mini_mdagreement.jsonl");
    let text = fs::read_to_string(&path).unwrap();
    let ds = load_with(&[path], None).dataset;
    let counts = split_counts(&ds);
    for split in ["train", "dev", "test"] {
        let tag = format!("\"split\": \"{split}\"");
        let lines = text.lines().filter(|l| l.contains(&tag)).count();
        assert_eq!(counts[split], lines, "{split}");
    }

    let csv = fs::read_to_string(fixture("mini_hsbrexit.csv")).unwrap();
    let ds = load_with(&[fixture("mini_hsbrexit.csv")], Some("hsbrexit")).dataset;
    let counts = split_counts(&ds);
    for split in ["train", "dev", "test"] {
        let ids: std::collections::BTreeSet<&str> = csv
            .lines()
            .skip(1)
            .filter(|l| l.split(',').nth(3) == Some(split))
            .map(|l| l.split(',').next().unwrap())
            .collect();
        assert_eq!(counts[split], ids.len(), "{split}");
    }

    for path in lewidi_dir("mini_armis") {
        let records: serde_json::Map<String, serde_json::Value> =
            serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
        let ds = load_with(std::slice::from_ref(&path), Some("armis")).dataset;
        let split = format::split_counts(&ds).into_iter().find(|(_, n)| *n > 0).unwrap();
        assert_eq!(split.1, records.len());
        assert!(path.to_string_lossy().contains(split.0));
    }
}

#[test]
fn convabuse_scores_binarize_at_zero() {
    let loaded = load_with(&lewidi_dir("mini_convabuse"), Some("convabuse"));
    let ds = &loaded.dataset;
    let offensive = ds.label_set().id_of("offensive").unwrap();
    let mut seen = BTreeMap::new();
    for path in lewidi_dir("mini_convabuse") {
        let records: serde_json::Map<String, serde_json::Value> =
            serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
        for (id, rec) in records {
            let inst = ds.instance(&id).unwrap();
            let scores = rec["annotations"].as_str().unwrap().split(',').map(|s| s.parse::<i32>().unwrap());
            for (score, a) in scores.zip(&inst.annotations) {
                assert_eq!(a.as_label() == Some(offensive), score < 0, "score {score}");
                seen.insert(score, a.as_label().unwrap());
            }
        }
    }
    assert_eq!(seen.keys().copied().collect::<Vec<_>>(), vec![-3, -2, -1, 0, 1]);
    let inst = ds.instance("conv001").unwrap();
    assert!(inst.text.starts_with("agent: Hello how can I help [SEP] user: you are useless [SEP] agent: I am sorry"), "{}", inst.text);
    assert!(loaded.extras["conv001"].turns.as_ref().unwrap().len() == 4);
}

#[test]
fn armis_preset_keeps_arabic_text() {
    let ds = load_with(&lewidi_dir("mini_armis"), Some("armis")).dataset;
    for inst in ds.instances() {
        assert!(inst.text.chars().any(|c| ('\u{0600}'..='\u{06FF}').contains(&c)), "{}", inst.text);
        assert!(!inst.text.contains("https") && !inst.text.contains('@'));
        assert_eq!(inst.language, "ar");
    }
    let stripped = format::load(
        &lewidi_dir("mini_armis"),
        &LoadOptions { preset: Preset::by_name("armis"), preprocessing: Preprocessing::Custom(PreprocessConfig::ALL), ..LoadOptions::default() },
    )
    .unwrap();
    assert!(stripped.dataset.instances().iter().all(|i| i.text.is_empty()));
}

fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

fn load_err(path: PathBuf) -> IngestError {
    format::load(&[path], &LoadOptions::default()).unwrap_err()
}

#[test]
fn load_errors() {
    let dir = tempfile::tempdir().unwrap();
    let rec = |id: &str| format!("{{\"id\":\"{id}\",\"text\":\"t\",\"annotations\":[{{\"annotator\":\"a\",\"label\":\"x\"}},{{\"annotator\":\"b\",\"label\":\"y\"}}]}}\n");

    let dup = write(dir.path(), "dup.jsonl", &(rec("one") + &rec("two") + &rec("one")));
    match load_err(dup) {
        IngestError::DuplicateId { id, line, .. } => assert_eq!((id.as_str(), line), ("one", 3)),
        e => panic!("{e}"),
    }

    let empty = write(dir.path(), "empty.jsonl", "");
    assert!(matches!(load_err(empty), IngestError::Parse { .. }));
    let empty_csv = write(dir.path(), "empty.csv", "");
    assert!(matches!(load_err(empty_csv), IngestError::Parse { .. }));

    let bad_split = rec("one").replace("\"text\"", "\"split\":\"holdout\",\"text\"");
    match load_err(write(dir.path(), "split.jsonl", &(rec("zero") + &bad_split))) {
        IngestError::UnknownSplit { split, line, .. } => assert_eq!((split.as_str(), line), ("holdout", 2)),
        e => panic!("{e}"),
    }

    match load_err(write(dir.path(), "broken.jsonl", &(rec("a") + "{not json\n"))) {
        IngestError::Parse { line, .. } => assert_eq!(line, 2),
        e => panic!("{e}"),
    }

    let three = "id,text,annotator,label\n1,t,a,x\n1,t,b,y\n2,t,a,z\n";
    assert!(matches!(load_err(write(dir.path(), "three.csv", three)), IngestError::Parse { .. }));

    let dup_lewidi = "{\"1\": {\"text\": \"t\", \"annotators\": \"A,A\", \"annotations\": \"1,0\"}}";
    assert!(matches!(load_err(write(dir.path(), "x_train.json", dup_lewidi)), IngestError::Parse { .. }));
}

#[test]
fn unannotated_instances_are_kept_and_counted() {
    let dir = tempfile::tempdir().unwrap();
    let body = "id,text,annotator,label\n1,t,a,x\n1,t,b,y\n2,u,,\n";
    let loaded = format::load(&[write(dir.path(), "x.csv", body)], &LoadOptions::default()).unwrap();
    assert_eq!(loaded.dataset.len(), 2);
    assert_eq!(loaded.dataset.unannotated_count(), 1);
    assert_eq!(loaded.warnings.len(), 1);
    roundtrip(&loaded);
}

#[test]
fn fingerprint_tracks_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let a = write(dir.path(), "a.jsonl", &fs::read_to_string(fixture("toy_unanimous.jsonl")).unwrap());
    let b = write(dir.path(), "b.jsonl", &(fs::read_to_string(fixture("toy_unanimous.jsonl")).unwrap() + "\n"));
    let fa = format::load(&[a.clone()], &LoadOptions::default()).unwrap();
    let fb = format::load(&[b], &LoadOptions::default()).unwrap();
    assert_eq!(fa.dataset, fb.dataset);
    assert_ne!(fa.fingerprint, fb.fingerprint);
    assert_eq!(fa.fingerprint, format::load(&[a], &LoadOptions::default()).unwrap().fingerprint);
    assert!(fa.fingerprint.starts_with("sha256:") && fa.fingerprint.len() == 7 + 64);
}

fn arb_dataset() -> impl Strategy<Value = AnnotatedDataset> {
    let text = "[a-zA-Z0-9 \\u{0600}-\\u{06FF}\"\\\\,\\n]{0,20}";
    let inst = (text, prop::option::of(0..3usize), prop::collection::btree_map(0..6usize, 0..3usize, 0..5));
    prop::collection::vec(inst, 1..12).prop_map(|rows| {
        let labels = LabelSet::new(["p", "q", "r,s"]).unwrap();
        let instances = rows.into_iter().enumerate().map(|(i, (text, split, anns))| {
            let mut inst = Instance::new(format!("id{i}"), text, "xx");
            inst.split = split.map(|s| Split::ALL[s]);
            for (a, l) in anns {
                inst.annotations.push(Annotation::label(format!("ann {a}"), LabelId(l)));
            }
            inst
        });
        AnnotatedDataset::builder(labels).positive_label(LabelId(2)).instances(instances).build().unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn canonical_jsonl_round_trips(ds in arb_dataset()) {
        let dir = tempfile::tempdir().unwrap();
        let text = format::to_jsonl(&ds, &BTreeMap::new());
        let path = write(dir.path(), "d.jsonl", &text);
        let back = format::load(&[path], &LoadOptions::default()).unwrap();
        prop_assert_eq!(&back.dataset, &ds);
        prop_assert_eq!(format::to_jsonl(&back.dataset, &back.extras), text);
    }
}
