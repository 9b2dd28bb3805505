use std::fs;

use archsel::datasets::{load_fixture, load_idx, load_usps, write_fixture, write_idx, LoadError, LoadWarning};
use archsel::report::{strip_wall_time_csv, strip_wall_time_json};
use archsel_core::data::{Dataset, SplitTag};
use archsel_core::Tensor;
use proptest::prelude::*;

fn dataset(n: usize, c: usize, h: usize, w: usize, k: usize, pixels: Vec<f64>, labels: Vec<usize>) -> Dataset {
    let images = Tensor::new(vec![n, c, h, w], pixels).unwrap();
    Dataset::new("p", SplitTag::Train, images, labels, k).unwrap()
}

fn any_dataset(quantized: bool) -> impl Strategy<Value = Dataset> {
    (1usize..6, 1usize..4, 1usize..5, 1usize..5, 1usize..11).prop_flat_map(move |(n, c, h, w, k)| {
        let c = if quantized { 1 } else { c };
        let px = if quantized {
            prop::collection::vec((0u8..=255).prop_map(|b| b as f64 / 255.0), n * c * h * w).boxed()
        } else {
            prop::collection::vec(-1e6f64..1e6, n * c * h * w).boxed()
        };
        (px, prop::collection::vec(0..k, n)).prop_map(move |(p, l)| dataset(n, c, h, w, k, p, l))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fixture_round_trip(ds in any_dataset(false)) {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.bin");
        write_fixture(&ds, &p).unwrap();
        let back = load_fixture(&p, "p", SplitTag::Train).unwrap();
        prop_assert_eq!(back, ds);
    }

    #[test]
    fn idx_round_trip(ds in any_dataset(true)) {
        let dir = tempfile::tempdir().unwrap();
        let (i, l) = (dir.path().join("i"), dir.path().join("l"));
        write_idx(&ds, &i, &l).unwrap();
        let back = load_idx(&i, &l, "p", SplitTag::Train, Some(ds.num_classes())).unwrap();
        prop_assert_eq!(back, ds);
    }

    #[test]
    fn truncated_fixtures_are_rejected(ds in any_dataset(false), cut in 1usize..64) {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.bin");
        write_fixture(&ds, &p).unwrap();
        let bytes = fs::read(&p).unwrap();
        let cut = cut.min(bytes.len());
        fs::write(&p, &bytes[..bytes.len() - cut]).unwrap();
        prop_assert!(load_fixture(&p, "p", SplitTag::Train).is_err());
    }

    #[test]
    fn usps_values_land_in_unit_interval(
        rows in prop::collection::vec((0usize..10, prop::collection::vec(-1.0f64..=1.0, 256)), 1..5)
    ) {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("u.txt");
        let text: String = rows
            .iter()
            .map(|(l, v)| format!("{l} {}\n", v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")))
            .collect();
        fs::write(&p, text).unwrap();
        let (ds, warnings) = load_usps(&p, "u", SplitTag::Train, Some(rows.len())).unwrap();
        prop_assert!(warnings.is_empty());
        prop_assert_eq!(ds.len(), rows.len());
        prop_assert_eq!(ds.sample_shape(), [1, 16, 16]);
        prop_assert!(ds.images().data().iter().all(|v| (0.0..=1.0).contains(v)));
        let labels: Vec<usize> = rows.iter().map(|r| r.0).collect();
        prop_assert_eq!(ds.labels(), &labels[..]);
    }

    #[test]
    fn stripping_wall_times_is_idempotent(cols in prop::collection::vec("[a-z_]{1,12}", 1..8), n in 0usize..4) {
        let mut text = cols.join(",");
        text.push('\n');
        for r in 0..n {
            text.push_str(&cols.iter().enumerate().map(|(i, _)| (r * 10 + i).to_string()).collect::<Vec<_>>().join(","));
            text.push('\n');
        }
        let once = strip_wall_time_csv(&text);
        prop_assert_eq!(strip_wall_time_csv(&once), once.clone());
        prop_assert!(!once.lines().next().unwrap_or("").contains("wall_time"));
    }
}

#[test]
fn usps_count_mismatch_is_a_warning() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("u.txt");
    fs::write(&p, format!("3{}\n", " 0".repeat(256))).unwrap();
    let (ds, warnings) = load_usps(&p, "u", SplitTag::Train, Some(10_000)).unwrap();
    assert_eq!(ds.len(), 1);
    assert_eq!(warnings, vec![LoadWarning::CountMismatch { expected: 10_000, found: 1 }]);
}

#[test]
fn empty_usps_file_is_a_parse_error() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("u.txt");
    fs::write(&p, "").unwrap();
    assert!(matches!(load_usps(&p, "u", SplitTag::Train, None), Err(LoadError::ParseError { .. })));
}

#[test]
fn nested_wall_times_are_removed() {
    let mut v = serde_json::json!({"a": [{"wall_time_seconds": 1.0, "b": {"wall_time": 2}}], "c": 3});
    strip_wall_time_json(&mut v);
    assert_eq!(v, serde_json::json!({"a": [{"b": {}}], "c": 3}));
}
