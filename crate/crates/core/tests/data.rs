mod support;

use proptest::prelude::*;
use scratchdet::data::{
    augment, generate_dataset, generate_sample, hflip, AugmentPolicy, Dataset, Sample, MAX_PAIR_IOU,
};
use scratchdet::detector::iou;
use scratchdet::run::{DataProvider, DataSource};
use scratchdet::tensor::SeededRng;
use scratchdet::Error;
use support::configs::scene;

fn corners(s: &Sample) -> Vec<[f64; 4]> {
    s.boxes.iter().map(|b| [b.x1, b.y1, b.x2, b.y2]).collect()
}

fn boxes_inside(s: &Sample) -> bool {
    let (w, h) = (s.width as f64, s.height as f64);
    s.boxes
        .iter()
        .all(|b| 0.0 <= b.x1 && b.x1 < b.x2 && b.x2 <= w && 0.0 <= b.y1 && b.y1 < b.y2 && b.y2 <= h)
}

#[test]
fn dataset_round_trips_through_disk() {
    let cfg = scene(24, 9, 3);
    let dir = tempfile::tempdir().unwrap();
    let m = generate_dataset(&cfg, dir.path()).unwrap();
    let ds = Dataset::open(dir.path()).unwrap();
    ds.verify().unwrap();
    assert_eq!(ds.manifest(), &m);
    for i in 0..ds.len() {
        assert_eq!(ds.sample(i).unwrap(), generate_sample(&cfg, i));
    }
    let mut split: Vec<usize> = m.train.iter().chain(&m.eval).copied().collect();
    split.sort();
    assert_eq!(split, (0..9).collect::<Vec<_>>());
    assert_eq!(m.eval.len(), cfg.eval_count());
}

#[test]
fn digest_depends_only_on_config() {
    let (a, b, c) = (
        tempfile::tempdir().unwrap(),
        tempfile::tempdir().unwrap(),
        tempfile::tempdir().unwrap(),
    );
    let da = generate_dataset(&scene(16, 5, 1), a.path()).unwrap().digest;
    let db = generate_dataset(&scene(16, 5, 1), b.path()).unwrap().digest;
    let dc = generate_dataset(&scene(16, 5, 2), c.path()).unwrap().digest;
    assert_eq!(da, db);
    assert_ne!(da, dc);
}

#[test]
fn tampered_image_fails_integrity() {
    let dir = tempfile::tempdir().unwrap();
    let m = generate_dataset(&scene(16, 4, 1), dir.path()).unwrap();
    let img = dir.path().join(&m.images[2].file);
    let mut bytes = std::fs::read(&img).unwrap();
    let last = bytes.len() - 1;
    bytes[last] ^= 0x10;
    std::fs::write(&img, bytes).unwrap();
    let ds = Dataset::open(dir.path()).unwrap();
    assert!(matches!(ds.verify(), Err(Error::Integrity(_))));
    let source = DataSource::Manifest {
        manifest: dir.path().to_path_buf(),
    };
    assert!(matches!(
        DataProvider::from_source(&source),
        Err(Error::Integrity(_))
    ));
}

#[test]
fn truncated_image_is_corrupt() {
    let dir = tempfile::tempdir().unwrap();
    let m = generate_dataset(&scene(16, 2, 1), dir.path()).unwrap();
    let img = dir.path().join(&m.images[0].file);
    let bytes = std::fs::read(&img).unwrap();
    std::fs::write(&img, &bytes[..bytes.len() / 2]).unwrap();
    let ds = Dataset::open(dir.path()).unwrap();
    assert!(matches!(ds.sample(0), Err(Error::Corrupt { .. })));
}

#[test]
fn provider_matches_dataset_and_scene() {
    let cfg = scene(16, 8, 9);
    let dir = tempfile::tempdir().unwrap();
    generate_dataset(&cfg, dir.path()).unwrap();
    let from_disk = DataProvider::from_source(&DataSource::Manifest {
        manifest: dir.path().join("manifest.json"),
    })
    .unwrap();
    let in_memory = DataProvider::from_source(&DataSource::Scene { scene: cfg }).unwrap();
    assert_eq!(from_disk.train_indices(), in_memory.train_indices());
    assert_eq!(from_disk.eval_indices(), in_memory.eval_indices());
    for i in 0..8 {
        assert_eq!(from_disk.sample(i), in_memory.sample(i));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn scenes_respect_their_config(seed in 0u64..1_000, index in 0usize..50) {
        let cfg = scene(32, 50, seed);
        let s = generate_sample(&cfg, index);
        prop_assert_eq!(s.pixels.len(), 32 * 32 * 3);
        prop_assert!(boxes_inside(&s));
        prop_assert!(s.boxes.len() >= cfg.objects_per_image.0 && s.boxes.len() <= cfg.objects_per_image.1);
        prop_assert!(s.boxes.iter().all(|b| (1..=cfg.classes.len()).contains(&b.class)));
        let c = corners(&s);
        for i in 0..c.len() {
            for j in i + 1..c.len() {
                prop_assert!(iou(&c[i], &c[j]) <= MAX_PAIR_IOU + 1e-12);
            }
        }
    }

    #[test]
    fn augmentation_keeps_boxes_valid(seed in 0u64..1_000, step in 0u64..1_000) {
        let s = generate_sample(&scene(32, 10, seed), (step % 10) as usize);
        let mut rng = SeededRng::new(seed).split(step);
        let a = augment(&s, &mut rng, &AugmentPolicy::default());
        prop_assert_eq!((a.width, a.height), (s.width, s.height));
        prop_assert_eq!(a.pixels.len(), s.pixels.len());
        prop_assert!(boxes_inside(&a));
        prop_assert!(a.boxes.iter().all(|b| (1..=3).contains(&b.class)));
    }

    #[test]
    fn hflip_is_an_involution(seed in 0u64..1_000) {
        let s = generate_sample(&scene(20, 1, seed), 0);
        let back = hflip(&hflip(&s));
        prop_assert_eq!(&back.pixels, &s.pixels);
        for (x, y) in corners(&back).iter().zip(corners(&s)) {
            for k in 0..4 {
                prop_assert!((x[k] - y[k]).abs() < 1e-9);
            }
        }
    }
}

#[test]
fn augmentation_is_deterministic() {
    let s = generate_sample(&scene(32, 1, 4), 0);
    let a = augment(&s, &mut SeededRng::new(5), &AugmentPolicy::default());
    let b = augment(&s, &mut SeededRng::new(5), &AugmentPolicy::default());
    assert_eq!(a, b);
    assert_eq!(
        augment(&s, &mut SeededRng::new(5), &AugmentPolicy::none()),
        s
    );
}
