//! Small run configurations shared by the integration tests and the acceptance harness.

use std::path::Path;

use scratchdet::backbone::BackboneConfig;
use scratchdet::data::{AugmentPolicy, SceneConfig};
use scratchdet::detector::HeadConfig;
use scratchdet::run::{DataSource, GridConfig, RunConfig, TrainConfig};

pub fn scene(image_size: usize, num_images: usize, seed: u64) -> SceneConfig {
    SceneConfig {
        image_size,
        num_images,
        objects_per_image: (1, 3),
        size_distribution: (0.08, 0.5),
        small_object_fraction: 0.2,
        eval_fraction: 0.25,
        seed,
        ..SceneConfig::default()
    }
}

/// A 16-pixel detector that trains in milliseconds per step.
pub fn tiny(seed: u64, max_steps: u64) -> RunConfig {
    RunConfig {
        backbone: BackboneConfig {
            first_conv_kernel: 3,
            first_conv_stride: 1,
            root_depth: 2,
            use_first_maxpool: true,
            stage_channels: vec![4, 8],
            stage_blocks: vec![1, 1],
            bn_in_backbone: true,
            input_size: 16,
            target_ladder: vec![4, 2, 1],
            extra_channels: 8,
            input_channels: 3,
        },
        head: HeadConfig {
            num_classes: 4,
            ..HeadConfig::default()
        },
        train: TrainConfig {
            base_lr: 0.01,
            batch_size: 4,
            max_steps,
            seed,
            augment: AugmentPolicy::default(),
            ..TrainConfig::default()
        },
        data: DataSource::Scene {
            scene: scene(16, 12, 5),
        },
        eval: Default::default(),
        landscape: Default::default(),
    }
}

fn micro_backbone(input_size: usize, ladder: Vec<usize>) -> BackboneConfig {
    BackboneConfig {
        first_conv_kernel: 7,
        first_conv_stride: 2,
        root_depth: 1,
        use_first_maxpool: true,
        stage_channels: vec![8, 16, 32],
        stage_blocks: vec![1, 1, 1],
        bn_in_backbone: true,
        input_size,
        target_ladder: ladder,
        extra_channels: 32,
        input_channels: 3,
    }
}

fn shipped_grid(name: &str) -> GridConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name);
    GridConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

/// BN placement × learning rate grid on 32-pixel scenes.
pub fn bn_grid() -> GridConfig {
    shipped_grid("bn_grid.json")
}

/// Stem ablation on 48-pixel scenes dominated by small objects.
pub fn stem_grid() -> GridConfig {
    shipped_grid("stem_grid.json")
}

/// One training image, no augmentation.
pub fn overfit() -> RunConfig {
    RunConfig {
        backbone: BackboneConfig {
            first_conv_kernel: 3,
            first_conv_stride: 1,
            root_depth: 3,
            ..micro_backbone(32, vec![8, 4, 2, 1])
        },
        head: HeadConfig::default(),
        train: TrainConfig {
            base_lr: 0.01,
            batch_size: 2,
            max_steps: 500,
            augment: AugmentPolicy::none(),
            ..TrainConfig::default()
        },
        data: DataSource::Scene {
            scene: SceneConfig {
                image_size: 32,
                num_images: 1,
                objects_per_image: (1, 3),
                size_distribution: (0.08, 0.5),
                small_object_fraction: 0.2,
                eval_fraction: 0.0,
                seed: 7,
                ..SceneConfig::default()
            },
        },
        eval: Default::default(),
        landscape: Default::default(),
    }
}
