//! Writes a synthetic two-view dataset in CWCF form.
//!
//! Half the classes are separable only in the image view, the other half only
//! in the deep view. Samples are grouped by class in file order, so
//! `--split firstk:K` takes the first K of each class for training.
//!
//! ```text
//! cargo run --example synth_views -- OUT_DIR [SEED] [CLASSES] [PER_CLASS] [DIM_IMG] [DIM_DEEP]
//! ```

use std::path::PathBuf;

use deepcwc::io::{write_features, write_labels, Dtype};
use deepcwc::FeatureMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

const SIGMA: f64 = 0.3;

fn gaussian(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| StandardNormal.sample(rng)).collect()
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let out = PathBuf::from(args.first().ok_or("usage: synth_views OUT_DIR [SEED] [CLASSES] [PER_CLASS] [DIM_IMG] [DIM_DEEP]")?);
    let num = |i: usize, default: u64| -> Result<u64, Box<dyn std::error::Error>> {
        Ok(args.get(i).map(|s| s.parse()).transpose()?.unwrap_or(default))
    };
    let seed = num(1, 0)?;
    let classes = num(2, 10)? as usize;
    let per_class = num(3, 40)? as usize;
    let dim_img = num(4, 64)? as usize;
    let dim_deep = num(5, 48)? as usize;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let half = classes / 2;
    let protos_img: Vec<_> = (0..half).map(|_| gaussian(&mut rng, dim_img)).collect();
    let protos_deep: Vec<_> = (half..classes).map(|_| gaussian(&mut rng, dim_deep)).collect();

    let (mut img, mut deep, mut labels) = (Vec::new(), Vec::new(), Vec::new());
    for class in 0..classes {
        for _ in 0..per_class {
            let noisy = |proto: &[f64], rng: &mut ChaCha8Rng| -> Vec<f64> {
                proto
                    .iter()
                    .map(|p| {
                        let e: f64 = StandardNormal.sample(rng);
                        p + SIGMA * e
                    })
                    .collect()
            };
            if class < half {
                img.push(noisy(&protos_img[class], &mut rng));
                deep.push(gaussian(&mut rng, dim_deep));
            } else {
                img.push(gaussian(&mut rng, dim_img));
                deep.push(noisy(&protos_deep[class - half], &mut rng));
            }
            labels.push(class as i64);
        }
    }

    std::fs::create_dir_all(&out)?;
    write_features(&FeatureMatrix::from_columns(&img)?, &out.join("image.cwcf"), Dtype::F64)?;
    write_features(&FeatureMatrix::from_columns(&deep)?, &out.join("deep.cwcf"), Dtype::F32)?;
    write_labels(&labels, &out.join("labels.txt"))?;
    println!(
        "wrote {} samples ({} classes, image d={}, deep d={}) to {}",
        labels.len(),
        classes,
        dim_img,
        dim_deep,
        out.display()
    );
    Ok(())
}
