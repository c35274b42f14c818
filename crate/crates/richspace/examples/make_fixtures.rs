//! Regenerates the bundled CLI fixtures.
//!
//! ```text
//! cargo run -p richspace --example make_fixtures -- crates/richspace/fixtures
//! ```
//!
//! * `planted/`: guidance `C` equals step 14 of 30 between `A` and `B`.
//! * `degenerate/`: `A == B`.
//! * `map_1d.json`: the one-dimensional map with outputs 0, 1, 2, 3.

use std::path::Path;

use richspace::formats::{self, FormatError, MapFile};
use richspace_core::rng::GaussianStream;
use richspace_core::{lerp, Matrix};

pub const PLANTED_INDEX: usize = 14;
pub const PLANTED_STEPS: usize = 30;
const ROWS: usize = 8;
const COLS: usize = 16;
const IDS_LENGTH: usize = 5;

fn gaussian(seed: u64) -> Matrix {
    Matrix::new(
        ROWS,
        COLS,
        GaussianStream::new(seed, 0).normals(ROWS * COLS, 1.0),
    )
    .unwrap()
}

fn save(dir: &Path, stem: &str, m: &Matrix, prompt: &str) -> Result<(), FormatError> {
    formats::save_prompt(dir, stem, m, IDS_LENGTH, prompt, Some("planter"))?;
    Ok(())
}

pub fn write_all(root: &Path) -> Result<(), FormatError> {
    let a = gaussian(1);
    let b = gaussian(2);
    let c = lerp(&a, &b, PLANTED_INDEX, PLANTED_STEPS).unwrap();

    let planted = root.join("planted");
    std::fs::create_dir_all(&planted).unwrap();
    save(&planted, "a", &a, "prompt a")?;
    save(&planted, "b", &b, "prompt b")?;
    save(&planted, "c", &c, "guidance at step 14 of 30")?;

    let degenerate = root.join("degenerate");
    std::fs::create_dir_all(&degenerate).unwrap();
    save(&degenerate, "a", &a, "prompt a")?;
    save(&degenerate, "b", &a, "prompt a again")?;
    save(&degenerate, "c", &b, "prompt b")?;

    let map = MapFile {
        vocab: 2,
        n: 2,
        d: 1,
        outputs: vec![vec![0.0], vec![1.0], vec![2.0], vec![3.0]],
        words: None,
        lipschitz: None,
    };
    map.write(root.join("map_1d.json"))
}

#[allow(dead_code)]
fn main() {
    let root = std::env::args().nth(1).unwrap_or_else(|| "fixtures".into());
    if let Err(e) = write_all(Path::new(&root)) {
        eprintln!("error: {e}");
        std::process::exit(2);
    }
}
