//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any
//! failure. Run with `cargo test -p richspace --test acceptance`.

use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use richspace::npy::{self, Tensor};
use richspace_core::theory::default_grid_resolution;
use richspace_core::{
    any_function_witness_1d, covering_witness, find_optimal, generate, integer_witness, lerp,
    perpendicular_foot, DiscreteVideoMap, FinderOptions, Matrix, PromptEmbedding, ToyModel,
    ToyModelConfig, VideoTensor, WitnessReport,
};

struct Outcome {
    passed: bool,
    detail: String,
}

impl Outcome {
    fn new(passed: bool, detail: impl Into<String>) -> Self {
        Self {
            passed,
            detail: detail.into(),
        }
    }
}

fn seconds(d: Duration) -> String {
    format!("{:.3}s", d.as_secs_f64())
}

type Rows = Vec<Vec<f64>>;

fn gaussian_rows(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Rows {
    (0..n)
        .map(|_| {
            (0..d)
                .map(|_| {
                    // Box-Muller on the test's own generator.
                    let u1: f64 = 1.0 - rng.gen::<f64>();
                    let u2: f64 = rng.gen();
                    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
                })
                .collect()
        })
        .collect()
}

fn to_matrix(rows: &Rows) -> Matrix {
    Matrix::from_rows(rows).unwrap()
}

fn prompt(rows: &Rows, ids: usize) -> PromptEmbedding {
    PromptEmbedding::new(to_matrix(rows), ids).unwrap()
}

mod oracle {
    //! Straightforward re-implementation on nested vectors.
    use super::Rows;

    fn inner(x: &Rows, y: &Rows) -> f64 {
        let mut s = 0.0;
        for (a, b) in x.iter().zip(y) {
            for (p, q) in a.iter().zip(b) {
                s += p * q;
            }
        }
        s
    }

    fn axpby(a: f64, x: &Rows, b: f64, y: &Rows) -> Rows {
        x.iter()
            .zip(y)
            .map(|(r, s)| r.iter().zip(s).map(|(p, q)| a * p + b * q).collect())
            .collect()
    }

    pub fn foot(a: &Rows, b: &Rows, c: &Rows) -> Rows {
        let ab = axpby(1.0, b, -1.0, a);
        let ac = axpby(1.0, c, -1.0, a);
        let l = inner(&ab, &ac) / inner(&ab, &ab);
        axpby(1.0, a, l, &ab)
    }

    fn row_cosine(x: &Rows, y: &Rows) -> f64 {
        let mut total = 0.0;
        for (a, b) in x.iter().zip(y) {
            let dot: f64 = a.iter().zip(b).map(|(p, q)| p * q).sum();
            let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
            let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
            total += dot / (na * nb);
        }
        total / x.len() as f64
    }

    fn curve(a: &Rows, b: &Rows, c: &Rows, k: usize) -> Vec<f64> {
        let f = foot(a, b, c);
        (1..=k)
            .map(|i| {
                let t = i as f64 / k as f64;
                let z = axpby(t, a, 1.0 - t, b);
                row_cosine(&z, &f)
            })
            .collect()
    }

    /// 1-based index of the best summed score, earliest on ties.
    pub fn best_index(a: &Rows, b: &Rows, c: &Rows, ids: usize, k: usize) -> usize {
        let head = |m: &Rows| m[..ids].to_vec();
        let trunc = curve(&head(a), &head(b), &head(c), k);
        let full = curve(a, b, c, k);
        let mut best = 0;
        for i in 1..k {
            if trunc[i] + full[i] > trunc[best] + full[best] {
                best = i;
            }
        }
        best + 1
    }
}

fn oracle_equivalence() -> Outcome {
    let (n, d, k) = (8, 16, 30);
    let mut rng = ChaCha8Rng::seed_from_u64(0xACCE);
    let start = Instant::now();
    let mut mismatches = 0;
    for _ in 0..200 {
        let (a, b, c) = (
            gaussian_rows(&mut rng, n, d),
            gaussian_rows(&mut rng, n, d),
            gaussian_rows(&mut rng, n, d),
        );
        let mut lengths: Vec<usize> = (1..=n).collect();
        lengths.shuffle(&mut rng);
        let ids = &lengths[..3];
        let got = find_optimal(
            &prompt(&a, ids[0]),
            &prompt(&b, ids[1]),
            &prompt(&c, ids[2]),
            FinderOptions::with_steps(k),
        )
        .unwrap();
        let max_ids = ids.iter().copied().max().unwrap();
        if got.i_opt != oracle::best_index(&a, &b, &c, max_ids, k) {
            mismatches += 1;
        }
    }
    let elapsed = start.elapsed();
    Outcome::new(
        mismatches == 0 && elapsed < Duration::from_secs(5),
        format!(
            "{mismatches} mismatches / 200, {} (limit 5s)",
            seconds(elapsed)
        ),
    )
}

/// Noise orthogonal to `dir` on the leading `split` rows and on the rest,
/// scaled to `rel` times the norm of `reference`.
fn orthogonal_noise(
    rng: &mut ChaCha8Rng,
    dir: &Rows,
    split: usize,
    reference: &Rows,
    rel: f64,
) -> Rows {
    let mut noise = gaussian_rows(rng, dir.len(), dir[0].len());
    for range in [0..split, split..dir.len()] {
        let dot: f64 = range
            .clone()
            .map(|r| {
                noise[r]
                    .iter()
                    .zip(&dir[r])
                    .map(|(p, q)| p * q)
                    .sum::<f64>()
            })
            .sum();
        let norm_sq: f64 = range
            .clone()
            .map(|r| dir[r].iter().map(|v| v * v).sum::<f64>())
            .sum();
        if norm_sq > 0.0 {
            for r in range {
                for (x, v) in noise[r].iter_mut().zip(&dir[r]) {
                    *x -= dot / norm_sq * v;
                }
            }
        }
    }
    let frob = |m: &Rows| m.iter().flatten().map(|v| v * v).sum::<f64>().sqrt();
    let scale = rel * frob(reference) / frob(&noise);
    noise
        .iter()
        .map(|r| r.iter().map(|v| v * scale).collect())
        .collect()
}

fn planted_recovery() -> Outcome {
    let (n, d, k) = (8, 16, 30);
    let mut rng = ChaCha8Rng::seed_from_u64(0x9A17);
    let (mut clean, mut noisy) = (0, 0);
    for _ in 0..100 {
        let a = gaussian_rows(&mut rng, n, d);
        let b = gaussian_rows(&mut rng, n, d);
        let j = rng.gen_range(1..=k);
        let ids = rng.gen_range(1..=n);
        let planted = lerp(&to_matrix(&a), &to_matrix(&b), j, k).unwrap();
        let c: Rows = (0..n).map(|r| planted.row(r).to_vec()).collect();
        let run = |c: &Rows| {
            find_optimal(
                &prompt(&a, ids),
                &prompt(&b, ids),
                &prompt(c, ids),
                FinderOptions::with_steps(k),
            )
            .unwrap()
            .i_opt
        };
        clean += usize::from(run(&c) == j);

        let dir: Rows = b
            .iter()
            .zip(&a)
            .map(|(p, q)| p.iter().zip(q).map(|(x, y)| x - y).collect())
            .collect();
        let rel = rng.gen_range(0.01..=0.1);
        let noise = orthogonal_noise(&mut rng, &dir, ids, &c, rel);
        let shifted: Rows = c
            .iter()
            .zip(&noise)
            .map(|(p, q)| p.iter().zip(q).map(|(x, y)| x + y).collect())
            .collect();
        noisy += usize::from(run(&shifted) == j);
    }
    Outcome::new(
        clean == 100 && noisy == 100,
        format!("exact {clean}/100, orthogonal noise (rel <= 0.1) {noisy}/100"),
    )
}

fn foot_checks() -> Outcome {
    let (n, d) = (8, 16);
    let mut rng = ChaCha8Rng::seed_from_u64(0xF007);
    let (mut worst_residual, mut optimal, mut oracle_agree) = (0.0f64, 0, 0);
    for _ in 0..100 {
        let (a, b, c) = (
            gaussian_rows(&mut rng, n, d),
            gaussian_rows(&mut rng, n, d),
            gaussian_rows(&mut rng, n, d),
        );
        let (am, bm, cm) = (to_matrix(&a), to_matrix(&b), to_matrix(&c));
        let foot = perpendicular_foot(&am, &bm, &cm).unwrap();
        let ab = bm.sub(&am).unwrap();
        let residual = cm.sub(&foot).unwrap();
        let dot: f64 = residual
            .as_slice()
            .iter()
            .zip(ab.as_slice())
            .map(|(x, y)| x * y)
            .sum();
        worst_residual = worst_residual.max(dot.abs() / (residual.norm() * ab.norm()));

        let dist = residual.norm();
        let beats_samples = (0..1000).all(|s| {
            let t = -1.0 + 3.0 * s as f64 / 999.0;
            let p = am.combine(1.0 - t, &bm, t).unwrap();
            dist <= cm.sub(&p).unwrap().norm() * (1.0 + 1e-12)
        });
        optimal += usize::from(beats_samples);

        let expected = oracle::foot(&a, &b, &c);
        let close = expected
            .iter()
            .flatten()
            .zip(foot.as_slice())
            .all(|(e, g)| (e - g).abs() <= 1e-9 * (1.0 + e.abs()));
        oracle_agree += usize::from(close);
    }
    Outcome::new(
        worst_residual <= 1e-9 && optimal == 100 && oracle_agree == 100,
        format!(
            "max normalized residual {worst_residual:.2e} (limit 1e-9), line optimality {optimal}/100, oracle agreement {oracle_agree}/100"
        ),
    )
}

fn distance(x: &[f64], y: &[f64]) -> f64 {
    x.iter()
        .zip(y)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

/// Exhaustive re-check of a report against the map table.
fn reverify(map: &DiscreteVideoMap, report: &WitnessReport) -> bool {
    let norms: Vec<f64> = map
        .outputs()
        .map(|o| o.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    let m = norms.iter().copied().fold(f64::INFINITY, f64::min);
    let big_m = norms.iter().copied().fold(0.0, f64::max);
    let min_dist = map
        .outputs()
        .map(|o| distance(o, &report.y))
        .fold(f64::INFINITY, f64::min);
    let ny = report.y.iter().map(|v| v * v).sum::<f64>().sqrt();
    let slack = 1e-12 * big_m.max(1.0);
    (min_dist - report.min_dist).abs() <= 1e-12 * min_dist.max(1.0)
        && min_dist >= report.epsilon - 1e-12
        && ny >= m - slack
        && ny <= big_m + slack
}

fn theorem_1d() -> Outcome {
    let start = Instant::now();
    let map = DiscreteVideoMap::from_rows(2, 2, 1, &[[0.0], [1.0], [2.0], [3.0]]).unwrap();
    let report = any_function_witness_1d(&map, default_grid_resolution(map.len())).unwrap();
    let elapsed = start.elapsed();
    let any_ok = report.epsilon == 0.375
        && report.min_dist >= 0.375
        && report.satisfied
        && reverify(&map, &report)
        && elapsed < Duration::from_secs(1);

    // Linear maps with integer weights on x in {1..V}^n, as the integer bound assumes.
    let mut rng = ChaCha8Rng::seed_from_u64(0x1D);
    let mut satisfied = 0;
    for _ in 0..50 {
        let vocab: usize = rng.gen_range(2..=4);
        let n: usize = rng.gen_range(1..=3);
        let weights: Vec<i64> = loop {
            let w: Vec<i64> = (0..n).map(|_| rng.gen_range(-5..=5)).collect();
            if w.iter().any(|&x| x != 0) {
                break w;
            }
        };
        let count = vocab.pow(n as u32);
        let outputs: Vec<[f64; 1]> = (0..count)
            .map(|s| {
                let mut rest = s;
                let mut value = 0i64;
                for slot in (0..n).rev() {
                    value += weights[slot] * (rest % vocab + 1) as i64;
                    rest /= vocab;
                }
                [value as f64]
            })
            .collect();
        let map = DiscreteVideoMap::from_rows(vocab, n, 1, &outputs).unwrap();
        let report = integer_witness(&map).unwrap();
        let y_rule = report.y[0] == map.min_norm() + 0.5 && report.epsilon == 0.5;
        satisfied += usize::from(report.satisfied && y_rule && reverify(&map, &report));
    }
    Outcome::new(
        any_ok && satisfied == 50,
        format!(
            "any_1d epsilon={} min_dist={:.6} satisfied={} in {} (limit 1s); integer witness {satisfied}/50 satisfied",
            report.epsilon,
            report.min_dist,
            report.satisfied,
            seconds(elapsed)
        ),
    )
}

fn covering() -> Outcome {
    let start = Instant::now();
    let (mut satisfied, mut verified) = (0, 0);
    for seed in 0..20 {
        let map = DiscreteVideoMap::random_gaussian(2, 2, 2, seed).unwrap();
        let report = covering_witness(&map, 100_000, seed).unwrap();
        if report.satisfied {
            satisfied += 1;
            verified += usize::from(reverify(&map, &report));
        }
    }
    let elapsed = start.elapsed();
    Outcome::new(
        satisfied >= 19 && verified == satisfied && elapsed < Duration::from_secs(10),
        format!(
            "{satisfied}/20 satisfied (need 19), {verified}/{satisfied} re-verified, {} (limit 10s)",
            seconds(elapsed)
        ),
    )
}

fn toy_pipeline() -> Outcome {
    let (n, d, k) = (16, 8, 10);
    let mut rng = ChaCha8Rng::seed_from_u64(0x70F);
    let ids = 6;
    let prompts: Vec<PromptEmbedding> = (0..3)
        .map(|_| prompt(&gaussian_rows(&mut rng, n, d), ids))
        .collect();
    let config = ToyModelConfig {
        layers: 2,
        hidden: d,
        channels: 4,
        patch_channels: d,
        frames: 2,
        height: 8,
        width: 8,
        seed: 42,
        denoise_steps: 4,
    };
    let options = FinderOptions::with_steps(k);

    let start = Instant::now();
    let first = generate(&prompts[0], &prompts[1], &prompts[2], options, config).unwrap();
    let elapsed = start.elapsed();
    let second = generate(&prompts[0], &prompts[1], &prompts[2], options, config).unwrap();

    let bit_equal = first.video.as_slice().iter().map(|v| v.to_bits()).eq(second
        .video
        .as_slice()
        .iter()
        .map(|v| v.to_bits()));
    let shape_ok = first.video.shape() == [2, 8, 8, 4];

    let model = ToyModel::new(config).unwrap();
    let (mut worst, mut matrices) = (0.0f64, 0);
    let probed = model
        .denoise_probed(&first.selection.embedding, &mut |_, _, scores| {
            matrices += 1;
            for r in 0..scores.rows() {
                worst = worst.max((scores.row(r).iter().sum::<f64>() - 1.0).abs());
            }
        })
        .unwrap();
    let probe_matches = probed == first.video;

    Outcome::new(
        shape_ok && bit_equal && probe_matches && worst <= 1e-10 && matrices == 10 && elapsed < Duration::from_secs(2),
        format!(
            "shape {:?}, bit-identical rerun {bit_equal}, max |row sum - 1| {worst:.2e} over {matrices} matrices (limit 1e-10), {} (limit 2s)",
            first.video.shape(),
            seconds(elapsed)
        ),
    )
}

/// Header numpy writes for a (3, 4) `<f4` array.
const NUMPY_HEADER_3X4: &str = "{'descr': '<f4', 'fortran_order': False, 'shape': (3, 4), }";

fn io_bit_exact() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0x10);
    let mut exact = 0;
    for i in 0..1000 {
        let values = |rng: &mut ChaCha8Rng, len: usize| -> Vec<f64> {
            (0..len)
                .map(|_| loop {
                    let x = f32::from_bits(rng.gen());
                    if x.is_finite() {
                        break f64::from(x);
                    }
                })
                .collect()
        };
        let tensor = if i % 2 == 0 {
            let (r, c) = (rng.gen_range(1..20), rng.gen_range(1..20));
            Tensor::Embedding(Matrix::new(r, c, values(&mut rng, r * c)).unwrap())
        } else {
            let s: [usize; 4] = [
                rng.gen_range(1..4),
                rng.gen_range(1..6),
                rng.gen_range(1..6),
                rng.gen_range(1..5),
            ];
            Tensor::Video(
                VideoTensor::new(s[0], s[1], s[2], s[3], values(&mut rng, s.iter().product()))
                    .unwrap(),
            )
        };
        let path = dir.path().join(format!("t{i}.npy"));
        npy::write_tensor(&path, &tensor).unwrap();
        let back = npy::read_tensor(&path).unwrap();
        let payload = |t: &Tensor| -> Vec<u32> {
            let s = match t {
                Tensor::Embedding(m) => m.as_slice(),
                Tensor::Video(v) => v.as_slice(),
            };
            s.iter().map(|&v| (v as f32).to_bits()).collect()
        };
        exact += usize::from(back.shape() == tensor.shape() && payload(&back) == payload(&tensor));
    }

    let header = npy::header_bytes(&[3, 4]);
    let mut expected = b"\x93NUMPY\x01\x00".to_vec();
    let mut dict = NUMPY_HEADER_3X4.to_string();
    dict.push_str(&" ".repeat(118 - dict.len() - 1));
    dict.push('\n');
    expected.extend_from_slice(&(dict.len() as u16).to_le_bytes());
    expected.extend_from_slice(dict.as_bytes());
    let stable = header == expected && header == npy::header_bytes(&[3, 4]) && header.len() == 128;

    Outcome::new(
        exact == 1000 && stable,
        format!("{exact}/1000 bit-exact round trips, canonical header stable {stable}"),
    )
}

fn fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(rel)
}

fn cli_contract() -> Outcome {
    let run = |set: &str, a: &Path| {
        Command::new(env!("CARGO_BIN_EXE_richspace"))
            .arg("find-optimal")
            .arg("--a")
            .arg(a)
            .arg("--b")
            .arg(fixture(&format!("{set}/b.json")))
            .arg("--c")
            .arg(fixture(&format!("{set}/c.json")))
            .output()
            .unwrap()
    };
    let planted = run("planted", &fixture("planted/a.json"));
    let stdout = String::from_utf8_lossy(&planted.stdout);
    let planted_ok =
        planted.status.code() == Some(0) && stdout.split_whitespace().any(|t| t == "i_opt=14");
    let same = run("degenerate", &fixture("degenerate/a.json"))
        .status
        .code();
    let missing = run("planted", &fixture("planted/missing.json"))
        .status
        .code();
    Outcome::new(
        planted_ok && same == Some(3) && missing == Some(2),
        format!(
            "planted: {:?} exit {:?}; a==b exit {same:?} (want 3); missing file exit {missing:?} (want 2)",
            stdout.trim(),
            planted.status.code()
        ),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("oracle equivalence", oracle_equivalence),
        ("planted-guidance recovery", planted_recovery),
        ("foot orthogonality and optimality", foot_checks),
        ("one-dimensional and integer witnesses", theorem_1d),
        ("covering witness search", covering),
        ("toy pipeline", toy_pipeline),
        ("IO bit-exactness", io_bit_exact),
        ("CLI contract", cli_contract),
    ];
    let mut failures = 0;
    for (name, check) in criteria {
        let outcome = check();
        let tag = if outcome.passed { "PASS" } else { "FAIL" };
        failures += usize::from(!outcome.passed);
        println!("{tag} {name}: {}", outcome.detail);
    }
    println!(
        "acceptance: {} passed, {failures} failed",
        criteria.len() - failures
    );
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
