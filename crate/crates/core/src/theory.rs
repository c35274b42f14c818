//! Witness search for the separation bounds on finite prompt spaces.
//!
//! A sentence space of `V^n` prompts can reach at most `V^n` videos. The
//! bounds below give a radius `epsilon` such that some video `y` with
//! `m <= |y| <= M` is at distance at least `epsilon` from every reachable one;
//! the functions here construct or search for such a `y` on small maps and
//! report honestly whether the bound was met.

use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::f64::consts::PI;

use crate::error::{Error, Result};
use crate::rng::GaussianStream;

/// Slack applied to the distance and norm comparisons.
pub const BOUND_TOLERANCE: f64 = 1e-12;

/// Every reachable video of a `V`-word, length-`n` sentence space, in
/// lexicographic sentence order.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteVideoMap {
    vocab: usize,
    sentence_len: usize,
    dim: usize,
    outputs: Vec<f64>,
    max_norm: f64,
    min_norm: f64,
}

fn norm(v: &[f64]) -> f64 {
    libm::sqrt(v.iter().map(|x| x * x).sum())
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    libm::sqrt(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum())
}

/// `V^n`, or an error when it does not fit in memory-addressable sizes.
pub fn sentence_count(vocab: usize, sentence_len: usize) -> Result<usize> {
    vocab
        .checked_pow(
            u32::try_from(sentence_len)
                .map_err(|_| Error::InvalidMap("sentence length too large"))?,
        )
        .ok_or(Error::InvalidMap("V^n overflows"))
}

impl DiscreteVideoMap {
    /// `outputs` is the flat `V^n x d` table.
    pub fn new(vocab: usize, sentence_len: usize, dim: usize, outputs: Vec<f64>) -> Result<Self> {
        if vocab == 0 || sentence_len == 0 || dim == 0 {
            return Err(Error::InvalidMap("V, n and d must all be at least 1"));
        }
        let count = sentence_count(vocab, sentence_len)?;
        if count.checked_mul(dim) != Some(outputs.len()) {
            return Err(Error::InvalidMap(
                "table must hold exactly V^n outputs of length d",
            ));
        }
        if outputs.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidMap("outputs must be finite"));
        }
        let norms = outputs.chunks(dim).map(norm);
        let (min_norm, max_norm) = norms.fold((f64::INFINITY, 0.0f64), |(lo, hi), r| {
            (lo.min(r), hi.max(r))
        });
        Ok(Self {
            vocab,
            sentence_len,
            dim,
            outputs,
            max_norm,
            min_norm,
        })
    }

    pub fn from_rows<R: AsRef<[f64]>>(
        vocab: usize,
        sentence_len: usize,
        dim: usize,
        rows: &[R],
    ) -> Result<Self> {
        if rows.iter().any(|r| r.as_ref().len() != dim) {
            return Err(Error::InvalidMap("every output must have length d"));
        }
        let flat = rows
            .iter()
            .flat_map(|r| r.as_ref().iter().copied())
            .collect();
        Self::new(vocab, sentence_len, dim, flat)
    }

    /// Gaussian outputs.
    pub fn random_gaussian(
        vocab: usize,
        sentence_len: usize,
        dim: usize,
        seed: u64,
    ) -> Result<Self> {
        let count = sentence_count(vocab, sentence_len)?;
        let outputs = GaussianStream::new(seed, 0).normals(count * dim, 1.0);
        Self::new(vocab, sentence_len, dim, outputs)
    }

    /// Integer outputs drawn uniformly from `-spread..=spread`.
    pub fn random_integer(
        vocab: usize,
        sentence_len: usize,
        dim: usize,
        spread: u32,
        seed: u64,
    ) -> Result<Self> {
        let count = sentence_count(vocab, sentence_len)?;
        let mut stream = GaussianStream::new(seed, 0);
        let width = 2 * u64::from(spread) + 1;
        let outputs = (0..count * dim)
            .map(|_| stream.below(width) as f64 - f64::from(spread))
            .collect();
        Self::new(vocab, sentence_len, dim, outputs)
    }

    /// Outputs drawn uniformly from the annulus `inner <= |y| <= outer`.
    /// The first output sits on the inner sphere and the second on the outer
    /// one, so the map's `m` and `M` equal the requested radii.
    pub fn random_annulus(
        vocab: usize,
        sentence_len: usize,
        dim: usize,
        inner: f64,
        outer: f64,
        seed: u64,
    ) -> Result<Self> {
        if !(0.0 <= inner && inner <= outer && outer.is_finite()) {
            return Err(Error::InvalidArgument(
                "annulus radii must satisfy 0 <= inner <= outer",
            ));
        }
        let count = sentence_count(vocab, sentence_len)?;
        let mut stream = GaussianStream::new(seed, 0);
        let mut outputs = Vec::with_capacity(count * dim);
        for i in 0..count {
            let radius = match i {
                0 => Some(inner),
                1 => Some(outer),
                _ => None,
            };
            outputs.extend(sample_annulus(&mut stream, dim, inner, outer, radius));
        }
        Self::new(vocab, sentence_len, dim, outputs)
    }

    pub fn vocab(&self) -> usize {
        self.vocab
    }

    pub fn sentence_len(&self) -> usize {
        self.sentence_len
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of sentences, `V^n`.
    pub fn len(&self) -> usize {
        self.outputs.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.outputs.is_empty()
    }

    /// `M`, the largest output norm.
    pub fn max_norm(&self) -> f64 {
        self.max_norm
    }

    /// `m`, the smallest output norm.
    pub fn min_norm(&self) -> f64 {
        self.min_norm
    }

    pub fn output(&self, sentence: usize) -> &[f64] {
        &self.outputs[sentence * self.dim..(sentence + 1) * self.dim]
    }

    pub fn outputs(&self) -> impl Iterator<Item = &[f64]> {
        self.outputs.chunks(self.dim)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.outputs
    }

    /// Word indices of sentence `index`, most significant position first.
    pub fn sentence(&self, index: usize) -> Vec<usize> {
        let mut words = vec![0; self.sentence_len];
        let mut rest = index;
        for slot in words.iter_mut().rev() {
            *slot = rest % self.vocab;
            rest /= self.vocab;
        }
        words
    }

    /// Exhaustive `min_x |f(x) - y|`.
    pub fn min_distance(&self, y: &[f64]) -> f64 {
        self.outputs()
            .map(|o| distance(o, y))
            .fold(f64::INFINITY, f64::min)
    }

    /// The covering radius `((M^d - m^d) / V^n)^(1/d)`.
    pub fn covering_epsilon(&self) -> f64 {
        let d = self.dim as f64;
        let volume = libm::pow(self.max_norm, d) - libm::pow(self.min_norm, d);
        libm::pow(volume.max(0.0) / self.len() as f64, 1.0 / d)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum BoundKind {
    #[cfg_attr(feature = "serde", serde(rename = "integer_1d"))]
    Integer1d,
    #[cfg_attr(feature = "serde", serde(rename = "integer_dd"))]
    IntegerDd,
    #[cfg_attr(feature = "serde", serde(rename = "any_1d"))]
    Any1d,
    #[cfg_attr(feature = "serde", serde(rename = "covering_dd"))]
    CoveringDd,
    Bilipschitz,
}

impl BoundKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BoundKind::Integer1d => "integer_1d",
            BoundKind::IntegerDd => "integer_dd",
            BoundKind::Any1d => "any_1d",
            BoundKind::CoveringDd => "covering_dd",
            BoundKind::Bilipschitz => "bilipschitz",
        }
    }
}

impl core::str::FromStr for BoundKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "integer_1d" => Ok(BoundKind::Integer1d),
            "integer_dd" => Ok(BoundKind::IntegerDd),
            "any_1d" => Ok(BoundKind::Any1d),
            "covering_dd" => Ok(BoundKind::CoveringDd),
            "bilipschitz" => Ok(BoundKind::Bilipschitz),
            _ => Err(Error::InvalidArgument("unknown bound kind")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct WitnessReport {
    pub y: Vec<f64>,
    pub min_dist: f64,
    pub epsilon: f64,
    pub bound_kind: BoundKind,
    pub satisfied: bool,
    /// Candidates evaluated to find `y`.
    pub search_effort: usize,
}

/// `m <= |y| <= M`, with [`BOUND_TOLERANCE`] slack scaled to `M`.
pub fn in_annulus(map: &DiscreteVideoMap, y: &[f64]) -> bool {
    let r = norm(y);
    let slack = BOUND_TOLERANCE * map.max_norm.max(1.0);
    r >= map.min_norm - slack && r <= map.max_norm + slack
}

impl WitnessReport {
    /// Score `y` against every output of `map`.
    pub fn assess(
        map: &DiscreteVideoMap,
        y: Vec<f64>,
        epsilon: f64,
        bound_kind: BoundKind,
        search_effort: usize,
    ) -> Self {
        let min_dist = map.min_distance(&y);
        let satisfied = min_dist >= epsilon - BOUND_TOLERANCE && in_annulus(map, &y);
        Self {
            y,
            min_dist,
            epsilon,
            bound_kind,
            satisfied,
            search_effort,
        }
    }
}

/// Half-integer witness for integer-valued maps.
///
/// For `d = 1`, `y = m + 1/2` with `epsilon = 1/2`. For `d >= 2`,
/// `y = f(x_min) + (1/2, ..., 1/2)` where `x_min` has the smallest output norm,
/// with `epsilon = sqrt(d) / 2`. Every coordinate of `y` is a half-integer, so
/// the distance bound always holds; the annulus condition can fail on
/// degenerate maps (e.g. all outputs of equal norm) and is reported as such.
pub fn integer_witness(map: &DiscreteVideoMap) -> Result<WitnessReport> {
    if let Some(index) = map.outputs.iter().position(|&v| libm::trunc(v) != v) {
        return Err(Error::NonIntegerMap {
            index: index / map.dim,
        });
    }
    let report = if map.dim == 1 {
        WitnessReport::assess(map, vec![map.min_norm + 0.5], 0.5, BoundKind::Integer1d, 1)
    } else {
        let closest = map
            .outputs()
            .enumerate()
            .min_by(|(i, a), (j, b)| norm(a).total_cmp(&norm(b)).then(i.cmp(j)))
            .map(|(_, o)| o)
            .expect("map is non-empty");
        let y = closest.iter().map(|v| v + 0.5).collect();
        let epsilon = 0.5 * libm::sqrt(map.dim as f64);
        WitnessReport::assess(map, y, epsilon, BoundKind::IntegerDd, 1)
    };
    Ok(report)
}

/// Grid size used when the caller does not pick one: spacing stays at or
/// below a tenth of the one-dimensional epsilon.
pub fn default_grid_resolution(sentences: usize) -> usize {
    sentences.saturating_mul(20).saturating_add(1).max(1000)
}

/// One-dimensional bound `epsilon = (M - m) / (2 V^n)` for arbitrary maps.
///
/// Sweeps `grid_resolution` evenly spaced points over `[m, M]` and keeps the
/// one farthest from every output (lowest grid index on ties). Working on
/// norms is sound: `|f(x) - y| >= ||f(x)| - y|` for `y >= 0`.
pub fn any_function_witness_1d(
    map: &DiscreteVideoMap,
    grid_resolution: usize,
) -> Result<WitnessReport> {
    if map.dim != 1 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            actual: map.dim,
        });
    }
    let sentences = map.len();
    let required = sentences.saturating_mul(10);
    if grid_resolution < required {
        return Err(Error::GridTooCoarse {
            given: grid_resolution,
            required,
        });
    }
    let (lo, hi) = (map.min_norm, map.max_norm);
    let epsilon = (hi - lo) / (2.0 * sentences as f64);

    let mut sorted: Vec<f64> = map.outputs.clone();
    sorted.sort_by(f64::total_cmp);
    let nearest = |y: f64| {
        let at = sorted.partition_point(|&v| v < y);
        let above = sorted.get(at).map_or(f64::INFINITY, |v| v - y);
        let below = at.checked_sub(1).map_or(f64::INFINITY, |j| y - sorted[j]);
        above.min(below)
    };

    let points = if hi > lo { grid_resolution } else { 1 };
    let step = if points > 1 {
        (hi - lo) / (points - 1) as f64
    } else {
        0.0
    };
    let mut best = (lo, nearest(lo));
    for g in 1..points {
        let y = if g == points - 1 {
            hi
        } else {
            lo + step * g as f64
        };
        let dist = nearest(y);
        if dist > best.1 {
            best = (y, dist);
        }
    }
    Ok(WitnessReport::assess(
        map,
        vec![best.0],
        epsilon,
        BoundKind::Any1d,
        points,
    ))
}

/// Uniform point in `inner <= |y| <= outer`; `radius` pins the norm instead.
fn sample_annulus(
    stream: &mut GaussianStream,
    dim: usize,
    inner: f64,
    outer: f64,
    radius: Option<f64>,
) -> Vec<f64> {
    let mut direction = stream.normals(dim, 1.0);
    let mut length = norm(&direction);
    while length == 0.0 {
        direction = stream.normals(dim, 1.0);
        length = norm(&direction);
    }
    let d = dim as f64;
    let r = radius.unwrap_or_else(|| {
        let (lo, hi) = (libm::pow(inner, d), libm::pow(outer, d));
        libm::pow(lo + stream.uniform() * (hi - lo), 1.0 / d).clamp(inner, outer)
    });
    direction.iter().map(|v| v * r / length).collect()
}

/// Draw `samples` candidates uniformly from the annulus and keep the one
/// farthest from the map (ties to the lowest sample index).
fn best_of_annulus(map: &DiscreteVideoMap, samples: usize, seed: u64) -> (Vec<f64>, usize) {
    let mut stream = GaussianStream::new(seed, 0);
    let candidates: Vec<Vec<f64>> = (0..samples)
        .map(|_| sample_annulus(&mut stream, map.dim, map.min_norm, map.max_norm, None))
        .collect();
    let score = |i: usize| (i, map.min_distance(&candidates[i]));
    let better = |a: (usize, f64), b: (usize, f64)| match a.1.total_cmp(&b.1) {
        Ordering::Greater => a,
        Ordering::Less => b,
        Ordering::Equal => {
            if a.0 <= b.0 {
                a
            } else {
                b
            }
        }
    };
    #[cfg(feature = "parallel")]
    let best = {
        use rayon::prelude::*;
        (0..samples)
            .into_par_iter()
            .map(score)
            .reduce(|| (usize::MAX, f64::NEG_INFINITY), better)
    };
    #[cfg(not(feature = "parallel"))]
    let best = (0..samples)
        .map(score)
        .fold((usize::MAX, f64::NEG_INFINITY), better);
    let mut candidates = candidates;
    (candidates.swap_remove(best.0), samples)
}

/// Covering bound `epsilon = ((M^d - m^d) / V^n)^(1/d)` by random maximin search.
///
/// Existence is guaranteed but the search is not: a `satisfied = false`
/// report carries the best candidate found.
pub fn covering_witness(
    map: &DiscreteVideoMap,
    samples: usize,
    seed: u64,
) -> Result<WitnessReport> {
    if samples == 0 {
        return Err(Error::InvalidArgument("samples must be at least 1"));
    }
    let (y, effort) = best_of_annulus(map, samples, seed);
    Ok(WitnessReport::assess(
        map,
        y,
        map.covering_epsilon(),
        BoundKind::CoveringDd,
        effort,
    ))
}

/// A continuous model `R^(n k) -> R^d` evaluated on concatenated word embeddings.
pub type ContinuousMap<'a> = &'a dyn Fn(&[f64]) -> Vec<f64>;

/// Inputs for the bi-Lipschitz bound.
#[derive(Clone, Copy)]
pub struct BiLipschitzSetup<'a> {
    /// The `V` word embeddings, each of the same length `k`.
    pub words: &'a [Vec<f64>],
    pub lipschitz: f64,
    pub continuous: Option<ContinuousMap<'a>>,
    /// Random search budget when the covering term dominates.
    pub samples: usize,
    pub seed: u64,
}

/// Relative slack on the pairwise Lipschitz checks.
const LIPSCHITZ_SLACK: f64 = 1e-9;

fn sentence_vector(map: &DiscreteVideoMap, words: &[Vec<f64>], index: usize) -> Vec<f64> {
    map.sentence(index)
        .into_iter()
        .flat_map(|w| words[w].iter().copied())
        .collect()
}

/// Smallest pairwise distance between distinct word embeddings.
pub fn min_word_separation(words: &[Vec<f64>]) -> Option<f64> {
    let mut best: Option<f64> = None;
    for i in 0..words.len() {
        for j in i + 1..words.len() {
            let d = distance(&words[i], &words[j]);
            best = Some(best.map_or(d, |b| b.min(d)));
        }
    }
    best
}

/// Bound `epsilon = max(delta_min / (2L), ((M^d - m^d)/V^n)^(1/d))` for maps
/// consistent with an `L`-bi-Lipschitz model.
///
/// When the separation term is at least the covering term the witness is
/// `f` evaluated at the midpoint of two sentences; every sentence pair is
/// tried and the best-separated midpoint inside the annulus is kept.
/// Otherwise the covering search is used.
pub fn bilipschitz_witness(
    map: &DiscreteVideoMap,
    setup: BiLipschitzSetup<'_>,
) -> Result<WitnessReport> {
    let lip = setup.lipschitz;
    if !(lip.is_finite() && lip > 0.0) {
        return Err(Error::InvalidArgument(
            "Lipschitz constant must be positive",
        ));
    }
    if setup.words.len() != map.vocab {
        return Err(Error::InvalidArgument("need exactly V word embeddings"));
    }
    let word_dim = setup.words.first().map_or(0, Vec::len);
    if word_dim == 0 || setup.words.iter().any(|w| w.len() != word_dim) {
        return Err(Error::InvalidArgument(
            "word embeddings must share a non-zero length",
        ));
    }

    let sentences: Vec<Vec<f64>> = (0..map.len())
        .map(|i| sentence_vector(map, setup.words, i))
        .collect();
    for i in 0..map.len() {
        for j in i + 1..map.len() {
            let input = distance(&sentences[i], &sentences[j]);
            let output = distance(map.output(i), map.output(j));
            let lower = input / lip * (1.0 - LIPSCHITZ_SLACK);
            let upper = input * lip * (1.0 + LIPSCHITZ_SLACK);
            if output < lower || output > upper {
                return Err(Error::NotBiLipschitz {
                    first: i,
                    second: j,
                });
            }
        }
    }

    let covering = map.covering_epsilon();
    let separation = min_word_separation(setup.words).map_or(0.0, |delta| 0.5 * delta / lip);
    let epsilon = covering.max(separation);

    if map.vocab < 2 || separation < covering {
        if setup.samples == 0 {
            return Err(Error::InvalidArgument("samples must be at least 1"));
        }
        let (y, effort) = best_of_annulus(map, setup.samples, setup.seed);
        return Ok(WitnessReport::assess(
            map,
            y,
            epsilon,
            BoundKind::Bilipschitz,
            effort,
        ));
    }

    let f = setup.continuous.ok_or(Error::MissingContinuousMap)?;
    let mut best: Option<WitnessReport> = None;
    let mut effort = 0;
    for i in 0..map.len() {
        for j in i + 1..map.len() {
            let midpoint: Vec<f64> = sentences[i]
                .iter()
                .zip(&sentences[j])
                .map(|(a, b)| 0.5 * (a + b))
                .collect();
            let y = f(&midpoint);
            if y.len() != map.dim {
                return Err(Error::DimensionMismatch {
                    expected: map.dim,
                    actual: y.len(),
                });
            }
            effort += 1;
            let report = WitnessReport::assess(map, y, epsilon, BoundKind::Bilipschitz, 0);
            let key = |r: &WitnessReport| (in_annulus(map, &r.y), r.min_dist);
            if best.as_ref().is_none_or(|b| key(&report) > key(b)) {
                best = Some(report);
            }
        }
    }
    let mut report = best.expect("at least one sentence pair when V >= 2");
    report.search_effort = effort;
    Ok(report)
}

/// Volume of the `d`-dimensional L2 ball of radius `r`, `pi^(d/2) r^d / Gamma(d/2 + 1)`.
pub fn ball_volume(dim: usize, radius: f64) -> f64 {
    let half = dim as f64 / 2.0;
    libm::pow(PI, half) / libm::tgamma(half + 1.0) * libm::pow(radius, dim as f64)
}
