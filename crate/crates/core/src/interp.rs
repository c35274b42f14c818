//! Optimal interpolation embedding search.
//!
//! Given prompt embeddings `A`, `B` and a guidance embedding `C`, the guidance
//! is projected onto the line through `A` and `B` (the perpendicular foot) and
//! every interpolation point `lerp(A, B, i, k)`, `i = 1..=k`, is scored by its
//! row-averaged cosine similarity to that foot. Scoring runs twice, once over
//! the padded (full) matrices and once over the leading `n_ids` token rows
//! (truncated), and the two curves are summed. The first index attaining the
//! maximum summed score wins.

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::tensor::{frob_inner, lerp, row_cosine_mean, Matrix};

/// Interpolation steps used when the caller does not choose.
pub const DEFAULT_STEPS: usize = 30;

/// A text embedding together with the number of non-padding token rows.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptEmbedding {
    matrix: Matrix,
    ids_length: usize,
    pub prompt_text: Option<String>,
    pub source: Option<String>,
}

impl PromptEmbedding {
    pub fn new(matrix: Matrix, ids_length: usize) -> Result<Self> {
        if ids_length == 0 || ids_length > matrix.rows() {
            return Err(Error::InvalidIdsLength {
                ids_length,
                rows: matrix.rows(),
            });
        }
        Ok(Self {
            matrix,
            ids_length,
            prompt_text: None,
            source: None,
        })
    }

    /// Treat every row as a token row.
    pub fn unpadded(matrix: Matrix) -> Self {
        let ids_length = matrix.rows();
        Self {
            matrix,
            ids_length,
            prompt_text: None,
            source: None,
        }
    }

    pub fn with_prompt(mut self, text: impl Into<String>) -> Self {
        self.prompt_text = Some(text.into());
        self
    }

    pub fn with_source(mut self, source: impl Into<String>) -> Self {
        self.source = Some(source.into());
        self
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn ids_length(&self) -> usize {
        self.ids_length
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CurveEntry {
    pub index: usize,
    pub cos_trunc: f64,
    pub cos_full: f64,
    pub cos_sum: f64,
}

/// Per-index truncated, full and summed scores over `i = 1..=k`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SimilarityCurve {
    pub k: usize,
    pub entries: Vec<CurveEntry>,
}

impl SimilarityCurve {
    /// Pair two equally long score lists; entry `j` of each list is index `j + 1`.
    pub fn from_scores(truncated: &[f64], full: &[f64]) -> Result<Self> {
        if truncated.len() != full.len() {
            return Err(Error::InvalidShape("curve score lists differ in length"));
        }
        if full.is_empty() {
            return Err(Error::ZeroSteps);
        }
        let entries = truncated
            .iter()
            .zip(full)
            .enumerate()
            .map(|(j, (&cos_trunc, &cos_full))| CurveEntry {
                index: j + 1,
                cos_trunc,
                cos_full,
                cos_sum: cos_trunc + cos_full,
            })
            .collect();
        Ok(Self {
            k: full.len(),
            entries,
        })
    }

    /// Check the structural invariants (used after deserialising).
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.entries.len() != self.k {
            return Err(Error::InvalidShape("curve must hold exactly k entries"));
        }
        for (j, e) in self.entries.iter().enumerate() {
            if e.index != j + 1 {
                return Err(Error::InvalidShape("curve indices must run 1..=k in order"));
            }
            if e.cos_sum != e.cos_trunc + e.cos_full {
                return Err(Error::InvalidShape(
                    "cos_sum must equal cos_trunc + cos_full",
                ));
            }
        }
        Ok(())
    }

    pub fn sums(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.cos_sum).collect()
    }

    /// Index (1-based) of the first maximal summed score.
    pub fn argmax(&self) -> usize {
        argmax_first(&self.sums()) + 1
    }

    pub fn entry(&self, index: usize) -> Option<&CurveEntry> {
        index.checked_sub(1).and_then(|j| self.entries.get(j))
    }
}

/// Position of the first maximum; `0` for an empty slice.
pub fn argmax_first(values: &[f64]) -> usize {
    let mut best = 0;
    for (j, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = j;
        }
    }
    best
}

/// Which embedding to return once the best index is known.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OutputRule {
    /// The scored candidate itself, `lerp(A, B, i_opt, k)`.
    #[default]
    ScoredSegment,
    /// `(i_opt/k) C + ((k - i_opt)/k) B`, i.e. `lerp(C, B, i_opt, k)`.
    /// Kept for compatibility with the published pseudocode.
    GuidanceLiteral,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FinderOptions {
    pub steps: usize,
    pub output: OutputRule,
}

impl Default for FinderOptions {
    fn default() -> Self {
        Self {
            steps: DEFAULT_STEPS,
            output: OutputRule::ScoredSegment,
        }
    }
}

impl FinderOptions {
    pub fn with_steps(steps: usize) -> Self {
        Self {
            steps,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimalSelection {
    pub i_opt: usize,
    pub embedding: Matrix,
    pub curve: SimilarityCurve,
    /// `max(n_ids)` over the three inputs; the truncation length used.
    pub ids_length: usize,
}

impl OptimalSelection {
    pub fn best_score(&self) -> f64 {
        self.curve.entries[self.i_opt - 1].cos_sum
    }

    /// Re-wrap the selected embedding as a prompt for a further search.
    pub fn as_prompt(&self) -> PromptEmbedding {
        PromptEmbedding {
            matrix: self.embedding.clone(),
            ids_length: self.ids_length,
            prompt_text: None,
            source: None,
        }
    }
}

/// Squared-norm floor below which `B - A` is considered degenerate.
pub fn degenerate_direction_threshold(rows: usize, cols: usize) -> f64 {
    1e-12 * (rows * cols) as f64
}

/// Orthogonal projection of `c` onto the line through `a` and `b`.
pub fn perpendicular_foot(a: &Matrix, b: &Matrix, c: &Matrix) -> Result<Matrix> {
    a.ensure_same_shape(b)?;
    a.ensure_same_shape(c)?;
    let ab = b.sub(a)?;
    let ac = c.sub(a)?;
    let squared_norm = frob_inner(&ab, &ab)?;
    if squared_norm < degenerate_direction_threshold(a.rows(), a.cols()) {
        return Err(Error::DegenerateDirection { squared_norm });
    }
    let length = frob_inner(&ab, &ac)? / squared_norm;
    a.combine(1.0, &ab, length)
}

/// Cosine similarity of each interpolation point `lerp(a, b, i, k)`,
/// `i = 1..=k`, to the perpendicular foot of `c`.
pub fn cosine_sim_curve(a: &Matrix, b: &Matrix, c: &Matrix, k: usize) -> Result<Vec<f64>> {
    if k == 0 {
        return Err(Error::ZeroSteps);
    }
    let foot = perpendicular_foot(a, b, c)?;
    let score = |i: usize| lerp(a, b, i, k).and_then(|z| row_cosine_mean(&z, &foot));

    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (1..=k).into_par_iter().map(score).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (1..=k).map(score).collect()
    }
}

/// Search the `A`-`B` segment for the point best aligned with the guidance `C`.
pub fn find_optimal(
    a: &PromptEmbedding,
    b: &PromptEmbedding,
    c: &PromptEmbedding,
    options: FinderOptions,
) -> Result<OptimalSelection> {
    let k = options.steps;
    if k == 0 {
        return Err(Error::ZeroSteps);
    }
    a.matrix.ensure_same_shape(&b.matrix)?;
    a.matrix.ensure_same_shape(&c.matrix)?;

    let ids_length = a.ids_length.max(b.ids_length).max(c.ids_length);
    let a_trunc = a.matrix.leading_rows(ids_length)?;
    let b_trunc = b.matrix.leading_rows(ids_length)?;
    let c_trunc = c.matrix.leading_rows(ids_length)?;

    let truncated = cosine_sim_curve(&a_trunc, &b_trunc, &c_trunc, k)?;
    let full = cosine_sim_curve(&a.matrix, &b.matrix, &c.matrix, k)?;
    let curve = SimilarityCurve::from_scores(&truncated, &full)?;
    let i_opt = curve.argmax();

    let embedding = match options.output {
        OutputRule::ScoredSegment => lerp(&a.matrix, &b.matrix, i_opt, k)?,
        OutputRule::GuidanceLiteral => lerp(&c.matrix, &b.matrix, i_opt, k)?,
    };
    Ok(OptimalSelection {
        i_opt,
        embedding,
        curve,
        ids_length,
    })
}

/// Result of the two-stage three-prompt mix.
#[derive(Debug, Clone, PartialEq)]
pub struct MixSelection {
    pub stage1: OptimalSelection,
    pub stage2: OptimalSelection,
}

impl MixSelection {
    pub fn final_selection(&self) -> &OptimalSelection {
        &self.stage2
    }
}

/// Blend `A` and `B` under guidance `C`, then blend that result with `D`
/// under guidance `E`. Errors carry the stage (1 or 2) they arose in.
pub fn mix3(
    a: &PromptEmbedding,
    b: &PromptEmbedding,
    c_guidance: &PromptEmbedding,
    d_prompt: &PromptEmbedding,
    e_guidance: &PromptEmbedding,
    options: FinderOptions,
) -> Result<MixSelection> {
    let stage1 = find_optimal(a, b, c_guidance, options).map_err(|e| e.in_stage(1))?;
    let stage2 = find_optimal(&stage1.as_prompt(), d_prompt, e_guidance, options)
        .map_err(|e| e.in_stage(2))?;
    Ok(MixSelection { stage1, stage2 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn m(rows: &[&[f64]]) -> Matrix {
        Matrix::from_rows(rows).unwrap()
    }

    #[test]
    fn foot_hand_example() {
        let foot =
            perpendicular_foot(&m(&[&[0.0, 0.0]]), &m(&[&[2.0, 0.0]]), &m(&[&[1.0, 5.0]])).unwrap();
        assert_eq!(foot.as_slice(), &[1.0, 0.0]);
    }

    #[test]
    fn foot_at_endpoints() {
        let a = m(&[&[1.0, 2.0], &[-1.0, 0.5]]);
        let b = m(&[&[0.0, 3.0], &[2.0, 2.0]]);
        assert_eq!(perpendicular_foot(&a, &b, &a).unwrap(), a);
        let at_b = perpendicular_foot(&a, &b, &b).unwrap();
        for (x, y) in at_b.as_slice().iter().zip(b.as_slice()) {
            assert_relative_eq!(x, y, epsilon = 1e-15);
        }
    }

    #[test]
    fn foot_rejects_coincident_endpoints() {
        let a = m(&[&[1.0, 2.0]]);
        assert!(matches!(
            perpendicular_foot(&a, &a, &m(&[&[0.0, 1.0]])),
            Err(Error::DegenerateDirection { .. })
        ));
    }

    #[test]
    fn curve_hand_example() {
        let curve = cosine_sim_curve(
            &m(&[&[1.0, 0.0]]),
            &m(&[&[0.0, 1.0]]),
            &m(&[&[1.0, 1.0]]),
            2,
        )
        .unwrap();
        assert_relative_eq!(curve[0], 1.0, epsilon = 1e-15);
        assert_relative_eq!(curve[1], core::f64::consts::FRAC_1_SQRT_2, epsilon = 1e-15);
    }

    #[test]
    fn curve_rejects_zero_steps() {
        let a = m(&[&[1.0, 0.0]]);
        let b = m(&[&[0.0, 1.0]]);
        assert_eq!(cosine_sim_curve(&a, &b, &a, 0), Err(Error::ZeroSteps));
    }

    #[test]
    fn argmax_prefers_first_maximum() {
        assert_eq!(argmax_first(&[0.1, 0.9, 0.3, 0.9, 0.2]), 1);
        assert_eq!(argmax_first(&[2.0, 2.0]), 0);
        assert_eq!(argmax_first(&[]), 0);
    }

    #[test]
    fn curve_from_scores_sums() {
        let c = SimilarityCurve::from_scores(&[0.1, 0.2], &[0.3, 0.4]).unwrap();
        assert_eq!(c.k, 2);
        assert_eq!(c.entries[1].index, 2);
        assert_eq!(c.entries[1].cos_sum, 0.2 + 0.4);
        c.validate().unwrap();
        assert!(SimilarityCurve::from_scores(&[0.1], &[0.3, 0.4]).is_err());
    }

    #[test]
    fn prompt_ids_length_is_bounded() {
        let mat = m(&[&[1.0], &[2.0]]);
        assert!(PromptEmbedding::new(mat.clone(), 0).is_err());
        assert!(PromptEmbedding::new(mat.clone(), 3).is_err());
        assert_eq!(
            PromptEmbedding::new(mat.clone(), 2).unwrap().ids_length(),
            2
        );
        assert_eq!(PromptEmbedding::unpadded(mat).ids_length(), 2);
    }

    #[test]
    fn identical_endpoints_fail_in_finder() {
        let a = PromptEmbedding::unpadded(m(&[&[1.0, 2.0], &[3.0, 1.0]]));
        let c = PromptEmbedding::unpadded(m(&[&[0.0, 2.0], &[3.0, 0.0]]));
        let err = find_optimal(&a, &a, &c, FinderOptions::with_steps(5)).unwrap_err();
        assert!(matches!(err, Error::DegenerateDirection { .. }));
    }

    #[test]
    fn guidance_literal_output_rule() {
        let a = PromptEmbedding::unpadded(m(&[&[1.0, 0.0]]));
        let b = PromptEmbedding::unpadded(m(&[&[0.0, 1.0]]));
        let c = PromptEmbedding::unpadded(m(&[&[1.0, 1.0]]));
        let options = FinderOptions {
            steps: 2,
            output: OutputRule::GuidanceLiteral,
        };
        let sel = find_optimal(&a, &b, &c, options).unwrap();
        assert_eq!(sel.i_opt, 1);
        assert_eq!(sel.embedding.as_slice(), &[0.5, 1.0]);
    }
}
